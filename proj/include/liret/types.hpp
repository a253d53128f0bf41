// Copyright the liret authors. Licensed under the terms of the Apache 2.0 license. See LICENSE in the project root.
#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace liret {

// The on-disk container encodes modality presence as one bitmap byte.
inline constexpr int kMaxModalities = 8;
// Queries longer than this are truncated by the encoder.
inline constexpr Eigen::Index kMaxQueryTokens = 64;

// Token matrices are row-major: one row per token. Row-major keeps each
// token contiguous, so per-document arenas can be sliced without copies.
template <typename Scalar>
using TokenMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using TokenMatrixF = TokenMatrix<float>;
using TokenMatrixD = TokenMatrix<double>;

// Read-only view that also binds to row blocks of a larger matrix.
template <typename Scalar>
using MatView = Eigen::Ref<const TokenMatrix<Scalar>, 0, Eigen::OuterStride<>>;
using MatViewF = MatView<float>;
using MatViewD = MatView<double>;

enum class Errc {
  bad_magic,
  bad_version,
  truncated,
  dim_mismatch,
  parse_error,
  duplicate_entry,
  invalid_argument,
  not_found,
  numeric_error,
  io_error,
};

inline const char* errc_name(Errc c) {
  switch (c) {
    case Errc::bad_magic: return "bad_magic";
    case Errc::bad_version: return "bad_version";
    case Errc::truncated: return "truncated";
    case Errc::dim_mismatch: return "dim_mismatch";
    case Errc::parse_error: return "parse_error";
    case Errc::duplicate_entry: return "duplicate_entry";
    case Errc::invalid_argument: return "invalid_argument";
    case Errc::not_found: return "not_found";
    case Errc::numeric_error: return "numeric_error";
    case Errc::io_error: return "io_error";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& msg)
      : std::runtime_error(std::string(errc_name(code)) + ": " + msg), code_(code) {}
  Errc code() const { return code_; }

 private:
  Errc code_;
};

[[noreturn]] inline void raise(Errc code, const std::string& msg) { throw Error(code, msg); }

// Ordered set of modality names. Order is part of the contract: it fixes
// concatenation order for scoring, bit positions in the container bitmap,
// and tie-breaks when several modalities reach the same score.
class ModalitySet {
 public:
  ModalitySet() = default;
  explicit ModalitySet(std::vector<std::string> names) : names_(std::move(names)) {
    if (names_.empty() || names_.size() > static_cast<size_t>(kMaxModalities))
      raise(Errc::invalid_argument, "modality set must hold 1..8 names");
    for (size_t i = 0; i < names_.size(); ++i) {
      if (names_[i].empty()) raise(Errc::invalid_argument, "empty modality name");
      for (size_t j = i + 1; j < names_.size(); ++j)
        if (names_[i] == names_[j]) raise(Errc::duplicate_entry, "modality name: " + names_[i]);
    }
  }

  static ModalitySet default_set() {
    return ModalitySet({"vision", "audio", "ocr", "metadata"});
  }

  size_t size() const { return names_.size(); }
  const std::string& name(size_t i) const { return names_.at(i); }
  const std::vector<std::string>& names() const { return names_; }

  std::optional<size_t> find(const std::string& name) const {
    for (size_t i = 0; i < names_.size(); ++i)
      if (names_[i] == name) return i;
    return std::nullopt;
  }

  size_t index_of(const std::string& name) const {
    auto i = find(name);
    if (!i) raise(Errc::not_found, "unknown modality: " + name);
    return *i;
  }

  bool operator==(const ModalitySet& o) const { return names_ == o.names_; }
  bool operator!=(const ModalitySet& o) const { return !(*this == o); }

 private:
  std::vector<std::string> names_;
};

// A document holds one optional token matrix per declared modality,
// indexed by the modality's position in the ModalitySet.
template <typename Scalar>
struct BasicDocument {
  std::string id;
  std::vector<std::optional<TokenMatrix<Scalar>>> modalities;

  BasicDocument() = default;
  BasicDocument(std::string doc_id, size_t modality_count)
      : id(std::move(doc_id)), modalities(modality_count) {}

  bool has(size_t m) const { return m < modalities.size() && modalities[m].has_value(); }

  size_t present_count() const {
    size_t n = 0;
    for (const auto& m : modalities) n += m.has_value();
    return n;
  }

  Eigen::Index total_tokens() const {
    Eigen::Index n = 0;
    for (const auto& m : modalities)
      if (m) n += m->rows();
    return n;
  }
};

using Document = BasicDocument<float>;
using FeatureDoc = BasicDocument<double>;

// Ranking for one query: (doc_id, score), scores non-increasing, ties by
// ascending doc_id. Scores are narrowed to float for serving output.
struct RankedList {
  std::string query_id;
  std::vector<std::pair<std::string, float>> items;
};

// Graded relevance judgments. Missing pairs read as grade 0.
struct Qrels {
  std::map<std::string, std::map<std::string, int>> by_query;

  void add(const std::string& qid, const std::string& did, int grade) {
    if (grade < 0) raise(Errc::invalid_argument, "negative grade for " + qid + "/" + did);
    auto [it, inserted] = by_query[qid].emplace(did, grade);
    if (!inserted) raise(Errc::duplicate_entry, "qrels pair " + qid + "/" + did);
  }

  int grade(const std::string& qid, const std::string& did) const {
    auto q = by_query.find(qid);
    if (q == by_query.end()) return 0;
    auto d = q->second.find(did);
    return d == q->second.end() ? 0 : d->second;
  }

  bool has_query(const std::string& qid) const { return by_query.count(qid) > 0; }
  size_t query_count() const { return by_query.size(); }

  size_t pair_count() const {
    size_t n = 0;
    for (const auto& [q, docs] : by_query) n += docs.size();
    return n;
  }

  bool operator==(const Qrels& o) const { return by_query == o.by_query; }
};

enum class Split : uint8_t { train = 0, val = 1, test = 2 };

inline const char* split_name(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  return "unknown";
}

inline Split split_from_string(const std::string& s) {
  if (s == "train") return Split::train;
  if (s == "val") return Split::val;
  if (s == "test") return Split::test;
  raise(Errc::parse_error, "unknown split: " + s);
}

// A query as produced by the synthetic generator: raw feature tokens plus
// the generation metadata used for training pairs and evaluation labels.
// target_modality is empty for queries that address the whole document.
struct QueryRecord {
  std::string id;
  TokenMatrixF tokens;
  std::optional<size_t> target_modality;
  std::string source_doc_id;
  Split split = Split::train;
};

}  // namespace liret
