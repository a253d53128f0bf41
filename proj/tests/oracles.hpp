// Copyright the liret authors. Licensed under the terms of the Apache 2.0 license. See LICENSE in the project root.
#pragma once

// Reference implementations written independently of the library code so
// the tests have something honest to disagree with. Everything here favors
// obviousness over speed: plain loops, double precision, no Eigen products.

#include "liret/rng.hpp"
#include "liret/scoring.hpp"
#include "liret/types.hpp"

#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace oracle {

// Max-over-rows similarity summed over query tokens, one scalar multiply
// at a time. Matches the kernel contract: empty rows score -inf.
inline double li_modality(const liret::TokenMatrixF& query, const liret::TokenMatrixF& rows) {
  if (rows.rows() == 0) return -std::numeric_limits<double>::infinity();
  double total = 0.0;
  for (Eigen::Index i = 0; i < query.rows(); ++i) {
    double best = -std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < rows.rows(); ++j) {
      // Accumulate the dot product in float first, like the kernel's GEMM,
      // then widen; reductions beyond the product run in double.
      float dot = 0.0f;
      for (Eigen::Index d = 0; d < query.cols(); ++d) dot += query(i, d) * rows(j, d);
      best = std::max(best, static_cast<double>(dot));
    }
    total += best;
  }
  return total;
}

inline double li_context(const liret::TokenMatrixF& query, const liret::Document& doc) {
  double total = 0.0;
  for (Eigen::Index i = 0; i < query.rows(); ++i) {
    double best = -std::numeric_limits<double>::infinity();
    for (const auto& mod : doc.modalities) {
      if (!mod) continue;
      for (Eigen::Index j = 0; j < mod->rows(); ++j) {
        float dot = 0.0f;
        for (Eigen::Index d = 0; d < query.cols(); ++d) dot += query(i, d) * (*mod)(j, d);
        best = std::max(best, static_cast<double>(dot));
      }
    }
    total += best;
  }
  return total;
}

struct MwResult {
  double score = -std::numeric_limits<double>::infinity();
  int modality = -1;
};

inline MwResult li_mw(const liret::TokenMatrixF& query, const liret::Document& doc) {
  MwResult out;
  for (size_t m = 0; m < doc.modalities.size(); ++m) {
    if (!doc.modalities[m]) continue;
    const double s = li_modality(query, *doc.modalities[m]);
    if (s > out.score) {
      out.score = s;
      out.modality = static_cast<int>(m);
    }
  }
  return out;
}

// Binary hit-rate recall: 1 if any doc with grade >= 1 sits in the top k.
inline double recall_hit(const liret::RankedList& ranked, const liret::Qrels& qrels, int k) {
  const int top = std::min<int>(k, static_cast<int>(ranked.items.size()));
  for (int r = 0; r < top; ++r)
    if (qrels.grade(ranked.query_id, ranked.items[r].first) >= 1) return 1.0;
  return 0.0;
}

// Fraction variant: relevant docs retrieved in the top k over relevant total.
inline double recall_fraction(const liret::RankedList& ranked, const liret::Qrels& qrels, int k) {
  auto q = qrels.by_query.find(ranked.query_id);
  if (q == qrels.by_query.end()) return 0.0;
  int relevant = 0;
  for (const auto& [did, grade] : q->second) relevant += grade >= 1;
  if (relevant == 0) return 0.0;
  int found = 0;
  const int top = std::min<int>(k, static_cast<int>(ranked.items.size()));
  for (int r = 0; r < top; ++r)
    found += qrels.grade(ranked.query_id, ranked.items[r].first) >= 1;
  return static_cast<double>(found) / relevant;
}

inline double gain_of(int grade, bool exponential) {
  return exponential ? std::pow(2.0, grade) - 1.0 : static_cast<double>(grade);
}

// Returns -1 for queries with no positive grade (undefined nDCG).
inline double ndcg(const liret::RankedList& ranked, const liret::Qrels& qrels, int k,
                   bool exponential = true) {
  std::vector<int> grades;
  auto q = qrels.by_query.find(ranked.query_id);
  if (q != qrels.by_query.end())
    for (const auto& [did, grade] : q->second) grades.push_back(grade);
  std::sort(grades.rbegin(), grades.rend());
  if (grades.empty() || grades.front() <= 0) return -1.0;

  double dcg = 0.0;
  const int top = std::min<int>(k, static_cast<int>(ranked.items.size()));
  for (int r = 0; r < top; ++r)
    dcg += gain_of(qrels.grade(ranked.query_id, ranked.items[r].first), exponential) /
           std::log2(static_cast<double>(r) + 2.0);
  double idcg = 0.0;
  for (int r = 0; r < std::min<int>(k, static_cast<int>(grades.size())); ++r)
    idcg += gain_of(grades[r], exponential) / std::log2(static_cast<double>(r) + 2.0);
  return dcg / idcg;
}

// Whole-file bytes, for byte-identity checks across reruns.
inline std::string file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("oracle cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

inline uint64_t file_hash(const std::string& path) {
  const std::string bytes = file_bytes(path);
  uint64_t h = 0xcbf29ce484222325ull;
  for (char c : bytes) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ull;
  }
  return h;
}

// Unit-normalized random rows; zero-norm draws cannot happen at these dims.
inline liret::TokenMatrixF unit_rows(liret::Rng& rng, Eigen::Index n, Eigen::Index d) {
  liret::TokenMatrixF m(n, d);
  for (Eigen::Index i = 0; i < n; ++i) {
    double n2 = 0.0;
    for (Eigen::Index j = 0; j < d; ++j) {
      m(i, j) = static_cast<float>(rng.gaussian());
      n2 += static_cast<double>(m(i, j)) * m(i, j);
    }
    const float inv = static_cast<float>(1.0 / std::sqrt(n2));
    for (Eigen::Index j = 0; j < d; ++j) m(i, j) *= inv;
  }
  return m;
}

// A random document over `mods` modalities; `present_mask` bit m selects
// which modalities exist.
inline liret::Document random_doc(liret::Rng& rng, const std::string& id, size_t mods,
                                  unsigned present_mask, Eigen::Index min_tokens,
                                  Eigen::Index max_tokens, Eigen::Index d) {
  liret::Document doc(id, mods);
  for (size_t m = 0; m < mods; ++m) {
    if (!(present_mask & (1u << m))) continue;
    const Eigen::Index n =
        rng.uniform_int(static_cast<int>(min_tokens), static_cast<int>(max_tokens));
    doc.modalities[m] = unit_rows(rng, n, d);
  }
  return doc;
}

// Scratch directory removed on scope exit.
struct TempDir {
  std::string path;

  explicit TempDir(const std::string& tag) {
    static std::atomic<unsigned> counter{0};
    const auto base = std::filesystem::temp_directory_path() /
                      ("liret_test_" + tag + "_" + std::to_string(::getpid()) + "_" +
                       std::to_string(counter++));
    std::filesystem::create_directories(base);
    path = base.string();
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
  std::string file(const std::string& name) const { return path + "/" + name; }
};

// Naive run-file parser used to cross-check the library reader: splits on
// single tabs, tolerates nothing else.
struct RunRow {
  std::string qid, did;
  int rank = 0;
  double score = 0.0;
};

inline std::vector<RunRow> parse_run_naive(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("oracle cannot open " + path);
  std::vector<RunRow> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    size_t start = 0;
    for (size_t i = 0; i <= line.size(); ++i) {
      if (i == line.size() || line[i] == '\t') {
        f.push_back(line.substr(start, i - start));
        start = i + 1;
      }
    }
    if (f.size() != 4) throw std::runtime_error("oracle run row with " +
                                                std::to_string(f.size()) + " fields");
    rows.push_back({f[0], f[1], std::stoi(f[2]), std::stod(f[3])});
  }
  return rows;
}

}  // namespace oracle
