// Copyright the liret authors. Licensed under the terms of the Apache 2.0 license. See LICENSE in the project root.
#pragma once

#include "liret/scoring.hpp"
#include "liret/types.hpp"

#include <array>
#include <map>
#include <string>
#include <vector>

namespace liret {

// Exhaustive in-memory index over unit-normalized token embeddings.
// Token rows live in one contiguous float arena; a document's modalities
// are stored back to back in declared order, so the contextualized scorer
// sees each document as a single row block.
class CorpusIndex {
 public:
  class Builder;

  // Validates ids, dimensions, and unit norms (within 1e-4) up front.
  // Consumes the documents to keep peak memory at one extra document.
  static CorpusIndex build(const ModalitySet& modalities, Eigen::Index dim,
                           std::vector<Document>&& docs);

  size_t size() const { return docs_.size(); }
  Eigen::Index dim() const { return dim_; }
  const ModalitySet& modalities() const { return mods_; }
  const std::string& doc_id(size_t i) const { return docs_.at(i).id; }
  std::optional<size_t> find(const std::string& doc_id) const;
  Eigen::Index total_rows() const;

  bool has_modality(size_t doc, size_t modality) const;
  MatViewF modality_rows(size_t doc, size_t modality) const;
  MatViewF doc_rows(size_t doc) const;  // all modalities, declared order
  DocTokenView<float> doc(size_t i) const;

  double score_doc(const TokenMatrixF& query, size_t i, Scorer scorer) const;
  ScoreBreakdown score_doc_breakdown(const TokenMatrixF& query, size_t i) const;

  // Exhaustive search. Ranking is by score descending, ties broken by
  // ascending doc_id; k larger than the corpus returns the full ranking.
  RankedList search(const TokenMatrixF& query, int k, Scorer scorer,
                    const std::string& query_id = "") const;

  // Two-stage search: mean-pooled cosine shortlists `candidates` docs,
  // the exact scorer reranks them. candidates == size() reproduces
  // search() exactly.
  RankedList search_prefiltered(const TokenMatrixF& query, int k, int candidates, Scorer scorer,
                                const std::string& query_id = "") const;

  // Per-modality score matrix for fusion baselines: docs x modalities,
  // NaN where a document lacks the modality. Column scores are either
  // late-interaction sums or per-modality mean-pooled cosines.
  Eigen::MatrixXd modality_score_table(const TokenMatrixF& query, bool pooled) const;

  // Container payload plus a doc-id table footer.
  void save(const std::string& path) const;
  static CorpusIndex load(const std::string& path);

 private:
  struct Span {
    uint64_t first_row = 0;
    uint32_t rows = 0;
  };
  struct DocMeta {
    std::string id;
    uint64_t first_row = 0;
    uint32_t total_rows = 0;
    uint8_t bitmap = 0;
    std::array<Span, kMaxModalities> spans{};
  };

  CorpusIndex() = default;
  MatViewF rows_view(uint64_t first, uint32_t count) const;
  void add_doc(const Document& doc);
  void finalize();
  std::vector<double> stage_scores(const TokenMatrixF& query, Scorer scorer,
                                   const std::vector<size_t>& candidates) const;

  ModalitySet mods_;
  Eigen::Index dim_ = 0;
  std::vector<float> arena_;
  std::vector<DocMeta> docs_;
  std::map<std::string, size_t> by_id_;
  TokenMatrixF pooled_mean_;  // one unit row per doc, for prefilter + pooled scorer
  TokenMatrixF pooled_last_;
};

// Incremental construction: documents are copied into the arena one at a
// time, so peak memory stays near the final index size.
class CorpusIndex::Builder {
 public:
  Builder(ModalitySet modalities, Eigen::Index dim);
  // Total token rows across all documents, if known; avoids regrowth.
  void reserve_rows(Eigen::Index rows);
  void add(const Document& doc);
  CorpusIndex finish();

 private:
  CorpusIndex idx_;
  bool finished_ = false;
};

}  // namespace liret
