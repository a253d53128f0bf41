// Copyright the liret authors. Licensed under the terms of the Apache 2.0 license. See LICENSE in the project root.
#pragma once

#include "liret/index.hpp"
#include "liret/types.hpp"

#include <string>
#include <vector>

namespace liret {

// Per-query score table for fusion baselines: one row per document, one
// column per declared modality, NaN where the document lacks the modality.
struct ModalityScoreTable {
  ModalitySet modalities;
  std::vector<std::string> doc_ids;
  Eigen::MatrixXd scores;
};

// Column scores are late-interaction sums, or per-modality mean-pooled
// cosines when `pooled` is set.
ModalityScoreTable build_score_table(const CorpusIndex& index, const TokenMatrixF& query,
                                     bool pooled = false);

// Average of the present modality scores. A document with no present
// modality is an error: the table invariant is at least one entry per row.
RankedList fuse_mean(const ModalityScoreTable& table, const std::string& query_id = "");

struct FusedList {
  RankedList ranking;
  std::vector<int> chosen_modality;  // winner column per ranked item
};

// Highest present modality score; records which column won. Ties pick the
// lowest declared index.
FusedList fuse_max(const ModalityScoreTable& table, const std::string& query_id = "");

// Reciprocal rank fusion over any set of rankings. A document absent from
// one ranking simply contributes nothing for it.
RankedList fuse_rrf(const std::vector<RankedList>& rankings, double k_rrf = 60.0,
                    const std::string& query_id = "");

// One ranking per modality column (documents holding that modality,
// ordered by its score). Feed these to fuse_rrf.
std::vector<RankedList> per_modality_rankings(const ModalityScoreTable& table,
                                              const std::string& query_id = "");

// Route the whole query to one modality: ranking is that column alone,
// restricted to documents that have it.
RankedList fuse_router(const ModalityScoreTable& table, size_t modality,
                       const std::string& query_id = "");

}  // namespace liret
