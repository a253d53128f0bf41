// Copyright the liret authors. Licensed under the terms of the Apache 2.0 license. See LICENSE in the project root.
#include "liret/fusion.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace liret {
namespace {

// (doc_id, score) ranking with the shared tie-break: score descending,
// doc_id ascending.
RankedList rank_pairs(std::vector<std::pair<std::string, double>> pairs,
                      const std::string& query_id) {
  std::sort(pairs.begin(), pairs.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  RankedList out;
  out.query_id = query_id;
  out.items.reserve(pairs.size());
  for (auto& [id, s] : pairs) out.items.emplace_back(std::move(id), static_cast<float>(s));
  return out;
}

void check_table(const ModalityScoreTable& t) {
  if (t.doc_ids.empty()) raise(Errc::invalid_argument, "empty score table");
  if (t.scores.rows() != static_cast<Eigen::Index>(t.doc_ids.size()) ||
      t.scores.cols() != static_cast<Eigen::Index>(t.modalities.size()))
    raise(Errc::invalid_argument, "score table shape does not match labels");
}

}  // namespace

ModalityScoreTable build_score_table(const CorpusIndex& index, const TokenMatrixF& query,
                                     bool pooled) {
  ModalityScoreTable t;
  t.modalities = index.modalities();
  t.doc_ids.reserve(index.size());
  for (size_t i = 0; i < index.size(); ++i) t.doc_ids.push_back(index.doc_id(i));
  t.scores = index.modality_score_table(query, pooled);
  return t;
}

RankedList fuse_mean(const ModalityScoreTable& table, const std::string& query_id) {
  check_table(table);
  std::vector<std::pair<std::string, double>> pairs;
  pairs.reserve(table.doc_ids.size());
  for (Eigen::Index i = 0; i < table.scores.rows(); ++i) {
    double sum = 0.0;
    int present = 0;
    for (Eigen::Index m = 0; m < table.scores.cols(); ++m) {
      const double s = table.scores(i, m);
      if (std::isnan(s)) continue;
      sum += s;
      ++present;
    }
    if (present == 0)
      raise(Errc::invalid_argument, "doc " + table.doc_ids[i] + " has no modality scores");
    pairs.emplace_back(table.doc_ids[i], sum / present);
  }
  return rank_pairs(std::move(pairs), query_id);
}

FusedList fuse_max(const ModalityScoreTable& table, const std::string& query_id) {
  check_table(table);
  std::vector<std::pair<std::string, double>> pairs;
  std::map<std::string, int> winner;
  pairs.reserve(table.doc_ids.size());
  for (Eigen::Index i = 0; i < table.scores.rows(); ++i) {
    double best = -std::numeric_limits<double>::infinity();
    int best_m = -1;
    for (Eigen::Index m = 0; m < table.scores.cols(); ++m) {
      const double s = table.scores(i, m);
      if (std::isnan(s)) continue;
      if (s > best) {
        best = s;
        best_m = static_cast<int>(m);
      }
    }
    if (best_m < 0)
      raise(Errc::invalid_argument, "doc " + table.doc_ids[i] + " has no modality scores");
    pairs.emplace_back(table.doc_ids[i], best);
    winner[table.doc_ids[i]] = best_m;
  }
  FusedList out;
  out.ranking = rank_pairs(std::move(pairs), query_id);
  out.chosen_modality.reserve(out.ranking.items.size());
  for (const auto& [id, s] : out.ranking.items) out.chosen_modality.push_back(winner.at(id));
  return out;
}

RankedList fuse_rrf(const std::vector<RankedList>& rankings, double k_rrf,
                    const std::string& query_id) {
  if (k_rrf <= 0.0) raise(Errc::invalid_argument, "rrf constant must be positive");
  if (rankings.empty()) raise(Errc::invalid_argument, "no rankings to fuse");
  std::map<std::string, double> acc;
  for (const RankedList& r : rankings) {
    int rank = 1;
    for (const auto& [id, s] : r.items) acc[id] += 1.0 / (k_rrf + rank++);
  }
  std::vector<std::pair<std::string, double>> pairs(acc.begin(), acc.end());
  return rank_pairs(std::move(pairs), query_id);
}

std::vector<RankedList> per_modality_rankings(const ModalityScoreTable& table,
                                              const std::string& query_id) {
  check_table(table);
  std::vector<RankedList> out;
  out.reserve(table.modalities.size());
  for (size_t m = 0; m < table.modalities.size(); ++m)
    out.push_back(fuse_router(table, m, query_id));
  return out;
}

RankedList fuse_router(const ModalityScoreTable& table, size_t modality,
                       const std::string& query_id) {
  check_table(table);
  if (modality >= table.modalities.size())
    raise(Errc::invalid_argument, "modality index out of range");
  std::vector<std::pair<std::string, double>> pairs;
  for (Eigen::Index i = 0; i < table.scores.rows(); ++i) {
    const double s = table.scores(i, static_cast<Eigen::Index>(modality));
    if (!std::isnan(s)) pairs.emplace_back(table.doc_ids[i], s);
  }
  return rank_pairs(std::move(pairs), query_id);
}

}  // namespace liret
