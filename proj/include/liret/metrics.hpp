// Copyright the liret authors. Licensed under the terms of the Apache 2.0 license. See LICENSE in the project root.
#pragma once

#include "liret/index.hpp"
#include "liret/types.hpp"

#include <string>
#include <vector>

namespace liret {

// Recall@k over binary hits (grade >= 1 anywhere in the top k), the usual
// convention for graded judgments; the fraction variant divides the number
// of relevant documents retrieved by the number judged relevant.
enum class RecallMode { hit_rate, fraction };

// nDCG gain: exponential (2^grade - 1) or linear (grade).
enum class GainKind { exponential, linear };

struct MetricReport {
  std::string metric;
  std::vector<std::pair<std::string, double>> per_query;  // run order
  double mean = 0.0;
  int evaluated = 0;
  int skipped = 0;  // queries without positive judgments
};

MetricReport recall_at_k(const std::vector<RankedList>& run, const Qrels& qrels, int k,
                         RecallMode mode = RecallMode::hit_rate);

MetricReport ndcg_at_k(const std::vector<RankedList>& run, const Qrels& qrels, int k,
                       GainKind gain = GainKind::exponential);

// Writes per-query rows plus an "ALL" mean row per metric:
//   metric <TAB> query_id <TAB> value
void write_metric_report(const std::string& path, const std::vector<MetricReport>& reports);

// Which modality wins the late-interaction max against the query's own
// positive document, versus the query's target label.
struct LabeledQuery {
  std::string query_id;
  TokenMatrixF embeddings;
  size_t target_modality = 0;
  std::string positive_doc_id;
};

struct AccuracyReport {
  std::vector<double> per_class;  // NaN for classes with no queries
  std::vector<int> class_counts;
  double macro = 0.0;  // mean over classes that appear
  double micro = 0.0;  // pooled over queries
  int evaluated = 0;
  int skipped = 0;  // positive doc missing from the index
};

AccuracyReport modality_accuracy(const CorpusIndex& index,
                                 const std::vector<LabeledQuery>& queries);

// Paired bootstrap over per-query metric values: resamples query sets with
// replacement and reports the fraction of resamples where mean(a) does not
// exceed mean(b). Identical inputs give exactly 1.0; if a dominates b on
// every query the p-value is 0.0. Query id sets must match.
double paired_bootstrap(const std::vector<std::pair<std::string, double>>& a,
                        const std::vector<std::pair<std::string, double>>& b, int resamples,
                        uint64_t seed);

}  // namespace liret
