// Copyright the liret authors. Licensed under the terms of the Apache 2.0 license. See LICENSE in the project root.
#include "liret/metrics.hpp"

#include "liret/io.hpp"
#include "liret/rng.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <limits>
#include <map>

namespace liret {
namespace {

// Positive judgments for one query, or nothing if the query has none.
const std::map<std::string, int>* positives(const Qrels& qrels, const std::string& qid,
                                            bool* any_positive) {
  auto it = qrels.by_query.find(qid);
  if (it == qrels.by_query.end()) return nullptr;
  *any_positive = false;
  for (const auto& [did, g] : it->second)
    if (g > 0) {
      *any_positive = true;
      break;
    }
  return &it->second;
}

double gain_of(int grade, GainKind gain) {
  return gain == GainKind::exponential ? std::pow(2.0, grade) - 1.0 : static_cast<double>(grade);
}

}  // namespace

MetricReport recall_at_k(const std::vector<RankedList>& run, const Qrels& qrels, int k,
                         RecallMode mode) {
  if (k < 1) raise(Errc::invalid_argument, "k must be >= 1");
  MetricReport rep;
  rep.metric = "r@" + std::to_string(k);
  double sum = 0.0;
  for (const RankedList& list : run) {
    bool any_positive = false;
    const auto* judged = positives(qrels, list.query_id, &any_positive);
    if (!judged || !any_positive) {
      ++rep.skipped;
      continue;
    }
    size_t relevant_total = 0;
    for (const auto& [did, g] : *judged)
      if (g > 0) ++relevant_total;
    size_t hits = 0;
    const size_t depth = std::min<size_t>(static_cast<size_t>(k), list.items.size());
    for (size_t r = 0; r < depth; ++r)
      if (qrels.grade(list.query_id, list.items[r].first) > 0) ++hits;
    const double value = mode == RecallMode::hit_rate
                             ? (hits > 0 ? 1.0 : 0.0)
                             : static_cast<double>(hits) / static_cast<double>(relevant_total);
    rep.per_query.emplace_back(list.query_id, value);
    sum += value;
    ++rep.evaluated;
  }
  rep.mean = rep.evaluated > 0 ? sum / rep.evaluated : 0.0;
  return rep;
}

MetricReport ndcg_at_k(const std::vector<RankedList>& run, const Qrels& qrels, int k,
                       GainKind gain) {
  if (k < 1) raise(Errc::invalid_argument, "k must be >= 1");
  MetricReport rep;
  rep.metric = "ndcg@" + std::to_string(k);
  double sum = 0.0;
  for (const RankedList& list : run) {
    bool any_positive = false;
    const auto* judged = positives(qrels, list.query_id, &any_positive);
    if (!judged || !any_positive) {
      ++rep.skipped;
      continue;
    }
    double dcg = 0.0;
    const size_t depth = std::min<size_t>(static_cast<size_t>(k), list.items.size());
    for (size_t r = 0; r < depth; ++r) {
      const int g = qrels.grade(list.query_id, list.items[r].first);
      if (g > 0) dcg += gain_of(g, gain) / std::log2(static_cast<double>(r) + 2.0);
    }
    std::vector<int> grades;
    grades.reserve(judged->size());
    for (const auto& [did, g] : *judged)
      if (g > 0) grades.push_back(g);
    std::sort(grades.begin(), grades.end(), std::greater<int>());
    double idcg = 0.0;
    for (size_t r = 0; r < std::min<size_t>(static_cast<size_t>(k), grades.size()); ++r)
      idcg += gain_of(grades[r], gain) / std::log2(static_cast<double>(r) + 2.0);
    const double value = idcg > 0.0 ? dcg / idcg : 0.0;
    rep.per_query.emplace_back(list.query_id, value);
    sum += value;
    ++rep.evaluated;
  }
  rep.mean = rep.evaluated > 0 ? sum / rep.evaluated : 0.0;
  return rep;
}

void write_metric_report(const std::string& path, const std::vector<MetricReport>& reports) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) raise(Errc::io_error, "cannot open for write: " + path);
  for (const MetricReport& rep : reports) {
    for (const auto& [qid, value] : rep.per_query)
      out << rep.metric << '\t' << qid << '\t' << format_score(value) << '\n';
    out << rep.metric << "\tALL\t" << format_score(rep.mean) << '\n';
  }
  out.flush();
  if (!out) raise(Errc::io_error, "write failed: " + path);
}

AccuracyReport modality_accuracy(const CorpusIndex& index,
                                 const std::vector<LabeledQuery>& queries) {
  const size_t classes = index.modalities().size();
  AccuracyReport rep;
  rep.class_counts.assign(classes, 0);
  std::vector<int> correct(classes, 0);
  for (const LabeledQuery& q : queries) {
    if (q.target_modality >= classes)
      raise(Errc::invalid_argument, "query " + q.query_id + ": label out of range");
    const auto doc = index.find(q.positive_doc_id);
    if (!doc) {
      ++rep.skipped;
      continue;
    }
    const ScoreBreakdown sb = index.score_doc_breakdown(q.embeddings, *doc);
    ++rep.class_counts[q.target_modality];
    if (sb.modality == static_cast<int>(q.target_modality)) ++correct[q.target_modality];
    ++rep.evaluated;
  }
  rep.per_class.assign(classes, std::numeric_limits<double>::quiet_NaN());
  double macro_sum = 0.0;
  int macro_classes = 0;
  int micro_correct = 0;
  for (size_t m = 0; m < classes; ++m) {
    if (rep.class_counts[m] == 0) continue;
    rep.per_class[m] = static_cast<double>(correct[m]) / rep.class_counts[m];
    macro_sum += rep.per_class[m];
    ++macro_classes;
    micro_correct += correct[m];
  }
  rep.macro = macro_classes > 0 ? macro_sum / macro_classes : 0.0;
  rep.micro = rep.evaluated > 0 ? static_cast<double>(micro_correct) / rep.evaluated : 0.0;
  return rep;
}

double paired_bootstrap(const std::vector<std::pair<std::string, double>>& a,
                        const std::vector<std::pair<std::string, double>>& b, int resamples,
                        uint64_t seed) {
  if (resamples < 1) raise(Errc::invalid_argument, "resamples must be >= 1");
  if (a.size() != b.size() || a.empty())
    raise(Errc::invalid_argument, "paired bootstrap needs matching non-empty query sets");
  std::map<std::string, double> bv;
  for (const auto& [qid, v] : b)
    if (!bv.emplace(qid, v).second) raise(Errc::duplicate_entry, "query " + qid);
  std::vector<double> da(a.size()), db(a.size());
  for (size_t i = 0; i < a.size(); ++i) {
    auto it = bv.find(a[i].first);
    if (it == bv.end())
      raise(Errc::invalid_argument, "query " + a[i].first + " missing from the second system");
    da[i] = a[i].second;
    db[i] = it->second;
  }

  const int n = static_cast<int>(a.size());
  Rng root = Rng(seed).stream("bootstrap");
  int not_better = 0;
  for (int r = 0; r < resamples; ++r) {
    Rng draw = root.stream("resample", static_cast<uint64_t>(r));
    double sum_a = 0.0, sum_b = 0.0;
    for (int i = 0; i < n; ++i) {
      const int idx = draw.uniform_int(0, n - 1);
      sum_a += da[static_cast<size_t>(idx)];
      sum_b += db[static_cast<size_t>(idx)];
    }
    if (sum_a <= sum_b) ++not_better;
  }
  return static_cast<double>(not_better) / static_cast<double>(resamples);
}

}  // namespace liret
