// Copyright the liret authors. Licensed under the terms of the Apache 2.0 license. See LICENSE in the project root.
#pragma once

#include "liret/synthgen.hpp"
#include "liret/train.hpp"

#include <iosfwd>
#include <string>
#include <vector>

namespace liret {

// Desk-scale comparison grid. For each seed: generate a corpus, train one
// encoder per trained row, index the held-out test documents, and score
// the modality-targeted test queries under every system. Rows report
// R@1/5/10 and nDCG@10 means over the seeds plus a paired-bootstrap
// p-value against the strongest baseline row, pooled over the per-query
// nDCG@10 values of all seeds.
struct ExperimentConfig {
  uint64_t seed = 0;
  int seeds = 5;
  int docs = 600;
  int epochs = 3;
  Eigen::Index dim = 64;
  int k = 10;  // run depth; metrics use cutoffs 1, 5, 10
  int resamples = 10000;
  SynthConfig synth_base;   // docs/seed overridden per run
  TrainConfig train_base;   // loss/scorer/contextualize/epochs/dim overridden per row

  // A harder corpus than the generator defaults: modality queries carry
  // whole-document phrasing (the signal the contextualization ablation
  // must find), and noise plus denser distractor links keep the rankings
  // away from saturation so the orderings have room to show.
  ExperimentConfig() {
    synth_base.sigma = 0.25;
    synth_base.rho = 0.25;
    synth_base.query_context = 0.3;
  }
};

struct ExperimentRow {
  std::string system;
  bool baseline = false;
  double r1 = 0.0, r5 = 0.0, r10 = 0.0, ndcg10 = 0.0;  // means over seeds
  std::vector<double> ndcg10_per_seed;
  // Per-query nDCG@10 pooled over seeds, query ids prefixed "s<i>:".
  std::vector<std::pair<std::string, double>> ndcg10_queries;
  double p_vs_baseline = 1.0;
};

struct OrderingCheck {
  std::string name;          // "a <= b" over mean nDCG@10
  bool holds = false;        // on the seed means
  std::vector<int> inverted_seeds;  // seeds where the per-seed values flip
};

struct ExperimentReport {
  ExperimentConfig config;
  std::vector<ExperimentRow> rows;
  std::string strongest_baseline;
  std::vector<OrderingCheck> orderings;
  std::vector<std::string> notes;
  double seconds = 0.0;
};

// Runs the full grid. Progress lines go to `progress` when given.
ExperimentReport run_experiment(const ExperimentConfig& config, std::ostream* progress = nullptr);

// Tab-separated summary, one row per system.
std::string experiment_table(const ExperimentReport& report);

// table.tsv and report.json under the given directory.
void write_experiment_report(const std::string& dir, const ExperimentReport& report);

const ExperimentRow& experiment_row(const ExperimentReport& report, const std::string& system);

}  // namespace liret
