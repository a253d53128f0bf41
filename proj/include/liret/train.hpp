// Copyright the liret authors. Licensed under the terms of the Apache 2.0 license. See LICENSE in the project root.
#pragma once

#include "liret/loss.hpp"
#include "liret/types.hpp"

#include <string>
#include <vector>

namespace liret {

struct TrainConfig {
  LossKind loss = LossKind::infonce;
  Scorer scorer = Scorer::li_mw;
  int batch_size = 16;
  int epochs = 5;
  double lr = 1e-3;
  uint64_t seed = 0;
  double alpha = 0.5;  // mixing weight init
  int pad_count = 5;
  bool contextualize = true;
  Eigen::Index dim = 128;  // projection output

  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;

  void validate() const;
};

// JSON config: keys loss, scorer, batch_size, epochs, lr, seed, alpha,
// pad_count, contextualize ("on"/"off" or bool). Missing keys keep their
// defaults; unknown keys are an error.
TrainConfig train_config_from_file(const std::string& path);

struct TrainSet {
  ModalitySet modalities;
  Eigen::Index feature_dim = 0;
  std::vector<TrainItem> pairs;
};

struct ValPair {
  std::string query_id;
  Eigen::MatrixXd query_features;
  std::string positive_doc_id;
};

struct ValSet {
  std::vector<FeatureDoc> docs;
  std::vector<ValPair> queries;
};

struct StepRecord {
  int epoch = 0;
  int step = 0;  // global step
  double loss = 0.0;
};

struct FitResult {
  EncoderParams params;
  std::vector<StepRecord> curve;
  std::vector<double> val_recall_at_1;  // one entry per epoch when a val set is given
};

// Adam over the encoder parameters. Batches are rebuilt every epoch from a
// seeded shuffle, greedily keeping positives unique inside a batch; a
// leftover batch smaller than two items is dropped. The mixing weight is
// clamped to [0, 1] after every step. A non-finite loss aborts with the
// offending step in the message. Single-threaded and bit-reproducible for
// a fixed seed.
FitResult fit(const TrainSet& train, const ValSet* val, const TrainConfig& config);

// Recall@1 of the positive document under the given params, used for the
// per-epoch validation curve.
double validation_recall_at_1(const ValSet& val, const ModalitySet& modalities,
                              const EncoderParams& params, bool contextualize, Scorer scorer);

// Raw float features widened to the double training path.
FeatureDoc widen_features(const Document& doc);

// One pair per query in the given split, positive = its source document.
// targeted_only drops whole-document queries; modpos/modneg require it
// since they need a labeled modality.
TrainSet train_set_from(const ModalitySet& modalities, const std::vector<Document>& docs,
                        const std::vector<Split>& doc_splits,
                        const std::vector<QueryRecord>& queries, Split split,
                        bool targeted_only);

ValSet val_set_from(const std::vector<Document>& docs, const std::vector<Split>& doc_splits,
                    const std::vector<QueryRecord>& queries, Split split);

}  // namespace liret
