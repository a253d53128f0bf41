// Copyright the liret authors. Licensed under the terms of the Apache 2.0 license. See LICENSE in the project root.
#pragma once

#include "liret/encoder.hpp"
#include "liret/scoring.hpp"
#include "liret/types.hpp"

#include <optional>
#include <string>
#include <vector>

namespace liret {

// Contrastive objectives over in-batch negatives. All three losses share
// one softmax-over-nodes form: for query k, L_k = LSE(nodes/tau) - a_k/tau
// with a_k the positive node. They differ in which score nodes enter the
// denominator:
//   infonce  nodes are s(k, j) for every doc j under the chosen scorer,
//            positive is s(k, k)
//   modpos   positive is the target modality's score of the paired doc;
//            other docs contribute their modality-wise max
//   modneg   every modality of every doc is a node, plus the modality-wise
//            max of each other doc
// modpos and modneg are tied to modality-wise scoring; infonce accepts the
// modality-wise, contextualized, or mean-pooled scorer.
enum class LossKind { infonce, modpos, modneg };

inline LossKind loss_from_string(const std::string& s) {
  if (s == "infonce") return LossKind::infonce;
  if (s == "modpos") return LossKind::modpos;
  if (s == "modneg") return LossKind::modneg;
  raise(Errc::invalid_argument, "unknown loss: " + s);
}

inline const char* loss_name(LossKind k) {
  switch (k) {
    case LossKind::infonce: return "infonce";
    case LossKind::modpos: return "modpos";
    case LossKind::modneg: return "modneg";
  }
  return "unknown";
}

// One training pair: a query and its positive document, raw features.
struct TrainItem {
  std::string query_id;
  Eigen::MatrixXd query_features;
  FeatureDoc doc;
  std::optional<size_t> target_modality;
};

struct TrainBatch {
  std::vector<TrainItem> items;

  // Invariants: at least two items, each positive doc_id unique, every
  // query and document non-empty with a consistent feature dim.
  void validate(size_t modality_count) const;
  size_t size() const { return items.size(); }
};

struct LossSpec {
  LossKind kind = LossKind::infonce;
  Scorer scorer = Scorer::li_mw;  // used by infonce only
  bool contextualize = true;
};

struct LossResult {
  double value = 0.0;
  // Batch score matrix s(k, j) under the loss's base scorer (the
  // modality-wise max for modpos/modneg).
  Eigen::MatrixXd scores;
};

struct ParamGrads {
  Eigen::MatrixXd projection;
  Eigen::MatrixXd pad_features;
  double mixing_weight = 0.0;
  double log_temperature = 0.0;

  static ParamGrads zeros_like(const EncoderParams& p) {
    ParamGrads g;
    g.projection = Eigen::MatrixXd::Zero(p.projection.rows(), p.projection.cols());
    g.pad_features = Eigen::MatrixXd::Zero(p.pad_features.rows(), p.pad_features.cols());
    return g;
  }
};

struct LossGrads {
  double value = 0.0;
  Eigen::MatrixXd scores;
  ParamGrads grads;
  // Smallest decision margin seen in the forward pass (token argmax,
  // per-token modality winner, modality-wise winner). Finite-difference
  // checks use it to reject configurations close to a subgradient kink.
  double min_margin = 0.0;
};

LossResult loss_value(const TrainBatch& batch, const EncoderParams& params, const LossSpec& spec);
LossGrads loss_gradients(const TrainBatch& batch, const EncoderParams& params,
                         const LossSpec& spec);

LossResult loss_infonce(const TrainBatch& batch, const EncoderParams& params, Scorer scorer,
                        bool contextualize = true);
LossResult loss_modpos(const TrainBatch& batch, const EncoderParams& params,
                       bool contextualize = true);
LossResult loss_modneg(const TrainBatch& batch, const EncoderParams& params,
                       bool contextualize = true);

}  // namespace liret
