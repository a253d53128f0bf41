// Copyright the liret authors. Licensed under the terms of the Apache 2.0 license. See LICENSE in the project root.
#pragma once

#include "liret/rng.hpp"
#include "liret/types.hpp"

#include <string>
#include <utility>

namespace liret {

// Small trainable encoder over raw feature tokens:
//   - shared linear projection, feature_dim -> dim
//   - learnable pad rows appended to every query
//   - optional contextualization for documents: each token is mixed with
//     the document-wide mean feature vector, x' = (1-alpha)x + alpha*c
//   - learnable softmax temperature, tau = exp(log_temperature)
// Projected rows are L2-normalized; zero-norm rows become zero embeddings.
// All training math runs in double; serving casts to float32 storage.
struct EncoderParams {
  Eigen::MatrixXd projection;     // feature_dim x dim
  Eigen::MatrixXd pad_features;   // pad_count x feature_dim
  double mixing_weight = 0.0;     // alpha in [0, 1]
  double log_temperature = 0.0;

  Eigen::Index feature_dim() const { return projection.rows(); }
  Eigen::Index dim() const { return projection.cols(); }
  Eigen::Index pad_count() const { return pad_features.rows(); }
  double temperature() const { return std::exp(log_temperature); }

  // Default-constructed weights: the all-zero encoder. Every embedding is
  // a zero row, so all scores collapse and ranking falls back to doc-id
  // order. This is the "untrained" reference point.
  static EncoderParams zeros(Eigen::Index feature_dim, Eigen::Index dim, Eigen::Index pad_count) {
    EncoderParams p;
    p.projection = Eigen::MatrixXd::Zero(feature_dim, dim);
    p.pad_features = Eigen::MatrixXd::Zero(pad_count, feature_dim);
    return p;
  }

  // Gaussian init scaled so projected rows and pad rows land near unit
  // norm before normalization.
  static EncoderParams seeded(Eigen::Index feature_dim, Eigen::Index dim, Eigen::Index pad_count,
                              uint64_t seed, double alpha_init);
};

// Projection caches kept for backprop.
struct EncodedTokens {
  Eigen::MatrixXd inputs;      // rows fed to the projection (after mixing / pads)
  Eigen::MatrixXd pre_norm;    // inputs * projection
  Eigen::VectorXd norms;       // row norms of pre_norm, 0 for zero rows
  Eigen::MatrixXd embeddings;  // row-normalized pre_norm
};

EncodedTokens project_tokens(const Eigen::MatrixXd& inputs, const Eigen::MatrixXd& projection);

struct DocEncoding {
  // (declared modality index, caches), ascending, present modalities only.
  std::vector<std::pair<size_t, EncodedTokens>> mods;
  Eigen::RowVectorXd context;  // document mean feature vector (zero when off)
  Eigen::Index total_tokens = 0;
};

// Encodes one document. With contextualize off the mixing weight is
// ignored entirely, which matches alpha = 0 bit for bit.
DocEncoding encode_document(const FeatureDoc& doc, const EncoderParams& params,
                            bool contextualize);

struct QueryEncoding {
  EncodedTokens tokens;
  Eigen::Index raw_rows = 0;  // rows before pads
  bool truncated = false;     // raw tokens were cut to kMaxQueryTokens
};

QueryEncoding encode_query(const Eigen::MatrixXd& features, const EncoderParams& params);

// Serving wrappers: float32 in, float32 out, double math inside.
Document encode_document_f32(const Document& features, const ModalitySet& modalities,
                             const EncoderParams& params, bool contextualize);
TokenMatrixF encode_query_f32(const TokenMatrixF& features, const EncoderParams& params,
                              bool* truncated = nullptr);

// Checkpoints reuse the token container: a raw-feature payload with one
// synthetic document holding the projection (transposed, dim rows of
// feature_dim), the pad rows, and a scalar block carrying mixing weight,
// contextualization flag, and log temperature.
void save_checkpoint(const std::string& path, const EncoderParams& params, bool contextualize);
std::pair<EncoderParams, bool> load_checkpoint(const std::string& path);

}  // namespace liret
