// Copyright the liret authors. Licensed under the terms of the Apache 2.0 license. See LICENSE in the project root.
#include "liret/encoder.hpp"

#include "liret/io.hpp"

#include <cmath>

namespace liret {

EncoderParams EncoderParams::seeded(Eigen::Index feature_dim, Eigen::Index dim,
                                    Eigen::Index pad_count, uint64_t seed, double alpha_init) {
  if (feature_dim < 1 || dim < 1 || pad_count < 0)
    raise(Errc::invalid_argument, "encoder dims must be positive, pad_count >= 0");
  if (alpha_init < 0.0 || alpha_init > 1.0)
    raise(Errc::invalid_argument, "mixing weight init outside [0, 1]");
  EncoderParams p;
  const double scale = 1.0 / std::sqrt(static_cast<double>(feature_dim));
  Rng w = Rng(seed).stream("encoder-init/projection");
  p.projection.resize(feature_dim, dim);
  for (Eigen::Index i = 0; i < feature_dim; ++i)
    for (Eigen::Index j = 0; j < dim; ++j) p.projection(i, j) = scale * w.gaussian();
  Rng pads = Rng(seed).stream("encoder-init/pads");
  p.pad_features.resize(pad_count, feature_dim);
  for (Eigen::Index i = 0; i < pad_count; ++i)
    for (Eigen::Index j = 0; j < feature_dim; ++j) p.pad_features(i, j) = scale * pads.gaussian();
  p.mixing_weight = alpha_init;
  p.log_temperature = 0.0;
  return p;
}

EncodedTokens project_tokens(const Eigen::MatrixXd& inputs, const Eigen::MatrixXd& projection) {
  if (inputs.cols() != projection.rows())
    raise(Errc::dim_mismatch, "token feature dim " + std::to_string(inputs.cols()) +
                                  " vs projection input dim " + std::to_string(projection.rows()));
  EncodedTokens t;
  t.inputs = inputs;
  t.pre_norm = inputs * projection;
  t.norms.resize(t.pre_norm.rows());
  t.embeddings.resizeLike(t.pre_norm);
  for (Eigen::Index r = 0; r < t.pre_norm.rows(); ++r) {
    const double n = t.pre_norm.row(r).norm();
    t.norms(r) = n;
    if (n > 0.0)
      t.embeddings.row(r) = t.pre_norm.row(r) / n;
    else
      t.embeddings.row(r).setZero();
  }
  return t;
}

DocEncoding encode_document(const FeatureDoc& doc, const EncoderParams& params,
                            bool contextualize) {
  DocEncoding enc;
  const Eigen::Index f = params.feature_dim();
  enc.context = Eigen::RowVectorXd::Zero(f);
  Eigen::Index total = 0;
  for (const auto& mod : doc.modalities) {
    if (!mod) continue;
    if (mod->cols() != f)
      raise(Errc::dim_mismatch, "doc " + doc.id + ": feature dim " + std::to_string(mod->cols()) +
                                    " vs encoder input dim " + std::to_string(f));
    if (contextualize)
      for (Eigen::Index r = 0; r < mod->rows(); ++r) enc.context += mod->row(r);
    total += mod->rows();
  }
  if (total == 0) raise(Errc::invalid_argument, "doc " + doc.id + ": no tokens");
  enc.total_tokens = total;
  if (contextualize) enc.context /= static_cast<double>(total);

  const double alpha = params.mixing_weight;
  for (size_t m = 0; m < doc.modalities.size(); ++m) {
    if (!doc.modalities[m]) continue;
    const Eigen::MatrixXd& raw = *doc.modalities[m];
    if (contextualize) {
      Eigen::MatrixXd mixed = (1.0 - alpha) * raw;
      mixed.rowwise() += alpha * enc.context;
      enc.mods.emplace_back(m, project_tokens(mixed, params.projection));
    } else {
      enc.mods.emplace_back(m, project_tokens(raw, params.projection));
    }
  }
  return enc;
}

QueryEncoding encode_query(const Eigen::MatrixXd& features, const EncoderParams& params) {
  if (features.rows() < 1) raise(Errc::invalid_argument, "query has no tokens");
  QueryEncoding q;
  q.raw_rows = std::min<Eigen::Index>(features.rows(), kMaxQueryTokens);
  q.truncated = features.rows() > kMaxQueryTokens;
  const Eigen::Index pads = params.pad_count();
  Eigen::MatrixXd inputs(q.raw_rows + pads, features.cols());
  inputs.topRows(q.raw_rows) = features.topRows(q.raw_rows);
  if (pads > 0) {
    if (params.pad_features.cols() != features.cols())
      raise(Errc::dim_mismatch, "pad feature dim " + std::to_string(params.pad_features.cols()) +
                                    " vs query feature dim " + std::to_string(features.cols()));
    inputs.bottomRows(pads) = params.pad_features;
  }
  q.tokens = project_tokens(inputs, params.projection);
  return q;
}

Document encode_document_f32(const Document& features, const ModalitySet& modalities,
                             const EncoderParams& params, bool contextualize) {
  FeatureDoc d(features.id, features.modalities.size());
  for (size_t m = 0; m < features.modalities.size(); ++m)
    if (features.modalities[m]) d.modalities[m] = features.modalities[m]->cast<double>();
  const DocEncoding enc = encode_document(d, params, contextualize);
  Document out(features.id, modalities.size());
  for (const auto& [m, tokens] : enc.mods) out.modalities[m] = tokens.embeddings.cast<float>();
  return out;
}

TokenMatrixF encode_query_f32(const TokenMatrixF& features, const EncoderParams& params,
                              bool* truncated) {
  const QueryEncoding enc = encode_query(features.cast<double>(), params);
  if (truncated) *truncated = enc.truncated;
  return enc.tokens.embeddings.cast<float>();
}

namespace {

const char* kCheckpointDoc = "encoder";

}  // namespace

void save_checkpoint(const std::string& path, const EncoderParams& params, bool contextualize) {
  const Eigen::Index f = params.feature_dim();
  Container c;
  c.kind = PayloadKind::features;
  c.modalities = ModalitySet({"projection", "pad", "scalar"});
  c.dim = f;
  Document d(kCheckpointDoc, 3);
  d.modalities[0] = TokenMatrixF(params.projection.transpose().cast<float>());
  if (params.pad_count() > 0) d.modalities[1] = TokenMatrixF(params.pad_features.cast<float>());
  TokenMatrixF scalars = TokenMatrixF::Zero(3, f);
  scalars(0, 0) = static_cast<float>(params.mixing_weight);
  scalars(1, 0) = static_cast<float>(params.log_temperature);
  scalars(2, 0) = contextualize ? 1.0f : 0.0f;
  d.modalities[2] = std::move(scalars);
  c.docs.push_back(std::move(d));
  write_container(path, c);
}

std::pair<EncoderParams, bool> load_checkpoint(const std::string& path) {
  Container c = read_container(path);
  if (c.kind != PayloadKind::features)
    raise(Errc::bad_magic, path + ": checkpoint payload must be raw parameters");
  const ModalitySet expect({"projection", "pad", "scalar"});
  if (c.modalities != expect || c.docs.size() != 1 || c.docs[0].id != kCheckpointDoc)
    raise(Errc::parse_error, path + ": not an encoder checkpoint");
  const Document& d = c.docs[0];
  if (!d.modalities[0] || !d.modalities[2])
    raise(Errc::parse_error, path + ": checkpoint missing parameter blocks");
  EncoderParams p;
  p.projection = d.modalities[0]->cast<double>().transpose();
  if (d.modalities[1])
    p.pad_features = d.modalities[1]->cast<double>();
  else
    p.pad_features = Eigen::MatrixXd(0, p.projection.rows());
  if (d.modalities[2]->rows() != 3)
    raise(Errc::parse_error, path + ": malformed scalar block");
  p.mixing_weight = (*d.modalities[2])(0, 0);
  p.log_temperature = (*d.modalities[2])(1, 0);
  const bool contextualize = (*d.modalities[2])(2, 0) != 0.0f;
  return {std::move(p), contextualize};
}

}  // namespace liret
