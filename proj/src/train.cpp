// Copyright the liret authors. Licensed under the terms of the Apache 2.0 license. See LICENSE in the project root.
#include "liret/train.hpp"

#include "liret/index.hpp"
#include "liret/rng.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>

namespace liret {

void TrainConfig::validate() const {
  if (batch_size < 2) raise(Errc::invalid_argument, "batch_size must be >= 2");
  if (epochs < 1) raise(Errc::invalid_argument, "epochs must be >= 1");
  // Zero is allowed: a no-op fit is the cheapest determinism check.
  if (lr < 0.0 || !std::isfinite(lr)) raise(Errc::invalid_argument, "lr must be non-negative");
  if (alpha < 0.0 || alpha > 1.0) raise(Errc::invalid_argument, "alpha must lie in [0, 1]");
  if (pad_count < 0) raise(Errc::invalid_argument, "pad_count must be >= 0");
  if (dim < 1) raise(Errc::invalid_argument, "dim must be >= 1");
  if (scorer == Scorer::pooled_last)
    raise(Errc::invalid_argument, "training scorer must be li_mw, li_context, or pooled");
}

TrainConfig train_config_from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) raise(Errc::io_error, "cannot open: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    raise(Errc::parse_error, path + ": " + e.what());
  }
  if (!j.is_object()) raise(Errc::parse_error, path + ": config must be a JSON object");
  TrainConfig c;
  for (const auto& [key, value] : j.items()) {
    try {
      if (key == "loss") {
        c.loss = loss_from_string(value.get<std::string>());
      } else if (key == "scorer") {
        c.scorer = scorer_from_string(value.get<std::string>());
      } else if (key == "batch_size") {
        c.batch_size = value.get<int>();
      } else if (key == "epochs") {
        c.epochs = value.get<int>();
      } else if (key == "lr") {
        c.lr = value.get<double>();
      } else if (key == "seed") {
        c.seed = value.get<uint64_t>();
      } else if (key == "alpha") {
        c.alpha = value.get<double>();
      } else if (key == "pad_count") {
        c.pad_count = value.get<int>();
      } else if (key == "dim") {
        c.dim = value.get<Eigen::Index>();
      } else if (key == "contextualize") {
        if (value.is_boolean())
          c.contextualize = value.get<bool>();
        else if (value.get<std::string>() == "on")
          c.contextualize = true;
        else if (value.get<std::string>() == "off")
          c.contextualize = false;
        else
          raise(Errc::parse_error, path + ": contextualize must be on/off");
      } else {
        raise(Errc::parse_error, path + ": unknown config key: " + key);
      }
    } catch (const nlohmann::json::exception& e) {
      raise(Errc::parse_error, path + ": key " + key + ": " + e.what());
    }
  }
  c.validate();
  return c;
}

namespace {

struct Adam {
  Eigen::MatrixXd m_proj, v_proj, m_pad, v_pad;
  double m_alpha = 0, v_alpha = 0, m_tau = 0, v_tau = 0;
  int64_t t = 0;

  explicit Adam(const EncoderParams& p)
      : m_proj(Eigen::MatrixXd::Zero(p.projection.rows(), p.projection.cols())),
        v_proj(Eigen::MatrixXd::Zero(p.projection.rows(), p.projection.cols())),
        m_pad(Eigen::MatrixXd::Zero(p.pad_features.rows(), p.pad_features.cols())),
        v_pad(Eigen::MatrixXd::Zero(p.pad_features.rows(), p.pad_features.cols())) {}

  void update_tensor(Eigen::MatrixXd& p, Eigen::MatrixXd& m, Eigen::MatrixXd& v,
                     const Eigen::MatrixXd& g, const TrainConfig& c, double bc1, double bc2) {
    m = c.beta1 * m + (1.0 - c.beta1) * g;
    v = c.beta2 * v + (1.0 - c.beta2) * g.cwiseProduct(g);
    p.array() -= c.lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + c.adam_eps);
  }

  void update_scalar(double& p, double& m, double& v, double g, const TrainConfig& c, double bc1,
                     double bc2) {
    m = c.beta1 * m + (1.0 - c.beta1) * g;
    v = c.beta2 * v + (1.0 - c.beta2) * g * g;
    p -= c.lr * (m / bc1) / (std::sqrt(v / bc2) + c.adam_eps);
  }

  void step(EncoderParams& p, const ParamGrads& g, const TrainConfig& c, bool update_alpha) {
    ++t;
    const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(t));
    const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(t));
    update_tensor(p.projection, m_proj, v_proj, g.projection, c, bc1, bc2);
    if (p.pad_features.size() > 0)
      update_tensor(p.pad_features, m_pad, v_pad, g.pad_features, c, bc1, bc2);
    if (update_alpha) {
      update_scalar(p.mixing_weight, m_alpha, v_alpha, g.mixing_weight, c, bc1, bc2);
      p.mixing_weight = std::clamp(p.mixing_weight, 0.0, 1.0);
    }
    update_scalar(p.log_temperature, m_tau, v_tau, g.log_temperature, c, bc1, bc2);
  }
};

// Greedy batch construction over a shuffled order: walk the remaining
// items, take the first ones whose positive doc is not in the batch yet.
// With several queries per document this interleaves positives without
// any retry loops, and it is fully determined by the shuffle.
std::vector<std::vector<size_t>> make_batches(const std::vector<size_t>& order, size_t batch_size,
                                              const std::vector<TrainItem>& pairs) {
  std::vector<std::vector<size_t>> batches;
  std::vector<size_t> remaining = order;
  while (!remaining.empty()) {
    std::vector<size_t> batch;
    std::set<std::string> used;
    std::vector<size_t> rest;
    rest.reserve(remaining.size());
    for (size_t idx : remaining) {
      if (batch.size() < batch_size && used.insert(pairs[idx].doc.id).second)
        batch.push_back(idx);
      else
        rest.push_back(idx);
    }
    if (batch.size() >= 2) batches.push_back(std::move(batch));
    if (rest.size() == remaining.size()) break;  // only duplicates left
    remaining = std::move(rest);
    if (batch_size < 2) break;
  }
  return batches;
}

}  // namespace

double validation_recall_at_1(const ValSet& val, const ModalitySet& modalities,
                              const EncoderParams& params, bool contextualize, Scorer scorer) {
  if (val.queries.empty() || val.docs.empty()) return 0.0;
  std::vector<Document> docs;
  docs.reserve(val.docs.size());
  for (const FeatureDoc& fd : val.docs) {
    Document f32(fd.id, fd.modalities.size());
    for (size_t m = 0; m < fd.modalities.size(); ++m)
      if (fd.modalities[m]) f32.modalities[m] = fd.modalities[m]->cast<float>();
    docs.push_back(encode_document_f32(f32, modalities, params, contextualize));
  }
  const CorpusIndex index = CorpusIndex::build(modalities, params.dim(), std::move(docs));
  size_t hits = 0;
  for (const ValPair& q : val.queries) {
    const QueryEncoding enc = encode_query(q.query_features, params);
    const TokenMatrixF emb = enc.tokens.embeddings.cast<float>();
    const RankedList top = index.search(emb, 1, scorer, q.query_id);
    if (!top.items.empty() && top.items.front().first == q.positive_doc_id) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(val.queries.size());
}

FeatureDoc widen_features(const Document& doc) {
  FeatureDoc wide(doc.id, doc.modalities.size());
  for (size_t m = 0; m < doc.modalities.size(); ++m)
    if (doc.modalities[m]) wide.modalities[m] = doc.modalities[m]->cast<double>();
  return wide;
}

namespace {

std::map<std::string, size_t> doc_positions(const std::vector<Document>& docs) {
  std::map<std::string, size_t> pos;
  for (size_t i = 0; i < docs.size(); ++i) {
    if (!pos.emplace(docs[i].id, i).second)
      raise(Errc::duplicate_entry, "doc id " + docs[i].id);
  }
  return pos;
}

const Document& source_doc(const std::vector<Document>& docs,
                           const std::map<std::string, size_t>& pos, const QueryRecord& q) {
  auto it = pos.find(q.source_doc_id);
  if (it == pos.end())
    raise(Errc::not_found, "query " + q.id + ": source doc " + q.source_doc_id);
  return docs[it->second];
}

}  // namespace

TrainSet train_set_from(const ModalitySet& modalities, const std::vector<Document>& docs,
                        const std::vector<Split>& doc_splits,
                        const std::vector<QueryRecord>& queries, Split split,
                        bool targeted_only) {
  if (docs.size() != doc_splits.size())
    raise(Errc::invalid_argument, "doc/split count mismatch");
  const auto pos = doc_positions(docs);
  TrainSet set;
  set.modalities = modalities;
  for (const QueryRecord& q : queries) {
    if (q.split != split) continue;
    if (targeted_only && !q.target_modality) continue;
    const Document& doc = source_doc(docs, pos, q);
    if (doc_splits[pos.at(doc.id)] != split)
      raise(Errc::invalid_argument, "query " + q.id + ": source doc in a different split");
    TrainItem item;
    item.query_id = q.id;
    item.query_features = q.tokens.cast<double>();
    item.doc = widen_features(doc);
    item.target_modality = q.target_modality;
    if (set.feature_dim == 0) set.feature_dim = item.query_features.cols();
    set.pairs.push_back(std::move(item));
  }
  return set;
}

ValSet val_set_from(const std::vector<Document>& docs, const std::vector<Split>& doc_splits,
                    const std::vector<QueryRecord>& queries, Split split) {
  if (docs.size() != doc_splits.size())
    raise(Errc::invalid_argument, "doc/split count mismatch");
  const auto pos = doc_positions(docs);
  ValSet set;
  for (size_t i = 0; i < docs.size(); ++i)
    if (doc_splits[i] == split) set.docs.push_back(widen_features(docs[i]));
  for (const QueryRecord& q : queries) {
    if (q.split != split) continue;
    ValPair pair;
    pair.query_id = q.id;
    pair.query_features = q.tokens.cast<double>();
    pair.positive_doc_id = q.source_doc_id;
    set.queries.push_back(std::move(pair));
  }
  return set;
}

FitResult fit(const TrainSet& train, const ValSet* val, const TrainConfig& config) {
  config.validate();
  if (train.pairs.size() < 2) raise(Errc::invalid_argument, "need at least two training pairs");
  if (train.feature_dim < 1) raise(Errc::invalid_argument, "feature_dim must be set");

  FitResult result;
  result.params = EncoderParams::seeded(train.feature_dim, config.dim, config.pad_count,
                                        config.seed, config.alpha);
  Adam adam(result.params);
  const LossSpec spec{config.loss, config.scorer, config.contextualize};

  Rng shuffle_root = Rng(config.seed).stream("fit/shuffle");
  int global_step = 0;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::vector<size_t> order(train.pairs.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng sh = shuffle_root.stream("epoch", static_cast<uint64_t>(epoch));
    for (size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[static_cast<size_t>(sh.uniform_int(0, static_cast<int>(i) - 1))]);

    const auto batches = make_batches(order, static_cast<size_t>(config.batch_size), train.pairs);
    if (batches.empty()) raise(Errc::invalid_argument, "no valid batches; too few distinct docs");
    for (const auto& batch_idx : batches) {
      TrainBatch batch;
      batch.items.reserve(batch_idx.size());
      for (size_t idx : batch_idx) batch.items.push_back(train.pairs[idx]);
      const LossGrads lg = loss_gradients(batch, result.params, spec);
      ++global_step;
      if (!std::isfinite(lg.value))
        raise(Errc::numeric_error,
              "loss diverged at step " + std::to_string(global_step) + " (epoch " +
                  std::to_string(epoch + 1) + ")");
      adam.step(result.params, lg.grads, config, config.contextualize);
      result.curve.push_back(StepRecord{epoch + 1, global_step, lg.value});
    }
    if (val)
      result.val_recall_at_1.push_back(validation_recall_at_1(
          *val, train.modalities, result.params, config.contextualize, config.scorer));
  }
  return result;
}

}  // namespace liret
