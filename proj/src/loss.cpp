// Copyright the liret authors. Licensed under the terms of the Apache 2.0 license. See LICENSE in the project root.
#include "liret/loss.hpp"

#include "liret/normalize.hpp"

#include <cmath>
#include <limits>
#include <set>

namespace liret {

void TrainBatch::validate(size_t modality_count) const {
  if (items.size() < 2) raise(Errc::invalid_argument, "batch needs at least two items");
  std::set<std::string> doc_ids;
  Eigen::Index f = -1;
  for (const TrainItem& it : items) {
    if (it.query_features.rows() < 1)
      raise(Errc::invalid_argument, "query " + it.query_id + " has no tokens");
    if (!doc_ids.insert(it.doc.id).second)
      raise(Errc::duplicate_entry, "positive doc " + it.doc.id + " repeats in batch");
    if (it.doc.modalities.size() != modality_count)
      raise(Errc::invalid_argument, "doc " + it.doc.id + ": modality slots do not match the set");
    if (f < 0) f = it.query_features.cols();
    if (it.query_features.cols() != f)
      raise(Errc::dim_mismatch, "query " + it.query_id + ": inconsistent feature dim");
    if (!it.query_features.allFinite())
      raise(Errc::numeric_error, "query " + it.query_id + ": non-finite features");
    bool any = false;
    for (const auto& mod : it.doc.modalities) {
      if (!mod) continue;
      if (mod->rows() < 1)
        raise(Errc::invalid_argument, "doc " + it.doc.id + ": present modality with zero rows");
      if (mod->cols() != f)
        raise(Errc::dim_mismatch, "doc " + it.doc.id + ": inconsistent feature dim");
      if (!mod->allFinite())
        raise(Errc::numeric_error, "doc " + it.doc.id + ": non-finite features");
      any = true;
    }
    if (!any) raise(Errc::invalid_argument, "doc " + it.doc.id + ": no tokens");
  }
}

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Per (query, doc, modality-slot) token assignment.
struct PairMod {
  Eigen::VectorXd best;  // max dot per query token
  Eigen::VectorXi arg;   // winning doc row per query token
  double sum = 0.0;      // late-interaction score of this modality
};

struct PairScore {
  std::vector<PairMod> mods;  // aligned with the doc encoding's slots
  double s_mw = -kInf;
  int mw_slot = -1;
  double s_ctx = 0.0;
  Eigen::VectorXi ctx_slot;  // per-token winning slot for the context score
  double s_pooled = 0.0;
};

struct PooledSide {
  Eigen::RowVectorXd mean;  // mean of embedding rows
  Eigen::RowVectorXd unit;  // normalized mean (zero-safe)
  double norm = 0.0;
};

struct Forward {
  std::vector<QueryEncoding> queries;
  std::vector<DocEncoding> docs;
  std::vector<std::vector<PairScore>> pair;  // [k][j]
  std::vector<PooledSide> q_pool, d_pool;
  double min_margin = kInf;
  bool token_level = false;
};

PooledSide pool_rows(const Eigen::MatrixXd& rows) {
  PooledSide p;
  p.mean = rows.colwise().mean();
  p.norm = p.mean.norm();
  p.unit = p.norm > 0.0 ? Eigen::RowVectorXd(p.mean / p.norm)
                        : Eigen::RowVectorXd::Zero(rows.cols());
  return p;
}

PooledSide pool_doc(const DocEncoding& d, Eigen::Index dim) {
  Eigen::RowVectorXd sum = Eigen::RowVectorXd::Zero(dim);
  Eigen::Index total = 0;
  for (const auto& [m, tok] : d.mods) {
    for (Eigen::Index r = 0; r < tok.embeddings.rows(); ++r) sum += tok.embeddings.row(r);
    total += tok.embeddings.rows();
  }
  PooledSide p;
  p.mean = sum / static_cast<double>(total);
  p.norm = p.mean.norm();
  p.unit = p.norm > 0.0 ? Eigen::RowVectorXd(p.mean / p.norm) : Eigen::RowVectorXd::Zero(dim);
  return p;
}

// Builds every score the losses may need. Token-level assignments are
// skipped when only the pooled scorer is in play.
Forward build_forward(const TrainBatch& batch, const EncoderParams& params, const LossSpec& spec) {
  Forward f;
  const size_t b = batch.size();
  const bool need_tokens = !(spec.kind == LossKind::infonce && spec.scorer == Scorer::pooled_mean);
  const bool need_ctx = spec.kind == LossKind::infonce && spec.scorer == Scorer::li_context;
  const bool need_pooled = spec.kind == LossKind::infonce && spec.scorer == Scorer::pooled_mean;
  f.token_level = need_tokens;

  f.queries.reserve(b);
  f.docs.reserve(b);
  for (const TrainItem& it : batch.items) {
    f.queries.push_back(encode_query(it.query_features, params));
    f.docs.push_back(encode_document(it.doc, params, spec.contextualize));
  }

  if (need_pooled) {
    f.q_pool.reserve(b);
    f.d_pool.reserve(b);
    for (size_t k = 0; k < b; ++k) f.q_pool.push_back(pool_rows(f.queries[k].tokens.embeddings));
    for (size_t j = 0; j < b; ++j) f.d_pool.push_back(pool_doc(f.docs[j], params.dim()));
  }

  f.pair.resize(b);
  for (size_t k = 0; k < b; ++k) {
    f.pair[k].resize(b);
    const Eigen::MatrixXd& eq = f.queries[k].tokens.embeddings;
    const Eigen::Index nq = eq.rows();
    for (size_t j = 0; j < b; ++j) {
      PairScore& ps = f.pair[k][j];
      if (need_pooled) ps.s_pooled = f.q_pool[k].unit.dot(f.d_pool[j].unit);
      if (!need_tokens) continue;

      const DocEncoding& dj = f.docs[j];
      ps.mods.resize(dj.mods.size());
      for (size_t s = 0; s < dj.mods.size(); ++s) {
        const Eigen::MatrixXd prod = eq * dj.mods[s].second.embeddings.transpose();
        PairMod& pm = ps.mods[s];
        pm.best.resize(nq);
        pm.arg.resize(nq);
        for (Eigen::Index i = 0; i < nq; ++i) {
          double best = -kInf, second = -kInf;
          Eigen::Index arg = 0;
          for (Eigen::Index t = 0; t < prod.cols(); ++t) {
            const double v = prod(i, t);
            if (v > best) {
              second = best;
              best = v;
              arg = t;
            } else if (v > second) {
              second = v;
            }
          }
          pm.best(i) = best;
          pm.arg(i) = static_cast<int>(arg);
          if (prod.cols() > 1) f.min_margin = std::min(f.min_margin, best - second);
        }
        pm.sum = pm.best.sum();
      }

      // Modality-wise winner, lowest slot on ties.
      double second_sum = -kInf;
      for (size_t s = 0; s < ps.mods.size(); ++s) {
        if (ps.mods[s].sum > ps.s_mw) {
          second_sum = ps.s_mw;
          ps.s_mw = ps.mods[s].sum;
          ps.mw_slot = static_cast<int>(s);
        } else if (ps.mods[s].sum > second_sum) {
          second_sum = ps.mods[s].sum;
        }
      }
      if (ps.mods.size() > 1) f.min_margin = std::min(f.min_margin, ps.s_mw - second_sum);

      if (need_ctx) {
        ps.ctx_slot.resize(nq);
        double total = 0.0;
        for (Eigen::Index i = 0; i < nq; ++i) {
          double best = -kInf, second = -kInf;
          int slot = 0;
          for (size_t s = 0; s < ps.mods.size(); ++s) {
            const double v = ps.mods[s].best(i);
            if (v > best) {
              second = best;
              best = v;
              slot = static_cast<int>(s);
            } else if (v > second) {
              second = v;
            }
          }
          ps.ctx_slot(i) = slot;
          total += best;
          if (ps.mods.size() > 1) f.min_margin = std::min(f.min_margin, best - second);
        }
        ps.s_ctx = total;
      }
    }
  }
  return f;
}

// Score nodes feeding one query's softmax. `slot` indexes the doc's
// present-modality list for mod nodes, -1 otherwise.
struct Node {
  enum Kind { mw, mod, ctx, pooled } kind;
  int j;
  int slot;
  double value;
};

int find_slot(const DocEncoding& d, size_t declared) {
  for (size_t s = 0; s < d.mods.size(); ++s)
    if (d.mods[s].first == declared) return static_cast<int>(s);
  return -1;
}

double node_value(const Forward& f, const Node& n, size_t k) {
  switch (n.kind) {
    case Node::mw: return f.pair[k][n.j].s_mw;
    case Node::mod: return f.pair[k][n.j].mods[n.slot].sum;
    case Node::ctx: return f.pair[k][n.j].s_ctx;
    case Node::pooled: return f.pair[k][n.j].s_pooled;
  }
  return 0.0;
}

Node::Kind scorer_node_kind(Scorer s) {
  switch (s) {
    case Scorer::li_mw: return Node::mw;
    case Scorer::li_context: return Node::ctx;
    case Scorer::pooled_mean: return Node::pooled;
    default: break;
  }
  raise(Errc::invalid_argument, "training scorer must be li_mw, li_context, or pooled");
}

// Positive node index is always 0.
std::vector<Node> build_nodes(const Forward& f, const TrainBatch& batch, const LossSpec& spec,
                              size_t k) {
  const size_t b = batch.size();
  std::vector<Node> nodes;
  if (spec.kind == LossKind::infonce) {
    const Node::Kind kind = scorer_node_kind(spec.scorer);
    nodes.push_back(Node{kind, static_cast<int>(k), -1, 0.0});
    for (size_t j = 0; j < b; ++j)
      if (j != k) nodes.push_back(Node{kind, static_cast<int>(j), -1, 0.0});
  } else {
    const TrainItem& it = batch.items[k];
    if (!it.target_modality)
      raise(Errc::invalid_argument,
            "query " + it.query_id + " has no target modality for a modality-aware loss");
    const int slot = find_slot(f.docs[k], *it.target_modality);
    if (slot < 0)
      raise(Errc::invalid_argument,
            "doc " + it.doc.id + " lacks the target modality of query " + it.query_id);
    nodes.push_back(Node{Node::mod, static_cast<int>(k), slot, 0.0});
    if (spec.kind == LossKind::modneg) {
      for (size_t j = 0; j < b; ++j) {
        for (size_t s = 0; s < f.docs[j].mods.size(); ++s) {
          if (j == k && static_cast<int>(s) == slot) continue;  // already listed first
          nodes.push_back(Node{Node::mod, static_cast<int>(j), static_cast<int>(s), 0.0});
        }
      }
    }
    for (size_t j = 0; j < b; ++j)
      if (j != k) nodes.push_back(Node{Node::mw, static_cast<int>(j), -1, 0.0});
  }
  for (Node& n : nodes) {
    n.value = node_value(f, n, k);
    if (!std::isfinite(n.value))
      raise(Errc::numeric_error, "non-finite score while assembling the loss");
  }
  return nodes;
}

Eigen::MatrixXd base_score_matrix(const Forward& f, const LossSpec& spec, size_t b) {
  Eigen::MatrixXd s(b, b);
  const Node::Kind kind =
      spec.kind == LossKind::infonce ? scorer_node_kind(spec.scorer) : Node::mw;
  for (size_t k = 0; k < b; ++k)
    for (size_t j = 0; j < b; ++j) {
      switch (kind) {
        case Node::mw: s(k, j) = f.pair[k][j].s_mw; break;
        case Node::ctx: s(k, j) = f.pair[k][j].s_ctx; break;
        case Node::pooled: s(k, j) = f.pair[k][j].s_pooled; break;
        default: break;
      }
    }
  return s;
}

struct PerQuerySoftmax {
  std::vector<Node> nodes;
  Eigen::VectorXd probs;
  double loss = 0.0;
  double dlog_tau = 0.0;  // contribution before the 1/b mean
};

PerQuerySoftmax query_softmax(const Forward& f, const TrainBatch& batch, const LossSpec& spec,
                              const EncoderParams& params, size_t k) {
  PerQuerySoftmax out;
  out.nodes = build_nodes(f, batch, spec, k);
  const double tau = params.temperature();
  const size_t n = out.nodes.size();
  Eigen::VectorXd z(n);
  for (size_t i = 0; i < n; ++i) z(static_cast<Eigen::Index>(i)) = out.nodes[i].value / tau;
  const double zmax = z.maxCoeff();
  const double sum_exp = (z.array() - zmax).exp().sum();
  const double lse = zmax + std::log(sum_exp);
  out.loss = lse - z(0);  // node 0 is the positive
  out.probs = ((z.array() - zmax).exp() / sum_exp).matrix();
  double weighted = 0.0;
  for (size_t i = 0; i < n; ++i)
    weighted += out.probs(static_cast<Eigen::Index>(i)) * out.nodes[i].value;
  out.dlog_tau = (out.nodes[0].value - weighted) / tau;
  if (!std::isfinite(out.loss)) raise(Errc::numeric_error, "non-finite loss term");
  return out;
}

// Gradient of a row-normalization: v = x / ||x||. Zero rows pass zero.
inline Eigen::RowVectorXd normalize_backward(const Eigen::RowVectorXd& g_unit,
                                             const Eigen::RowVectorXd& unit, double norm) {
  if (norm <= 0.0) return Eigen::RowVectorXd::Zero(g_unit.cols());
  return (g_unit - unit.dot(g_unit) * unit) / norm;
}

}  // namespace

LossResult loss_value(const TrainBatch& batch, const EncoderParams& params, const LossSpec& spec) {
  const size_t mcount =
      batch.items.empty() ? 0 : batch.items.front().doc.modalities.size();
  batch.validate(mcount);
  const Forward f = build_forward(batch, params, spec);
  const size_t b = batch.size();
  double total = 0.0;
  for (size_t k = 0; k < b; ++k) total += query_softmax(f, batch, spec, params, k).loss;
  LossResult out;
  out.value = total / static_cast<double>(b);
  out.scores = base_score_matrix(f, spec, b);
  return out;
}

LossGrads loss_gradients(const TrainBatch& batch, const EncoderParams& params,
                         const LossSpec& spec) {
  const size_t mcount =
      batch.items.empty() ? 0 : batch.items.front().doc.modalities.size();
  batch.validate(mcount);
  const Forward f = build_forward(batch, params, spec);
  const size_t b = batch.size();
  const double tau = params.temperature();
  const double inv_b = 1.0 / static_cast<double>(b);

  LossGrads out;
  out.grads = ParamGrads::zeros_like(params);
  out.min_margin = f.min_margin;

  // dL / d(node value), accumulated per pair and slot.
  Eigen::MatrixXd d_mw = Eigen::MatrixXd::Zero(b, b);
  Eigen::MatrixXd d_ctx = Eigen::MatrixXd::Zero(b, b);
  Eigen::MatrixXd d_pooled = Eigen::MatrixXd::Zero(b, b);
  std::vector<std::vector<std::vector<double>>> d_mod(b);
  for (size_t k = 0; k < b; ++k) {
    d_mod[k].resize(b);
    for (size_t j = 0; j < b; ++j) d_mod[k][j].assign(f.pair[k][j].mods.size(), 0.0);
  }

  double total = 0.0;
  for (size_t k = 0; k < b; ++k) {
    const PerQuerySoftmax s = query_softmax(f, batch, spec, params, k);
    total += s.loss;
    out.grads.log_temperature += s.dlog_tau * inv_b;
    for (size_t i = 0; i < s.nodes.size(); ++i) {
      const Node& n = s.nodes[i];
      const double coeff =
          (s.probs(static_cast<Eigen::Index>(i)) - (i == 0 ? 1.0 : 0.0)) / tau * inv_b;
      switch (n.kind) {
        case Node::mw: d_mw(k, n.j) += coeff; break;
        case Node::mod: d_mod[k][n.j][static_cast<size_t>(n.slot)] += coeff; break;
        case Node::ctx: d_ctx(k, n.j) += coeff; break;
        case Node::pooled: d_pooled(k, n.j) += coeff; break;
      }
    }
  }
  out.value = total * inv_b;
  out.scores = base_score_matrix(f, spec, b);

  // Embedding gradients.
  std::vector<Eigen::MatrixXd> g_eq(b);
  std::vector<std::vector<Eigen::MatrixXd>> g_ed(b);
  for (size_t k = 0; k < b; ++k)
    g_eq[k] = Eigen::MatrixXd::Zero(f.queries[k].tokens.embeddings.rows(), params.dim());
  for (size_t j = 0; j < b; ++j) {
    g_ed[j].resize(f.docs[j].mods.size());
    for (size_t s = 0; s < f.docs[j].mods.size(); ++s)
      g_ed[j][s] =
          Eigen::MatrixXd::Zero(f.docs[j].mods[s].second.embeddings.rows(), params.dim());
  }

  // Pooled-path gradients accumulate on the unit vectors first.
  std::vector<Eigen::RowVectorXd> g_q_unit(b), g_d_unit(b);
  if (!f.q_pool.empty()) {
    for (size_t k = 0; k < b; ++k) g_q_unit[k] = Eigen::RowVectorXd::Zero(params.dim());
    for (size_t j = 0; j < b; ++j) g_d_unit[j] = Eigen::RowVectorXd::Zero(params.dim());
    for (size_t k = 0; k < b; ++k)
      for (size_t j = 0; j < b; ++j) {
        const double c = d_pooled(k, j);
        if (c == 0.0) continue;
        g_q_unit[k] += c * f.d_pool[j].unit;
        g_d_unit[j] += c * f.q_pool[k].unit;
      }
    for (size_t k = 0; k < b; ++k) {
      const Eigen::RowVectorXd g_mean =
          normalize_backward(g_q_unit[k], f.q_pool[k].unit, f.q_pool[k].norm);
      const double n = static_cast<double>(f.queries[k].tokens.embeddings.rows());
      g_eq[k].rowwise() += g_mean / n;
    }
    for (size_t j = 0; j < b; ++j) {
      const Eigen::RowVectorXd g_mean =
          normalize_backward(g_d_unit[j], f.d_pool[j].unit, f.d_pool[j].norm);
      const double n = static_cast<double>(f.docs[j].total_tokens);
      for (size_t s = 0; s < f.docs[j].mods.size(); ++s) g_ed[j][s].rowwise() += g_mean / n;
    }
  }

  // Token-level routing: modality sums, the modality-wise winner, and the
  // per-token context winner all reduce to per-token weights on the
  // argmax pairs chosen in the forward pass.
  if (f.token_level) {
    for (size_t k = 0; k < b; ++k) {
      const Eigen::MatrixXd& eq = f.queries[k].tokens.embeddings;
      for (size_t j = 0; j < b; ++j) {
        const PairScore& ps = f.pair[k][j];
        std::vector<double> slot_w = d_mod[k][j];
        if (ps.mw_slot >= 0) slot_w[static_cast<size_t>(ps.mw_slot)] += d_mw(k, j);
        const double ctx_w = d_ctx(k, j);
        for (size_t s = 0; s < ps.mods.size(); ++s) {
          const double base = slot_w[s];
          if (base == 0.0 && ctx_w == 0.0) continue;
          const Eigen::MatrixXd& ed = f.docs[j].mods[s].second.embeddings;
          for (Eigen::Index i = 0; i < eq.rows(); ++i) {
            double w = base;
            if (ctx_w != 0.0 && ps.ctx_slot.size() > 0 && ps.ctx_slot(i) == static_cast<int>(s))
              w += ctx_w;
            if (w == 0.0) continue;
            const Eigen::Index t = ps.mods[s].arg(i);
            g_eq[k].row(i) += w * ed.row(t);
            g_ed[j][s].row(t) += w * eq.row(i);
          }
        }
      }
    }
  }

  // Embeddings -> parameters.
  auto backprop_tokens = [&](const EncodedTokens& tok, const Eigen::MatrixXd& g_emb,
                             Eigen::MatrixXd* g_inputs) {
    Eigen::MatrixXd g_pre(tok.pre_norm.rows(), tok.pre_norm.cols());
    for (Eigen::Index r = 0; r < tok.pre_norm.rows(); ++r)
      g_pre.row(r) = normalize_backward(g_emb.row(r), tok.embeddings.row(r), tok.norms(r));
    out.grads.projection.noalias() += tok.inputs.transpose() * g_pre;
    if (g_inputs) g_inputs->noalias() = g_pre * params.projection.transpose();
  };

  for (size_t k = 0; k < b; ++k) {
    const QueryEncoding& q = f.queries[k];
    const bool need_inputs = params.pad_count() > 0;
    Eigen::MatrixXd g_inputs;
    backprop_tokens(q.tokens, g_eq[k], need_inputs ? &g_inputs : nullptr);
    if (need_inputs)
      out.grads.pad_features += g_inputs.bottomRows(params.pad_count());
  }

  for (size_t j = 0; j < b; ++j) {
    const DocEncoding& d = f.docs[j];
    const TrainItem& it = batch.items[j];
    for (size_t s = 0; s < d.mods.size(); ++s) {
      const auto& [m, tok] = d.mods[s];
      Eigen::MatrixXd g_inputs;
      backprop_tokens(tok, g_ed[j][s], spec.contextualize ? &g_inputs : nullptr);
      if (spec.contextualize) {
        const Eigen::MatrixXd& raw = *it.doc.modalities[m];
        for (Eigen::Index r = 0; r < raw.rows(); ++r)
          out.grads.mixing_weight += g_inputs.row(r).dot(d.context - raw.row(r));
      }
    }
  }

  return out;
}

LossResult loss_infonce(const TrainBatch& batch, const EncoderParams& params, Scorer scorer,
                        bool contextualize) {
  return loss_value(batch, params, LossSpec{LossKind::infonce, scorer, contextualize});
}

LossResult loss_modpos(const TrainBatch& batch, const EncoderParams& params, bool contextualize) {
  return loss_value(batch, params, LossSpec{LossKind::modpos, Scorer::li_mw, contextualize});
}

LossResult loss_modneg(const TrainBatch& batch, const EncoderParams& params, bool contextualize) {
  return loss_value(batch, params, LossSpec{LossKind::modneg, Scorer::li_mw, contextualize});
}

}  // namespace liret
