// Copyright the liret authors. Licensed under the terms of the Apache 2.0 license. See LICENSE in the project root.
#include "liret/gradcheck.hpp"

#include "liret/rng.hpp"

#include <cmath>
#include <sstream>

namespace liret {
namespace {

Eigen::MatrixXd gaussian_matrix(Rng& rng, Eigen::Index rows, Eigen::Index cols, double scale) {
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = scale * rng.gaussian();
  return m;
}

// Small batch with every modality combination reachable: each doc keeps a
// random non-empty subset of the declared modalities, and the item's
// target modality is drawn from the present ones.
TrainBatch random_batch(Rng& rng, size_t modality_count, Eigen::Index feature_dim, int batch) {
  TrainBatch out;
  for (int k = 0; k < batch; ++k) {
    TrainItem it;
    it.query_id = "q" + std::to_string(k);
    it.query_features = gaussian_matrix(rng, rng.uniform_int(2, 5), feature_dim, 1.0);
    it.doc = FeatureDoc("d" + std::to_string(k), modality_count);
    uint8_t present = 0;
    while (present == 0) present = static_cast<uint8_t>(rng.uniform_int(1, (1 << modality_count) - 1));
    for (size_t m = 0; m < modality_count; ++m)
      if ((present >> m) & 1u)
        it.doc.modalities[m] = gaussian_matrix(rng, rng.uniform_int(2, 6), feature_dim, 1.0);
    std::vector<size_t> present_mods;
    for (size_t m = 0; m < modality_count; ++m)
      if ((present >> m) & 1u) present_mods.push_back(m);
    it.target_modality =
        present_mods[static_cast<size_t>(rng.uniform_int(0, static_cast<int>(present_mods.size()) - 1))];
    out.items.push_back(std::move(it));
  }
  return out;
}

double relative_error(double a, double f) {
  const double scale = std::max({std::abs(a), std::abs(f), 1e-3});
  return std::abs(a - f) / scale;
}

struct Probe {
  enum Kind { projection, pad, alpha, log_tau } kind;
  Eigen::Index i = 0, j = 0;
};

}  // namespace

std::vector<GradCheckRow> gradcheck_suite(const GradCheckOptions& options) {
  const LossSpec specs[] = {
      {LossKind::infonce, Scorer::li_mw, true},
      {LossKind::infonce, Scorer::li_context, true},
      {LossKind::infonce, Scorer::pooled_mean, true},
      {LossKind::modpos, Scorer::li_mw, true},
      {LossKind::modneg, Scorer::li_mw, true},
      {LossKind::infonce, Scorer::li_mw, false},
      {LossKind::modneg, Scorer::li_mw, false},
  };
  const int n_specs = static_cast<int>(sizeof(specs) / sizeof(specs[0]));

  std::vector<GradCheckRow> rows;
  Rng root(options.seed);
  for (int c = 0; c < options.configs; ++c) {
    GradCheckRow row;
    row.config = c;
    row.spec = specs[c % n_specs];

    TrainBatch batch;
    EncoderParams params;
    for (int attempt = 0;; ++attempt) {
      if (attempt > 200) raise(Errc::numeric_error, "gradcheck could not find a tie-free config");
      Rng rng = root.stream("config", static_cast<uint64_t>(c * 1000 + attempt));
      row.batch = rng.uniform_int(2, 4);
      row.feature_dim = rng.uniform_int(5, 9);
      row.dim = rng.uniform_int(6, 12);
      row.pad_count = rng.uniform_int(0, 3);
      const size_t modality_count = static_cast<size_t>(rng.uniform_int(2, 4));

      batch = random_batch(rng, modality_count, row.feature_dim, row.batch);
      params = EncoderParams::seeded(row.feature_dim, row.dim, row.pad_count, rng.next_u64(),
                                     0.2 + 0.6 * rng.uniform());
      params.log_temperature = 0.2 * rng.gaussian();

      const LossGrads probe = loss_gradients(batch, params, row.spec);
      if (probe.min_margin >= options.margin_floor) break;
      ++row.regenerated;
    }

    const LossGrads analytic = loss_gradients(batch, params, row.spec);
    row.loss = analytic.value;

    Rng pick = root.stream("probe", static_cast<uint64_t>(c));
    std::vector<Probe> probes;
    for (int s = 0; s < options.samples_per_tensor; ++s)
      probes.push_back(Probe{Probe::projection,
                             pick.uniform_int(0, static_cast<int>(params.projection.rows()) - 1),
                             pick.uniform_int(0, static_cast<int>(params.projection.cols()) - 1)});
    if (params.pad_count() > 0)
      for (int s = 0; s < options.samples_per_tensor; ++s)
        probes.push_back(Probe{Probe::pad,
                               pick.uniform_int(0, static_cast<int>(params.pad_count()) - 1),
                               pick.uniform_int(0, static_cast<int>(params.feature_dim()) - 1)});
    if (row.spec.contextualize) probes.push_back(Probe{Probe::alpha, 0, 0});
    probes.push_back(Probe{Probe::log_tau, 0, 0});

    row.max_rel_err = 0.0;
    for (const Probe& p : probes) {
      double analytic_g = 0.0;
      auto eval_at = [&](double delta) {
        EncoderParams shifted = params;
        switch (p.kind) {
          case Probe::projection: shifted.projection(p.i, p.j) += delta; break;
          case Probe::pad: shifted.pad_features(p.i, p.j) += delta; break;
          case Probe::alpha: shifted.mixing_weight += delta; break;
          case Probe::log_tau: shifted.log_temperature += delta; break;
        }
        return loss_value(batch, shifted, row.spec).value;
      };
      switch (p.kind) {
        case Probe::projection: analytic_g = analytic.grads.projection(p.i, p.j); break;
        case Probe::pad: analytic_g = analytic.grads.pad_features(p.i, p.j); break;
        case Probe::alpha: analytic_g = analytic.grads.mixing_weight; break;
        case Probe::log_tau: analytic_g = analytic.grads.log_temperature; break;
      }
      const double fd = (eval_at(options.step) - eval_at(-options.step)) / (2.0 * options.step);
      row.max_rel_err = std::max(row.max_rel_err, relative_error(analytic_g, fd));
      ++row.checked;
    }
    row.pass = row.max_rel_err <= options.tolerance;
    rows.push_back(row);
  }
  return rows;
}

bool gradcheck_all_pass(const std::vector<GradCheckRow>& rows) {
  for (const GradCheckRow& r : rows)
    if (!r.pass) return false;
  return !rows.empty();
}

std::string gradcheck_table(const std::vector<GradCheckRow>& rows) {
  std::ostringstream out;
  out << "config\tloss\tscorer\tctx\tbatch\tF\tD\tpads\tchecked\tmax_rel_err\tresult\n";
  for (const GradCheckRow& r : rows) {
    char err[32];
    std::snprintf(err, sizeof err, "%.3e", r.max_rel_err);
    out << r.config << '\t' << loss_name(r.spec.kind) << '\t' << scorer_name(r.spec.scorer)
        << '\t' << (r.spec.contextualize ? "on" : "off") << '\t' << r.batch << '\t'
        << r.feature_dim << '\t' << r.dim << '\t' << r.pad_count << '\t' << r.checked << '\t'
        << err << '\t' << (r.pass ? "pass" : "FAIL") << '\n';
  }
  return out.str();
}

}  // namespace liret
