// Copyright the liret authors. Licensed under the terms of the Apache 2.0 license. See LICENSE in the project root.
#pragma once

#include "liret/loss.hpp"

#include <string>
#include <vector>

namespace liret {

// Central-difference validation of the analytic gradients on small random
// configurations. Configurations whose forward pass sits closer than
// `margin_floor` to an argmax tie are regenerated: at a kink the loss is
// only subdifferentiable and finite differences straddle two branches.
struct GradCheckOptions {
  uint64_t seed = 0;
  int configs = 20;
  double step = 1e-4;          // finite-difference h
  double tolerance = 1e-4;     // max relative error allowed
  double margin_floor = 1e-3;  // reject configs with smaller decision margins
  int samples_per_tensor = 3;  // entries probed in each weight matrix
};

struct GradCheckRow {
  int config = 0;
  LossSpec spec;
  int batch = 0;
  Eigen::Index feature_dim = 0, dim = 0;
  int pad_count = 0;
  double max_rel_err = 0.0;
  double loss = 0.0;
  int checked = 0;      // parameters probed
  int regenerated = 0;  // configs discarded for tie margins
  bool pass = false;
};

std::vector<GradCheckRow> gradcheck_suite(const GradCheckOptions& options);

// Convenience: true when every row passed.
bool gradcheck_all_pass(const std::vector<GradCheckRow>& rows);

std::string gradcheck_table(const std::vector<GradCheckRow>& rows);

}  // namespace liret
