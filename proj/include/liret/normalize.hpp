// Copyright the liret authors. Licensed under the terms of the Apache 2.0 license. See LICENSE in the project root.
#pragma once

#include "liret/types.hpp"

namespace liret {

// L2-normalize each row in place. Rows whose squared norm is exactly zero
// are left as zero rows rather than producing NaN. Returns the number of
// zero rows so callers can surface a warning.
template <typename Scalar>
int normalize_rows_in_place(TokenMatrix<Scalar>& m) {
  int zero_rows = 0;
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    const Scalar n2 = m.row(i).squaredNorm();
    if (n2 == Scalar(0)) {
      ++zero_rows;
      continue;
    }
    m.row(i) /= std::sqrt(n2);
  }
  return zero_rows;
}

template <typename Scalar>
TokenMatrix<Scalar> normalize_rows(const TokenMatrix<Scalar>& m, int* zero_rows = nullptr) {
  TokenMatrix<Scalar> out = m;
  int z = normalize_rows_in_place(out);
  if (zero_rows) *zero_rows = z;
  return out;
}

// Normalize a single vector; zero stays zero.
template <typename Derived>
Eigen::RowVectorXd normalized_or_zero(const Eigen::MatrixBase<Derived>& v) {
  Eigen::RowVectorXd out = v.template cast<double>();
  const double n2 = out.squaredNorm();
  if (n2 > 0.0) out /= std::sqrt(n2);
  return out;
}

}  // namespace liret
