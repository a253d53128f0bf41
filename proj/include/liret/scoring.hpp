// Copyright the liret authors. Licensed under the terms of the Apache 2.0 license. See LICENSE in the project root.
#pragma once

#include "liret/normalize.hpp"
#include "liret/types.hpp"

#include <limits>
#include <string>
#include <vector>

namespace liret {

// Late-interaction scoring. Every kernel takes unit-normalized token rows,
// multiplies in the input precision, and reduces (max, sum) in double.
// Argmax ties resolve to the lowest index so scores and attributions are
// reproducible bit for bit across runs.

inline constexpr Eigen::Index kScoreBlockRows = 256;
inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

enum class Scorer { li_mw, li_context, pooled_mean, pooled_last };

inline Scorer scorer_from_string(const std::string& s) {
  if (s == "li_mw") return Scorer::li_mw;
  if (s == "li_context") return Scorer::li_context;
  if (s == "pooled" || s == "pooled_mean") return Scorer::pooled_mean;
  if (s == "pooled_last") return Scorer::pooled_last;
  raise(Errc::invalid_argument, "unknown scorer: " + s);
}

inline const char* scorer_name(Scorer s) {
  switch (s) {
    case Scorer::li_mw: return "li_mw";
    case Scorer::li_context: return "li_context";
    case Scorer::pooled_mean: return "pooled";
    case Scorer::pooled_last: return "pooled_last";
  }
  return "unknown";
}

// Non-owning per-document view: (declared modality index, token rows),
// ascending by modality index. Present modalities only.
template <typename Scalar>
using DocTokenView = std::vector<std::pair<size_t, MatView<Scalar>>>;

template <typename Scalar>
DocTokenView<Scalar> doc_view(const BasicDocument<Scalar>& d) {
  DocTokenView<Scalar> v;
  for (size_t m = 0; m < d.modalities.size(); ++m)
    if (d.modalities[m]) v.emplace_back(m, MatView<Scalar>(*d.modalities[m]));
  return v;
}

// Folds one block of document rows into per-query-token running maxima.
// The product stays in Scalar precision; maxima accumulate in double.
template <typename Scalar>
void maxsim_update(MatView<Scalar> query, MatView<Scalar> rows, Eigen::VectorXd& best) {
  const TokenMatrix<Scalar> prod = query * rows.transpose();
  for (Eigen::Index i = 0; i < prod.rows(); ++i) {
    const double m = static_cast<double>(prod.row(i).maxCoeff());
    if (m > best(i)) best(i) = m;
  }
}

namespace detail {

template <typename Scalar>
void maxsim_blocked(MatView<Scalar> query, MatView<Scalar> rows, Eigen::VectorXd& best,
                    Eigen::Index block_rows) {
  for (Eigen::Index off = 0; off < rows.rows(); off += block_rows) {
    const Eigen::Index n = std::min(block_rows, rows.rows() - off);
    maxsim_update<Scalar>(query, rows.middleRows(off, n), best);
  }
}

template <typename Scalar>
void check_dims(MatView<Scalar> query, MatView<Scalar> rows) {
  if (query.rows() < 1) raise(Errc::invalid_argument, "query has no tokens");
  if (rows.rows() > 0 && rows.cols() != query.cols())
    raise(Errc::dim_mismatch, "token dim " + std::to_string(rows.cols()) + " vs query dim " +
                                  std::to_string(query.cols()));
}

}  // namespace detail

// Sum over query tokens of the max similarity against one modality's rows.
// An empty modality scores -inf so it can never win a modality-wise max.
template <typename Scalar>
double li_modality(MatView<Scalar> query, MatView<Scalar> rows,
                   Eigen::Index block_rows = kScoreBlockRows) {
  detail::check_dims<Scalar>(query, rows);
  if (rows.rows() == 0) return kNegInf;
  Eigen::VectorXd best = Eigen::VectorXd::Constant(query.rows(), kNegInf);
  detail::maxsim_blocked<Scalar>(query, rows, best, block_rows);
  return best.sum();
}

// Contextualized late interaction: the max runs over all modalities'
// tokens as if concatenated in declared order.
template <typename Scalar>
double li_context(MatView<Scalar> query, const DocTokenView<Scalar>& doc,
                  Eigen::Index block_rows = kScoreBlockRows) {
  Eigen::VectorXd best = Eigen::VectorXd::Constant(query.rows(), kNegInf);
  bool any = false;
  for (const auto& [m, rows] : doc) {
    detail::check_dims<Scalar>(query, rows);
    if (rows.rows() == 0) continue;
    any = true;
    detail::maxsim_blocked<Scalar>(query, rows, best, block_rows);
  }
  if (!any) raise(Errc::invalid_argument, "document has no tokens");
  return best.sum();
}

struct ScoreBreakdown {
  double total = kNegInf;
  int modality = -1;                  // declared index of the winner
  std::vector<double> per_modality;   // -inf where absent or empty
};

// Modality-wise late interaction: score each modality separately, return
// the best. Ties pick the lowest declared index.
template <typename Scalar>
ScoreBreakdown li_mw(MatView<Scalar> query, const DocTokenView<Scalar>& doc, size_t modality_count,
                     Eigen::Index block_rows = kScoreBlockRows) {
  ScoreBreakdown out;
  out.per_modality.assign(modality_count, kNegInf);
  for (const auto& [m, rows] : doc) {
    if (m >= modality_count) raise(Errc::invalid_argument, "modality index out of range");
    out.per_modality[m] = li_modality<Scalar>(query, rows, block_rows);
  }
  for (size_t m = 0; m < modality_count; ++m) {
    if (out.per_modality[m] > out.total) {
      out.total = out.per_modality[m];
      out.modality = static_cast<int>(m);
    }
  }
  if (out.modality < 0) raise(Errc::invalid_argument, "document has no tokens");
  return out;
}

enum class Pooling { mean, last };

// Single-vector fallback: pool token rows to one vector per side,
// re-normalize, and take the cosine. Mean pooling averages every token of
// every present modality; last pooling takes the final row of the last
// present modality in declared order.
template <typename Scalar>
double pooled_similarity(MatView<Scalar> query, const DocTokenView<Scalar>& doc, Pooling pooling) {
  if (query.rows() < 1) raise(Errc::invalid_argument, "query has no tokens");
  Eigen::RowVectorXd q;
  if (pooling == Pooling::mean) {
    Eigen::RowVectorXd sum = Eigen::RowVectorXd::Zero(query.cols());
    for (Eigen::Index i = 0; i < query.rows(); ++i) sum += query.row(i).template cast<double>();
    q = normalized_or_zero(sum / static_cast<double>(query.rows()));
  } else {
    q = normalized_or_zero(query.row(query.rows() - 1));
  }

  Eigen::RowVectorXd d;
  if (pooling == Pooling::mean) {
    Eigen::RowVectorXd sum = Eigen::RowVectorXd::Zero(query.cols());
    Eigen::Index total = 0;
    for (const auto& [m, rows] : doc) {
      detail::check_dims<Scalar>(query, rows);
      for (Eigen::Index i = 0; i < rows.rows(); ++i) sum += rows.row(i).template cast<double>();
      total += rows.rows();
    }
    if (total == 0) raise(Errc::invalid_argument, "document has no tokens");
    d = normalized_or_zero(sum / static_cast<double>(total));
  } else {
    Eigen::RowVectorXd row;
    bool found = false;
    for (const auto& [m, rows] : doc) {
      detail::check_dims<Scalar>(query, rows);
      if (rows.rows() > 0) {
        row = rows.row(rows.rows() - 1).template cast<double>();
        found = true;
      }
    }
    if (!found) raise(Errc::invalid_argument, "document has no tokens");
    d = normalized_or_zero(row);
  }
  return q.dot(d);
}

}  // namespace liret
