// Copyright the liret authors. Licensed under the terms of the Apache 2.0 license. See LICENSE in the project root.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "liret/rng.hpp"
#include "liret/scoring.hpp"
#include "oracles.hpp"

#include <cmath>

using namespace liret;

namespace {

TokenMatrixF basis_row(Eigen::Index dim, Eigen::Index axis) {
  TokenMatrixF m = TokenMatrixF::Zero(1, dim);
  m(0, axis) = 1.0f;
  return m;
}

// One unit row with a chosen cosine against e1 (remainder on e2).
TokenMatrixF planted_row(Eigen::Index dim, float cos_e1) {
  TokenMatrixF m = TokenMatrixF::Zero(1, dim);
  m(0, 0) = cos_e1;
  m(0, 1) = std::sqrt(1.0f - cos_e1 * cos_e1);
  return m;
}

}  // namespace

TEST_CASE("li_modality: unit-vector self-match and orthogonality") {
  const TokenMatrixF e1 = basis_row(4, 0);
  CHECK(li_modality<float>(e1, e1) == 1.0);
  TokenMatrixF q(2, 4);
  q.setZero();
  q(0, 0) = 1.0f;
  q(1, 1) = 1.0f;
  CHECK(li_modality<float>(q, basis_row(4, 2)) == 0.0);
}

TEST_CASE("li_modality: empty rows are a -inf sentinel, dim mismatch throws") {
  const TokenMatrixF e1 = basis_row(4, 0);
  CHECK(li_modality<float>(e1, TokenMatrixF(0, 4)) == kNegInf);
  CHECK_THROWS_AS(li_modality<float>(e1, basis_row(5, 0)), Error);
  CHECK_THROWS_AS(li_modality<float>(TokenMatrixF(0, 4), e1), Error);
}

TEST_CASE("li_modality: random instance matches the triple-loop oracle") {
  Rng rng(21);
  const TokenMatrixF q = oracle::unit_rows(rng, 3, 4);
  const TokenMatrixF rows = oracle::unit_rows(rng, 5, 4);
  CHECK(std::abs(li_modality<float>(q, rows) - oracle::li_modality(q, rows)) <= 1e-5);
}

TEST_CASE("li_context: single-modality collapse and dominance") {
  Rng rng(22);
  const TokenMatrixF q = oracle::unit_rows(rng, 4, 8);
  Document solo("solo", 3);
  solo.modalities[1] = oracle::unit_rows(rng, 6, 8);
  CHECK(li_context<float>(q, doc_view(solo)) == li_modality<float>(q, *solo.modalities[1]));

  // Modality A carries perfect matches for every query token; B is junk
  // near -e1, so the concatenated max never leaves A.
  Document dom("dom", 2);
  dom.modalities[0] = q;
  TokenMatrixF junk(3, 8);
  junk.setZero();
  junk.col(0).setConstant(-1.0f);
  dom.modalities[1] = junk;
  CHECK(li_context<float>(q, doc_view(dom)) == li_modality<float>(q, *dom.modalities[0]));
}

TEST_CASE("li_context: equals the concatenated-matrix oracle on random docs") {
  Rng rng(23);
  for (int t = 0; t < 20; ++t) {
    const TokenMatrixF q = oracle::unit_rows(rng, rng.uniform_int(1, 6), 16);
    const Document doc = oracle::random_doc(rng, "d", 3, 0b111, 1, 8, 16);
    CHECK(std::abs(li_context<float>(q, doc_view(doc)) - oracle::li_context(q, doc)) <= 1e-5);
  }
  Document empty("e", 2);
  CHECK_THROWS_AS(li_context<float>(oracle::unit_rows(rng, 1, 16), doc_view(empty)), Error);
}

TEST_CASE("li_mw: planted per-modality scores pick the audio column") {
  // Per-modality scores 0.2 / 0.9 / 0.1 / 0.3 against a single e1 query.
  const TokenMatrixF q = basis_row(4, 0);
  Document doc("d", 4);
  doc.modalities[0] = planted_row(4, 0.2f);
  doc.modalities[1] = planted_row(4, 0.9f);
  doc.modalities[2] = planted_row(4, 0.1f);
  doc.modalities[3] = planted_row(4, 0.3f);
  const ScoreBreakdown b = li_mw<float>(q, doc_view(doc), 4);
  CHECK(std::abs(b.total - 0.9) <= 1e-6);
  CHECK(b.modality == 1);
  REQUIRE(b.per_modality.size() == 4);
  CHECK(std::abs(b.per_modality[0] - 0.2) <= 1e-6);
  CHECK(std::abs(b.per_modality[3] - 0.3) <= 1e-6);
}

TEST_CASE("li_mw: identical modalities tie-break to the lowest declared index") {
  Rng rng(24);
  const TokenMatrixF q = oracle::unit_rows(rng, 3, 8);
  const TokenMatrixF rows = oracle::unit_rows(rng, 5, 8);
  Document doc("d", 4);
  for (int m = 0; m < 4; ++m) doc.modalities[m] = rows;
  const ScoreBreakdown b = li_mw<float>(q, doc_view(doc), 4);
  CHECK(b.modality == 0);
  for (double s : b.per_modality) CHECK(s == b.total);
}

TEST_CASE("li_mw: breakdown invariants on random docs") {
  Rng rng(25);
  for (int t = 0; t < 50; ++t) {
    const TokenMatrixF q = oracle::unit_rows(rng, rng.uniform_int(1, 6), 12);
    const unsigned mask = static_cast<unsigned>(rng.uniform_int(1, 15));
    const Document doc = oracle::random_doc(rng, "d", 4, mask, 1, 8, 12);
    const ScoreBreakdown b = li_mw<float>(q, doc_view(doc), 4);
    const oracle::MwResult ref = oracle::li_mw(q, doc);
    CHECK(std::abs(b.total - ref.score) <= 1e-5);
    CHECK(b.modality == ref.modality);
    double best = kNegInf;
    for (double s : b.per_modality) best = std::max(best, s);
    CHECK(b.total == best);
    for (size_t m = 0; m < 4; ++m)
      if (!doc.has(m)) CHECK(b.per_modality[m] == kNegInf);
  }
}

TEST_CASE("modality-wise max never exceeds the contextualized score") {
  // Disjointly-matching doc: each query token's best match sits in a
  // different modality, so the gap is strict.
  TokenMatrixF q(2, 4);
  q.setZero();
  q(0, 0) = 1.0f;
  q(1, 1) = 1.0f;
  Document split("split", 2);
  split.modalities[0] = basis_row(4, 0);
  split.modalities[1] = basis_row(4, 1);
  const double mw = li_mw<float>(q, doc_view(split), 2).total;
  const double ctx = li_context<float>(q, doc_view(split));
  CHECK(ctx == 2.0);
  CHECK(mw == 1.0);
  CHECK(mw < ctx);

  // 1000 random pairs: the inequality always holds, with equality exactly
  // on single-modality documents. Queries are long enough (>= 32 tokens)
  // that no one modality plausibly wins every token by chance.
  Rng rng(26);
  int singles = 0, strict = 0;
  for (int t = 0; t < 1000; ++t) {
    const TokenMatrixF query = oracle::unit_rows(rng, rng.uniform_int(32, 69), 16);
    const int mods_present = rng.uniform_int(1, 4);
    unsigned mask = 0;
    while (static_cast<int>(__builtin_popcount(mask)) < mods_present)
      mask |= 1u << rng.uniform_int(0, 3);
    const Document doc = oracle::random_doc(rng, "d", 4, mask, 10, 20, 16);
    const double a = li_mw<float>(query, doc_view(doc), 4).total;
    const double b = li_context<float>(query, doc_view(doc));
    CHECK(a <= b);
    if (doc.present_count() == 1) {
      CHECK(a == b);
      ++singles;
    } else {
      CHECK(a < b);
      ++strict;
    }
  }
  CHECK(singles > 100);
  CHECK(strict > 100);
}

TEST_CASE("permutation invariance of tokens and query rows") {
  // The GEMM rounds panel-remainder rows through a different micro-kernel,
  // so invariance holds at float precision, not bitwise.
  Rng rng(27);
  const TokenMatrixF q = oracle::unit_rows(rng, 5, 8);
  const TokenMatrixF rows = oracle::unit_rows(rng, 7, 8);
  const double base = li_modality<float>(q, rows);

  TokenMatrixF shuffled = rows;
  shuffled.row(0) = rows.row(6);
  shuffled.row(6) = rows.row(0);
  shuffled.row(2) = rows.row(4);
  shuffled.row(4) = rows.row(2);
  CHECK(std::abs(li_modality<float>(q, shuffled) - base) <= 1e-5);

  TokenMatrixF qperm = q;
  qperm.row(1) = q.row(3);
  qperm.row(3) = q.row(1);
  CHECK(std::abs(li_modality<float>(qperm, rows) - base) <= 1e-5);

  Document doc("d", 2);
  doc.modalities[0] = rows;
  doc.modalities[1] = oracle::unit_rows(rng, 4, 8);
  const double ctx = li_context<float>(q, doc_view(doc));
  CHECK(std::abs(li_context<float>(qperm, doc_view(doc)) - ctx) <= 1e-5);
}

TEST_CASE("zero rows: harmless against positive matches, a floor against negative ones") {
  const TokenMatrixF q = basis_row(4, 0);

  // Positive regime: a perfect match exists, the zero row changes nothing.
  TokenMatrixF pos(2, 4);
  pos.setZero();
  pos(0, 0) = 1.0f;
  CHECK(li_modality<float>(q, pos.topRows(1)) == 1.0);
  CHECK(li_modality<float>(q, pos) == 1.0);

  // Negative regime: every real token scores below zero, so the zero row
  // caps the max at exactly 0.
  TokenMatrixF neg(2, 4);
  neg.setZero();
  neg(0, 0) = -1.0f;
  CHECK(li_modality<float>(q, neg.topRows(1)) == -1.0);
  CHECK(li_modality<float>(q, neg) == 0.0);
}

TEST_CASE("scores are bounded by the query token count") {
  Rng rng(28);
  for (int t = 0; t < 100; ++t) {
    const Eigen::Index nq = rng.uniform_int(1, 10);
    const TokenMatrixF q = oracle::unit_rows(rng, nq, 8);
    const Document doc = oracle::random_doc(rng, "d", 3, 0b101, 1, 6, 8);
    const double ctx = li_context<float>(q, doc_view(doc));
    const double mw = li_mw<float>(q, doc_view(doc), 3).total;
    CHECK(ctx <= static_cast<double>(nq) + 1e-9);
    CHECK(ctx >= -static_cast<double>(nq) - 1e-9);
    CHECK(mw <= static_cast<double>(nq) + 1e-9);
    CHECK(mw >= -static_cast<double>(nq) - 1e-9);
  }
}

TEST_CASE("blocked kernel: block size never changes the score") {
  Rng rng(29);
  for (int t = 0; t < 25; ++t) {
    const TokenMatrixF q = oracle::unit_rows(rng, rng.uniform_int(1, 8), 16);
    const TokenMatrixF rows = oracle::unit_rows(rng, rng.uniform_int(1, 300), 16);
    const double naive = oracle::li_modality(q, rows);
    const double whole = li_modality<float>(q, rows, rows.rows());
    CHECK(std::abs(li_modality<float>(q, rows) - naive) <= 1e-5);
    CHECK(std::abs(li_modality<float>(q, rows, 1) - naive) <= 1e-5);
    CHECK(std::abs(li_modality<float>(q, rows, 64) - naive) <= 1e-5);
    CHECK(std::abs(whole - naive) <= 1e-5);
    // Oversized blocks take the same single-block path.
    CHECK(li_modality<float>(q, rows, rows.rows() + 1000) == whole);
  }
}

TEST_CASE("blocked kernel: 200 random instances at serving scale match the oracle") {
  Rng rng(30);
  double worst = 0.0;
  for (int t = 0; t < 200; ++t) {
    const TokenMatrixF q = oracle::unit_rows(rng, rng.uniform_int(1, 69), 128);
    const TokenMatrixF rows = oracle::unit_rows(rng, rng.uniform_int(1, 600), 128);
    const double fast = li_modality<float>(q, rows, 64);
    const double naive = oracle::li_modality(q, rows);
    worst = std::max(worst, std::abs(fast - naive));
  }
  CHECK(worst <= 1e-5);
}

TEST_CASE("pooled similarity: planted values and the mean-then-cosine oracle") {
  Rng rng(31);
  const TokenMatrixF row = oracle::unit_rows(rng, 1, 8);
  Document same("d", 1);
  same.modalities[0] = row;
  CHECK(std::abs(pooled_similarity<float>(row, doc_view(same), Pooling::mean) - 1.0) <= 1e-6);
  CHECK(std::abs(pooled_similarity<float>(row, doc_view(same), Pooling::last) - 1.0) <= 1e-6);

  Document ortho("d", 1);
  ortho.modalities[0] = basis_row(8, 3);
  CHECK(pooled_similarity<float>(basis_row(8, 0), doc_view(ortho), Pooling::mean) == 0.0);

  for (int t = 0; t < 20; ++t) {
    const TokenMatrixF q = oracle::unit_rows(rng, rng.uniform_int(1, 6), 8);
    const Document doc = oracle::random_doc(rng, "d", 3, 0b011, 1, 5, 8);
    // Reference: mean all rows, normalize, cosine, all in double.
    Eigen::RowVectorXd qm = Eigen::RowVectorXd::Zero(8);
    for (Eigen::Index i = 0; i < q.rows(); ++i) qm += q.row(i).cast<double>();
    qm /= static_cast<double>(q.rows());
    Eigen::RowVectorXd dm = Eigen::RowVectorXd::Zero(8);
    Eigen::Index total = 0;
    for (const auto& mod : doc.modalities) {
      if (!mod) continue;
      for (Eigen::Index i = 0; i < mod->rows(); ++i) dm += mod->row(i).cast<double>();
      total += mod->rows();
    }
    dm /= static_cast<double>(total);
    const double expect = qm.normalized().dot(dm.normalized());
    CHECK(std::abs(pooled_similarity<float>(q, doc_view(doc), Pooling::mean) - expect) <= 1e-6);
  }
}

TEST_CASE("scorer names round-trip and reject junk") {
  CHECK(scorer_from_string("li_mw") == Scorer::li_mw);
  CHECK(scorer_from_string("li_context") == Scorer::li_context);
  CHECK(scorer_from_string("pooled") == Scorer::pooled_mean);
  CHECK(scorer_from_string(scorer_name(Scorer::pooled_last)) == Scorer::pooled_last);
  CHECK_THROWS_AS(scorer_from_string("cosine"), Error);
}
