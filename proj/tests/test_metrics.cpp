// Copyright the liret authors. Licensed under the terms of the Apache 2.0 license. See LICENSE in the project root.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "liret/index.hpp"
#include "liret/metrics.hpp"
#include "liret/rng.hpp"
#include "oracles.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

using namespace liret;

namespace {

RankedList list_of(const std::string& qid, std::initializer_list<const char*> ids) {
  RankedList r;
  r.query_id = qid;
  float score = static_cast<float>(ids.size());
  for (const char* id : ids) r.items.emplace_back(id, score -= 1.0f);
  return r;
}

// Random run + qrels over a shared doc universe.
struct RandomEval {
  std::vector<RankedList> run;
  Qrels qrels;
};

RandomEval random_eval(uint64_t seed, int queries, int docs, int depth) {
  Rng rng(seed);
  RandomEval out;
  for (int qi = 0; qi < queries; ++qi) {
    const std::string qid = "q" + std::to_string(qi);
    // 1..4 positives, graded 1..3.
    const int n_pos = rng.uniform_int(1, 4);
    for (int p = 0; p < n_pos; ++p) {
      const std::string did = "d" + std::to_string(rng.uniform_int(0, docs - 1));
      if (out.qrels.grade(qid, did) == 0) out.qrels.add(qid, did, rng.uniform_int(1, 3));
    }
    RankedList r;
    r.query_id = qid;
    std::vector<int> perm(docs);
    for (int i = 0; i < docs; ++i) perm[i] = i;
    for (int i = docs - 1; i > 0; --i) std::swap(perm[i], perm[rng.uniform_int(0, i)]);
    double score = 100.0;
    for (int i = 0; i < depth; ++i) {
      score -= rng.uniform();
      r.items.emplace_back("d" + std::to_string(perm[i]), static_cast<float>(score));
    }
    out.run.push_back(std::move(r));
  }
  return out;
}

}  // namespace

TEST_CASE("recall: rank position against the cutoff") {
  Qrels q;
  q.add("q1", "hit", 1);
  // Relevant doc at rank 3 with k = 5.
  const auto in5 = recall_at_k({list_of("q1", {"a", "b", "hit", "c", "d"})}, q, 5);
  CHECK(in5.mean == 1.0);
  // Relevant doc at rank 11 with k = 10.
  const auto out10 = recall_at_k(
      {list_of("q1", {"a", "b", "c", "d", "e", "f", "g", "h", "i", "j", "hit"})}, q, 10);
  CHECK(out10.mean == 0.0);
  CHECK_THROWS_AS(static_cast<void>(recall_at_k({}, q, 0)), Error);
}

TEST_CASE("recall: unjudged queries are skipped, not scored") {
  Qrels q;
  q.add("q1", "d1", 1);
  q.add("q2", "d9", 0);  // judged but nothing positive
  const auto rep = recall_at_k(
      {list_of("q1", {"d1"}), list_of("q2", {"d9"}), list_of("q3", {"d1"})}, q, 5);
  CHECK(rep.evaluated == 1);
  CHECK(rep.skipped == 2);
  CHECK(rep.mean == 1.0);
}

TEST_CASE("recall: fraction mode divides by the judged positives") {
  Qrels q;
  q.add("q1", "d1", 1);
  q.add("q1", "d2", 2);
  q.add("q1", "d3", 1);
  const RankedList r = list_of("q1", {"d1", "x", "d2", "y"});
  CHECK(recall_at_k({r}, q, 4, RecallMode::hit_rate).mean == 1.0);
  CHECK(recall_at_k({r}, q, 4, RecallMode::fraction).mean == doctest::Approx(2.0 / 3.0));
}

TEST_CASE("ndcg: ideal singleton and the worked graded example") {
  Qrels single;
  single.add("q1", "d1", 1);
  CHECK(ndcg_at_k({list_of("q1", {"d1", "x"})}, single, 10).mean == doctest::Approx(1.0));

  // Ranked grades (0, 2, 1) with judged grades {2, 1}:
  // DCG = 3/log2(3) + 1/log2(4), IDCG = 3 + 1/log2(3).
  Qrels graded;
  graded.add("q1", "two", 2);
  graded.add("q1", "one", 1);
  const auto rep = ndcg_at_k({list_of("q1", {"zero", "two", "one"})}, graded, 10);
  const double dcg = 3.0 / std::log2(3.0) + 1.0 / std::log2(4.0);
  const double idcg = 3.0 + 1.0 / std::log2(3.0);
  CHECK(dcg == doctest::Approx(2.3927).epsilon(1e-4));
  CHECK(idcg == doctest::Approx(3.6309).epsilon(1e-4));
  CHECK(rep.mean == doctest::Approx(dcg / idcg).epsilon(1e-9));
  CHECK(rep.mean == doctest::Approx(0.6590).epsilon(1e-3));

  // Linear gain changes the numbers but not the skip logic.
  const auto lin = ndcg_at_k({list_of("q1", {"zero", "two", "one"})}, graded, 10,
                             GainKind::linear);
  const double lin_dcg = 2.0 / std::log2(3.0) + 1.0 / std::log2(4.0);
  const double lin_idcg = 2.0 + 1.0 / std::log2(3.0);
  CHECK(lin.mean == doctest::Approx(lin_dcg / lin_idcg).epsilon(1e-9));
}

TEST_CASE("ndcg: all-zero grades exclude the query") {
  Qrels q;
  q.add("q1", "d1", 0);
  const auto rep = ndcg_at_k({list_of("q1", {"d1"})}, q, 10);
  CHECK(rep.evaluated == 0);
  CHECK(rep.skipped == 1);
}

TEST_CASE("ndcg: reversal with distinct grades strictly lowers the score") {
  Qrels q;
  q.add("q1", "best", 3);
  q.add("q1", "good", 2);
  q.add("q1", "ok", 1);
  const double forward = ndcg_at_k({list_of("q1", {"best", "good", "ok"})}, q, 10).mean;
  const double backward = ndcg_at_k({list_of("q1", {"ok", "good", "best"})}, q, 10).mean;
  CHECK(forward == doctest::Approx(1.0));
  CHECK(backward < forward);

  // Moving a relevant doc strictly earlier never hurts.
  const double later = ndcg_at_k({list_of("q1", {"x", "y", "best"})}, q, 10).mean;
  const double earlier = ndcg_at_k({list_of("q1", {"x", "best", "y"})}, q, 10).mean;
  CHECK(earlier >= later);
}

TEST_CASE("metrics: invariant to relabeling document ids") {
  const RandomEval ev = random_eval(100, 10, 30, 10);
  // Rename every doc id consistently in both run and qrels.
  auto rename = [](const std::string& id) { return "z_" + id + "_renamed"; };
  std::vector<RankedList> run2 = ev.run;
  for (RankedList& r : run2)
    for (auto& [id, s] : r.items) id = rename(id);
  Qrels q2;
  for (const auto& [qid, docs] : ev.qrels.by_query)
    for (const auto& [did, g] : docs) q2.add(qid, rename(did), g);
  CHECK(ndcg_at_k(ev.run, ev.qrels, 10).mean == ndcg_at_k(run2, q2, 10).mean);
  CHECK(recall_at_k(ev.run, ev.qrels, 5).mean == recall_at_k(run2, q2, 5).mean);
}

TEST_CASE("metrics: 50 randomized run/qrels pairs match the reference to 1e-6") {
  for (uint64_t seed = 0; seed < 50; ++seed) {
    const RandomEval ev = random_eval(2000 + seed, 8, 25, 12);
    for (int k : {1, 5, 10}) {
      const auto rec = recall_at_k(ev.run, ev.qrels, k);
      const auto frac = recall_at_k(ev.run, ev.qrels, k, RecallMode::fraction);
      const auto nd = ndcg_at_k(ev.run, ev.qrels, k);
      const auto ndl = ndcg_at_k(ev.run, ev.qrels, k, GainKind::linear);
      double rec_sum = 0.0, frac_sum = 0.0, nd_sum = 0.0, ndl_sum = 0.0;
      int n = 0;
      for (const RankedList& r : ev.run) {
        const double expect_nd = oracle::ndcg(r, ev.qrels, k);
        if (expect_nd < 0.0) continue;  // no positives, excluded
        rec_sum += oracle::recall_hit(r, ev.qrels, k);
        frac_sum += oracle::recall_fraction(r, ev.qrels, k);
        nd_sum += expect_nd;
        ndl_sum += oracle::ndcg(r, ev.qrels, k, false);
        ++n;
      }
      REQUIRE(n == rec.evaluated);
      CHECK(rec.mean == doctest::Approx(rec_sum / n).epsilon(1e-6));
      CHECK(frac.mean == doctest::Approx(frac_sum / n).epsilon(1e-6));
      CHECK(nd.mean == doctest::Approx(nd_sum / n).epsilon(1e-6));
      CHECK(ndl.mean == doctest::Approx(ndl_sum / n).epsilon(1e-6));
      // The mean is the plain average of the per-query column.
      double acc = 0.0;
      for (const auto& [qid, v] : nd.per_query) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
        acc += v;
      }
      CHECK(nd.mean == doctest::Approx(acc / n).epsilon(1e-12));
    }
  }
}

TEST_CASE("metric report file: per-query rows then the ALL mean") {
  oracle::TempDir tmp("metrics");
  const RandomEval ev = random_eval(3000, 4, 10, 5);
  const auto rep = ndcg_at_k(ev.run, ev.qrels, 10);
  const std::string path = tmp.file("report.tsv");
  write_metric_report(path, {rep});

  std::ifstream in(path);
  std::string line;
  std::vector<std::string> lines;
  while (std::getline(in, line)) lines.push_back(line);
  REQUIRE(lines.size() == rep.per_query.size() + 1);
  CHECK(lines.back().rfind("ndcg@10\tALL\t", 0) == 0);
  for (size_t i = 0; i < rep.per_query.size(); ++i)
    CHECK(lines[i].rfind("ndcg@10\t" + rep.per_query[i].first + "\t", 0) == 0);
}

TEST_CASE("modality accuracy: planted winners, tie-breaks, and aggregation") {
  // Docs with two modalities on separate axes; queries point at one axis.
  const ModalitySet mods({"vision", "audio"});
  std::vector<Document> docs;
  for (int i = 0; i < 3; ++i) {
    Document d("d" + std::to_string(i), 2);
    TokenMatrixF v = TokenMatrixF::Zero(1, 8);
    v(0, i) = 1.0f;
    TokenMatrixF a = TokenMatrixF::Zero(1, 8);
    a(0, 4 + i) = 1.0f;
    d.modalities[0] = v;
    d.modalities[1] = a;
    docs.push_back(std::move(d));
  }
  const CorpusIndex idx = CorpusIndex::build(mods, 8, std::move(docs));

  std::vector<LabeledQuery> queries;
  auto probe = [&](const std::string& qid, int axis, size_t target, const std::string& pos) {
    LabeledQuery q;
    q.query_id = qid;
    q.embeddings = TokenMatrixF::Zero(1, 8);
    q.embeddings(0, axis) = 1.0f;
    q.target_modality = target;
    q.positive_doc_id = pos;
    return q;
  };
  // Audio-side probes hit the audio axis of their doc.
  queries.push_back(probe("q0", 4, 1, "d0"));  // correct audio
  queries.push_back(probe("q1", 5, 1, "d1"));  // correct audio
  queries.push_back(probe("q2", 0, 0, "d0"));  // correct vision
  queries.push_back(probe("q3", 6, 0, "d2"));  // says vision, scores audio: wrong
  const AccuracyReport rep = modality_accuracy(idx, queries);
  CHECK(rep.evaluated == 4);
  CHECK(rep.per_class[0] == doctest::Approx(0.5));  // vision: 1 of 2
  CHECK(rep.per_class[1] == doctest::Approx(1.0));  // audio: 2 of 2
  CHECK(rep.macro == doctest::Approx(0.75));
  CHECK(rep.micro == doctest::Approx(0.75));
  CHECK(rep.class_counts[0] == 2);
  CHECK(rep.class_counts[1] == 2);

  // Macro and micro diverge once the class sizes differ.
  queries.push_back(probe("q4", 6, 1, "d2"));  // correct audio
  const AccuracyReport uneven = modality_accuracy(idx, queries);
  CHECK(uneven.micro == doctest::Approx(4.0 / 5.0));
  CHECK(uneven.macro == doctest::Approx((0.5 + 1.0) / 2.0));

  // Unknown positive doc: skipped.
  queries.push_back(probe("q5", 0, 0, "ghost"));
  const AccuracyReport skipped = modality_accuracy(idx, queries);
  CHECK(skipped.skipped == 1);
  CHECK(skipped.evaluated == 5);
}

TEST_CASE("modality accuracy: identical matrices force the declared-first winner") {
  const ModalitySet mods({"vision", "audio"});
  Rng rng(101);
  const TokenMatrixF rows = oracle::unit_rows(rng, 3, 8);
  std::vector<Document> docs;
  Document d("d0", 2);
  d.modalities[0] = rows;
  d.modalities[1] = rows;
  docs.push_back(std::move(d));
  const CorpusIndex idx = CorpusIndex::build(mods, 8, std::move(docs));

  std::vector<LabeledQuery> queries;
  LabeledQuery qv{"qv", oracle::unit_rows(rng, 2, 8), 0, "d0"};
  LabeledQuery qa{"qa", oracle::unit_rows(rng, 2, 8), 1, "d0"};
  queries.push_back(qv);
  queries.push_back(qa);
  const AccuracyReport rep = modality_accuracy(idx, queries);
  // Both probes resolve to vision by tie-break: only the vision-labeled
  // class scores.
  CHECK(rep.per_class[0] == doctest::Approx(1.0));
  CHECK(rep.per_class[1] == doctest::Approx(0.0));
}

TEST_CASE("paired bootstrap: identity, dominance, determinism") {
  std::vector<std::pair<std::string, double>> a, b;
  Rng rng(102);
  for (int i = 0; i < 40; ++i) {
    const std::string qid = "q" + std::to_string(i);
    const double base = rng.uniform();
    a.emplace_back(qid, base + 0.05);
    b.emplace_back(qid, base);
  }
  // Self-comparison is exactly 1.0.
  CHECK(paired_bootstrap(a, a, 10000, 0) == 1.0);
  // a beats b on every query: exactly 0 at any resample count.
  CHECK(paired_bootstrap(a, b, 10000, 0) == 0.0);
  CHECK(paired_bootstrap(b, a, 10000, 0) == 1.0);

  // Noisy advantage: small but nonzero p, reproducible per seed.
  std::vector<std::pair<std::string, double>> c = b;
  Rng noise(103);
  for (auto& [qid, v] : c) v += noise.gaussian() * 0.1;
  const double p1 = paired_bootstrap(a, c, 10000, 7);
  const double p2 = paired_bootstrap(a, c, 10000, 7);
  CHECK(p1 == p2);
  CHECK(p1 < 0.05);
  const double p3 = paired_bootstrap(a, c, 10000, 8);
  CHECK(std::abs(p3 - p1) < 0.02);  // seed changes resamples, not the verdict

  // Mismatched query sets are a hard error.
  std::vector<std::pair<std::string, double>> wrong = b;
  wrong[0].first = "other";
  CHECK_THROWS_AS(static_cast<void>(paired_bootstrap(a, wrong, 100, 0)), Error);
  std::vector<std::pair<std::string, double>> shorter(a.begin(), a.end() - 1);
  CHECK_THROWS_AS(static_cast<void>(paired_bootstrap(a, shorter, 100, 0)), Error);
}

TEST_CASE("paired bootstrap: reordered inputs pair by query id") {
  std::vector<std::pair<std::string, double>> a, b;
  Rng rng(104);
  for (int i = 0; i < 20; ++i) {
    const std::string qid = "q" + std::to_string(i);
    a.emplace_back(qid, rng.uniform());
    b.emplace_back(qid, rng.uniform());
  }
  std::vector<std::pair<std::string, double>> b_rev(b.rbegin(), b.rend());
  CHECK(paired_bootstrap(a, b, 5000, 3) == paired_bootstrap(a, b_rev, 5000, 3));
}
