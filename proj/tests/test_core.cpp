// Copyright the liret authors. Licensed under the terms of the Apache 2.0 license. See LICENSE in the project root.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "liret/io.hpp"
#include "liret/normalize.hpp"
#include "liret/rng.hpp"
#include "liret/types.hpp"
#include "oracles.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

using namespace liret;

TEST_CASE("rng: identical seeds yield identical streams") {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
  Rng c(42), d(43);
  bool differ = false;
  for (int i = 0; i < 16 && !differ; ++i) differ = c.next_u64() != d.next_u64();
  CHECK(differ);
}

TEST_CASE("rng: named substreams are independent and do not advance the parent") {
  Rng parent(7);
  Rng s1 = parent.stream("alpha");
  Rng s2 = parent.stream("beta");
  CHECK(s1.next_u64() != s2.next_u64());
  // Deriving streams consumed nothing from the parent.
  Rng fresh(7);
  CHECK(parent.next_u64() == fresh.next_u64());
  // Same name, same stream.
  Rng s1b = fresh.stream("alpha");
  Rng s1c = Rng(7).stream("alpha");
  CHECK(s1b.next_u64() == s1c.next_u64());
  // Indexed variants differ from each other and from the plain stream.
  Rng i0 = fresh.stream("alpha", 0);
  Rng i1 = fresh.stream("alpha", 1);
  CHECK(i0.next_u64() != i1.next_u64());
}

TEST_CASE("rng: uniform and uniform_int respect their ranges") {
  Rng rng(1);
  for (int i = 0; i < 10000; ++i) {
    const double u = rng.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
  }
  bool hit[4] = {false, false, false, false};
  for (int i = 0; i < 10000; ++i) {
    const int v = rng.uniform_int(2, 5);
    CHECK(v >= 2);
    CHECK(v <= 5);
    hit[v - 2] = true;
  }
  for (bool h : hit) CHECK(h);
}

TEST_CASE("rng: gaussian moments are near standard normal") {
  Rng rng(3);
  const int n = 20000;
  double sum = 0.0, sum2 = 0.0;
  for (int i = 0; i < n; ++i) {
    const double g = rng.gaussian();
    sum += g;
    sum2 += g * g;
  }
  const double mean = sum / n;
  const double var = sum2 / n - mean * mean;
  CHECK(std::abs(mean) < 0.05);
  CHECK(std::abs(var - 1.0) < 0.1);
}

TEST_CASE("modality set: declared order, lookup, and validation") {
  const ModalitySet mods = ModalitySet::default_set();
  REQUIRE(mods.size() == 4);
  CHECK(mods.name(0) == "vision");
  CHECK(mods.name(1) == "audio");
  CHECK(mods.name(2) == "ocr");
  CHECK(mods.name(3) == "metadata");
  CHECK(mods.index_of("ocr") == 2);
  CHECK(!mods.find("caption").has_value());
  CHECK_THROWS_AS(mods.index_of("caption"), Error);

  CHECK_THROWS_AS(ModalitySet(std::vector<std::string>{}), Error);
  CHECK_THROWS_AS(ModalitySet({"a", "b", "a"}), Error);
  CHECK_THROWS_AS(ModalitySet({""}), Error);
  CHECK_THROWS_AS(ModalitySet({"1", "2", "3", "4", "5", "6", "7", "8", "9"}), Error);
  CHECK(ModalitySet({"1", "2", "3", "4", "5", "6", "7", "8"}).size() == 8);
}

TEST_CASE("document: presence bookkeeping") {
  Document d("d1", 3);
  CHECK(d.present_count() == 0);
  d.modalities[1] = TokenMatrixF::Zero(4, 2);
  d.modalities[2] = TokenMatrixF::Zero(3, 2);
  CHECK(d.has(1));
  CHECK(!d.has(0));
  CHECK(d.present_count() == 2);
  CHECK(d.total_tokens() == 7);
}

TEST_CASE("qrels: grades, defaults, and duplicate detection") {
  Qrels q;
  q.add("q1", "d1", 2);
  q.add("q1", "d2", 0);
  CHECK(q.grade("q1", "d1") == 2);
  CHECK(q.grade("q1", "d9") == 0);
  CHECK(q.grade("q9", "d1") == 0);
  CHECK(q.pair_count() == 2);
  CHECK_THROWS_AS(q.add("q1", "d1", 1), Error);
  CHECK_THROWS_AS(q.add("q2", "d1", -1), Error);
}

TEST_CASE("split names round-trip") {
  for (Split s : {Split::train, Split::val, Split::test})
    CHECK(split_from_string(split_name(s)) == s);
  CHECK_THROWS_AS(split_from_string("dev"), Error);
}

TEST_CASE("normalize: 3-4-5 row and unit row") {
  TokenMatrixF m(2, 2);
  m << 3.0f, 4.0f, 1.0f, 0.0f;
  CHECK(normalize_rows_in_place(m) == 0);
  CHECK(m(0, 0) == doctest::Approx(0.6).epsilon(1e-7));
  CHECK(m(0, 1) == doctest::Approx(0.8).epsilon(1e-7));
  // e1 has an exactly representable norm, so it passes through untouched.
  CHECK(m(1, 0) == 1.0f);
  CHECK(m(1, 1) == 0.0f);
}

TEST_CASE("normalize: random rows reach unit norm under independent summation") {
  Rng rng(11);
  TokenMatrixF m(5, 8);
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j)
      m(i, j) = static_cast<float>(rng.gaussian() * 3.0);
  normalize_rows_in_place(m);
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    // Recompute the norm in reverse accumulation order, in double.
    double n2 = 0.0;
    for (Eigen::Index j = m.cols() - 1; j >= 0; --j)
      n2 += static_cast<double>(m(i, j)) * m(i, j);
    CHECK(std::abs(std::sqrt(n2) - 1.0) < 1e-6);
  }
}

TEST_CASE("normalize: idempotent and zero rows stay zero") {
  Rng rng(12);
  TokenMatrixF m(4, 6);
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = static_cast<float>(rng.gaussian());
  m.row(2).setZero();

  int zeros = 0;
  TokenMatrixF once = normalize_rows(m, &zeros);
  CHECK(zeros == 1);
  CHECK(once.row(2).norm() == 0.0f);

  TokenMatrixF twice = normalize_rows(once);
  CHECK((twice - once).cwiseAbs().maxCoeff() <= 1e-6f);
}

TEST_CASE("normalized_or_zero: unit output or exact zero") {
  Eigen::RowVectorXd v(2);
  v << 3.0, 4.0;
  const Eigen::RowVectorXd n = normalized_or_zero(v);
  CHECK(n(0) == doctest::Approx(0.6));
  CHECK(n(1) == doctest::Approx(0.8));
  const Eigen::RowVectorXd z = normalized_or_zero(Eigen::RowVectorXd::Zero(2));
  CHECK(z.norm() == 0.0);
}

namespace {

Container small_container() {
  Container c;
  c.kind = PayloadKind::embeddings;
  c.modalities = ModalitySet({"vision", "audio"});
  c.dim = 4;
  Document d1("doc-a", 2);
  TokenMatrixF v(2, 4);
  v << 1, 0, 0, 0, 0, 1, 0, 0;
  d1.modalities[0] = v;
  TokenMatrixF a(1, 4);
  a << 0, 0, 1, 0;
  d1.modalities[1] = a;
  Document d2("doc-b", 2);
  d2.modalities[1] = a;  // audio only
  c.docs.push_back(d1);
  c.docs.push_back(d2);
  return c;
}

}  // namespace

TEST_CASE("container: round-trip is byte-identical and content-exact") {
  oracle::TempDir tmp("io");
  const Container c = small_container();
  const std::string p1 = tmp.file("a.bin"), p2 = tmp.file("b.bin");
  write_container(p1, c);
  const Container r = read_embeddings(p1);
  CHECK(r.kind == PayloadKind::embeddings);
  CHECK(r.modalities == c.modalities);
  CHECK(r.dim == c.dim);
  REQUIRE(r.docs.size() == 2);
  CHECK(r.docs[0].id == "doc-a");
  CHECK(r.docs[1].id == "doc-b");
  CHECK(!r.docs[1].has(0));
  REQUIRE(r.docs[0].has(0));
  CHECK((*r.docs[0].modalities[0] - *c.docs[0].modalities[0]).cwiseAbs().maxCoeff() == 0.0f);

  write_container(p2, r);
  CHECK(oracle::file_bytes(p1) == oracle::file_bytes(p2));
}

TEST_CASE("container: empty document list is a valid file") {
  oracle::TempDir tmp("io");
  Container c;
  c.modalities = ModalitySet({"vision"});
  c.dim = 3;
  const std::string p = tmp.file("empty.bin");
  write_container(p, c);
  const Container r = read_embeddings(p);
  CHECK(r.docs.empty());
  CHECK(r.dim == 3);
}

TEST_CASE("container: 100 random documents survive a round-trip bit for bit") {
  oracle::TempDir tmp("io");
  Rng rng(99);
  Container c;
  c.modalities = ModalitySet::default_set();
  c.dim = 8;
  for (int i = 0; i < 100; ++i) {
    // Any non-empty presence pattern over 4 modalities.
    const unsigned mask = static_cast<unsigned>(rng.uniform_int(1, 15));
    char id[16];
    std::snprintf(id, sizeof id, "doc%03d", i);
    c.docs.push_back(oracle::random_doc(rng, id, 4, mask, 1, 6, c.dim));
  }
  const std::string p1 = tmp.file("r1.bin"), p2 = tmp.file("r2.bin");
  write_container(p1, c);
  write_container(p2, read_embeddings(p1));
  CHECK(oracle::file_hash(p1) == oracle::file_hash(p2));
}

TEST_CASE("container: corrupt headers fail with distinct codes") {
  oracle::TempDir tmp("io");
  const std::string p = tmp.file("c.bin");
  write_container(p, small_container());
  const std::string bytes = oracle::file_bytes(p);

  auto write_bytes = [&](const std::string& path, const std::string& data) {
    std::ofstream out(path, std::ios::binary);
    out.write(data.data(), static_cast<std::streamsize>(data.size()));
  };

  std::string bad_magic = bytes;
  bad_magic[0] = 'X';
  write_bytes(tmp.file("m.bin"), bad_magic);
  CHECK_THROWS_WITH_AS(static_cast<void>(read_embeddings(tmp.file("m.bin"))),
                       doctest::Contains("bad_magic"), Error);

  std::string bad_version = bytes;
  bad_version[4] = 9;
  write_bytes(tmp.file("v.bin"), bad_version);
  CHECK_THROWS_WITH_AS(static_cast<void>(read_embeddings(tmp.file("v.bin"))),
                       doctest::Contains("bad_version"), Error);

  write_bytes(tmp.file("t.bin"), bytes.substr(0, bytes.size() - 7));
  CHECK_THROWS_WITH_AS(static_cast<void>(read_embeddings(tmp.file("t.bin"))),
                       doctest::Contains("truncated"), Error);

  std::string trailing = bytes + "zz";
  write_bytes(tmp.file("x.bin"), trailing);
  CHECK_THROWS_AS(static_cast<void>(read_embeddings(tmp.file("x.bin"))), Error);
}

TEST_CASE("container: payload kind is part of the magic") {
  oracle::TempDir tmp("io");
  Container c = small_container();
  c.kind = PayloadKind::features;
  const std::string p = tmp.file("f.bin");
  write_container(p, c);
  CHECK(read_features(p).kind == PayloadKind::features);
  // An embeddings reader must refuse raw features, and vice versa.
  CHECK_THROWS_WITH_AS(static_cast<void>(read_embeddings(p)), doctest::Contains("raw features"),
                       Error);
  write_container(tmp.file("e.bin"), small_container());
  CHECK_THROWS_AS(static_cast<void>(read_features(tmp.file("e.bin"))), Error);
}

TEST_CASE("qrels file: single line, round-trip, and line-numbered errors") {
  oracle::TempDir tmp("io");
  {
    std::ofstream out(tmp.file("one.tsv"));
    out << "q1\td1\t2\n";
  }
  const Qrels one = read_qrels(tmp.file("one.tsv"));
  CHECK(one.pair_count() == 1);
  CHECK(one.grade("q1", "d1") == 2);

  Qrels q;
  Rng rng(5);
  for (int i = 0; i < 200; ++i)
    q.add("q" + std::to_string(rng.uniform_int(0, 49)) + "x" + std::to_string(i),
          "d" + std::to_string(rng.uniform_int(0, 99)), rng.uniform_int(0, 3));
  write_qrels(tmp.file("q.tsv"), q);
  CHECK(read_qrels(tmp.file("q.tsv")) == q);

  {
    std::ofstream out(tmp.file("dup.tsv"));
    out << "q1\td1\t1\nq1\td1\t2\n";
  }
  CHECK_THROWS_WITH_AS(static_cast<void>(read_qrels(tmp.file("dup.tsv"))), doctest::Contains(":2"),
                       Error);

  {
    std::ofstream out(tmp.file("bad.tsv"));
    out << "q1\td1\t1\nq2\tonly-two-fields\n";
  }
  CHECK_THROWS_WITH_AS(static_cast<void>(read_qrels(tmp.file("bad.tsv"))), doctest::Contains(":2"),
                       Error);

  {
    std::ofstream out(tmp.file("neg.tsv"));
    out << "q1\td1\t-3\n";
  }
  CHECK_THROWS_AS(static_cast<void>(read_qrels(tmp.file("neg.tsv"))), Error);
}

TEST_CASE("run file: round-trip and consecutive-rank validation") {
  oracle::TempDir tmp("io");
  std::vector<RankedList> lists;
  Rng rng(6);
  for (int qi = 0; qi < 50; ++qi) {
    RankedList rl;
    rl.query_id = "q" + std::to_string(qi);
    double score = 10.0;
    for (int r = 0; r < 20; ++r) {
      score -= rng.uniform();
      rl.items.emplace_back("d" + std::to_string(r), static_cast<float>(score));
    }
    lists.push_back(std::move(rl));
  }
  const std::string p = tmp.file("run.tsv");
  write_run(p, lists);

  // 1000 lines, cross-checked against the naive field splitter.
  const auto naive = oracle::parse_run_naive(p);
  REQUIRE(naive.size() == 1000);
  const auto back = read_run(p);
  REQUIRE(back.size() == lists.size());
  size_t flat = 0;
  for (size_t i = 0; i < back.size(); ++i) {
    CHECK(back[i].query_id == lists[i].query_id);
    REQUIRE(back[i].items.size() == lists[i].items.size());
    for (size_t r = 0; r < back[i].items.size(); ++r, ++flat) {
      CHECK(back[i].items[r].first == lists[i].items[r].first);
      CHECK(back[i].items[r].second == lists[i].items[r].second);
      CHECK(naive[flat].qid == back[i].query_id);
      CHECK(naive[flat].did == back[i].items[r].first);
      CHECK(naive[flat].rank == static_cast<int>(r) + 1);
      CHECK(static_cast<float>(naive[flat].score) ==
            doctest::Approx(back[i].items[r].second).epsilon(1e-6));
    }
  }

  {
    std::ofstream out(tmp.file("gap.tsv"));
    out << "q1\td1\t1\t0.9\nq1\td2\t3\t0.8\n";
  }
  CHECK_THROWS_WITH_AS(static_cast<void>(read_run(tmp.file("gap.tsv"))),
                       doctest::Contains("rank not consecutive"), Error);
}

TEST_CASE("query manifest and doc splits round-trip") {
  oracle::TempDir tmp("io");
  const ModalitySet mods = ModalitySet::default_set();
  std::vector<ManifestRow> rows;
  rows.push_back({"q0", std::nullopt, "d0", Split::train});
  rows.push_back({"q1", size_t{1}, "d0", Split::val});
  rows.push_back({"q2", size_t{3}, "d1", Split::test});
  const std::string p = tmp.file("queries.tsv");
  write_query_manifest(p, rows, mods);
  const auto back = read_query_manifest(p, mods);
  REQUIRE(back.size() == rows.size());
  for (size_t i = 0; i < rows.size(); ++i) {
    CHECK(back[i].query_id == rows[i].query_id);
    CHECK(back[i].target_modality == rows[i].target_modality);
    CHECK(back[i].source_doc_id == rows[i].source_doc_id);
    CHECK(back[i].split == rows[i].split);
  }

  std::vector<std::pair<std::string, Split>> splits = {
      {"d0", Split::train}, {"d1", Split::test}, {"d2", Split::val}};
  write_doc_splits(tmp.file("splits.tsv"), splits);
  CHECK(read_doc_splits(tmp.file("splits.tsv")) == splits);

  {
    std::ofstream out(tmp.file("routing.tsv"));
    out << "q0\taudio\nq1\tvision\n";
  }
  const auto routing = read_routing(tmp.file("routing.tsv"));
  CHECK(routing.at("q0") == "audio");
  CHECK(routing.at("q1") == "vision");
}

TEST_CASE("format_score is stable and reversible enough for run files") {
  CHECK(format_score(1.0) == format_score(1.0));
  CHECK(format_score(0.123456789) != format_score(0.123456788));
  const double v = 0.8414709848078965;
  CHECK(std::stod(format_score(v)) == doctest::Approx(v).epsilon(1e-9));
}
