// Copyright the liret authors. Licensed under the terms of the Apache 2.0 license. See LICENSE in the project root.
#include "liret/synthgen.hpp"

#include "liret/io.hpp"
#include "liret/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <map>
#include <set>

namespace liret {

void SynthConfig::validate() const {
  if (docs < 1) raise(Errc::invalid_argument, "docs must be >= 1");
  if (min_tokens < 1 || max_tokens < min_tokens)
    raise(Errc::invalid_argument, "token range must satisfy 1 <= min <= max");
  if (query_min_tokens < 1 || query_max_tokens < query_min_tokens)
    raise(Errc::invalid_argument, "query token range must satisfy 1 <= min <= max");
  if (feature_dim < 1) raise(Errc::invalid_argument, "feature_dim must be >= 1");
  if (sigma < 0.0) raise(Errc::invalid_argument, "sigma must be >= 0");
  if (rho < 0.0 || rho >= 1.0) raise(Errc::invalid_argument, "rho must lie in [0, 1)");
  if (query_context < 0.0 || query_context >= 1.0)
    raise(Errc::invalid_argument, "query_context must lie in [0, 1)");
  if (train_frac < 0.0 || val_frac < 0.0 || test_frac < 0.0)
    raise(Errc::invalid_argument, "split fractions must be >= 0");
  if (std::abs(train_frac + val_frac + test_frac - 1.0) > 1e-9)
    raise(Errc::invalid_argument, "split fractions must sum to 1");
}

namespace {

std::string doc_name(int i) {
  char buf[24];
  std::snprintf(buf, sizeof buf, "doc_%06d", i);
  return buf;
}

Eigen::RowVectorXd unit_gaussian(Rng& rng, int dim) {
  Eigen::RowVectorXd v(dim);
  for (int j = 0; j < dim; ++j) v(j) = rng.gaussian();
  const double n = v.norm();
  if (n > 0.0) v /= n;
  return v;
}

TokenMatrixF noisy_tokens(Rng& rng, const Eigen::RowVectorXd& topic, int count, double sigma) {
  TokenMatrixF out(count, topic.cols());
  for (int t = 0; t < count; ++t)
    for (Eigen::Index j = 0; j < topic.cols(); ++j)
      out(t, j) = static_cast<float>(topic(j) + sigma * rng.gaussian());
  return out;
}

constexpr double kLinkFraction = 0.5;  // topic share copied into a distractor

}  // namespace

SynthCorpus gen_corpus(const SynthConfig& config) {
  config.validate();
  const size_t mods = config.modalities.size();
  SynthCorpus corpus;
  corpus.modalities = config.modalities;
  corpus.feature_dim = config.feature_dim;
  const Rng root(config.seed);

  // Base topics first, then link rewiring against the base topics, so a
  // chain of links never depends on generation order.
  std::vector<std::vector<Eigen::RowVectorXd>> base(static_cast<size_t>(config.docs));
  for (int d = 0; d < config.docs; ++d) {
    Rng rng = root.stream("topics", static_cast<uint64_t>(d));
    base[static_cast<size_t>(d)].reserve(mods);
    for (size_t m = 0; m < mods; ++m)
      base[static_cast<size_t>(d)].push_back(unit_gaussian(rng, config.feature_dim));
  }

  corpus.topics = base;
  corpus.links.assign(static_cast<size_t>(config.docs), std::vector<std::vector<int>>(mods));
  if (config.docs > 1 && config.rho > 0.0) {
    for (int d = 0; d < config.docs; ++d) {
      Rng rng = root.stream("links", static_cast<uint64_t>(d));
      for (size_t m = 0; m < mods; ++m) {
        if (rng.uniform() >= config.rho) continue;
        int partner = rng.uniform_int(0, config.docs - 2);
        if (partner >= d) ++partner;
        const Eigen::RowVectorXd fresh = unit_gaussian(rng, config.feature_dim);
        Eigen::RowVectorXd mixed = kLinkFraction * base[static_cast<size_t>(partner)][m] +
                                   (1.0 - kLinkFraction) * fresh;
        const double n = mixed.norm();
        if (n > 0.0) mixed /= n;
        corpus.topics[static_cast<size_t>(d)][m] = mixed;
        corpus.links[static_cast<size_t>(d)][m].push_back(partner);
        corpus.links[static_cast<size_t>(partner)][m].push_back(d);
      }
    }
  }
  for (auto& per_doc : corpus.links)
    for (auto& linked : per_doc) {
      std::sort(linked.begin(), linked.end());
      linked.erase(std::unique(linked.begin(), linked.end()), linked.end());
    }

  corpus.docs.reserve(static_cast<size_t>(config.docs));
  for (int d = 0; d < config.docs; ++d) {
    Rng rng = root.stream("tokens", static_cast<uint64_t>(d));
    Document doc(doc_name(d), mods);
    for (size_t m = 0; m < mods; ++m) {
      const int count = rng.uniform_int(config.min_tokens, config.max_tokens);
      doc.modalities[m] =
          noisy_tokens(rng, corpus.topics[static_cast<size_t>(d)][m], count, config.sigma);
    }
    corpus.docs.push_back(std::move(doc));
  }
  return corpus;
}

SynthQueries gen_queries(const SynthCorpus& corpus, const SynthConfig& config) {
  const size_t mods = corpus.modalities.size();
  const Rng root(config.seed);
  SynthQueries out;
  out.queries.reserve(corpus.docs.size() * (mods + 1));
  for (size_t d = 0; d < corpus.docs.size(); ++d) {
    Rng rng = root.stream("queries", static_cast<uint64_t>(d));
    const std::string& did = corpus.docs[d].id;

    // Whole-document query around the normalized mean of the topics.
    Eigen::RowVectorXd mix = Eigen::RowVectorXd::Zero(config.feature_dim);
    for (size_t m = 0; m < mods; ++m) mix += corpus.topics[d][m];
    mix /= static_cast<double>(mods);
    const double n = mix.norm();
    if (n > 0.0) mix /= n;
    {
      QueryRecord q;
      q.id = did + "_q_base";
      q.source_doc_id = did;
      const int count = rng.uniform_int(config.query_min_tokens, config.query_max_tokens);
      q.tokens = noisy_tokens(rng, mix, count, config.sigma);
      out.qrels.add(q.id, did, 2);
      std::set<int> linked;
      for (size_t m = 0; m < mods; ++m)
        for (int p : corpus.links[d][m]) linked.insert(p);
      for (int p : linked) out.qrels.add(q.id, corpus.docs[static_cast<size_t>(p)].id, 1);
      out.queries.push_back(std::move(q));
    }

    for (size_t m = 0; m < mods; ++m) {
      QueryRecord q;
      q.id = did + "_q_" + corpus.modalities.name(m);
      q.source_doc_id = did;
      q.target_modality = m;
      const int count = rng.uniform_int(config.query_min_tokens, config.query_max_tokens);
      // query_context > 0 phrases the query in whole-document terms: the
      // target modality stays dominant, but only an encoder that sees the
      // document as a whole can match the mixed-in remainder.
      Eigen::RowVectorXd dir = corpus.topics[d][m];
      if (config.query_context > 0.0) {
        dir = (1.0 - config.query_context) * dir + config.query_context * mix;
        const double dn = dir.norm();
        if (dn > 0.0) dir /= dn;
      }
      q.tokens = noisy_tokens(rng, dir, count, config.sigma);
      out.qrels.add(q.id, did, 2);
      for (int p : corpus.links[d][m]) out.qrels.add(q.id, corpus.docs[static_cast<size_t>(p)].id, 1);
      out.queries.push_back(std::move(q));
    }
  }
  return out;
}

std::vector<Split> split_docs(size_t n, const SynthConfig& config) {
  config.validate();
  std::vector<size_t> order(n);
  for (size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng = Rng(config.seed).stream("split");
  for (size_t i = n; i > 1; --i)
    std::swap(order[i - 1], order[static_cast<size_t>(rng.uniform_int(0, static_cast<int>(i) - 1))]);

  const auto part = [n](double frac) {
    return static_cast<size_t>(std::llround(frac * static_cast<double>(n)));
  };
  size_t n_train = part(config.train_frac);
  size_t n_val = part(config.val_frac);
  if (n_train + n_val > n) n_val = n - n_train;
  const size_t n_test = n - n_train - n_val;
  if (config.train_frac > 0.0 && n_train == 0)
    raise(Errc::invalid_argument, "train split is empty at this corpus size");
  if (config.val_frac > 0.0 && n_val == 0)
    raise(Errc::invalid_argument, "val split is empty at this corpus size");
  if (config.test_frac > 0.0 && n_test == 0)
    raise(Errc::invalid_argument, "test split is empty at this corpus size");

  std::vector<Split> splits(n, Split::train);
  for (size_t i = 0; i < n; ++i) {
    if (i < n_train)
      splits[order[i]] = Split::train;
    else if (i < n_train + n_val)
      splits[order[i]] = Split::val;
    else
      splits[order[i]] = Split::test;
  }
  return splits;
}

SynthDataset gen_dataset(const SynthConfig& config) {
  SynthDataset d;
  d.corpus = gen_corpus(config);
  d.queries = gen_queries(d.corpus, config);
  d.doc_splits = split_docs(d.corpus.docs.size(), config);
  std::map<std::string, Split> by_doc;
  for (size_t i = 0; i < d.corpus.docs.size(); ++i)
    by_doc[d.corpus.docs[i].id] = d.doc_splits[i];
  for (QueryRecord& q : d.queries.queries) q.split = by_doc.at(q.source_doc_id);
  return d;
}

ModalitySet query_container_modalities() { return ModalitySet({"query"}); }

void write_dataset(const std::string& dir, const SynthDataset& dataset) {
  std::filesystem::create_directories(dir);
  Container corpus;
  corpus.kind = PayloadKind::features;
  corpus.modalities = dataset.corpus.modalities;
  corpus.dim = dataset.corpus.feature_dim;
  corpus.docs = dataset.corpus.docs;
  write_container(dir + "/corpus.features.bin", corpus);

  Container queries;
  queries.kind = PayloadKind::features;
  queries.modalities = query_container_modalities();
  queries.dim = dataset.corpus.feature_dim;
  queries.docs.reserve(dataset.queries.queries.size());
  std::vector<ManifestRow> manifest;
  manifest.reserve(dataset.queries.queries.size());
  for (const QueryRecord& q : dataset.queries.queries) {
    Document d(q.id, 1);
    d.modalities[0] = q.tokens;
    queries.docs.push_back(std::move(d));
    manifest.push_back(ManifestRow{q.id, q.target_modality, q.source_doc_id, q.split});
  }
  write_container(dir + "/queries.features.bin", queries);
  write_query_manifest(dir + "/queries.tsv", manifest, dataset.corpus.modalities);
  write_qrels(dir + "/qrels.tsv", dataset.queries.qrels);

  std::vector<std::pair<std::string, Split>> doc_rows;
  doc_rows.reserve(dataset.corpus.docs.size());
  for (size_t i = 0; i < dataset.corpus.docs.size(); ++i)
    doc_rows.emplace_back(dataset.corpus.docs[i].id, dataset.doc_splits[i]);
  write_doc_splits(dir + "/doc_splits.tsv", doc_rows);
}

std::vector<QueryRecord> load_queries(const std::string& features_path,
                                      const std::string& manifest_path,
                                      const ModalitySet& corpus_modalities) {
  Container c = read_features(features_path);
  if (c.modalities != query_container_modalities())
    raise(Errc::parse_error, features_path + ": not a query container");
  const auto manifest = read_query_manifest(manifest_path, corpus_modalities);
  std::map<std::string, const ManifestRow*> by_id;
  for (const ManifestRow& r : manifest) by_id[r.query_id] = &r;
  std::vector<QueryRecord> out;
  out.reserve(c.docs.size());
  for (Document& d : c.docs) {
    if (!d.modalities[0]) raise(Errc::parse_error, features_path + ": query " + d.id + " empty");
    auto it = by_id.find(d.id);
    if (it == by_id.end())
      raise(Errc::not_found, manifest_path + ": no manifest row for query " + d.id);
    QueryRecord q;
    q.id = d.id;
    q.tokens = std::move(*d.modalities[0]);
    q.target_modality = it->second->target_modality;
    q.source_doc_id = it->second->source_doc_id;
    q.split = it->second->split;
    out.push_back(std::move(q));
  }
  return out;
}

}  // namespace liret
