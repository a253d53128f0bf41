// Copyright the liret authors. Licensed under the terms of the Apache 2.0 license. See LICENSE in the project root.
#pragma once

#include "liret/types.hpp"

#include <string>
#include <vector>

namespace liret {

// Deterministic synthetic corpus with known-by-construction relevance.
// Each (document, modality) pair gets a unit topic direction; tokens are
// topic + sigma * noise in raw feature space. With probability rho a
// modality instead shares half its topic with another document's same
// modality, which records a graded distractor link. Queries either target
// one modality (tokens near its topic) or the whole document (tokens near
// the normalized mean of its topics).
struct SynthConfig {
  int docs = 2000;
  int min_tokens = 5;
  int max_tokens = 20;
  int query_min_tokens = 3;
  int query_max_tokens = 8;
  int feature_dim = 32;
  double sigma = 0.1;  // token noise, queries and documents alike
  double rho = 0.2;    // distractor link probability per (doc, modality)
  // Weight of the whole-document direction mixed into modality-targeted
  // queries. At 0 the query sits on the modality topic alone; above 0 the
  // query is phrased in document context, which rewards encoders that
  // contextualize document tokens.
  double query_context = 0.0;
  double train_frac = 0.8;
  double val_frac = 0.1;
  double test_frac = 0.1;
  uint64_t seed = 0;
  ModalitySet modalities = ModalitySet::default_set();

  void validate() const;
};

struct SynthCorpus {
  ModalitySet modalities;
  int feature_dim = 0;
  std::vector<Document> docs;  // raw float features
  // Ground truth, kept in memory for tests and oracles.
  std::vector<std::vector<Eigen::RowVectorXd>> topics;  // [doc][modality], unit rows
  std::vector<std::vector<std::vector<int>>> links;     // [doc][modality] -> linked docs
};

SynthCorpus gen_corpus(const SynthConfig& config);

struct SynthQueries {
  std::vector<QueryRecord> queries;
  Qrels qrels;
};

// One whole-document query plus one query per modality for every doc.
// Qrels: source doc grade 2, directly linked distractors grade 1.
SynthQueries gen_queries(const SynthCorpus& corpus, const SynthConfig& config);

// Disjoint train/val/test assignment from a seeded shuffle. Rounded
// fractions; any declared-positive fraction that ends up empty is an
// error. Queries inherit the split of their source document.
std::vector<Split> split_docs(size_t n, const SynthConfig& config);

struct SynthDataset {
  SynthCorpus corpus;
  SynthQueries queries;
  std::vector<Split> doc_splits;
};

SynthDataset gen_dataset(const SynthConfig& config);

// corpus.features.bin, queries.features.bin, queries.tsv, qrels.tsv,
// doc_splits.tsv under the given directory.
void write_dataset(const std::string& dir, const SynthDataset& dataset);

// The modality set used for query feature containers.
ModalitySet query_container_modalities();

// Rebuild QueryRecords from a query container plus its manifest.
std::vector<QueryRecord> load_queries(const std::string& features_path,
                                      const std::string& manifest_path,
                                      const ModalitySet& corpus_modalities);

}  // namespace liret
