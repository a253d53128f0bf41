// Copyright the liret authors. Licensed under the terms of the Apache 2.0 license. See LICENSE in the project root.
//
// Single entry point for the pipeline: generate data, build indexes, run
// searches, train the encoder, evaluate runs, check gradients, reproduce
// the comparison grid, and benchmark the kernels. Every stochastic step
// takes an explicit seed and reruns are byte-identical (bench, which
// reports wall-clock timings, is the one exception).

#include "liret/encoder.hpp"
#include "liret/experiment.hpp"
#include "liret/fusion.hpp"
#include "liret/gradcheck.hpp"
#include "liret/index.hpp"
#include "liret/io.hpp"
#include "liret/metrics.hpp"
#include "liret/normalize.hpp"
#include "liret/rng.hpp"
#include "liret/synthgen.hpp"
#include "liret/train.hpp"
#include "liret/types.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

using json = nlohmann::ordered_json;

namespace {

using namespace liret;

// ---------------------------------------------------------------------------
// shared plumbing

struct EncodeOpts {
  std::string checkpoint;
  bool identity = false;
  std::string contextualize;  // "", "on", "off"

  void attach(CLI::App* cmd) {
    cmd->add_option("--checkpoint", checkpoint, "encoder checkpoint for raw feature inputs");
    cmd->add_flag("--identity", identity,
                  "use raw feature rows directly, row-normalized, no encoder");
    cmd->add_option("--contextualize", contextualize,
                    "override the checkpoint's contextualization flag")
        ->check(CLI::IsMember({"on", "off"}));
  }
};

struct LoadedEncoder {
  bool identity = false;
  EncoderParams params;
  bool contextualize = true;
};

LoadedEncoder resolve_encoder(const EncodeOpts& opts, PayloadKind kind) {
  if (kind == PayloadKind::embeddings) {
    if (!opts.checkpoint.empty() || opts.identity)
      raise(Errc::invalid_argument,
            "input already holds embeddings; drop --checkpoint/--identity");
    LoadedEncoder enc;
    enc.identity = true;  // embeddings pass through untouched
    return enc;
  }
  if (opts.identity && !opts.checkpoint.empty())
    raise(Errc::invalid_argument, "--checkpoint and --identity are mutually exclusive");
  if (!opts.identity && opts.checkpoint.empty())
    raise(Errc::invalid_argument,
          "raw feature input needs --checkpoint or --identity to become embeddings");
  LoadedEncoder enc;
  if (opts.identity) {
    if (!opts.contextualize.empty())
      raise(Errc::invalid_argument, "--contextualize needs an encoder checkpoint");
    enc.identity = true;
    return enc;
  }
  auto [params, ctx] = load_checkpoint(opts.checkpoint);
  enc.params = std::move(params);
  enc.contextualize = opts.contextualize.empty() ? ctx : opts.contextualize == "on";
  return enc;
}

Document encode_doc(const Document& raw, const ModalitySet& mods, const LoadedEncoder& enc) {
  if (!enc.identity) return encode_document_f32(raw, mods, enc.params, enc.contextualize);
  Document out(raw.id, raw.modalities.size());
  for (size_t m = 0; m < raw.modalities.size(); ++m)
    if (raw.modalities[m]) out.modalities[m] = normalize_rows(*raw.modalities[m]);
  return out;
}

TokenMatrixF encode_query_rows(const TokenMatrixF& tokens, const LoadedEncoder& enc,
                               bool* truncated) {
  if (!enc.identity) return encode_query_f32(tokens, enc.params, truncated);
  TokenMatrixF rows = tokens;
  if (rows.rows() > kMaxQueryTokens) {
    rows = rows.topRows(kMaxQueryTokens).eval();
    if (truncated) *truncated = true;
  }
  normalize_rows_in_place(rows);
  return rows;
}

std::map<std::string, Split> split_map(const std::string& path) {
  std::map<std::string, Split> out;
  for (auto& [id, split] : read_doc_splits(path)) out.emplace(id, split);
  return out;
}

std::optional<Split> parse_split_flag(const std::string& value) {
  if (value.empty()) return std::nullopt;
  return split_from_string(value);
}

std::vector<QueryRecord> load_query_set(const std::string& features, const std::string& manifest,
                                        const ModalitySet& corpus_mods,
                                        const std::optional<Split>& split, bool targeted_only) {
  std::vector<QueryRecord> all = load_queries(features, manifest, corpus_mods);
  std::vector<QueryRecord> out;
  out.reserve(all.size());
  for (QueryRecord& q : all) {
    if (split && q.split != *split) continue;
    if (targeted_only && !q.target_modality) continue;
    out.push_back(std::move(q));
  }
  if (out.empty()) raise(Errc::invalid_argument, features + ": no queries left after filtering");
  return out;
}

void emit(const json& j) { std::cout << j.dump(2) << "\n"; }

// ---------------------------------------------------------------------------
// synth

struct SynthArgs {
  SynthConfig cfg;
  std::string out;
  std::vector<std::string> modalities;
};

int cmd_synth(const SynthArgs& args) {
  SynthConfig cfg = args.cfg;
  if (!args.modalities.empty()) cfg.modalities = ModalitySet(args.modalities);
  cfg.validate();
  const SynthDataset data = gen_dataset(cfg);
  write_dataset(args.out, data);
  json j;
  j["out"] = args.out;
  j["docs"] = data.corpus.docs.size();
  j["queries"] = data.queries.queries.size();
  j["qrels_pairs"] = data.queries.qrels.pair_count();
  j["feature_dim"] = cfg.feature_dim;
  j["modalities"] = cfg.modalities.names();
  json files = json::array();
  for (const char* f : {"corpus.features.bin", "queries.features.bin", "queries.tsv",
                        "qrels.tsv", "doc_splits.tsv"})
    files.push_back(std::string(f));
  j["files"] = files;
  emit(j);
  return 0;
}

// ---------------------------------------------------------------------------
// index

struct IndexArgs {
  std::string input;
  std::string out;
  EncodeOpts encode;
  std::string splits_path;
  std::string split;
};

int cmd_index(const IndexArgs& args) {
  Container c = read_container(args.input);
  const LoadedEncoder enc = resolve_encoder(args.encode, c.kind);
  const std::optional<Split> keep = parse_split_flag(args.split);
  if (keep && args.splits_path.empty())
    raise(Errc::invalid_argument, "--split needs --splits");
  std::map<std::string, Split> splits;
  if (keep) splits = split_map(args.splits_path);

  const Eigen::Index dim = enc.identity ? c.dim : enc.params.dim();
  CorpusIndex::Builder builder(c.modalities, dim);
  size_t kept = 0;
  for (Document& doc : c.docs) {
    if (keep) {
      auto it = splits.find(doc.id);
      if (it == splits.end())
        raise(Errc::not_found, args.splits_path + ": no split for doc " + doc.id);
      if (it->second != *keep) continue;
    }
    builder.add(encode_doc(doc, c.modalities, enc));
    doc.modalities.clear();
    ++kept;
  }
  const CorpusIndex index = builder.finish();
  index.save(args.out);
  json j;
  j["out"] = args.out;
  j["docs"] = kept;
  j["rows"] = index.total_rows();
  j["dim"] = dim;
  j["modalities"] = c.modalities.names();
  emit(j);
  return 0;
}

// ---------------------------------------------------------------------------
// search

struct SearchArgs {
  std::string index_path;
  std::string queries;
  std::string manifest;
  std::string out;
  EncodeOpts encode;
  std::string scorer = "li_mw";
  std::string fusion = "none";
  int k = 10;
  int candidates = 0;
  std::string split;
  std::string routing;
  bool targeted_only = false;
};

int cmd_search(const SearchArgs& args) {
  const CorpusIndex index = CorpusIndex::load(args.index_path);
  const Scorer scorer = scorer_from_string(args.scorer);
  const Container probe = read_container(args.queries);
  const LoadedEncoder enc = resolve_encoder(args.encode, probe.kind);
  if (probe.kind == PayloadKind::embeddings)
    raise(Errc::invalid_argument, args.queries + ": queries must be a raw feature container");

  const std::vector<QueryRecord> queries = load_query_set(
      args.queries, args.manifest, index.modalities(), parse_split_flag(args.split),
      args.targeted_only);

  std::map<std::string, std::string> routing;
  if (!args.routing.empty()) routing = read_routing(args.routing);

  if (args.candidates > 0 && args.fusion != "none")
    raise(Errc::invalid_argument, "--candidates applies to exhaustive scoring, not fusion");

  int truncated = 0;
  std::vector<RankedList> run;
  run.reserve(queries.size());
  for (const QueryRecord& q : queries) {
    bool cut = false;
    const TokenMatrixF emb = encode_query_rows(q.tokens, enc, &cut);
    truncated += cut;
    RankedList list;
    if (args.fusion == "none") {
      list = args.candidates > 0
                 ? index.search_prefiltered(emb, args.k, args.candidates, scorer, q.id)
                 : index.search(emb, args.k, scorer, q.id);
    } else {
      const bool pooled_cols =
          scorer == Scorer::pooled_mean || scorer == Scorer::pooled_last;
      const ModalityScoreTable table = build_score_table(index, emb, pooled_cols);
      if (args.fusion == "mean") {
        list = fuse_mean(table, q.id);
      } else if (args.fusion == "max") {
        list = fuse_max(table, q.id).ranking;
      } else if (args.fusion == "rrf") {
        list = fuse_rrf(per_modality_rankings(table, q.id), 60.0, q.id);
      } else if (args.fusion == "router") {
        size_t target = 0;
        if (auto it = routing.find(q.id); it != routing.end()) {
          target = index.modalities().index_of(it->second);
        } else if (q.target_modality) {
          target = *q.target_modality;
        } else {
          raise(Errc::invalid_argument,
                "query " + q.id + " has no routing target; supply --routing or use "
                "--targeted-only");
        }
        list = fuse_router(table, target, q.id);
      } else {
        raise(Errc::invalid_argument, "unknown fusion: " + args.fusion);
      }
      if (static_cast<int>(list.items.size()) > args.k)
        list.items.resize(static_cast<size_t>(args.k));
    }
    run.push_back(std::move(list));
  }
  write_run(args.out, run);
  json j;
  j["out"] = args.out;
  j["queries"] = run.size();
  j["k"] = args.k;
  j["scorer"] = scorer_name(scorer);
  j["fusion"] = args.fusion;
  j["candidates"] = args.candidates;
  j["truncated_queries"] = truncated;
  emit(j);
  return 0;
}

// ---------------------------------------------------------------------------
// train

struct TrainArgs {
  std::string corpus;
  std::string queries;
  std::string manifest;
  std::string splits;
  std::string out;
  std::string config;
  std::string curve;
  bool no_val = false;
  // raw flag values; only applied when the flag was given
  std::string loss, scorer, contextualize;
  int batch_size = 0, epochs = 0, pad_count = 0;
  double lr = 0.0, alpha = 0.0;
  uint64_t seed = 0;
  Eigen::Index dim = 0;
};

int cmd_train(const TrainArgs& args, const CLI::App* cmd) {
  TrainConfig cfg;
  if (!args.config.empty()) cfg = train_config_from_file(args.config);
  if (cmd->count("--loss")) cfg.loss = loss_from_string(args.loss);
  if (cmd->count("--scorer")) cfg.scorer = scorer_from_string(args.scorer);
  if (cmd->count("--contextualize")) cfg.contextualize = args.contextualize == "on";
  if (cmd->count("--batch-size")) cfg.batch_size = args.batch_size;
  if (cmd->count("--epochs")) cfg.epochs = args.epochs;
  if (cmd->count("--lr")) cfg.lr = args.lr;
  if (cmd->count("--alpha")) cfg.alpha = args.alpha;
  if (cmd->count("--pad-count")) cfg.pad_count = args.pad_count;
  if (cmd->count("--dim")) cfg.dim = args.dim;
  if (cmd->count("--seed")) cfg.seed = args.seed;
  else if (args.config.empty())
    raise(Errc::invalid_argument, "training is stochastic; give --seed or a --config with one");
  cfg.validate();

  Container corpus = read_features(args.corpus);
  const auto splits_by_id = split_map(args.splits);
  std::vector<Split> doc_splits;
  doc_splits.reserve(corpus.docs.size());
  for (const Document& d : corpus.docs) {
    auto it = splits_by_id.find(d.id);
    if (it == splits_by_id.end())
      raise(Errc::not_found, args.splits + ": no split for doc " + d.id);
    doc_splits.push_back(it->second);
  }
  const std::vector<QueryRecord> queries =
      load_queries(args.queries, args.manifest, corpus.modalities);

  const bool targeted_only = cfg.loss != LossKind::infonce;
  const TrainSet train_pairs = train_set_from(corpus.modalities, corpus.docs, doc_splits,
                                              queries, Split::train, targeted_only);
  if (train_pairs.pairs.empty())
    raise(Errc::invalid_argument, "no training pairs in the train split");

  std::optional<ValSet> val;
  if (!args.no_val) {
    ValSet v = val_set_from(corpus.docs, doc_splits, queries, Split::val);
    if (!v.queries.empty() && !v.docs.empty()) val = std::move(v);
  }

  const FitResult result = fit(train_pairs, val ? &*val : nullptr, cfg);
  save_checkpoint(args.out, result.params, cfg.contextualize);

  if (!args.curve.empty()) {
    std::ofstream out(args.curve, std::ios::binary);
    if (!out) raise(Errc::io_error, "cannot write " + args.curve);
    out << "record\tepoch\tstep\tvalue\n";
    for (const StepRecord& r : result.curve)
      out << "loss\t" << r.epoch << "\t" << r.step << "\t" << format_score(r.loss) << "\n";
    for (size_t e = 0; e < result.val_recall_at_1.size(); ++e)
      out << "val_recall@1\t" << e + 1 << "\t0\t" << format_score(result.val_recall_at_1[e])
          << "\n";
  }

  json j;
  j["out"] = args.out;
  j["loss"] = loss_name(cfg.loss);
  j["scorer"] = scorer_name(cfg.scorer);
  j["contextualize"] = cfg.contextualize ? "on" : "off";
  j["pairs"] = train_pairs.pairs.size();
  j["steps"] = result.curve.size();
  j["first_loss"] = result.curve.front().loss;
  j["final_loss"] = result.curve.back().loss;
  if (!result.val_recall_at_1.empty()) j["val_recall@1"] = result.val_recall_at_1;
  emit(j);
  return 0;
}

// ---------------------------------------------------------------------------
// eval

struct MetricSpec {
  std::string name;
  bool is_ndcg = false;
  int k = 0;
};

MetricSpec parse_metric(const std::string& token) {
  const auto at = token.find('@');
  if (at == std::string::npos || at + 1 >= token.size())
    raise(Errc::invalid_argument, "metric must look like r@5 or ndcg@10, got: " + token);
  const std::string head = token.substr(0, at);
  MetricSpec spec;
  spec.name = token;
  if (head == "r" || head == "recall") spec.is_ndcg = false;
  else if (head == "ndcg") spec.is_ndcg = true;
  else raise(Errc::invalid_argument, "unknown metric family: " + head);
  try {
    spec.k = std::stoi(token.substr(at + 1));
  } catch (const std::exception&) {
    raise(Errc::invalid_argument, "bad metric cutoff in: " + token);
  }
  if (spec.k < 1) raise(Errc::invalid_argument, "metric cutoff must be >= 1: " + token);
  return spec;
}

struct EvalArgs {
  std::string run;
  std::string qrels;
  std::vector<std::string> metrics = {"r@1", "r@5", "r@10", "ndcg@10"};
  std::string per_query;
  std::string compare;
  int resamples = 10000;
  uint64_t seed = 0;
  std::string recall_mode = "hit";
  std::string gain = "exp";
};

MetricReport eval_metric(const MetricSpec& spec, const std::vector<RankedList>& run,
                         const Qrels& qrels, const EvalArgs& args) {
  if (spec.is_ndcg)
    return ndcg_at_k(run, qrels, spec.k,
                     args.gain == "linear" ? GainKind::linear : GainKind::exponential);
  return recall_at_k(run, qrels, spec.k,
                     args.recall_mode == "fraction" ? RecallMode::fraction
                                                    : RecallMode::hit_rate);
}

int cmd_eval(const EvalArgs& args) {
  const std::vector<RankedList> run = read_run(args.run);
  const Qrels qrels = read_qrels(args.qrels);
  std::vector<MetricSpec> specs;
  specs.reserve(args.metrics.size());
  for (const std::string& m : args.metrics) specs.push_back(parse_metric(m));

  std::vector<MetricReport> reports;
  json j;
  j["run"] = args.run;
  json scores;
  for (const MetricSpec& spec : specs) {
    MetricReport rep = eval_metric(spec, run, qrels, args);
    rep.metric = spec.name;
    scores[spec.name] = {{"mean", rep.mean},
                         {"evaluated", rep.evaluated},
                         {"skipped", rep.skipped}};
    reports.push_back(std::move(rep));
  }
  j["metrics"] = scores;

  if (!args.compare.empty()) {
    const std::vector<RankedList> other = read_run(args.compare);
    json cmp;
    cmp["against"] = args.compare;
    cmp["resamples"] = args.resamples;
    json pvals;
    for (size_t i = 0; i < specs.size(); ++i) {
      MetricReport rep_b = eval_metric(specs[i], other, qrels, args);
      pvals[specs[i].name] = paired_bootstrap(reports[i].per_query, rep_b.per_query,
                                              args.resamples, args.seed);
    }
    cmp["p"] = pvals;  // fraction of resamples where --run does not beat --compare
    j["compare"] = cmp;
  }

  if (!args.per_query.empty()) write_metric_report(args.per_query, reports);
  emit(j);
  return 0;
}

// ---------------------------------------------------------------------------
// accuracy

struct AccuracyArgs {
  std::string index_path;
  std::string queries;
  std::string manifest;
  EncodeOpts encode;
  std::string split;
};

int cmd_accuracy(const AccuracyArgs& args) {
  const CorpusIndex index = CorpusIndex::load(args.index_path);
  const Container probe = read_container(args.queries);
  const LoadedEncoder enc = resolve_encoder(args.encode, probe.kind);
  const std::vector<QueryRecord> queries = load_query_set(
      args.queries, args.manifest, index.modalities(), parse_split_flag(args.split), true);

  std::vector<LabeledQuery> labeled;
  labeled.reserve(queries.size());
  for (const QueryRecord& q : queries) {
    LabeledQuery lq;
    lq.query_id = q.id;
    lq.embeddings = encode_query_rows(q.tokens, enc, nullptr);
    lq.target_modality = *q.target_modality;
    lq.positive_doc_id = q.source_doc_id;
    labeled.push_back(std::move(lq));
  }
  const AccuracyReport report = modality_accuracy(index, labeled);
  json j;
  j["queries"] = labeled.size();
  j["evaluated"] = report.evaluated;
  j["skipped"] = report.skipped;
  j["macro_accuracy"] = report.macro;
  j["micro_accuracy"] = report.micro;
  json per;
  for (size_t m = 0; m < index.modalities().size(); ++m) {
    json entry;
    entry["count"] = report.class_counts[m];
    if (report.class_counts[m] > 0) entry["accuracy"] = report.per_class[m];
    per[index.modalities().name(m)] = entry;
  }
  j["per_modality"] = per;
  emit(j);
  return 0;
}

// ---------------------------------------------------------------------------
// gradcheck / experiment / bench

int cmd_gradcheck(const GradCheckOptions& options) {
  const std::vector<GradCheckRow> rows = gradcheck_suite(options);
  std::cout << gradcheck_table(rows);
  return gradcheck_all_pass(rows) ? 0 : 1;
}

struct ExperimentArgs {
  ExperimentConfig cfg;
  std::string out;
  bool quiet = false;
};

int cmd_experiment(const ExperimentArgs& args) {
  const ExperimentReport report =
      run_experiment(args.cfg, args.quiet ? nullptr : &std::cerr);
  write_experiment_report(args.out, report);
  std::cout << experiment_table(report);
  return 0;
}

struct BenchArgs {
  int docs = 10000;
  int tokens = 300;
  Eigen::Index dim = 128;
  int query_tokens = 69;
  uint64_t seed = 0;
  int repeats = 3;
  std::string scorer = "li_mw";
  int k = 10;
};

int cmd_bench(const BenchArgs& args) {
  if (args.docs < 1 || args.tokens < 1 || args.query_tokens < 1 || args.repeats < 1)
    raise(Errc::invalid_argument, "bench sizes must be positive");
  const Scorer scorer = scorer_from_string(args.scorer);
  const ModalitySet mods({"body"});
  Rng root(args.seed);

  const auto gen0 = std::chrono::steady_clock::now();
  Rng doc_rng = root.stream("bench/docs");
  CorpusIndex::Builder builder(mods, args.dim);
  builder.reserve_rows(static_cast<Eigen::Index>(args.docs) * args.tokens);
  char id[16];
  for (int d = 0; d < args.docs; ++d) {
    TokenMatrixF rows(args.tokens, args.dim);
    for (Eigen::Index i = 0; i < rows.size(); ++i)
      rows.data()[i] = static_cast<float>(doc_rng.gaussian());
    normalize_rows_in_place(rows);
    std::snprintf(id, sizeof(id), "doc_%06d", d);
    Document doc(id, mods.size());
    doc.modalities[0] = std::move(rows);
    builder.add(doc);
  }
  const CorpusIndex index = builder.finish();
  const double gen_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - gen0).count();

  Rng q_rng = root.stream("bench/query");
  TokenMatrixF query(args.query_tokens, args.dim);
  for (Eigen::Index i = 0; i < query.size(); ++i)
    query.data()[i] = static_cast<float>(q_rng.gaussian());
  normalize_rows_in_place(query);

  index.search(query, args.k, scorer, "warmup");
  std::vector<double> times;
  double checksum = 0.0;
  for (int r = 0; r < args.repeats; ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    const RankedList top = index.search(query, args.k, scorer, "bench");
    times.push_back(
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
    checksum += top.items.front().second;
  }
  const double best = *std::min_element(times.begin(), times.end());
  const double rows = static_cast<double>(index.total_rows());

  json j;
  j["docs"] = args.docs;
  j["tokens_per_doc"] = args.tokens;
  j["dim"] = args.dim;
  j["query_tokens"] = args.query_tokens;
  j["scorer"] = scorer_name(scorer);
  j["gen_seconds"] = gen_s;
  j["search_seconds"] = times;
  j["best_seconds"] = best;
  j["docs_per_second"] = static_cast<double>(args.docs) / best;
  j["doc_tokens_per_second"] = rows / best;
  j["gflops"] = 2.0 * rows * static_cast<double>(args.dim) *
                static_cast<double>(args.query_tokens) / best / 1e9;
  j["soft_budget_seconds"] = 2.0;
  j["within_soft_budget"] = best < 2.0;
  j["top1_checksum"] = checksum;
  emit(j);
  return 0;
}

}  // namespace

// ---------------------------------------------------------------------------

int main(int argc, char** argv) {
  CLI::App app{"late-interaction retrieval over multimodal token embeddings"};
  app.require_subcommand(1);

  SynthArgs synth;
  CLI::App* synth_cmd = app.add_subcommand("synth", "generate a seeded synthetic dataset");
  synth_cmd->add_option("--out", synth.out, "output directory")->required();
  synth_cmd->add_option("--seed", synth.cfg.seed, "generator seed")->required();
  synth_cmd->add_option("--docs", synth.cfg.docs, "number of documents");
  synth_cmd->add_option("--feature-dim", synth.cfg.feature_dim, "raw feature width");
  synth_cmd->add_option("--sigma", synth.cfg.sigma, "token noise scale");
  synth_cmd->add_option("--rho", synth.cfg.rho, "distractor link probability");
  synth_cmd->add_option("--min-tokens", synth.cfg.min_tokens, "min tokens per modality");
  synth_cmd->add_option("--max-tokens", synth.cfg.max_tokens, "max tokens per modality");
  synth_cmd->add_option("--query-min-tokens", synth.cfg.query_min_tokens, "min query tokens");
  synth_cmd->add_option("--query-max-tokens", synth.cfg.query_max_tokens, "max query tokens");
  synth_cmd->add_option("--train-frac", synth.cfg.train_frac, "train split fraction");
  synth_cmd->add_option("--val-frac", synth.cfg.val_frac, "val split fraction");
  synth_cmd->add_option("--test-frac", synth.cfg.test_frac, "test split fraction");
  synth_cmd->add_option("--modalities", synth.modalities, "comma-separated modality names")
      ->delimiter(',');

  IndexArgs index_args;
  CLI::App* index_cmd = app.add_subcommand("index", "build an exhaustive token index");
  index_cmd->add_option("--input", index_args.input, "embeddings or raw feature container")
      ->required();
  index_cmd->add_option("--out", index_args.out, "index file")->required();
  index_args.encode.attach(index_cmd);
  index_cmd->add_option("--splits", index_args.splits_path, "doc split table");
  index_cmd->add_option("--split", index_args.split, "keep only docs in this split")
      ->check(CLI::IsMember({"train", "val", "test"}));

  SearchArgs search;
  CLI::App* search_cmd = app.add_subcommand("search", "rank documents for each query");
  search_cmd->add_option("--index", search.index_path, "index file")->required();
  search_cmd->add_option("--queries", search.queries, "query feature container")->required();
  search_cmd->add_option("--manifest", search.manifest, "query manifest")->required();
  search_cmd->add_option("--out", search.out, "run file")->required();
  search.encode.attach(search_cmd);
  search_cmd->add_option("--scorer", search.scorer, "li_mw, li_context, or pooled")
      ->check(CLI::IsMember({"li_mw", "li_context", "pooled", "pooled_mean", "pooled_last"}));
  search_cmd
      ->add_option("--fusion", search.fusion,
                   "combine per-modality scores instead of late interaction")
      ->check(CLI::IsMember({"none", "mean", "max", "rrf", "router"}));
  search_cmd->add_option("--k", search.k, "ranking depth")->check(CLI::PositiveNumber);
  search_cmd->add_option("--candidates", search.candidates,
                         "two-stage search: pooled prefilter size, 0 = exhaustive");
  search_cmd->add_option("--split", search.split, "keep only queries in this split")
      ->check(CLI::IsMember({"train", "val", "test"}));
  search_cmd->add_option("--routing", search.routing, "query_id -> modality routing table");
  search_cmd->add_flag("--targeted-only", search.targeted_only,
                       "drop whole-document queries");

  TrainArgs train;
  CLI::App* train_cmd = app.add_subcommand("train", "fit the encoder on train-split pairs");
  train_cmd->add_option("--corpus", train.corpus, "raw corpus features")->required();
  train_cmd->add_option("--queries", train.queries, "raw query features")->required();
  train_cmd->add_option("--manifest", train.manifest, "query manifest")->required();
  train_cmd->add_option("--splits", train.splits, "doc split table")->required();
  train_cmd->add_option("--out", train.out, "checkpoint file")->required();
  train_cmd->add_option("--config", train.config, "json training config")
      ->check(CLI::ExistingFile);
  train_cmd->add_option("--loss", train.loss, "infonce, modpos, or modneg")
      ->check(CLI::IsMember({"infonce", "modpos", "modneg"}));
  train_cmd->add_option("--scorer", train.scorer, "training scorer")
      ->check(CLI::IsMember({"li_mw", "li_context", "pooled", "pooled_mean"}));
  train_cmd->add_option("--contextualize", train.contextualize, "document contextualization")
      ->check(CLI::IsMember({"on", "off"}));
  train_cmd->add_option("--batch-size", train.batch_size, "queries per batch");
  train_cmd->add_option("--epochs", train.epochs, "training epochs");
  train_cmd->add_option("--lr", train.lr, "adam learning rate");
  train_cmd->add_option("--alpha", train.alpha, "context mixing weight init");
  train_cmd->add_option("--pad-count", train.pad_count, "learnable query pad rows");
  train_cmd->add_option("--dim", train.dim, "embedding width");
  train_cmd->add_option("--seed", train.seed, "training seed");
  train_cmd->add_option("--curve", train.curve, "write the loss curve to this file");
  train_cmd->add_flag("--no-val", train.no_val, "skip the per-epoch validation pass");

  EvalArgs eval;
  CLI::App* eval_cmd = app.add_subcommand("eval", "score a run file against qrels");
  eval_cmd->add_option("--run", eval.run, "run file")->required();
  eval_cmd->add_option("--qrels", eval.qrels, "graded judgments")->required();
  eval_cmd->add_option("--metrics", eval.metrics, "metric list, e.g. r@1,ndcg@10")
      ->delimiter(',');
  eval_cmd->add_option("--per-query", eval.per_query, "write per-query values here");
  eval_cmd->add_option("--compare", eval.compare, "second run for a paired bootstrap");
  eval_cmd->add_option("--resamples", eval.resamples, "bootstrap resamples")
      ->check(CLI::PositiveNumber);
  eval_cmd->add_option("--seed", eval.seed, "bootstrap seed");
  eval_cmd->add_option("--recall-mode", eval.recall_mode, "hit or fraction")
      ->check(CLI::IsMember({"hit", "fraction"}));
  eval_cmd->add_option("--gain", eval.gain, "ndcg gain: exp or linear")
      ->check(CLI::IsMember({"exp", "linear"}));

  AccuracyArgs accuracy;
  CLI::App* acc_cmd =
      app.add_subcommand("accuracy", "modality routing accuracy of the max scorer");
  acc_cmd->add_option("--index", accuracy.index_path, "index file")->required();
  acc_cmd->add_option("--queries", accuracy.queries, "query feature container")->required();
  acc_cmd->add_option("--manifest", accuracy.manifest, "query manifest")->required();
  accuracy.encode.attach(acc_cmd);
  acc_cmd->add_option("--split", accuracy.split, "keep only queries in this split")
      ->check(CLI::IsMember({"train", "val", "test"}));

  GradCheckOptions gradcheck;
  CLI::App* grad_cmd =
      app.add_subcommand("gradcheck", "finite-difference check of the loss gradients");
  grad_cmd->add_option("--seed", gradcheck.seed, "configuration seed");
  grad_cmd->add_option("--configs", gradcheck.configs, "random configurations")
      ->check(CLI::PositiveNumber);
  grad_cmd->add_option("--step", gradcheck.step, "finite-difference step");
  grad_cmd->add_option("--tolerance", gradcheck.tolerance, "max relative error");
  grad_cmd->add_option("--margin-floor", gradcheck.margin_floor,
                       "reject configs with argmax margins below this");

  ExperimentArgs experiment;
  CLI::App* exp_cmd =
      app.add_subcommand("experiment", "train/evaluate the comparison grid over seeds");
  exp_cmd->add_option("--out", experiment.out, "report directory")->required();
  exp_cmd->add_option("--seed", experiment.cfg.seed, "base seed");
  exp_cmd->add_option("--seeds", experiment.cfg.seeds, "number of seeds")
      ->check(CLI::PositiveNumber);
  exp_cmd->add_option("--docs", experiment.cfg.docs, "corpus size per seed")
      ->check(CLI::PositiveNumber);
  exp_cmd->add_option("--epochs", experiment.cfg.epochs, "training epochs")
      ->check(CLI::PositiveNumber);
  exp_cmd->add_option("--dim", experiment.cfg.dim, "embedding width")
      ->check(CLI::PositiveNumber);
  exp_cmd->add_option("--k", experiment.cfg.k, "run depth (>= 10)");
  exp_cmd->add_option("--resamples", experiment.cfg.resamples, "bootstrap resamples")
      ->check(CLI::PositiveNumber);
  exp_cmd->add_option("--sigma", experiment.cfg.synth_base.sigma, "corpus token noise");
  exp_cmd->add_option("--rho", experiment.cfg.synth_base.rho, "distractor link probability");
  exp_cmd->add_option("--query-context", experiment.cfg.synth_base.query_context,
                      "whole-document weight in modality queries");
  exp_cmd->add_flag("--quiet", experiment.quiet, "suppress progress on stderr");

  BenchArgs bench;
  CLI::App* bench_cmd = app.add_subcommand("bench", "kernel throughput measurement");
  bench_cmd->add_option("--docs", bench.docs, "documents");
  bench_cmd->add_option("--tokens", bench.tokens, "tokens per document");
  bench_cmd->add_option("--dim", bench.dim, "embedding width");
  bench_cmd->add_option("--query-tokens", bench.query_tokens, "query rows");
  bench_cmd->add_option("--seed", bench.seed, "generator seed");
  bench_cmd->add_option("--repeats", bench.repeats, "timed repetitions");
  bench_cmd->add_option("--scorer", bench.scorer, "scorer to time")
      ->check(CLI::IsMember({"li_mw", "li_context", "pooled"}));
  bench_cmd->add_option("--k", bench.k, "ranking depth");

  CLI11_PARSE(app, argc, argv);

  const std::string stage = app.get_subcommands().front()->get_name();
  try {
    if (synth_cmd->parsed()) return cmd_synth(synth);
    if (index_cmd->parsed()) return cmd_index(index_args);
    if (search_cmd->parsed()) return cmd_search(search);
    if (train_cmd->parsed()) return cmd_train(train, train_cmd);
    if (eval_cmd->parsed()) return cmd_eval(eval);
    if (acc_cmd->parsed()) return cmd_accuracy(accuracy);
    if (grad_cmd->parsed()) return cmd_gradcheck(gradcheck);
    if (exp_cmd->parsed()) return cmd_experiment(experiment);
    if (bench_cmd->parsed()) return cmd_bench(bench);
  } catch (const std::exception& e) {
    std::cerr << "liret " << stage << ": " << e.what() << "\n";
    return 1;
  }
  return 0;
}
