// qamatch: question-answer matching in two-party multi-turn dialogues.
//
// Subcommands cover the whole pipeline: synthetic corpus generation (synth),
// validation + 7:1:2 splitting with candidate-pair extraction (prepare),
// skip-gram embedding pretraining (pretrain), model training (train),
// greedy prediction from a checkpoint (predict), rule-based and
// distance-only baselines (baseline), and micro-averaged scoring
// (evaluate).
//
// Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "qamatch/checkpoint.hpp"
#include "qamatch/dialogue_io.hpp"
#include "qamatch/evaluation.hpp"
#include "qamatch/matcher.hpp"
#include "qamatch/model.hpp"
#include "qamatch/pairs.hpp"
#include "qamatch/skipgram.hpp"
#include "qamatch/synth.hpp"
#include "qamatch/training.hpp"

namespace {

using nlohmann::json;
using namespace qamatch;

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write: " + path);
  out << content;
}

/// Every artifact gets a sidecar with the fully resolved configuration, so
/// runs are reproducible from their outputs alone.
void write_meta(const std::string& artifact_path, const json& resolved) {
  write_text_file(artifact_path + ".meta.json", resolved.dump(2) + "\n");
}

std::vector<std::string> split_list(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == sep) {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

// ---- synth ---------------------------------------------------------------

struct SynthArgs {
  SyntheticSpec spec;
  std::string out;
};

int cmd_synth(const SynthArgs& a) {
  const auto corpus = synth_corpus(a.spec);
  write_dialogues_file(a.out, corpus);
  long long gold = 0, long_gold = 0;
  for (const Dialogue& d : corpus) {
    for (const auto& [q, ans] : d.gold_pairs) {
      ++gold;
      long_gold += ans - q >= 3;
    }
  }
  write_meta(a.out, {{"command", "synth"},
                     {"n_dialogues", a.spec.n_dialogues},
                     {"min_turns", a.spec.min_turns},
                     {"max_turns", a.spec.max_turns},
                     {"vocab_size", a.spec.vocab_size},
                     {"incremental_fraction", a.spec.incremental_fraction},
                     {"seed", a.spec.seed},
                     {"gold_pairs", gold},
                     {"gold_pairs_distance_ge3", long_gold}});
  std::cout << "wrote " << corpus.size() << " dialogues (" << gold
            << " gold pairs, " << long_gold << " at distance >= 3) to " << a.out
            << "\n";
  return 0;
}

// ---- prepare -------------------------------------------------------------

struct PrepareArgs {
  std::string dialogues;
  std::string out_dir;
  std::uint64_t seed = 1;
};

json distance_distribution(const std::vector<Dialogue>& ds) {
  std::map<int, long long> by_bucket;
  long long pos = 0, neg = 0;
  for (const Dialogue& d : ds) {
    for (const CandidatePair& p : build_candidate_pairs(d)) {
      if (p.gold) {
        ++pos;
        ++by_bucket[distance_bucket(p.distance)];
      } else {
        ++neg;
      }
    }
  }
  json buckets = json::object();
  for (const auto& [b, n] : by_bucket) buckets[b == 5 ? ">=5" : std::to_string(b)] = n;
  return {{"dialogues", ds.size()},
          {"pairs_true", pos},
          {"pairs_false", neg},
          {"gold_by_distance", buckets}};
}

void write_pairs_file(const std::string& path, const std::vector<Dialogue>& ds) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write: " + path);
  for (const Dialogue& d : ds) {
    for (const CandidatePair& p : build_candidate_pairs(d)) {
      out << json{{"dialogue_id", p.dialogue_id},
                  {"q_index", p.q_index},
                  {"nq_index", p.nq_index},
                  {"distance", p.distance},
                  {"gold", p.gold}}
                 .dump()
          << '\n';
    }
  }
}

int cmd_prepare(const PrepareArgs& a) {
  const auto dialogues = read_dialogues_file(a.dialogues);
  if (dialogues.empty()) throw DataError("no dialogues in " + a.dialogues);
  std::filesystem::create_directories(a.out_dir);

  std::vector<std::size_t> order(dialogues.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng split_rng = Rng(a.seed).substream("split");
  split_rng.shuffle(order);

  const std::size_t n = dialogues.size();
  const std::size_t n_train = 7 * n / 10;
  const std::size_t n_dev = n / 10;
  std::map<std::string, std::vector<Dialogue>> splits;
  for (std::size_t k = 0; k < n; ++k) {
    const std::string split =
        k < n_train ? "train" : (k < n_train + n_dev ? "dev" : "test");
    splits[split].push_back(dialogues[order[k]]);
  }

  json manifest{{"command", "prepare"},
                {"input", a.dialogues},
                {"seed", a.seed},
                {"split_ratio", "7:1:2"}};
  for (const auto& [name, ds] : splits) {
    const std::string base = a.out_dir + "/" + name;
    write_dialogues_file(base + ".jsonl", ds);
    write_pairs_file(a.out_dir + "/pairs-" + name + ".jsonl", ds);
    manifest[name] = distance_distribution(ds);
  }
  write_text_file(a.out_dir + "/manifest.json", manifest.dump(2) + "\n");
  std::cout << manifest.dump(2) << "\n";
  return 0;
}

// ---- pretrain ------------------------------------------------------------

struct PretrainArgs {
  std::string dialogues;
  std::string out;
  std::string format = "jsonl";
  SkipgramConfig cfg;
  int min_count = 2;
};

int cmd_pretrain(const PretrainArgs& a) {
  std::vector<std::vector<std::string>> corpus;
  if (a.format == "jsonl") {
    for (const Dialogue& d : read_dialogues_file(a.dialogues, {}, /*validate=*/false)) {
      for (const Turn& t : d.turns) corpus.push_back(t.tokens);
    }
  } else if (a.format == "text") {
    std::ifstream in(a.dialogues);
    if (!in) throw DataError("cannot open corpus: " + a.dialogues);
    std::string line;
    while (std::getline(in, line)) {
      auto toks = tokenize(line);
      if (!toks.empty()) corpus.push_back(std::move(toks));
    }
  } else {
    throw UsageError("unknown corpus format: " + a.format);
  }
  const Vocabulary vocab = Vocabulary::build(corpus, a.min_count);
  SkipgramStats stats;
  const EmbeddingMatrix emb = train_skipgram(corpus, vocab, a.cfg, &stats);
  for (const std::string& w : stats.warnings) std::cerr << "warning: " << w << "\n";
  save_embeddings_file(a.out, emb);
  write_meta(a.out, {{"command", "pretrain"},
                     {"corpus", a.dialogues},
                     {"format", a.format},
                     {"dim", a.cfg.dim},
                     {"window", a.cfg.window},
                     {"negatives", a.cfg.negatives},
                     {"epochs", a.cfg.epochs},
                     {"lr", a.cfg.lr},
                     {"min_count", a.min_count},
                     {"seed", a.cfg.seed},
                     {"vocab_size", vocab.size()},
                     {"train_tokens", stats.train_tokens},
                     {"epoch_mean_loss", stats.epoch_mean_loss},
                     {"warnings", stats.warnings}});
  std::cout << "wrote " << vocab.size() << " x " << a.cfg.dim
            << " embeddings to " << a.out << "\n";
  return 0;
}

// ---- train ---------------------------------------------------------------

struct TrainArgs {
  std::string train_path, dev_path, eval_path, embeddings, out_dir;
  std::string variant = "HDM";
  std::string monitor = "dev";
  std::string seeds = "1";
  ModelConfig model;
  TrainConfig cfg;
  bool exact_distance = false;
};

json train_config_echo(const TrainArgs& a, std::uint64_t seed) {
  return {{"command", "train"},
          {"variant", a.variant},
          {"train", a.train_path},
          {"dev", a.dev_path},
          {"embeddings", a.embeddings},
          {"seed", seed},
          {"lr", a.cfg.lr},
          {"lr_decay", a.cfg.lr_decay},
          {"dropout", a.model.dropout},
          {"patience", a.cfg.patience},
          {"max_epochs", a.cfg.max_epochs},
          {"batch_size", a.cfg.batch_size},
          {"monitor", a.monitor},
          {"encoder_hidden", a.model.encoder_hidden},
          {"match_hidden", a.model.match_hidden},
          {"embedding_dim", a.model.embedding_dim}};
}

int cmd_train(const TrainArgs& a) {
  const auto train_ds = read_dialogues_file(a.train_path);
  const auto dev_ds =
      a.dev_path.empty() ? std::vector<Dialogue>{} : read_dialogues_file(a.dev_path);
  const EmbeddingMatrix emb = load_embeddings_file(a.embeddings);

  ModelConfig model_cfg = a.model;
  model_cfg.variant = variant_from_string(a.variant);
  model_cfg.embedding_dim = emb.dim();

  TrainConfig cfg = a.cfg;
  if (a.monitor == "dev") {
    cfg.monitor = TrainConfig::Monitor::Dev;
  } else if (a.monitor == "train") {
    cfg.monitor = TrainConfig::Monitor::Train;
  } else {
    throw UsageError("--monitor must be dev or train");
  }

  std::vector<std::uint64_t> seeds;
  for (const std::string& s : split_list(a.seeds, ',')) {
    seeds.push_back(std::stoull(s));
  }
  if (seeds.empty()) throw UsageError("--seeds is empty");

  std::filesystem::create_directories(a.out_dir);
  const auto eval_ds =
      a.eval_path.empty() ? std::vector<Dialogue>{} : read_dialogues_file(a.eval_path);

  std::vector<SystemResult> seed_reports;
  json per_seed = json::array();
  for (std::uint64_t seed : seeds) {
    const std::string tag = std::string(to_string(model_cfg.variant)) + "-seed" +
                            std::to_string(seed);
    const std::string ckpt_path = a.out_dir + "/checkpoint-" + tag + ".bin";
    const std::string log_path = a.out_dir + "/trainlog-" + tag + ".jsonl";
    const json echo = train_config_echo(a, seed);

    std::ofstream log_out(log_path);
    if (!log_out) throw DataError("cannot write: " + log_path);
    log_out << json{{"config", echo}}.dump() << "\n";

    TrainResult result = train(
        model_cfg, emb, train_ds, dev_ds, cfg, seed,
        [&](const Model& m, const TrainLog& log) {
          save_checkpoint(ckpt_path, m, {{"train", echo}, {"best_epoch", log.best_epoch}});
        });
    for (const std::string& w : result.log.warnings) std::cerr << "warning: " << w << "\n";
    for (const EpochLog& e : result.log.epochs) {
      log_out << json{{"epoch", e.epoch},
                      {"train_loss", e.train_loss},
                      {"dev_loss", e.dev_loss},
                      {"dev_f1", e.dev_f1},
                      {"lr", e.lr},
                      {"wall_seconds", e.wall_seconds}}
                     .dump()
              << "\n";
    }
    // The restored best model is the artifact of record.
    save_checkpoint(ckpt_path, *result.model,
                    {{"train", echo}, {"best_epoch", result.log.best_epoch}});
    std::cout << "seed " << seed << ": best epoch " << result.log.best_epoch
              << ", checkpoint " << ckpt_path << "\n";

    if (!eval_ds.empty()) {
      std::vector<MatchResult> preds;
      const PairScorer score = result.model->scorer();
      for (const Dialogue& d : eval_ds) {
        preds.push_back(greedy_match(d, score, model_cfg.classification_threshold));
      }
      const MetricsReport rep = micro_prf(preds, eval_ds, a.exact_distance);
      seed_reports.push_back({tag, rep});
      per_seed.push_back({{"seed", seed},
                          {"precision", rep.precision},
                          {"recall", rep.recall},
                          {"f1", rep.f1}});
    }
  }

  if (!eval_ds.empty()) {
    double mp = 0, mr = 0, mf = 0;
    for (const auto& s : seed_reports) {
      mp += s.metrics.precision / seed_reports.size();
      mr += s.metrics.recall / seed_reports.size();
      mf += s.metrics.f1 / seed_reports.size();
    }
    const json summary{{"per_seed", per_seed},
                       {"mean", {{"precision", mp}, {"recall", mr}, {"f1", mf}}},
                       {"eval", a.eval_path}};
    write_text_file(a.out_dir + "/metrics.json", summary.dump(2) + "\n");
    std::cout << render_report_table(seed_reports) << "mean F1 " << 100.0 * mf
              << "\n";
  }
  return 0;
}

// ---- predict ---------------------------------------------------------------

struct PredictArgs {
  std::string checkpoint, dialogues, out;
  std::string variant;  // optional; checked against the checkpoint
  double threshold = -1.0;
};

int cmd_predict(const PredictArgs& a) {
  std::unique_ptr<Model> model;
  if (a.variant.empty()) {
    model = load_checkpoint(a.checkpoint);
  } else {
    const json header = read_checkpoint_header(a.checkpoint);
    ModelConfig expected = model_config_from_json(header.at("config"));
    expected.variant = variant_from_string(a.variant);
    model = load_checkpoint(a.checkpoint, &expected);
  }
  const auto dialogues = read_dialogues_file(a.dialogues);
  const double threshold =
      a.threshold >= 0 ? a.threshold : model->config().classification_threshold;
  std::vector<MatchResult> preds;
  const PairScorer score = model->scorer();
  for (const Dialogue& d : dialogues) {
    preds.push_back(greedy_match(d, score, threshold));
  }
  write_predictions_file(a.out, preds);
  write_meta(a.out, {{"command", "predict"},
                     {"checkpoint", a.checkpoint},
                     {"dialogues", a.dialogues},
                     {"variant", to_string(model->config().variant)},
                     {"threshold", threshold}});
  std::cout << "wrote predictions for " << preds.size() << " dialogues to "
            << a.out << "\n";
  return 0;
}

// ---- baseline ----------------------------------------------------------------

struct BaselineArgs {
  std::string rule = "gdn";
  std::string dialogues, out, train_path;
  bool no_resolve = false;
  DistanceBaseline::TrainConfig dist_cfg;
};

int cmd_baseline(const BaselineArgs& a) {
  const auto dialogues = read_dialogues_file(a.dialogues);
  std::vector<MatchResult> preds;
  if (a.rule == "distance") {
    if (a.train_path.empty()) {
      throw UsageError("--train is required for the distance baseline");
    }
    std::vector<std::pair<int, bool>> examples;
    for (const Dialogue& d : read_dialogues_file(a.train_path)) {
      for (const CandidatePair& p : build_candidate_pairs(d)) {
        examples.emplace_back(p.distance, p.gold);
      }
    }
    const DistanceBaseline bl = DistanceBaseline::train(examples, a.dist_cfg);
    const PairScorer score = bl.scorer();
    for (const Dialogue& d : dialogues) preds.push_back(greedy_match(d, score));
  } else {
    GdConfig cfg = gd_config_from_rule(a.rule);
    cfg.resolve_multi_claims = !a.no_resolve;
    for (const Dialogue& d : dialogues) preds.push_back(baseline_gd(d, cfg));
  }
  write_predictions_file(a.out, preds);
  write_meta(a.out, {{"command", "baseline"},
                     {"rule", a.rule},
                     {"dialogues", a.dialogues},
                     {"train", a.train_path},
                     {"resolve_multi_claims", !a.no_resolve}});
  std::cout << "wrote predictions for " << preds.size() << " dialogues to "
            << a.out << "\n";
  return 0;
}

// ---- evaluate -------------------------------------------------------------

struct EvaluateArgs {
  std::string gold;
  std::vector<std::string> preds;
  std::vector<std::string> names;
  std::string out_csv, out_json;
  bool exact_distance = false;
};

int cmd_evaluate(const EvaluateArgs& a) {
  const auto gold = read_dialogues_file(a.gold);
  if (!a.names.empty() && a.names.size() != a.preds.size()) {
    throw UsageError("--name count must match --pred count");
  }
  std::vector<SystemResult> systems;
  for (std::size_t i = 0; i < a.preds.size(); ++i) {
    const std::string name =
        i < a.names.size() ? a.names[i]
                           : std::filesystem::path(a.preds[i]).stem().string();
    systems.push_back(
        {name, micro_prf(read_predictions_file(a.preds[i]), gold, a.exact_distance)});
  }
  std::cout << render_report_table(systems);
  if (!a.out_csv.empty()) write_text_file(a.out_csv, render_report_csv(systems));
  if (!a.out_json.empty()) {
    json j{{"report", report_json(systems)},
           {"config",
            {{"command", "evaluate"},
             {"gold", a.gold},
             {"predictions", a.preds},
             {"exact_distance", a.exact_distance}}}};
    write_text_file(a.out_json, j.dump(2) + "\n");
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"QA matching toolkit for two-party multi-turn dialogues"};
  app.require_subcommand(1);
  app.set_config("--config", "", "key=value config file; flags override it");

  SynthArgs synth_args;
  auto* synth = app.add_subcommand("synth", "generate a synthetic labeled corpus");
  synth->add_option("--out", synth_args.out, "output dialogues JSONL")->required();
  synth->add_option("--n", synth_args.spec.n_dialogues, "number of dialogues");
  synth->add_option("--min-turns", synth_args.spec.min_turns, "minimum turns per dialogue");
  synth->add_option("--max-turns", synth_args.spec.max_turns, "maximum turns per dialogue");
  synth->add_option("--vocab-size", synth_args.spec.vocab_size, "content vocabulary size");
  synth->add_option("--incremental-fraction", synth_args.spec.incremental_fraction,
                    "fraction of dialogues with an incremental QA chain");
  synth->add_option("--seed", synth_args.spec.seed, "corpus seed");

  PrepareArgs prepare_args;
  auto* prepare = app.add_subcommand("prepare", "validate, split 7:1:2, extract pairs");
  prepare->add_option("--dialogues", prepare_args.dialogues, "input dialogues JSONL")->required();
  prepare->add_option("--out-dir", prepare_args.out_dir, "output directory")->required();
  prepare->add_option("--seed", prepare_args.seed, "split seed");

  PretrainArgs pretrain_args;
  auto* pretrain = app.add_subcommand("pretrain", "skip-gram embedding pretraining");
  pretrain->add_option("--dialogues", pretrain_args.dialogues, "corpus file")->required();
  pretrain->add_option("--out", pretrain_args.out, "output embedding text file")->required();
  pretrain->add_option("--format", pretrain_args.format, "corpus format: jsonl|text");
  pretrain->add_option("--dim", pretrain_args.cfg.dim, "embedding dimension");
  pretrain->add_option("--window", pretrain_args.cfg.window, "context window");
  pretrain->add_option("--negatives", pretrain_args.cfg.negatives, "negative samples");
  pretrain->add_option("--epochs", pretrain_args.cfg.epochs, "training epochs");
  pretrain->add_option("--lr", pretrain_args.cfg.lr, "initial learning rate");
  pretrain->add_option("--min-count", pretrain_args.min_count, "vocabulary min count");
  pretrain->add_option("--seed", pretrain_args.cfg.seed, "seed");

  TrainArgs train_args;
  auto* train_cmd = app.add_subcommand("train", "train a scoring model");
  train_cmd->add_option("--train", train_args.train_path, "training dialogues JSONL")->required();
  train_cmd->add_option("--dev", train_args.dev_path, "development dialogues JSONL");
  train_cmd->add_option("--eval", train_args.eval_path, "held-out dialogues to score after training");
  train_cmd->add_option("--embeddings", train_args.embeddings, "pretrained embedding file")->required();
  train_cmd->add_option("--out-dir", train_args.out_dir, "output directory")->required();
  train_cmd->add_option("--variant", train_args.variant,
                        "HDM|DIS|HTY|QH|AH|NM|ID|MLSTM");
  train_cmd->add_option("--seeds", train_args.seeds, "comma-separated run seeds");
  train_cmd->add_option("--epochs", train_args.cfg.max_epochs, "maximum epochs");
  train_cmd->add_option("--batch-size", train_args.cfg.batch_size, "minibatch size");
  train_cmd->add_option("--lr", train_args.cfg.lr, "learning rate");
  train_cmd->add_option("--lr-decay", train_args.cfg.lr_decay, "per-epoch lr decay");
  train_cmd->add_option("--dropout", train_args.model.dropout, "dropout rate");
  train_cmd->add_option("--patience", train_args.cfg.patience, "early-stopping patience");
  train_cmd->add_option("--monitor", train_args.monitor, "early-stopping signal: dev|train");
  train_cmd->add_option("--encoder-hidden", train_args.model.encoder_hidden,
                        "sentence-encoder hidden size");
  train_cmd->add_option("--match-hidden", train_args.model.match_hidden,
                        "fusion/match hidden size");
  train_cmd->add_option("--stop-at-dev-f1", train_args.cfg.stop_at_dev_f1,
                        "stop once dev F1 reaches this value");
  train_cmd->add_flag("--exact-distance", train_args.exact_distance,
                      "report per exact distance instead of buckets");

  PredictArgs predict_args;
  auto* predict = app.add_subcommand("predict", "greedy matching from a checkpoint");
  predict->add_option("--checkpoint", predict_args.checkpoint, "model checkpoint")->required();
  predict->add_option("--dialogues", predict_args.dialogues, "dialogues JSONL")->required();
  predict->add_option("--out", predict_args.out, "output predictions JSONL")->required();
  predict->add_option("--variant", predict_args.variant,
                      "required variant; mismatching checkpoints are refused");
  predict->add_option("--threshold", predict_args.threshold, "matching threshold");

  BaselineArgs baseline_args;
  auto* baseline = app.add_subcommand("baseline", "rule-based and distance baselines");
  baseline->add_option("--rule", baseline_args.rule, "gd1|gdn|gd1+j|gdn+j|distance");
  baseline->add_option("--dialogues", baseline_args.dialogues, "dialogues JSONL")->required();
  baseline->add_option("--out", baseline_args.out, "output predictions JSONL")->required();
  baseline->add_option("--train", baseline_args.train_path,
                       "training dialogues (distance baseline)");
  baseline->add_flag("--no-resolve-claims", baseline_args.no_resolve,
                     "keep multiply-claimed answers instead of assigning to the nearest question");
  baseline->add_option("--epochs", baseline_args.dist_cfg.epochs, "distance-baseline epochs");
  baseline->add_option("--lr", baseline_args.dist_cfg.lr, "distance-baseline learning rate");
  baseline->add_option("--seed", baseline_args.dist_cfg.seed, "distance-baseline seed");

  EvaluateArgs eval_args;
  auto* evaluate = app.add_subcommand("evaluate", "score predictions against gold");
  evaluate->add_option("--gold", eval_args.gold, "gold dialogues JSONL")->required();
  evaluate->add_option("--pred", eval_args.preds, "predictions JSONL (repeatable)")->required();
  evaluate->add_option("--name", eval_args.names, "system names (match --pred order)");
  evaluate->add_option("--out-csv", eval_args.out_csv, "write CSV report");
  evaluate->add_option("--out-json", eval_args.out_json, "write JSON report");
  evaluate->add_flag("--exact-distance", eval_args.exact_distance,
                     "report per exact distance instead of buckets");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    app.exit(e);
    return 1;
  }

  try {
    if (synth->parsed()) return cmd_synth(synth_args);
    if (prepare->parsed()) return cmd_prepare(prepare_args);
    if (pretrain->parsed()) return cmd_pretrain(pretrain_args);
    if (train_cmd->parsed()) return cmd_train(train_args);
    if (predict->parsed()) return cmd_predict(predict_args);
    if (baseline->parsed()) return cmd_baseline(baseline_args);
    if (evaluate->parsed()) return cmd_evaluate(eval_args);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return 3;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
