#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <numeric>
#include <string>
#include <vector>

#include "qamatch/adam.hpp"
#include "qamatch/evaluation.hpp"
#include "qamatch/matcher.hpp"
#include "qamatch/model.hpp"
#include "qamatch/pairs.hpp"

namespace qamatch {

struct TrainConfig {
  double lr = 0.001;
  double lr_decay = 0.95;  // multiplicative, once per epoch
  int patience = 3;
  int max_epochs = 50;
  int batch_size = 32;
  enum class Monitor { Dev, Train };
  Monitor monitor = Monitor::Dev;
  bool eval_dev_f1 = true;
  double stop_at_dev_f1 = -1.0;  // <0 disables the target-F1 early exit
  std::vector<std::uint64_t> seeds = {1, 2, 3};
};

struct EpochLog {
  int epoch = 0;  // 0-based; lr(epoch) = lr0 * decay^epoch
  double train_loss = 0.0;
  double dev_loss = 0.0;
  double dev_f1 = 0.0;
  double lr = 0.0;
  double wall_seconds = 0.0;
};

struct TrainLog {
  std::vector<EpochLog> epochs;
  int best_epoch = -1;
  std::vector<std::string> warnings;
};

/// The stopping rule alone, so it can be tested against loss sequences:
/// stop once the monitored loss has not improved for `patience` consecutive
/// epochs; the best epoch is the one to restore.
class EarlyStopper {
 public:
  explicit EarlyStopper(int patience) : patience_(patience) {
    if (patience < 1) throw UsageError("patience must be >= 1");
  }

  /// Feeds one epoch's loss; returns true when training should stop.
  bool observe(int epoch, double loss) {
    if (loss < best_) {
      best_ = loss;
      best_epoch_ = epoch;
      bad_streak_ = 0;
    } else {
      ++bad_streak_;
    }
    return bad_streak_ >= patience_;
  }

  bool improved() const { return bad_streak_ == 0; }
  int best_epoch() const { return best_epoch_; }
  double best_loss() const { return best_; }

 private:
  int patience_;
  double best_ = std::numeric_limits<double>::infinity();
  int best_epoch_ = -1;
  int bad_streak_ = 0;
};

struct TrainResult {
  std::unique_ptr<Model> model;
  TrainLog log;
};

namespace detail {

struct PairRef {
  const Dialogue* dialogue;
  CandidatePair pair;
};

inline std::vector<PairRef> collect_pairs(const std::vector<Dialogue>& dialogues) {
  std::vector<PairRef> out;
  for (const Dialogue& d : dialogues) {
    for (CandidatePair& p : build_candidate_pairs(d)) {
      out.push_back({&d, std::move(p)});
    }
  }
  return out;
}

inline double mean_eval_loss(const Model& model, const std::vector<PairRef>& pairs) {
  double sum = 0.0;
  for (const PairRef& pr : pairs) {
    nn::Graph g(false);
    sum += g.value(model.loss(g, *pr.dialogue, pr.pair))[0];
  }
  return pairs.empty() ? 0.0 : sum / static_cast<double>(pairs.size());
}

inline double end_to_end_f1(const Model& model, const std::vector<Dialogue>& dialogues) {
  std::vector<MatchResult> preds;
  preds.reserve(dialogues.size());
  const PairScorer score = model.scorer();
  for (const Dialogue& d : dialogues) {
    preds.push_back(greedy_match(d, score, model.config().classification_threshold));
  }
  return micro_prf(preds, dialogues).f1;
}

}  // namespace detail

/// Supervised loop: shuffled mini-batches of candidate pairs, mean
/// cross-entropy, Adam with per-epoch lr decay, early stopping on the
/// monitored loss, parameters restored from the best epoch. `on_improve`
/// fires whenever the monitored loss reaches a new best (checkpoint hook).
inline TrainResult train(const ModelConfig& model_config,
                         const EmbeddingMatrix& embeddings,
                         const std::vector<Dialogue>& train_dialogues,
                         const std::vector<Dialogue>& dev_dialogues,
                         const TrainConfig& cfg, std::uint64_t seed,
                         const std::function<void(const Model&, const TrainLog&)>&
                             on_improve = nullptr) {
  if (cfg.lr <= 0.0) throw UsageError("learning rate must be positive");

  TrainResult result;
  result.model = std::make_unique<Model>(model_config, embeddings,
                                         Rng(seed).substream("init").seed());
  Model& model = *result.model;
  TrainLog& log = result.log;

  std::vector<detail::PairRef> train_pairs = detail::collect_pairs(train_dialogues);
  std::vector<detail::PairRef> dev_pairs = detail::collect_pairs(dev_dialogues);
  if (train_pairs.empty()) throw DataError("training set has no candidate pairs");
  {
    const std::size_t pos = static_cast<std::size_t>(
        std::count_if(train_pairs.begin(), train_pairs.end(),
                      [](const detail::PairRef& p) { return p.pair.gold; }));
    if (pos == 0 || pos == train_pairs.size()) {
      log.warnings.push_back("training pairs are single-class (" +
                             std::to_string(pos) + "/" +
                             std::to_string(train_pairs.size()) + " positive)");
    }
  }
  TrainConfig::Monitor monitor = cfg.monitor;
  if (monitor == TrainConfig::Monitor::Dev && dev_pairs.empty()) {
    log.warnings.push_back("no dev pairs; monitoring train loss instead");
    monitor = TrainConfig::Monitor::Train;
  }

  Rng shuffle_rng = Rng(seed).substream("shuffle");
  Rng dropout_rng = Rng(seed).substream("dropout");
  nn::Adam opt;
  EarlyStopper stopper(cfg.patience);
  std::vector<nn::Tensor> best_snapshot = model.snapshot();

  std::vector<std::size_t> order(train_pairs.size());
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    const double lr = cfg.lr * std::pow(cfg.lr_decay, static_cast<double>(epoch));
    shuffle_rng.shuffle(order);

    double loss_sum = 0.0;
    for (std::size_t ofs = 0; ofs < order.size();
         ofs += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t n =
          std::min(order.size() - ofs, static_cast<std::size_t>(cfg.batch_size));
      model.params().zero_grad();
      double batch_loss = 0.0;
      for (std::size_t k = 0; k < n; ++k) {
        const detail::PairRef& pr = train_pairs[order[ofs + k]];
        nn::Graph g(true, &dropout_rng);
        nn::Value l = model.loss(g, *pr.dialogue, pr.pair);
        batch_loss += g.value(l)[0];
        g.backward(l, 1.0 / static_cast<double>(n));
      }
      if (!std::isfinite(batch_loss)) {
        throw NumericError("non-finite training loss at epoch " + std::to_string(epoch));
      }
      loss_sum += batch_loss;
      opt.step(model.params(), lr);
    }

    EpochLog el;
    el.epoch = epoch;
    el.lr = lr;
    el.train_loss = loss_sum / static_cast<double>(train_pairs.size());
    el.dev_loss = dev_pairs.empty() ? el.train_loss
                                    : detail::mean_eval_loss(model, dev_pairs);
    if (cfg.eval_dev_f1 && !dev_dialogues.empty()) {
      el.dev_f1 = detail::end_to_end_f1(model, dev_dialogues);
    }
    el.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    log.epochs.push_back(el);

    const double monitored =
        monitor == TrainConfig::Monitor::Dev ? el.dev_loss : el.train_loss;
    if (!std::isfinite(monitored)) {
      throw NumericError("non-finite monitored loss at epoch " + std::to_string(epoch));
    }
    const bool stop = stopper.observe(epoch, monitored);
    if (stopper.improved()) {
      best_snapshot = model.snapshot();
      log.best_epoch = epoch;
      if (on_improve) on_improve(model, log);
    }
    if (cfg.stop_at_dev_f1 >= 0.0 && el.dev_f1 >= cfg.stop_at_dev_f1) {
      best_snapshot = model.snapshot();
      log.best_epoch = epoch;
      break;
    }
    if (stop) break;
  }

  model.restore(best_snapshot);
  return result;
}

// ---- multi-seed averaging -------------------------------------------------

struct SeedRun {
  std::uint64_t seed = 0;
  MetricsReport report;
  TrainLog log;
};

struct MultiSeedResult {
  std::vector<SeedRun> per_seed;
  double mean_precision = 0.0;
  double mean_recall = 0.0;
  double mean_f1 = 0.0;
  std::map<int, double> mean_acc_by_distance;
};

/// Trains once per seed, scores `eval_dialogues` end to end with the greedy
/// matcher, and reports per-seed plus arithmetic-mean metrics.
inline MultiSeedResult run_multi_seed(const ModelConfig& model_config,
                                      const EmbeddingMatrix& embeddings,
                                      const std::vector<Dialogue>& train_dialogues,
                                      const std::vector<Dialogue>& dev_dialogues,
                                      const std::vector<Dialogue>& eval_dialogues,
                                      const TrainConfig& cfg,
                                      bool exact_distance = false) {
  if (cfg.seeds.empty()) throw UsageError("run_multi_seed: needs at least one seed");
  MultiSeedResult out;
  for (std::uint64_t seed : cfg.seeds) {
    TrainResult tr = train(model_config, embeddings, train_dialogues, dev_dialogues,
                           cfg, seed);
    std::vector<MatchResult> preds;
    const PairScorer score = tr.model->scorer();
    for (const Dialogue& d : eval_dialogues) {
      preds.push_back(greedy_match(d, score, model_config.classification_threshold));
    }
    SeedRun run;
    run.seed = seed;
    run.report = micro_prf(preds, eval_dialogues, exact_distance);
    run.log = std::move(tr.log);
    out.per_seed.push_back(std::move(run));
  }
  const double n = static_cast<double>(out.per_seed.size());
  std::map<int, std::pair<double, int>> acc_sums;
  for (const SeedRun& r : out.per_seed) {
    out.mean_precision += r.report.precision / n;
    out.mean_recall += r.report.recall / n;
    out.mean_f1 += r.report.f1 / n;
    for (const auto& [k, v] : r.report.acc_by_distance) {
      acc_sums[k].first += v;
      acc_sums[k].second += 1;
    }
  }
  for (const auto& [k, sum_count] : acc_sums) {
    out.mean_acc_by_distance[k] = sum_count.first / sum_count.second;
  }
  return out;
}

}  // namespace qamatch
