#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "qamatch/adam.hpp"
#include "qamatch/dialogue.hpp"
#include "qamatch/graph.hpp"
#include "qamatch/pairs.hpp"
#include "qamatch/rng.hpp"

namespace qamatch {

/// Predicted pairs for one dialogue, sorted by (q_index, nq_index).
/// `probs` aligns with `pairs` for probabilistic matchers and is empty for
/// the rule-based baselines.
struct MatchResult {
  std::string dialogue_id;
  std::vector<std::pair<int, int>> pairs;
  std::vector<double> probs;
};

using PairScorer = std::function<double(const Dialogue&, int q_index, int nq_index)>;

namespace detail {

inline void sort_result(MatchResult& r) {
  std::vector<std::size_t> order(r.pairs.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&r](std::size_t a, std::size_t b) {
    return r.pairs[a] < r.pairs[b];
  });
  MatchResult sorted;
  sorted.dialogue_id = r.dialogue_id;
  for (std::size_t i : order) {
    sorted.pairs.push_back(r.pairs[i]);
    if (!r.probs.empty()) sorted.probs.push_back(r.probs[i]);
  }
  r = std::move(sorted);
}

}  // namespace detail

/// For each NQ independently: among all eligible earlier Qs, take the one
/// with maximum probability and emit the pair iff that probability strictly
/// exceeds the threshold. Ties go to the nearest Q.
inline MatchResult greedy_match(const Dialogue& d, const PairScorer& score,
                                double threshold = 0.5) {
  MatchResult out;
  out.dialogue_id = d.id;
  const int T = static_cast<int>(d.turns.size());
  for (int j = 0; j < T; ++j) {
    if (d.turns[j].label != TurnLabel::NQ) continue;
    int best = -1;
    double best_p = 0.0;
    for (int i = 0; i < j; ++i) {
      if (d.turns[i].label != TurnLabel::Q) continue;
      if (d.turns[i].role == d.turns[j].role) continue;
      const double p = score(d, i, j);
      if (best < 0 || p >= best_p) {  // >= so the latest (nearest) max wins
        best = i;
        best_p = p;
      }
    }
    if (best >= 0 && best_p > threshold) {
      out.pairs.emplace_back(best, j);
      out.probs.push_back(best_p);
    }
  }
  detail::sort_result(out);
  return out;
}

/// Rule-based greedy baselines. For each question (speaker RQ) the scan
/// walks forward matching NQ turns by the other speaker; it stops at any
/// question (either role). A non-question by RQ stops the scan when
/// jump=false and is skipped when jump=true. multi=false keeps only the
/// first match per question. An NQ claimed by several questions goes to the
/// nearest claiming one unless resolve_multi_claims is off.
struct GdConfig {
  bool multi = false;
  bool jump = false;
  bool resolve_multi_claims = true;
};

inline GdConfig gd_config_from_rule(const std::string& rule) {
  if (rule == "gd1") return {false, false, true};
  if (rule == "gdn") return {true, false, true};
  if (rule == "gd1+j") return {false, true, true};
  if (rule == "gdn+j") return {true, true, true};
  throw UsageError("unknown greedy rule: \"" + rule + "\"");
}

inline MatchResult baseline_gd(const Dialogue& d, const GdConfig& cfg) {
  const int T = static_cast<int>(d.turns.size());
  std::map<int, std::vector<int>> claims;  // nq -> claiming qs
  for (int i = 0; i < T; ++i) {
    if (d.turns[i].label != TurnLabel::Q) continue;
    const std::string& rq = d.turns[i].role;
    for (int t = i + 1; t < T; ++t) {
      if (d.turns[t].label == TurnLabel::Q) break;
      if (d.turns[t].role == rq) {
        if (!cfg.jump) break;
        continue;
      }
      claims[t].push_back(i);
      if (!cfg.multi) break;
    }
  }
  MatchResult out;
  out.dialogue_id = d.id;
  for (auto& [nq, qs] : claims) {
    if (cfg.resolve_multi_claims && qs.size() > 1) {
      out.pairs.emplace_back(*std::max_element(qs.begin(), qs.end()), nq);
    } else {
      for (int q : qs) out.pairs.emplace_back(q, nq);
    }
  }
  detail::sort_result(out);
  return out;
}

/// The distance-only baseline: a 10->2 affine layer with softmax, trained
/// with cross-entropy on (one-hot distance, gold) pairs. Scores depend only
/// on the distance bucket, so the ten bucket probabilities are cached.
class DistanceBaseline {
 public:
  struct TrainConfig {
    double lr = 0.05;
    int epochs = 200;
    int batch_size = 64;
    std::uint64_t seed = 1;
  };

  static DistanceBaseline train(const std::vector<std::pair<int, bool>>& examples) {
    return train(examples, TrainConfig());
  }

  static DistanceBaseline train(const std::vector<std::pair<int, bool>>& examples,
                                const TrainConfig& cfg) {
    if (examples.empty()) throw DataError("distance baseline: empty training set");
    nn::ParameterSet ps;
    nn::Parameter& W = ps.add("W", {2, 10});
    nn::Parameter& b = ps.add("b", {2});
    Rng init = Rng(cfg.seed).substream("distance-baseline");
    nn::init_uniform_fan_in(W, 10, init);

    std::vector<std::size_t> order(examples.size());
    std::iota(order.begin(), order.end(), 0);
    Rng shuffle = Rng(cfg.seed).substream("distance-baseline-shuffle");
    nn::Adam opt;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
      shuffle.shuffle(order);
      for (std::size_t ofs = 0; ofs < order.size();
           ofs += static_cast<std::size_t>(cfg.batch_size)) {
        const std::size_t n =
            std::min(order.size() - ofs, static_cast<std::size_t>(cfg.batch_size));
        ps.zero_grad();
        for (std::size_t k = 0; k < n; ++k) {
          const auto& [dist, gold] = examples[order[ofs + k]];
          nn::Graph g;
          const DistanceVector dv = encode_distance(dist);
          nn::Value logits = g.add(
              g.matmul(g.param(W), g.input(nn::Tensor::vec({dv.begin(), dv.end()}))),
              g.param(b));
          g.backward(g.cross_entropy(logits, gold ? 1 : 0), 1.0 / static_cast<double>(n));
        }
        opt.step(ps, cfg.lr);
      }
    }

    DistanceBaseline out;
    for (int d = 1; d <= 10; ++d) {
      const double z0 = W.value.at(0, static_cast<std::size_t>(d - 1)) + b.value[0];
      const double z1 = W.value.at(1, static_cast<std::size_t>(d - 1)) + b.value[1];
      const double mx = std::max(z0, z1);
      const double e0 = std::exp(z0 - mx), e1 = std::exp(z1 - mx);
      out.bucket_probability_[static_cast<std::size_t>(d - 1)] = e1 / (e0 + e1);
    }
    return out;
  }

  double score(int distance) const {
    return bucket_probability_[static_cast<std::size_t>(std::min(std::max(distance, 1), 10) - 1)];
  }

  PairScorer scorer() const {
    return [probs = bucket_probability_](const Dialogue&, int q, int nq) {
      return probs[static_cast<std::size_t>(std::min(nq - q, 10) - 1)];
    };
  }

 private:
  std::array<double, 10> bucket_probability_{};
};

// ---- predictions file ---------------------------------------------------
// JSONL, one object per dialogue:
//   {"id": str, "pairs": [[q, a], ...], "probs": [float, ...]?}
// Written by the matchers and consumed by the evaluation module, so any
// external system emitting this format can be scored.

inline void write_predictions(std::ostream& out, const std::vector<MatchResult>& rs) {
  for (const MatchResult& r : rs) {
    nlohmann::json j;
    j["id"] = r.dialogue_id;
    j["pairs"] = nlohmann::json::array();
    for (const auto& [q, a] : r.pairs) j["pairs"].push_back(nlohmann::json::array({q, a}));
    if (!r.probs.empty()) j["probs"] = r.probs;
    out << j.dump() << '\n';
  }
}

inline std::vector<MatchResult> read_predictions(std::istream& in) {
  std::vector<MatchResult> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const nlohmann::json j = nlohmann::json::parse(line);
      MatchResult r;
      r.dialogue_id = j.at("id").get<std::string>();
      for (const auto& jp : j.at("pairs")) {
        r.pairs.emplace_back(jp.at(0).get<int>(), jp.at(1).get<int>());
      }
      if (j.contains("probs")) r.probs = j.at("probs").get<std::vector<double>>();
      out.push_back(std::move(r));
    } catch (const nlohmann::json::exception& e) {
      throw DataError("predictions line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

inline void write_predictions_file(const std::string& path,
                                   const std::vector<MatchResult>& rs) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write predictions file: " + path);
  write_predictions(out, rs);
}

inline std::vector<MatchResult> read_predictions_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open predictions file: " + path);
  return read_predictions(in);
}

}  // namespace qamatch
