#pragma once

#include <functional>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "qamatch/dialogue.hpp"
#include "qamatch/graph.hpp"
#include "qamatch/lstm.hpp"
#include "qamatch/pairs.hpp"
#include "qamatch/skipgram.hpp"

namespace qamatch {

/// Model variants. HDM is the full model; the rest disable or rewire parts
/// of it:
///   DIS    no history attention (Q/NQ text + distance)
///   HTY    no distance input at the prediction layer
///   MLSTM  plain match-LSTM over the sentence pair (no history, no distance)
///   QH     history redefined as all turns before Q
///   AH     history redefined as all turns before NQ
///   NM     non-mutual wiring: Q attends its own speaker's turns, NQ likewise
///   ID     both sides attend the full undivided history
enum class Variant { HDM, DIS, HTY, QH, AH, NM, ID, MLSTM };

inline const char* to_string(Variant v) {
  switch (v) {
    case Variant::HDM: return "HDM";
    case Variant::DIS: return "DIS";
    case Variant::HTY: return "HTY";
    case Variant::QH: return "QH";
    case Variant::AH: return "AH";
    case Variant::NM: return "NM";
    case Variant::ID: return "ID";
    case Variant::MLSTM: return "MLSTM";
  }
  return "?";
}

inline Variant variant_from_string(const std::string& s) {
  for (Variant v : {Variant::HDM, Variant::DIS, Variant::HTY, Variant::QH,
                    Variant::AH, Variant::NM, Variant::ID, Variant::MLSTM}) {
    if (s == to_string(v)) return v;
  }
  throw UsageError("unknown model variant: \"" + s + "\"");
}

inline bool variant_uses_history(Variant v) {
  return v != Variant::DIS && v != Variant::MLSTM;
}

inline bool variant_uses_distance(Variant v) {
  return v != Variant::HTY && v != Variant::MLSTM;
}

struct ModelConfig {
  Variant variant = Variant::HDM;
  int embedding_dim = 100;
  int encoder_hidden = 128;  // part I: sentence encoder + mutual attention
  int match_hidden = 256;    // part II: fusion + match-LSTM
  double dropout = 0.3;
  int distance_dims = 10;
  double classification_threshold = 0.5;
};

/// Per-word encoder states for one turn; history turns only contribute
/// last_state.
struct EncodedTurn {
  std::vector<nn::Value> all_states;
  nn::Value last_state;
};

struct PairScore {
  double probability = 0.0;  // P(the pair is a QA match)
  std::array<double, 2> logits{};
};

/// Optional forward introspection for tests and case studies.
struct ForwardTrace {
  std::vector<std::vector<double>> q_attention;      // per Q word, over its attended turns
  std::vector<std::vector<double>> nq_attention;     // per NQ word
  std::vector<std::vector<double>> match_attention;  // per NQ word, over Q words
  std::vector<std::vector<double>> q_prime;          // u vectors, dim 2*encoder_hidden
  std::vector<std::vector<double>> nq_prime;
  std::vector<double> p_m;
  std::array<double, 2> logits{};
};

/// The history turns each side of a pair may see, split by speaker and in
/// dialogue order. `joint` is the undivided list (used by ID).
struct HistoryView {
  std::vector<const Turn*> h_rq;
  std::vector<const Turn*> h_rnq;
  std::vector<const Turn*> joint;
};

inline HistoryView history_view(const Dialogue& d, int q_index, int nq_index,
                                Variant v) {
  int lo = q_index + 1, hi = nq_index;  // [lo, hi) default: strictly between
  if (v == Variant::QH) {
    lo = 0;
    hi = q_index;
  } else if (v == Variant::AH) {
    lo = 0;
    hi = nq_index;
  }
  HistoryView hv;
  const std::string& q_role = d.turns[static_cast<std::size_t>(q_index)].role;
  for (int k = lo; k < hi; ++k) {
    const Turn* t = &d.turns[static_cast<std::size_t>(k)];
    hv.joint.push_back(t);
    (t->role == q_role ? hv.h_rq : hv.h_rnq).push_back(t);
  }
  return hv;
}

/// Encoder last-states of the history, ready for attention.
struct EncodedHistory {
  std::vector<nn::Value> h_rq;
  std::vector<nn::Value> h_rnq;
  std::vector<nn::Value> joint;
};

/// The scoring network. One sentence-encoder LSTM and one embedding table
/// are shared across Q, NQ and history turns; the two mutual-attention
/// directions have independent parameters; the fusion LSTM is shared
/// between Q' and NQ' and is separate from the match-LSTM recurrence.
/// Pretrained embeddings stay frozen. A constructed or loaded model is
/// immutable under scoring; only the training loop mutates parameters.
class Model {
 public:
  Model(ModelConfig cfg, EmbeddingMatrix embeddings, std::uint64_t init_seed)
      : cfg_(cfg), emb_(std::move(embeddings)) {
    if (emb_.dim() != cfg_.embedding_dim) {
      throw UsageError("embedding dim " + std::to_string(emb_.dim()) +
                       " does not match configured " +
                       std::to_string(cfg_.embedding_dim));
    }
    Rng rng = Rng(init_seed).substream("model-init");
    const auto H1 = static_cast<std::size_t>(cfg_.encoder_hidden);
    const auto H2 = static_cast<std::size_t>(cfg_.match_hidden);
    const auto E = static_cast<std::size_t>(cfg_.embedding_dim);

    enc_ = nn::make_lstm(params_, "enc", E, H1, rng);
    if (variant_uses_history(cfg_.variant)) {
      att_q_wq_ = &add_init("att_q.W_Q", {H1, H1}, H1, rng);
      att_q_wh_ = &add_init("att_q.W_H", {H1, H1}, H1, rng);
      att_q_v_ = &add_init("att_q.v", {H1}, H1, rng);
      att_nq_wnq_ = &add_init("att_nq.W_NQ", {H1, H1}, H1, rng);
      att_nq_wh_ = &add_init("att_nq.W_H", {H1, H1}, H1, rng);
      att_nq_v_ = &add_init("att_nq.v", {H1}, H1, rng);
    }
    fuse_ = nn::make_lstm(params_, "fuse", 2 * H1, H2, rng);
    m_wnq_ = &add_init("match.W_NQ", {H2, H2}, H2, rng);
    m_wq_ = &add_init("match.W_Q", {H2, H2}, H2, rng);
    m_wp_ = &add_init("match.W_p", {H2, H2}, H2, rng);
    m_v_ = &add_init("match.v", {H2}, H2, rng);
    match_ = nn::make_lstm(params_, "match", 2 * H2, H2, rng);
    const std::size_t fc_in = H2 + (variant_uses_distance(cfg_.variant)
                                        ? static_cast<std::size_t>(cfg_.distance_dims)
                                        : 0);
    fc_w_ = &add_init("W_fc", {2, fc_in}, fc_in, rng);
    fc_b_ = &params_.add("b_fc", {2});
  }

  const ModelConfig& config() const { return cfg_; }
  nn::ParameterSet& params() { return params_; }
  const nn::ParameterSet& params() const { return params_; }
  const EmbeddingMatrix& embeddings() const { return emb_; }

  // ---- forward pieces --------------------------------------------------

  /// One left-to-right encoder pass over the turn's tokens. Dropout is
  /// applied to every encoder output (training graphs only).
  EncodedTurn encode_sentence(nn::Graph& g, const Turn& turn) const {
    if (turn.tokens.empty()) {
      throw std::invalid_argument("encode_sentence: turn " +
                                  std::to_string(turn.index) + " has no tokens");
    }
    std::vector<nn::Value> xs;
    xs.reserve(turn.tokens.size());
    for (const std::string& tok : turn.tokens) {
      auto row = emb_.lookup(tok);
      xs.push_back(g.input(nn::Tensor::vec({row.begin(), row.end()})));
    }
    EncodedTurn out;
    out.all_states = nn::lstm_states(g, enc_, xs);
    for (nn::Value& h : out.all_states) h = g.dropout(h, cfg_.dropout);
    out.last_state = out.all_states.back();
    return out;
  }

  /// Produces Q' and NQ' as per-word [h, c] concatenations, where c is the
  /// additive-attention pooling of the attended history turns. Which list
  /// each side attends to depends on the variant; an empty attended list
  /// yields a zero context.
  std::pair<std::vector<nn::Value>, std::vector<nn::Value>> mutual_attention(
      nn::Graph& g, const EncodedTurn& q, const EncodedTurn& nq,
      const EncodedHistory& hist, ForwardTrace* trace = nullptr) const {
    const std::vector<nn::Value>* for_q = &hist.h_rnq;
    const std::vector<nn::Value>* for_nq = &hist.h_rq;
    if (cfg_.variant == Variant::NM) {
      for_q = &hist.h_rq;
      for_nq = &hist.h_rnq;
    } else if (cfg_.variant == Variant::ID) {
      for_q = &hist.joint;
      for_nq = &hist.joint;
    }
    auto q_ctx = attention_pool(g, q.all_states, *for_q, *att_q_wq_, *att_q_wh_,
                                *att_q_v_, trace ? &trace->q_attention : nullptr);
    auto nq_ctx = attention_pool(g, nq.all_states, *for_nq, *att_nq_wnq_,
                                 *att_nq_wh_, *att_nq_v_,
                                 trace ? &trace->nq_attention : nullptr);
    std::vector<nn::Value> q_prime, nq_prime;
    for (std::size_t i = 0; i < q.all_states.size(); ++i) {
      q_prime.push_back(g.concat(q.all_states[i], q_ctx[i]));
    }
    for (std::size_t i = 0; i < nq.all_states.size(); ++i) {
      nq_prime.push_back(g.concat(nq.all_states[i], nq_ctx[i]));
    }
    record(trace ? &trace->q_prime : nullptr, g, q_prime);
    record(trace ? &trace->nq_prime : nullptr, g, nq_prime);
    return {std::move(q_prime), std::move(nq_prime)};
  }

  /// Part II: a shared fusion LSTM maps Q' -> Q'' and NQ' -> NQ'', then the
  /// match recurrence walks the NQ words, each step attending over Q''
  /// conditioned on the previous state. Returns the final state p_M.
  nn::Value match_lstm(nn::Graph& g, std::span<const nn::Value> q_prime,
                       std::span<const nn::Value> nq_prime,
                       ForwardTrace* trace = nullptr) const {
    std::vector<nn::Value> q_fused = nn::lstm_states(g, fuse_, q_prime);
    std::vector<nn::Value> nq_fused = nn::lstm_states(g, fuse_, nq_prime);

    std::vector<nn::Value> key_proj;
    key_proj.reserve(q_fused.size());
    for (nn::Value fq : q_fused) key_proj.push_back(g.matmul(g.param(*m_wq_), fq));

    nn::LstmState p = nn::lstm_zero_state(g, match_);
    for (nn::Value fp : nq_fused) {
      nn::Value query = g.add(g.matmul(g.param(*m_wnq_), fp),
                              g.matmul(g.param(*m_wp_), p.h));
      std::vector<nn::Value> scores;
      scores.reserve(key_proj.size());
      for (nn::Value kp : key_proj) {
        scores.push_back(g.dot(g.param(*m_v_), g.tanh(g.add(query, kp))));
      }
      nn::Value attn = g.softmax(g.concat(scores));
      if (trace) trace->match_attention.push_back(g.value(attn).data);
      nn::Value ctx = g.weighted_sum(attn, q_fused);
      nn::Value inp = g.dropout(g.concat(fp, ctx), cfg_.dropout);
      p = nn::lstm_cell(g, match_, inp, p);
    }
    if (trace) trace->p_m = g.value(p.h).data;
    return p.h;
  }

  /// FC over [p_M, one-hot distance] (or p_M alone for the variants that
  /// drop the distance input), producing the 2-class logits.
  nn::Value predict_logits(nn::Graph& g, nn::Value p_m, int distance) const {
    nn::Value fc_in = p_m;
    if (variant_uses_distance(cfg_.variant)) {
      const DistanceVector dv = encode_distance(distance);
      fc_in = g.concat(p_m, g.input(nn::Tensor::vec({dv.begin(), dv.end()})));
    }
    return g.add(g.matmul(g.param(*fc_w_), fc_in), g.param(*fc_b_));
  }

  /// Full composition: encode -> mutual attention -> match-LSTM -> predict.
  nn::Value forward(nn::Graph& g, const Dialogue& d, int q_index, int nq_index,
                    ForwardTrace* trace = nullptr) const {
    check_pair(d, q_index, nq_index);
    const Turn& q_turn = d.turns[static_cast<std::size_t>(q_index)];
    const Turn& nq_turn = d.turns[static_cast<std::size_t>(nq_index)];
    EncodedTurn q = encode_sentence(g, q_turn);
    EncodedTurn nq = encode_sentence(g, nq_turn);

    std::vector<nn::Value> q_prime, nq_prime;
    if (variant_uses_history(cfg_.variant)) {
      HistoryView hv = history_view(d, q_index, nq_index, cfg_.variant);
      EncodedHistory eh;
      std::map<const Turn*, nn::Value> cache;
      auto last_state = [&](const Turn* t) {
        auto it = cache.find(t);
        if (it == cache.end()) {
          it = cache.emplace(t, encode_sentence(g, *t).last_state).first;
        }
        return it->second;
      };
      for (const Turn* t : hv.h_rq) eh.h_rq.push_back(last_state(t));
      for (const Turn* t : hv.h_rnq) eh.h_rnq.push_back(last_state(t));
      for (const Turn* t : hv.joint) eh.joint.push_back(last_state(t));
      std::tie(q_prime, nq_prime) = mutual_attention(g, q, nq, eh, trace);
    } else {
      nn::Value zero = g.zeros(static_cast<std::size_t>(cfg_.encoder_hidden));
      for (nn::Value h : q.all_states) q_prime.push_back(g.concat(h, zero));
      for (nn::Value h : nq.all_states) nq_prime.push_back(g.concat(h, zero));
      record(trace ? &trace->q_prime : nullptr, g, q_prime);
      record(trace ? &trace->nq_prime : nullptr, g, nq_prime);
    }

    nn::Value p_m = match_lstm(g, q_prime, nq_prime, trace);
    nn::Value logits = predict_logits(g, p_m, nq_index - q_index);
    if (trace) {
      trace->logits = {g.value(logits)[0], g.value(logits)[1]};
    }
    return logits;
  }

  /// Eval-mode probability that (q, nq) is a QA match. Reentrant; safe for
  /// concurrent read-only use.
  PairScore score_pair(const Dialogue& d, int q_index, int nq_index,
                       ForwardTrace* trace = nullptr) const {
    nn::Graph g(false);
    nn::Value logits = forward(g, d, q_index, nq_index, trace);
    const nn::Tensor& z = g.value(logits);
    const double mx = std::max(z[0], z[1]);
    const double e0 = std::exp(z[0] - mx), e1 = std::exp(z[1] - mx);
    return {e1 / (e0 + e1), {z[0], z[1]}};
  }

  PairScore score_pair(const Dialogue& d, const CandidatePair& pair) const {
    return score_pair(d, pair.q_index, pair.nq_index);
  }

  /// Cross-entropy loss node for one training example (class 1 = match).
  nn::Value loss(nn::Graph& g, const Dialogue& d, const CandidatePair& pair) const {
    nn::Value logits = forward(g, d, pair.q_index, pair.nq_index);
    return g.cross_entropy(logits, pair.gold ? 1 : 0);
  }

  std::function<double(const Dialogue&, int, int)> scorer() const {
    return [this](const Dialogue& d, int q, int nq) {
      return score_pair(d, q, nq).probability;
    };
  }

  // ---- parameter snapshots (early stopping) ----------------------------

  std::vector<nn::Tensor> snapshot() const {
    std::vector<nn::Tensor> out;
    out.reserve(params_.size());
    for (const nn::Parameter& p : params_) out.push_back(p.value);
    return out;
  }

  void restore(const std::vector<nn::Tensor>& snap) {
    if (snap.size() != params_.size()) {
      throw std::invalid_argument("restore: snapshot size mismatch");
    }
    for (std::size_t i = 0; i < snap.size(); ++i) params_[i].value = snap[i];
  }

 private:
  nn::Parameter& add_init(const std::string& name, std::vector<std::size_t> shape,
                          std::size_t fan_in, Rng& rng) {
    nn::Parameter& p = params_.add(name, std::move(shape));
    nn::init_uniform_fan_in(p, fan_in, rng);
    return p;
  }

  static void check_pair(const Dialogue& d, int q_index, int nq_index) {
    const int T = static_cast<int>(d.turns.size());
    if (q_index < 0 || nq_index >= T || q_index >= nq_index) {
      throw std::invalid_argument("score_pair: bad pair (" + std::to_string(q_index) +
                                  ", " + std::to_string(nq_index) + ") for dialogue \"" +
                                  d.id + "\"");
    }
    if (d.turns[static_cast<std::size_t>(q_index)].label != TurnLabel::Q ||
        d.turns[static_cast<std::size_t>(nq_index)].label != TurnLabel::NQ ||
        d.turns[static_cast<std::size_t>(q_index)].role ==
            d.turns[static_cast<std::size_t>(nq_index)].role) {
      throw std::invalid_argument("score_pair: (" + std::to_string(q_index) + ", " +
                                  std::to_string(nq_index) +
                                  ") is not a Q/NQ pair of distinct roles");
    }
  }

  /// s_j = v . tanh(Wq h_i + Wk d_j); softmax over j; pooled over the keys.
  std::vector<nn::Value> attention_pool(
      nn::Graph& g, const std::vector<nn::Value>& queries,
      const std::vector<nn::Value>& keys, nn::Parameter& wq, nn::Parameter& wk,
      nn::Parameter& v, std::vector<std::vector<double>>* trace_rows) const {
    std::vector<nn::Value> contexts;
    contexts.reserve(queries.size());
    if (keys.empty()) {
      nn::Value zero = g.zeros(static_cast<std::size_t>(cfg_.encoder_hidden));
      for (std::size_t i = 0; i < queries.size(); ++i) {
        contexts.push_back(zero);
        if (trace_rows) trace_rows->emplace_back();
      }
      return contexts;
    }
    std::vector<nn::Value> key_proj;
    key_proj.reserve(keys.size());
    for (nn::Value d : keys) key_proj.push_back(g.matmul(g.param(wk), d));
    for (nn::Value h : queries) {
      nn::Value query = g.matmul(g.param(wq), h);
      std::vector<nn::Value> scores;
      scores.reserve(keys.size());
      for (nn::Value kp : key_proj) {
        scores.push_back(g.dot(g.param(v), g.tanh(g.add(query, kp))));
      }
      nn::Value attn = g.softmax(g.concat(scores));
      if (trace_rows) trace_rows->push_back(g.value(attn).data);
      contexts.push_back(g.weighted_sum(attn, keys));
    }
    return contexts;
  }

  static void record(std::vector<std::vector<double>>* dst, const nn::Graph& g,
                     const std::vector<nn::Value>& vals) {
    if (!dst) return;
    for (nn::Value v : vals) dst->push_back(g.value(v).data);
  }

  ModelConfig cfg_;
  EmbeddingMatrix emb_;
  nn::ParameterSet params_;
  nn::LstmParams enc_, fuse_, match_;
  nn::Parameter* att_q_wq_ = nullptr;
  nn::Parameter* att_q_wh_ = nullptr;
  nn::Parameter* att_q_v_ = nullptr;
  nn::Parameter* att_nq_wnq_ = nullptr;
  nn::Parameter* att_nq_wh_ = nullptr;
  nn::Parameter* att_nq_v_ = nullptr;
  nn::Parameter* m_wnq_ = nullptr;
  nn::Parameter* m_wq_ = nullptr;
  nn::Parameter* m_wp_ = nullptr;
  nn::Parameter* m_v_ = nullptr;
  nn::Parameter* fc_w_ = nullptr;
  nn::Parameter* fc_b_ = nullptr;
};

}  // namespace qamatch
