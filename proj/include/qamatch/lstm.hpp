#pragma once

#include <span>
#include <string>
#include <vector>

#include "qamatch/graph.hpp"

namespace qamatch::nn {

/// One fused-gate LSTM layer. Row blocks of W/b follow the gate order
/// input, forget, candidate, output; the forget-gate bias starts at 1.
struct LstmParams {
  Parameter* W = nullptr;  // {4H, X+H}
  Parameter* b = nullptr;  // {4H}
  std::size_t input_dim = 0;
  std::size_t hidden_dim = 0;
};

inline LstmParams make_lstm(ParameterSet& ps, const std::string& prefix,
                            std::size_t input_dim, std::size_t hidden_dim,
                            Rng& rng) {
  LstmParams p;
  p.input_dim = input_dim;
  p.hidden_dim = hidden_dim;
  p.W = &ps.add(prefix + ".W", {4 * hidden_dim, input_dim + hidden_dim});
  p.b = &ps.add(prefix + ".b", {4 * hidden_dim});
  init_uniform_fan_in(*p.W, input_dim + hidden_dim, rng);
  for (std::size_t i = hidden_dim; i < 2 * hidden_dim; ++i) {
    p.b->value[i] = 1.0;
  }
  return p;
}

struct LstmState {
  Value h, c;
};

inline LstmState lstm_zero_state(Graph& g, const LstmParams& p) {
  return {g.zeros(p.hidden_dim), g.zeros(p.hidden_dim)};
}

/// Standard gated update: h = o * tanh(c), c = f * c_prev + i * g_cand.
inline LstmState lstm_cell(Graph& g, const LstmParams& p, Value x,
                           const LstmState& prev) {
  const std::size_t H = p.hidden_dim;
  Value z = g.add(g.matmul(g.param(*p.W), g.concat(x, prev.h)), g.param(*p.b));
  Value gi = g.sigmoid(g.slice(z, 0, H));
  Value gf = g.sigmoid(g.slice(z, H, H));
  Value gc = g.tanh(g.slice(z, 2 * H, H));
  Value go = g.sigmoid(g.slice(z, 3 * H, H));
  Value c = g.add(g.mul(gf, prev.c), g.mul(gi, gc));
  Value h = g.mul(go, g.tanh(c));
  return {h, c};
}

/// Runs the cell left to right from a zero state; returns every hidden state.
inline std::vector<Value> lstm_states(Graph& g, const LstmParams& p,
                                      std::span<const Value> xs) {
  std::vector<Value> out;
  out.reserve(xs.size());
  LstmState s = lstm_zero_state(g, p);
  for (Value x : xs) {
    s = lstm_cell(g, p, x, s);
    out.push_back(s.h);
  }
  return out;
}

}  // namespace qamatch::nn
