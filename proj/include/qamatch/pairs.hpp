#pragma once

#include <array>
#include <stdexcept>
#include <string>
#include <vector>

#include "qamatch/dialogue.hpp"

namespace qamatch {

/// 10-way one-hot distance encoding; distances of 10 or more share the
/// last slot.
using DistanceVector = std::array<double, 10>;

inline DistanceVector encode_distance(int distance) {
  if (distance < 1) {
    throw std::invalid_argument("encode_distance: distance must be >= 1, got " +
                                std::to_string(distance));
  }
  DistanceVector v{};
  v[static_cast<std::size_t>(std::min(distance, 10) - 1)] = 1.0;
  return v;
}

/// Evaluation bucket for a distance: 1..4 exact, 5 meaning ">= 5".
inline int distance_bucket(int distance) { return distance >= 5 ? 5 : distance; }

/// One (Q, NQ) scoring instance. History fields hold turn indices into the
/// owning dialogue, in dialogue order: h_rq keeps the turns between Q and NQ
/// uttered by the question's speaker, h_rnq those by the non-question's
/// speaker; together they partition `history`.
struct CandidatePair {
  std::string dialogue_id;
  int q_index = 0;
  int nq_index = 0;
  int distance = 0;
  std::vector<int> history;
  std::vector<int> h_rq;
  std::vector<int> h_rnq;
  bool gold = false;
};

/// Builds every (Q, NQ) instance of the dialogue: one pair per (i, j) with
/// j > i, label_i = Q, label_j = NQ and differing roles. A dialogue with no
/// eligible pairs yields an empty sequence.
inline std::vector<CandidatePair> build_candidate_pairs(const Dialogue& d) {
  std::vector<CandidatePair> out;
  const int T = static_cast<int>(d.turns.size());
  for (int i = 0; i < T; ++i) {
    if (d.turns[i].label != TurnLabel::Q) continue;
    for (int j = i + 1; j < T; ++j) {
      if (d.turns[j].label != TurnLabel::NQ) continue;
      if (d.turns[j].role == d.turns[i].role) continue;
      CandidatePair p;
      p.dialogue_id = d.id;
      p.q_index = i;
      p.nq_index = j;
      p.distance = j - i;
      for (int k = i + 1; k < j; ++k) {
        p.history.push_back(k);
        if (d.turns[k].role == d.turns[i].role) {
          p.h_rq.push_back(k);
        } else {
          p.h_rnq.push_back(k);
        }
      }
      p.gold = d.is_gold(i, j);
      out.push_back(std::move(p));
    }
  }
  return out;
}

}  // namespace qamatch
