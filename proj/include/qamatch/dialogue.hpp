#pragma once

#include <algorithm>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "qamatch/common.hpp"

namespace qamatch {

enum class TurnLabel { Q, NQ };

inline const char* to_string(TurnLabel l) { return l == TurnLabel::Q ? "Q" : "NQ"; }

/// One utterance. `index` is the 0-based position within its dialogue; the
/// token sequence is never empty for a valid dialogue.
struct Turn {
  int index = 0;
  std::string role;
  TurnLabel label = TurnLabel::NQ;
  std::vector<std::string> tokens;
};

/// A two-party dialogue with gold question->answer links. gold_pairs holds
/// (q_index, a_index), 0-based, kept sorted and deduplicated by the readers.
struct Dialogue {
  std::string id;
  std::vector<Turn> turns;
  std::vector<std::pair<int, int>> gold_pairs;

  bool is_gold(int q, int a) const {
    return std::find(gold_pairs.begin(), gold_pairs.end(),
                     std::make_pair(q, a)) != gold_pairs.end();
  }
};

/// Checks every structural invariant and returns the input unchanged.
/// Throws DataError describing the first violation, with turn indices.
inline const Dialogue& validate_dialogue(const Dialogue& d) {
  auto fail = [&d](const std::string& what) -> void {
    throw DataError("dialogue \"" + d.id + "\": " + what);
  };

  if (d.turns.size() < 2) fail("needs at least 2 turns, has " + std::to_string(d.turns.size()));

  std::set<std::string> roles;
  for (std::size_t i = 0; i < d.turns.size(); ++i) {
    const Turn& t = d.turns[i];
    if (t.index != static_cast<int>(i)) {
      fail("turn " + std::to_string(i) + " carries index " + std::to_string(t.index));
    }
    if (t.role.empty()) fail("turn " + std::to_string(i) + " has an empty role");
    roles.insert(t.role);
    if (t.tokens.empty()) fail("turn " + std::to_string(i) + " has no tokens");
  }
  if (roles.size() > 2) {
    fail("more than two roles (" + std::to_string(roles.size()) + " distinct)");
  }

  const int T = static_cast<int>(d.turns.size());
  std::set<int> answered;
  for (const auto& [q, a] : d.gold_pairs) {
    const std::string where = " in gold pair (" + std::to_string(q) + ", " + std::to_string(a) + ")";
    if (q < 0 || q >= T || a < 0 || a >= T) fail("turn index out of range" + where);
    if (a <= q) fail("answer precedes question" + where);
    if (d.turns[q].label != TurnLabel::Q) fail("question turn not labeled Q" + where);
    if (d.turns[a].label != TurnLabel::NQ) fail("answer turn not labeled NQ" + where);
    if (d.turns[q].role == d.turns[a].role) fail("question and answer share one role" + where);
    if (!answered.insert(a).second) {
      fail("turn " + std::to_string(a) + " answers more than one question");
    }
  }
  return d;
}

}  // namespace qamatch
