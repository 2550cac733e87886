#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "qamatch/dialogue.hpp"
#include "qamatch/rng.hpp"

namespace qamatch {

/// Knobs for the synthetic two-party corpus. Dialogues are built from
/// blocks:
///   direct QA      "ask <k>" answered by "ans <k>" (same planted key),
///                  optionally delayed by a chat turn, optionally followed
///                  by a fragment "more <k>" and/or a decoy "final <b'>"
///                  whose bridge token matches nothing in the dialogue;
///   incremental    "ask <k>" / follow-up "probe <b>" / "tell <b>" /
///                  padding / "final <b>" -- the final answer shares its
///                  bridge token only with the intervening follow-up
///                  exchange, never with the question, so matching it
///                  requires the history, and its distance (>= 3) overlaps
///                  the decoys' and cross-question candidates' distances so
///                  distance alone cannot separate them;
///   unanswered ask and chit-chat filler.
/// `incremental_fraction` is the fraction of dialogues carrying one such
/// chain (at least one when positive); chain dialogues always contain an
/// extra earlier question so the final answer has competing candidates.
struct SyntheticSpec {
  int n_dialogues = 50;
  int min_turns = 6;
  int max_turns = 12;
  int vocab_size = 60;  // content tokens, split across key/bridge/chat pools
  double incremental_fraction = 0.3;
  std::uint64_t seed = 1;
};

namespace synth_detail {

struct Pools {
  std::vector<std::string> keys, bridges, chats;
  std::size_t next_key = 0, next_bridge = 0;

  const std::string& take_key(Rng& rng) {
    if (next_key >= keys.size()) {
      rng.shuffle(keys);
      next_key = 0;
    }
    return keys[next_key++];
  }
  const std::string& take_bridge(Rng& rng) {
    if (next_bridge >= bridges.size()) {
      rng.shuffle(bridges);
      next_bridge = 0;
    }
    return bridges[next_bridge++];
  }
  const std::string& chat(Rng& rng) { return chats[rng.below(chats.size())]; }
};

class Builder {
 public:
  Builder(Rng& rng, Pools& pools, int max_turns)
      : rng_(rng), pools_(pools), max_turns_(max_turns) {}

  int size() const { return static_cast<int>(turns_.size()); }
  int room() const { return max_turns_ - size(); }
  bool has_gold() const { return !gold_.empty(); }

  void chat_turn(const std::string& role) {
    push(role, TurnLabel::NQ, {"chat", pools_.chat(rng_)});
  }

  void direct_block(const std::string& asker, const std::string& other,
                    bool plain = false) {
    const std::string key = pools_.take_key(rng_);
    const int ask = push(asker, TurnLabel::Q, {"ask", key});
    bool delayed = false;
    if (!plain && room() >= 2 && rng_.uniform01() < 0.25) {
      chat_turn(other);
      delayed = true;
    }
    const int ans = push(other, TurnLabel::NQ, {"ans", key});
    gold_.emplace_back(ask, ans);
    if (plain) return;
    // Fragmented second answer; only after an undelayed answer so direct
    // blocks never produce gold distances beyond 2.
    if (!delayed && room() >= 1 && rng_.uniform01() < 0.2) {
      gold_.emplace_back(ask, push(other, TurnLabel::NQ, {"more", key}));
    }
    // Decoy: a final-shaped turn whose bridge token matches nothing; keeps
    // "final at short distance" from being a usable shortcut.
    if (room() >= 1 && rng_.uniform01() < 0.4) {
      if (room() >= 2 && rng_.uniform01() < 0.35) chat_turn(other);
      push(other, TurnLabel::NQ, {"final", pools_.take_bridge(rng_)});
    }
  }

  void unanswered_block(const std::string& asker, const std::string& other,
                        bool allow_chat = true) {
    push(asker, TurnLabel::Q, {"ask", pools_.take_key(rng_)});
    if (allow_chat && room() >= 1 && rng_.uniform01() < 0.5) chat_turn(other);
  }

  /// ask / (chat) / probe / tell / (pads) / final; needs room >= 4.
  void chain_block(const std::string& asker, const std::string& other) {
    const std::string key = pools_.take_key(rng_);
    const std::string bridge = pools_.take_bridge(rng_);
    const int ask = push(asker, TurnLabel::Q, {"ask", key});
    if (room() >= 5 && rng_.uniform01() < 0.3) chat_turn(other);
    const int probe = push(other, TurnLabel::Q, {"probe", bridge});
    const int tell = push(asker, TurnLabel::NQ, {"tell", bridge});
    gold_.emplace_back(probe, tell);
    int pads = static_cast<int>(rng_.below(3));
    pads = std::max(0, std::min(pads, room() - 1));
    for (int k = 0; k < pads; ++k) {
      chat_turn(rng_.uniform01() < 0.5 ? asker : other);
    }
    const int fin = push(other, TurnLabel::NQ, {"final", bridge});
    gold_.emplace_back(ask, fin);
  }

  Dialogue finish(const std::string& id) {
    Dialogue d;
    d.id = id;
    d.turns = std::move(turns_);
    std::sort(gold_.begin(), gold_.end());
    d.gold_pairs = std::move(gold_);
    return d;
  }

 private:
  int push(const std::string& role, TurnLabel label, std::vector<std::string> tokens) {
    if (rng_.uniform01() < 0.2) tokens.push_back(pools_.chat(rng_));
    Turn t;
    t.index = static_cast<int>(turns_.size());
    t.role = role;
    t.label = label;
    t.tokens = std::move(tokens);
    turns_.push_back(std::move(t));
    return t.index;
  }

  Rng& rng_;
  Pools& pools_;
  int max_turns_;
  std::vector<Turn> turns_;
  std::vector<std::pair<int, int>> gold_;
};

}  // namespace synth_detail

inline std::vector<Dialogue> synth_corpus(const SyntheticSpec& spec) {
  if (spec.n_dialogues < 1) throw UsageError("synth: n_dialogues must be >= 1");
  if (spec.min_turns < 2 || spec.max_turns < spec.min_turns) {
    throw UsageError("synth: bad turns range [" + std::to_string(spec.min_turns) +
                     ", " + std::to_string(spec.max_turns) + "]");
  }
  if (spec.incremental_fraction < 0.0 || spec.incremental_fraction > 1.0) {
    throw UsageError("synth: incremental_fraction must be in [0, 1]");
  }
  if (spec.incremental_fraction > 0.0 && spec.max_turns < 5) {
    throw UsageError("synth: turns range too small for incremental chains (max_turns >= 5)");
  }
  if (spec.vocab_size < 12) throw UsageError("synth: vocab_size must be >= 12");

  Rng corpus_rng = Rng(spec.seed).substream("synth");
  synth_detail::Pools pools;
  const int per_pool = spec.vocab_size / 3;
  for (int i = 0; i < per_pool; ++i) {
    pools.keys.push_back("k" + std::to_string(i));
    pools.bridges.push_back("b" + std::to_string(i));
    pools.chats.push_back("c" + std::to_string(i + 2 * per_pool));
  }

  // Chain assignment: a fixed count, at least one when the fraction is
  // positive, shuffled across dialogue slots.
  const int n = spec.n_dialogues;
  int chain_count = static_cast<int>(std::llround(spec.incremental_fraction * n));
  if (spec.incremental_fraction > 0.0 && chain_count == 0) chain_count = 1;
  std::vector<char> has_chain(static_cast<std::size_t>(n), 0);
  for (int i = 0; i < chain_count; ++i) has_chain[static_cast<std::size_t>(i)] = 1;
  corpus_rng.shuffle(has_chain);

  std::vector<Dialogue> out;
  out.reserve(static_cast<std::size_t>(n));
  for (int di = 0; di < n; ++di) {
    Rng rng = corpus_rng.substream("dialogue-" + std::to_string(di));
    pools.next_key = pools.keys.size();      // reshuffle per dialogue
    pools.next_bridge = pools.bridges.size();

    int target = spec.min_turns + static_cast<int>(rng.below(
                     static_cast<std::uint64_t>(spec.max_turns - spec.min_turns + 1)));
    if (has_chain[static_cast<std::size_t>(di)]) {
      target = std::max(target, std::min(spec.max_turns, 7));
    }
    synth_detail::Builder b(rng, pools, spec.max_turns);

    auto pick_roles = [&rng]() {
      const bool swap = rng.uniform01() < 0.25;
      return std::pair<std::string, std::string>(swap ? "P2" : "P1",
                                                 swap ? "P1" : "P2");
    };

    if (has_chain[static_cast<std::size_t>(di)]) {
      auto [asker, other] = pick_roles();
      // The whole chain shares one asker so the final answer's competing
      // candidate questions come from the same speaker.
      if (b.room() >= 7 && rng.uniform01() < 0.5) {
        b.direct_block(asker, other, /*plain=*/true);
      } else {
        b.unanswered_block(asker, other, /*allow_chat=*/b.room() >= 6);
      }
      if (b.room() >= 6 && rng.uniform01() < 0.5) {
        b.chat_turn(rng.uniform01() < 0.5 ? asker : other);
      }
      b.chain_block(asker, other);
    }
    while (b.size() < target) {
      auto [asker, other] = pick_roles();
      if (!b.has_gold() && b.room() >= 2) {
        b.direct_block(asker, other);
        continue;
      }
      const double u = rng.uniform01();
      if (u < 0.45 && b.room() >= 2) {
        b.direct_block(asker, other);
      } else if (u < 0.7 && b.room() >= 1) {
        b.unanswered_block(asker, other);
      } else if (b.room() >= 1) {
        b.chat_turn(asker);
      } else {
        break;
      }
    }

    Dialogue d = b.finish("synth-" + std::to_string(di));
    validate_dialogue(d);
    out.push_back(std::move(d));
  }
  return out;
}

}  // namespace qamatch
