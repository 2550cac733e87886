#include "qamatch/matcher.hpp"

#include <gtest/gtest.h>

#include <map>
#include <sstream>

#include "qamatch/pairs.hpp"
#include "test_util.hpp"

using namespace qamatch;

namespace {

PairScorer table_scorer(std::map<std::pair<int, int>, double> table) {
  return [table = std::move(table)](const Dialogue&, int q, int nq) {
    auto it = table.find({q, nq});
    return it == table.end() ? 0.0 : it->second;
  };
}

/// A dialogue where one NQ (index 4, role B) can answer Q1 or Q3 (role A).
Dialogue two_question_dialogue() {
  Dialogue d;
  d.id = "two-q";
  d.turns.push_back({0, "B", TurnLabel::NQ, {"x"}});
  d.turns.push_back({1, "A", TurnLabel::Q, {"q1"}});
  d.turns.push_back({2, "B", TurnLabel::NQ, {"x"}});
  d.turns.push_back({3, "A", TurnLabel::Q, {"q3"}});
  d.turns.push_back({4, "B", TurnLabel::NQ, {"a"}});
  return d;
}

/// Literal re-implementation of the scan rule, for the oracle-equivalence
/// property: claims collected per question, then optionally resolved.
std::set<std::pair<int, int>> gd_oracle(const Dialogue& d, bool multi, bool jump) {
  std::map<int, std::vector<int>> claims;
  const int T = static_cast<int>(d.turns.size());
  for (int i = 0; i < T; ++i) {
    if (d.turns[i].label != TurnLabel::Q) continue;
    for (int t = i + 1; t < T; ++t) {
      if (d.turns[t].label == TurnLabel::Q) break;
      if (d.turns[t].role == d.turns[i].role) {
        if (jump) continue;
        break;
      }
      claims[t].push_back(i);
      if (!multi) break;
    }
  }
  std::set<std::pair<int, int>> out;
  for (auto& [nq, qs] : claims) {
    int best = qs[0];
    for (int q : qs) best = std::max(best, q);
    out.emplace(best, nq);
  }
  return out;
}

}  // namespace

TEST(GreedyMatch, BelowThresholdStaysUnmatched) {
  const Dialogue d = two_question_dialogue();
  const auto r = greedy_match(d, table_scorer({{{1, 4}, 0.4}, {{3, 4}, 0.45},
                                               {{1, 0}, 0.0}, {{1, 2}, 0.1}, {{3, 2}, 0.0}}));
  EXPECT_TRUE(r.pairs.empty());
}

TEST(GreedyMatch, PicksMaximumProbabilityQuestion) {
  const Dialogue d = two_question_dialogue();
  const auto r = greedy_match(d, table_scorer({{{1, 4}, 0.9}, {{3, 4}, 0.6}}));
  ASSERT_EQ(r.pairs.size(), 1u);
  EXPECT_EQ(r.pairs[0], (std::pair<int, int>{1, 4}));
  EXPECT_DOUBLE_EQ(r.probs[0], 0.9);
}

TEST(GreedyMatch, TieGoesToNearestQuestion) {
  const Dialogue d = two_question_dialogue();
  const auto r = greedy_match(d, table_scorer({{{1, 4}, 0.8}, {{3, 4}, 0.8}}));
  ASSERT_EQ(r.pairs.size(), 1u);
  EXPECT_EQ(r.pairs[0], (std::pair<int, int>{3, 4}));
}

TEST(GreedyMatch, ExactThresholdIsExcluded) {
  const Dialogue d = two_question_dialogue();
  const auto r = greedy_match(d, table_scorer({{{1, 4}, 0.5}, {{3, 4}, 0.5}}));
  EXPECT_TRUE(r.pairs.empty());
}

TEST(GreedyMatch, EachNqMatchedAtMostOnceAtItsArgmax) {
  Rng rng(501);
  for (int trial = 0; trial < 200; ++trial) {
    const Dialogue d = testutil::random_dialogue(rng);
    // Deterministic pseudo-random probabilities: a pure function of (q, nq).
    const auto prob = [trial](int q, int nq) {
      const std::uint64_t h = detail::splitmix64(
          static_cast<std::uint64_t>(trial) * 1000003 + q * 971 + nq);
      return static_cast<double>(h >> 11) * 0x1.0p-53;
    };
    const auto r = greedy_match(
        d, [&prob](const Dialogue&, int q, int nq) { return prob(q, nq); });
    std::set<int> nqs;
    for (std::size_t k = 0; k < r.pairs.size(); ++k) {
      EXPECT_TRUE(nqs.insert(r.pairs[k].second).second);
      EXPECT_GT(r.probs[k], 0.5);
      // Emitted pairs are valid candidates and attain the maximum
      // probability among the NQ's candidates.
      const auto [q, nq] = r.pairs[k];
      EXPECT_LT(q, nq);
      EXPECT_EQ(d.turns[q].label, TurnLabel::Q);
      EXPECT_EQ(d.turns[nq].label, TurnLabel::NQ);
      EXPECT_NE(d.turns[q].role, d.turns[nq].role);
      for (int i = 0; i < nq; ++i) {
        if (d.turns[i].label == TurnLabel::Q && d.turns[i].role != d.turns[nq].role) {
          EXPECT_LE(prob(i, nq), prob(q, nq));
        }
      }
    }
  }
}

TEST(BaselineGd, WorkedCaseTraces) {
  const Dialogue d = testutil::worked_case_dialogue();
  const std::vector<std::pair<int, int>> expected{{0, 1}, {3, 4}};
  EXPECT_EQ(baseline_gd(d, gd_config_from_rule("gd1")).pairs, expected);
  EXPECT_EQ(baseline_gd(d, gd_config_from_rule("gdn")).pairs, expected);
  EXPECT_EQ(baseline_gd(d, gd_config_from_rule("gd1+j")).pairs, expected);
  EXPECT_EQ(baseline_gd(d, gd_config_from_rule("gdn+j")).pairs, expected);
}

TEST(BaselineGd, JumpSkipsAskersChitchat) {
  // A Q B-chat A-chat B-answer: without jump the scan stops at the asker's
  // own turn; with jump it reaches the answer.
  Dialogue d;
  d.id = "jump";
  d.turns.push_back({0, "A", TurnLabel::Q, {"q"}});
  d.turns.push_back({1, "A", TurnLabel::NQ, {"wait"}});
  d.turns.push_back({2, "B", TurnLabel::NQ, {"a"}});
  EXPECT_TRUE(baseline_gd(d, {false, false, true}).pairs.empty());
  EXPECT_EQ(baseline_gd(d, {false, true, true}).pairs,
            (std::vector<std::pair<int, int>>{{0, 2}}));
}

TEST(BaselineGd, MultiCollectsFragmentedAnswers) {
  Dialogue d;
  d.id = "frag";
  d.turns.push_back({0, "A", TurnLabel::Q, {"q"}});
  d.turns.push_back({1, "B", TurnLabel::NQ, {"a1"}});
  d.turns.push_back({2, "B", TurnLabel::NQ, {"a2"}});
  EXPECT_EQ(baseline_gd(d, {false, false, true}).pairs,
            (std::vector<std::pair<int, int>>{{0, 1}}));
  EXPECT_EQ(baseline_gd(d, {true, false, true}).pairs,
            (std::vector<std::pair<int, int>>{{0, 1}, {0, 2}}));
}

TEST(BaselineGd, MatchesNaiveScanOracle) {
  Rng rng(909);
  for (int trial = 0; trial < 1000; ++trial) {
    const Dialogue d = testutil::random_dialogue(rng);
    for (bool multi : {false, true}) {
      for (bool jump : {false, true}) {
        const auto got = baseline_gd(d, {multi, jump, true});
        const std::set<std::pair<int, int>> got_set(got.pairs.begin(), got.pairs.end());
        ASSERT_EQ(got_set, gd_oracle(d, multi, jump))
            << "multi=" << multi << " jump=" << jump << " id=" << d.id;
      }
    }
  }
}

TEST(BaselineGd, Gd1IsFirstElementOfGdn) {
  Rng rng(911);
  for (int trial = 0; trial < 300; ++trial) {
    const Dialogue d = testutil::random_dialogue(rng);
    const auto gd1 = baseline_gd(d, {false, false, false});
    const auto gdn = baseline_gd(d, {true, false, false});
    // Per question: the single gd1 match is gdn's first match for that q.
    std::map<int, int> gd1_by_q, gdn_first_by_q;
    for (const auto& [q, nq] : gd1.pairs) gd1_by_q[q] = nq;
    for (const auto& [q, nq] : gdn.pairs) {
      if (!gdn_first_by_q.count(q)) gdn_first_by_q[q] = nq;
    }
    for (const auto& [q, nq] : gd1_by_q) {
      ASSERT_TRUE(gdn_first_by_q.count(q));
      ASSERT_EQ(gdn_first_by_q[q], nq);
    }
  }
}

TEST(BaselineGd, EmitsOnlyValidCandidates) {
  Rng rng(913);
  for (int trial = 0; trial < 300; ++trial) {
    const Dialogue d = testutil::random_dialogue(rng);
    for (bool multi : {false, true}) {
      for (bool jump : {false, true}) {
        for (const auto& [q, nq] : baseline_gd(d, {multi, jump, true}).pairs) {
          ASSERT_LT(q, nq);
          ASSERT_EQ(d.turns[q].label, TurnLabel::Q);
          ASSERT_EQ(d.turns[nq].label, TurnLabel::NQ);
          ASSERT_NE(d.turns[q].role, d.turns[nq].role);
        }
      }
    }
  }
}

TEST(DistanceBaseline, EqualDistanceEqualScore) {
  DistanceBaseline bl = DistanceBaseline::train(
      {{1, true}, {1, true}, {1, false}, {2, false}, {5, false}, {5, true}});
  EXPECT_DOUBLE_EQ(bl.score(5), bl.score(5));
  const Dialogue d = testutil::worked_case_dialogue();
  EXPECT_DOUBLE_EQ(bl.scorer()(d, 0, 5), bl.score(5));
}

TEST(DistanceBaseline, LearnsBucketSeparation) {
  std::vector<std::pair<int, bool>> examples;
  for (int i = 0; i < 40; ++i) {
    examples.emplace_back(1, true);
    examples.emplace_back(5, false);
  }
  DistanceBaseline bl = DistanceBaseline::train(examples);
  EXPECT_GT(bl.score(1), 0.5);
  EXPECT_LT(bl.score(5), 0.5);
}

TEST(DistanceBaseline, ClampsBucketTen) {
  DistanceBaseline bl = DistanceBaseline::train({{1, true}, {10, false}, {3, false}});
  EXPECT_DOUBLE_EQ(bl.score(10), bl.score(37));
}

TEST(PredictionsIo, RoundTrips) {
  std::vector<MatchResult> rs;
  rs.push_back({"d1", {{0, 1}, {3, 4}}, {0.9, 0.7}});
  rs.push_back({"d2", {}, {}});
  std::ostringstream os;
  write_predictions(os, rs);
  std::istringstream is(os.str());
  const auto back = read_predictions(is);
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0].dialogue_id, "d1");
  EXPECT_EQ(back[0].pairs, rs[0].pairs);
  EXPECT_EQ(back[0].probs, rs[0].probs);
  EXPECT_TRUE(back[1].pairs.empty());
}
