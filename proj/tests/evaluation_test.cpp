#include "qamatch/evaluation.hpp"

#include <gtest/gtest.h>

#include "test_util.hpp"

using namespace qamatch;

namespace {

std::vector<MatchResult> preds_for(const std::string& id,
                                   std::vector<std::pair<int, int>> pairs) {
  MatchResult r;
  r.dialogue_id = id;
  r.pairs = std::move(pairs);
  return {r};
}

}  // namespace

TEST(MicroPrf, WorkedCasePartialPredictions) {
  const Dialogue d = testutil::worked_case_dialogue();
  const auto rep = micro_prf(preds_for(d.id, {{3, 4}, {0, 5}}), {d});
  EXPECT_EQ(rep.tp, 2);
  EXPECT_EQ(rep.fp, 0);
  EXPECT_EQ(rep.fn, 2);
  EXPECT_DOUBLE_EQ(rep.precision, 1.0);
  EXPECT_DOUBLE_EQ(rep.recall, 0.5);
  EXPECT_DOUBLE_EQ(rep.f1, 2.0 * 1.0 * 0.5 / 1.5);
}

TEST(MicroPrf, PerfectPredictions) {
  const Dialogue d = testutil::worked_case_dialogue();
  const auto rep = micro_prf(preds_for(d.id, d.gold_pairs), {d});
  EXPECT_DOUBLE_EQ(rep.precision, 1.0);
  EXPECT_DOUBLE_EQ(rep.recall, 1.0);
  EXPECT_DOUBLE_EQ(rep.f1, 1.0);
  for (const auto& [bucket, acc] : rep.acc_by_distance) EXPECT_DOUBLE_EQ(acc, 1.0);
}

TEST(MicroPrf, EmptyPredictionsScoreZero) {
  const Dialogue d = testutil::worked_case_dialogue();
  const auto rep = micro_prf({}, {d});
  EXPECT_EQ(rep.tp, 0);
  EXPECT_EQ(rep.fn, 4);
  EXPECT_DOUBLE_EQ(rep.precision, 0.0);
  EXPECT_DOUBLE_EQ(rep.recall, 0.0);
  EXPECT_DOUBLE_EQ(rep.f1, 0.0);
}

TEST(MicroPrf, UnknownDialogueIdIsAnError) {
  const Dialogue d = testutil::worked_case_dialogue();
  EXPECT_THROW(micro_prf(preds_for("nope", {{0, 5}}), {d}), DataError);
}

TEST(MicroPrf, DuplicateRecordsForOneDialogueAreAnError) {
  const Dialogue d = testutil::worked_case_dialogue();
  auto preds = preds_for(d.id, {{0, 5}});
  preds.push_back(preds[0]);
  EXPECT_THROW(micro_prf(preds, {d}), DataError);
}

TEST(AccAtDistance, WorkedCaseShortDistancePredictions) {
  // Predictions {(3,4)} only: gold distances are {1, 5, 6, 7}.
  const Dialogue d = testutil::worked_case_dialogue();
  const auto acc = acc_at_distance(preds_for(d.id, {{3, 4}}), {d});
  ASSERT_EQ(acc.size(), 2u);  // buckets 2..4 are empty, hence absent
  EXPECT_DOUBLE_EQ(acc.at(1), 1.0);
  EXPECT_DOUBLE_EQ(acc.at(5), 0.0);
}

TEST(AccAtDistance, ExactDistanceModeKeysByRealDistance) {
  const Dialogue d = testutil::worked_case_dialogue();
  const auto acc = acc_at_distance(preds_for(d.id, {{0, 6}, {3, 4}}), {d}, true);
  ASSERT_EQ(acc.size(), 4u);
  EXPECT_DOUBLE_EQ(acc.at(1), 1.0);
  EXPECT_DOUBLE_EQ(acc.at(5), 0.0);
  EXPECT_DOUBLE_EQ(acc.at(6), 1.0);
  EXPECT_DOUBLE_EQ(acc.at(7), 0.0);
}

TEST(AccAtDistance, ThresholdTwoScorerFillsLowBucketsOnly) {
  // A matcher accepting exactly distance <= 2 on gold covering all buckets.
  Dialogue d;
  d.id = "buckets";
  const char* roles[] = {"A", "B"};
  for (int i = 0; i < 14; ++i) {
    d.turns.push_back({i, roles[i % 2], i == 0 || i == 3 ? TurnLabel::Q : TurnLabel::NQ,
                       {"w"}});
  }
  // Gold distances 1 (3,4), 2 (0,2), 3 (3,6), 4 (0,4)... build carefully:
  d.gold_pairs = {{0, 1}, {0, 2}, {3, 6}, {3, 7}, {3, 8}};
  // distances: 1, 2, 3, 4, 5 with labels/roles adjusted:
  d.turns[1].role = "B";
  d.turns[2].role = "B";
  d.turns[6].role = "A";
  d.turns[7].role = "A";
  d.turns[8].role = "A";
  for (int i : {1, 2, 6, 7, 8}) d.turns[i].label = TurnLabel::NQ;
  validate_dialogue(d);
  std::vector<std::pair<int, int>> close;
  for (const auto& g : d.gold_pairs) {
    if (g.second - g.first <= 2) close.push_back(g);
  }
  const auto acc = acc_at_distance(preds_for(d.id, close), {d});
  EXPECT_DOUBLE_EQ(acc.at(1), 1.0);
  EXPECT_DOUBLE_EQ(acc.at(2), 1.0);
  EXPECT_DOUBLE_EQ(acc.at(3), 0.0);
  EXPECT_DOUBLE_EQ(acc.at(4), 0.0);
  EXPECT_DOUBLE_EQ(acc.at(5), 0.0);
}

TEST(MicroPrf, MatchesSetOracleOnRandomCases) {
  Rng rng(31337);
  for (int trial = 0; trial < 1000; ++trial) {
    const Dialogue d = testutil::random_dialogue(rng);
    // Random prediction set from the candidate universe.
    std::vector<std::pair<int, int>> pred;
    for (const CandidatePair& p : build_candidate_pairs(d)) {
      if (rng.below(2)) pred.emplace_back(p.q_index, p.nq_index);
    }
    const auto rep = micro_prf(preds_for(d.id, pred), {d});

    // Oracle by plain set operations.
    const std::set<std::pair<int, int>> ps(pred.begin(), pred.end());
    const std::set<std::pair<int, int>> gs(d.gold_pairs.begin(), d.gold_pairs.end());
    long long tp = 0, fp = 0, fn = 0;
    for (const auto& p : ps) (gs.count(p) ? tp : fp)++;
    for (const auto& gpair : gs) {
      if (!ps.count(gpair)) ++fn;
    }
    ASSERT_EQ(rep.tp, tp);
    ASSERT_EQ(rep.fp, fp);
    ASSERT_EQ(rep.fn, fn);
    const double prec = tp + fp ? double(tp) / double(tp + fp) : 0.0;
    const double rec = tp + fn ? double(tp) / double(tp + fn) : 0.0;
    ASSERT_DOUBLE_EQ(rep.precision, prec);
    ASSERT_DOUBLE_EQ(rep.recall, rec);
    ASSERT_DOUBLE_EQ(rep.f1, prec + rec > 0 ? 2 * prec * rec / (prec + rec) : 0.0);

    // Bucket counts are consistent with the pooled counts.
    long long hits = 0, totals = 0;
    for (const auto& [bucket, counts] : rep.acc_counts) {
      hits += counts.first;
      totals += counts.second;
    }
    ASSERT_EQ(hits, rep.tp);
    ASSERT_EQ(totals, rep.tp + rep.fn);
  }
}

TEST(MicroPrf, MonotoneUnderPairAdditions) {
  Rng rng(4242);
  for (int trial = 0; trial < 200; ++trial) {
    const Dialogue d = testutil::random_dialogue(rng);
    const auto cands = build_candidate_pairs(d);
    if (cands.empty()) continue;
    std::vector<std::pair<int, int>> pred;
    for (const CandidatePair& p : cands) {
      if (rng.below(3) == 0) pred.emplace_back(p.q_index, p.nq_index);
    }
    const auto base = micro_prf(preds_for(d.id, pred), {d});

    const CandidatePair& extra = cands[rng.below(cands.size())];
    const std::pair<int, int> added{extra.q_index, extra.nq_index};
    if (std::find(pred.begin(), pred.end(), added) != pred.end()) continue;
    auto extended = pred;
    extended.push_back(added);
    const auto after = micro_prf(preds_for(d.id, extended), {d});

    if (extra.gold) {
      ASSERT_GE(after.recall, base.recall);
      ASSERT_GE(after.f1, base.f1);
    } else {
      ASSERT_LE(after.precision, base.precision);
    }
  }
}

TEST(Report, SingleSystemSingleRow) {
  const Dialogue d = testutil::worked_case_dialogue();
  SystemResult s{"hdm", micro_prf(preds_for(d.id, d.gold_pairs), {d})};
  const std::string table = render_report_table({s});
  EXPECT_NE(table.find("hdm"), std::string::npos);
  EXPECT_EQ(std::count(table.begin(), table.end(), '\n'), 2);  // header + row
}

TEST(Report, EqualF1OrdersBySystemName) {
  const Dialogue d = testutil::worked_case_dialogue();
  const auto rep = micro_prf(preds_for(d.id, d.gold_pairs), {d});
  const std::string csv = render_report_csv({{"zeta", rep}, {"alpha", rep}});
  const auto alpha = csv.find("alpha");
  const auto zeta = csv.find("zeta");
  ASSERT_NE(alpha, std::string::npos);
  ASSERT_NE(zeta, std::string::npos);
  EXPECT_LT(alpha, zeta);
}

TEST(Report, CsvRoundTrips) {
  const Dialogue d = testutil::worked_case_dialogue();
  std::vector<SystemResult> systems{
      {"hdm", micro_prf(preds_for(d.id, d.gold_pairs), {d})},
      {"partial", micro_prf(preds_for(d.id, {{3, 4}, {0, 5}}), {d})},
      {"empty", micro_prf({}, {d})}};
  const auto parsed = parse_report_csv(render_report_csv(systems));
  ASSERT_EQ(parsed.size(), systems.size());
  // Rows come back in report order: f1 desc, then name.
  EXPECT_EQ(parsed[0].name, "hdm");
  EXPECT_EQ(parsed[1].name, "partial");
  EXPECT_EQ(parsed[2].name, "empty");
  for (const auto& got : parsed) {
    const SystemResult* want = nullptr;
    for (const auto& s : systems) {
      if (s.name == got.name) want = &s;
    }
    ASSERT_NE(want, nullptr);
    EXPECT_EQ(got.metrics.tp, want->metrics.tp);
    EXPECT_EQ(got.metrics.fp, want->metrics.fp);
    EXPECT_EQ(got.metrics.fn, want->metrics.fn);
    EXPECT_EQ(got.metrics.precision, want->metrics.precision);
    EXPECT_EQ(got.metrics.recall, want->metrics.recall);
    EXPECT_EQ(got.metrics.f1, want->metrics.f1);
    EXPECT_EQ(got.metrics.acc_by_distance, want->metrics.acc_by_distance);
    EXPECT_EQ(got.metrics.acc_counts, want->metrics.acc_counts);
  }
}
