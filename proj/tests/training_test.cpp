#include "qamatch/training.hpp"

#include <gtest/gtest.h>

#include <cmath>

#include "qamatch/synth.hpp"
#include "test_util.hpp"

using namespace qamatch;

namespace {

struct Fixture {
  std::vector<Dialogue> dialogues;
  EmbeddingMatrix embeddings;
};

Fixture tiny_fixture(int n_dialogues, std::uint64_t seed = 11) {
  SyntheticSpec spec;
  spec.n_dialogues = n_dialogues;
  spec.min_turns = 4;
  spec.max_turns = 8;
  spec.incremental_fraction = 0.3;
  spec.seed = seed;
  Fixture f;
  f.dialogues = synth_corpus(spec);
  std::vector<std::vector<std::string>> corpus;
  for (const Dialogue& d : f.dialogues) {
    for (const Turn& t : d.turns) corpus.push_back(t.tokens);
  }
  const Vocabulary vocab = Vocabulary::build(corpus, 1);
  Rng rng(seed);
  f.embeddings = init_embeddings(vocab, 8, rng);
  for (double& x : f.embeddings.matrix.data) x *= 40.0;
  return f;
}

ModelConfig tiny_model(Variant v = Variant::HDM) {
  ModelConfig cfg;
  cfg.variant = v;
  cfg.embedding_dim = 8;
  cfg.encoder_hidden = 4;
  cfg.match_hidden = 8;
  cfg.dropout = 0.1;
  return cfg;
}

}  // namespace

TEST(EarlyStopper, SpecSequenceStopsAfterFiveAndKeepsEpochTwo) {
  // Losses 1.0, 0.9, 0.95, 0.92, 0.94 with patience 3: three non-improving
  // epochs after the 0.9, so training stops at the fifth epoch and the
  // second epoch's parameters are the ones to restore.
  EarlyStopper s(3);
  EXPECT_FALSE(s.observe(0, 1.0));
  EXPECT_FALSE(s.observe(1, 0.9));
  EXPECT_FALSE(s.observe(2, 0.95));
  EXPECT_FALSE(s.observe(3, 0.92));
  EXPECT_TRUE(s.observe(4, 0.94));
  EXPECT_EQ(s.best_epoch(), 1);
  EXPECT_DOUBLE_EQ(s.best_loss(), 0.9);
}

TEST(EarlyStopper, ImprovementResetsTheStreak) {
  EarlyStopper s(2);
  EXPECT_FALSE(s.observe(0, 1.0));
  EXPECT_FALSE(s.observe(1, 1.1));
  EXPECT_FALSE(s.observe(2, 0.8));
  EXPECT_FALSE(s.observe(3, 0.85));
  EXPECT_TRUE(s.observe(4, 0.9));
  EXPECT_EQ(s.best_epoch(), 2);
}

TEST(EarlyStopper, RejectsZeroPatience) {
  EXPECT_THROW(EarlyStopper(0), UsageError);
}

TEST(Train, LearningRateDecaysPerEpoch) {
  Fixture f = tiny_fixture(6);
  TrainConfig cfg;
  cfg.max_epochs = 3;
  cfg.patience = 10;
  cfg.batch_size = 16;
  cfg.eval_dev_f1 = false;
  TrainResult r = train(tiny_model(), f.embeddings, f.dialogues, f.dialogues, cfg, 1);
  ASSERT_EQ(r.log.epochs.size(), 3u);
  EXPECT_DOUBLE_EQ(r.log.epochs[0].lr, 0.001);
  EXPECT_DOUBLE_EQ(r.log.epochs[1].lr, 0.001 * 0.95);
  EXPECT_NEAR(r.log.epochs[2].lr, 0.0009025, 1e-12);
  for (const EpochLog& e : r.log.epochs) {
    EXPECT_NEAR(e.lr, 0.001 * std::pow(0.95, e.epoch), 1e-15);
  }
}

TEST(Train, DeterministicLogUnderFixedSeed) {
  Fixture f = tiny_fixture(6);
  TrainConfig cfg;
  cfg.max_epochs = 3;
  cfg.batch_size = 8;
  auto run = [&]() { return train(tiny_model(), f.embeddings, f.dialogues, f.dialogues, cfg, 7); };
  const TrainResult a = run();
  const TrainResult b = run();
  ASSERT_EQ(a.log.epochs.size(), b.log.epochs.size());
  for (std::size_t e = 0; e < a.log.epochs.size(); ++e) {
    EXPECT_EQ(a.log.epochs[e].train_loss, b.log.epochs[e].train_loss);
    EXPECT_EQ(a.log.epochs[e].dev_loss, b.log.epochs[e].dev_loss);
    EXPECT_EQ(a.log.epochs[e].dev_f1, b.log.epochs[e].dev_f1);
    EXPECT_EQ(a.log.epochs[e].lr, b.log.epochs[e].lr);
  }
  EXPECT_EQ(a.log.best_epoch, b.log.best_epoch);
  for (std::size_t i = 0; i < a.model->params().size(); ++i) {
    EXPECT_EQ(a.model->params()[i].value.data, b.model->params()[i].value.data);
  }
}

TEST(Train, EmptyTrainingSetIsAnError) {
  Fixture f = tiny_fixture(2);
  TrainConfig cfg;
  EXPECT_THROW(train(tiny_model(), f.embeddings, {}, f.dialogues, cfg, 1), DataError);
}

TEST(Train, SingleClassTrainingSetWarns) {
  // One dialogue, one eligible pair, labeled positive: single-class.
  Dialogue d;
  d.id = "single";
  d.turns.push_back({0, "P1", TurnLabel::Q, {"ask", "k1"}});
  d.turns.push_back({1, "P2", TurnLabel::NQ, {"ans", "k1"}});
  d.gold_pairs = {{0, 1}};
  Fixture f = tiny_fixture(3);
  TrainConfig cfg;
  cfg.max_epochs = 1;
  cfg.eval_dev_f1 = false;
  TrainResult r = train(tiny_model(), f.embeddings, {d}, {}, cfg, 1);
  bool found = false;
  for (const auto& w : r.log.warnings) {
    found = found || w.find("single-class") != std::string::npos;
  }
  EXPECT_TRUE(found);
}

TEST(Train, RestoredParametersEqualBestEpochSnapshot) {
  Fixture f = tiny_fixture(8);
  TrainConfig cfg;
  cfg.max_epochs = 6;
  cfg.patience = 2;
  cfg.batch_size = 16;
  cfg.eval_dev_f1 = false;
  std::vector<nn::Tensor> last_improvement;
  int fired_at = -1;
  TrainResult r = train(tiny_model(), f.embeddings, f.dialogues, f.dialogues, cfg, 3,
                        [&](const Model& m, const TrainLog& log) {
                          last_improvement = m.snapshot();
                          fired_at = log.best_epoch;
                        });
  ASSERT_GE(fired_at, 0);
  EXPECT_EQ(fired_at, r.log.best_epoch);
  ASSERT_EQ(last_improvement.size(), r.model->params().size());
  for (std::size_t i = 0; i < last_improvement.size(); ++i) {
    EXPECT_EQ(last_improvement[i].data, r.model->params()[i].value.data);
  }
}

TEST(Train, LossTrendsDownForEveryVariant) {
  Fixture f = tiny_fixture(6);
  for (Variant v : {Variant::HDM, Variant::DIS, Variant::HTY, Variant::QH,
                    Variant::AH, Variant::NM, Variant::ID, Variant::MLSTM}) {
    TrainConfig cfg;
    cfg.max_epochs = 10;
    cfg.patience = 50;
    cfg.batch_size = 16;
    cfg.lr = 0.003;
    cfg.eval_dev_f1 = false;
    TrainResult r = train(tiny_model(v), f.embeddings, f.dialogues, {}, cfg, 5);
    ASSERT_EQ(r.log.epochs.size(), 10u) << to_string(v);
    EXPECT_LT(r.log.epochs[9].train_loss, r.log.epochs[0].train_loss) << to_string(v);
  }
}

TEST(RunMultiSeed, OneSeedMeanEqualsThatRun) {
  Fixture f = tiny_fixture(5);
  TrainConfig cfg;
  cfg.max_epochs = 2;
  cfg.batch_size = 16;
  cfg.seeds = {9};
  const MultiSeedResult r = run_multi_seed(tiny_model(), f.embeddings, f.dialogues,
                                           f.dialogues, f.dialogues, cfg);
  ASSERT_EQ(r.per_seed.size(), 1u);
  EXPECT_DOUBLE_EQ(r.mean_f1, r.per_seed[0].report.f1);
  EXPECT_DOUBLE_EQ(r.mean_precision, r.per_seed[0].report.precision);
}

TEST(RunMultiSeed, MeanIsTheArithmeticMeanAndSeedOrderIrrelevant) {
  Fixture f = tiny_fixture(5);
  TrainConfig cfg;
  cfg.max_epochs = 2;
  cfg.batch_size = 16;
  cfg.seeds = {1, 2, 3};
  const MultiSeedResult r = run_multi_seed(tiny_model(), f.embeddings, f.dialogues,
                                           f.dialogues, f.dialogues, cfg);
  ASSERT_EQ(r.per_seed.size(), 3u);
  double mean = 0.0;
  for (const SeedRun& s : r.per_seed) mean += s.report.f1 / 3.0;
  EXPECT_NEAR(r.mean_f1, mean, 1e-12);

  cfg.seeds = {3, 1, 2};
  const MultiSeedResult rp = run_multi_seed(tiny_model(), f.embeddings, f.dialogues,
                                            f.dialogues, f.dialogues, cfg);
  EXPECT_NEAR(r.mean_f1, rp.mean_f1, 1e-12);
  EXPECT_NEAR(r.mean_precision, rp.mean_precision, 1e-12);
  EXPECT_NEAR(r.mean_recall, rp.mean_recall, 1e-12);
}

TEST(RunMultiSeed, NoSeedsIsAnError) {
  Fixture f = tiny_fixture(3);
  TrainConfig cfg;
  cfg.seeds = {};
  EXPECT_THROW(run_multi_seed(tiny_model(), f.embeddings, f.dialogues, f.dialogues,
                              f.dialogues, cfg),
               UsageError);
}
