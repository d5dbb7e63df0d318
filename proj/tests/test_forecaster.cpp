#include <algorithm>
#include <set>

#include <gtest/gtest.h>

#include "pilf/forecaster.hpp"
#include "support/tiny_run.hpp"

using namespace pilf;

namespace {
check::TinyRun& tiny() {
  static check::TinyRun run;
  return run;
}
}  // namespace

TEST(EpochBatches, EveryWindowExactlyOnce) {
  for (std::size_t seg : {1u, 8u}) {
    Rng rng = derive_rng(1, seg);
    for (std::size_t n : {1u, 7u, 100u, 1001u}) {
      const auto batches = epoch_batches(n, 64, seg, rng);
      std::vector<std::size_t> all;
      for (const auto& b : batches) {
        EXPECT_LE(b.size(), 64u);
        EXPECT_FALSE(b.empty());
        all.insert(all.end(), b.begin(), b.end());
      }
      std::sort(all.begin(), all.end());
      ASSERT_EQ(all.size(), n);
      for (std::size_t i = 0; i < n; ++i) EXPECT_EQ(all[i], i);
    }
  }
}

TEST(EpochBatches, SegmentsKeepConsecutiveRuns) {
  Rng rng = derive_rng(2, 2);
  const auto batches = epoch_batches(640, 64, 8, rng);
  std::size_t adjacent = 0, total = 0;
  for (const auto& b : batches)
    for (std::size_t k = 1; k < b.size(); ++k, ++total) adjacent += b[k] == b[k - 1] + 1;
  // 7 of every 8 neighbours inside a segment are consecutive hours
  EXPECT_GE(adjacent * 8, total * 6);
}

TEST(Train, ZeroLambdaLeavesPhysicsTermsAtZero) {
  auto& run = tiny();
  RunConfig c = run.config;
  c.physics.lambda1 = 0;
  c.physics.lambda2 = 0;
  const auto tb = train_one(BranchKind::cnn, run.data, run.physics, c);
  ASSERT_EQ(tb.history.epochs.size(), c.train.max_epochs);
  for (const auto& e : tb.history.epochs) {
    EXPECT_EQ(e.train_parabolic, 0.0);
    EXPECT_EQ(e.train_ramp, 0.0);
    EXPECT_EQ(e.train_loss, e.train_mse);
  }
}

TEST(Train, BestEpochIsRestored) {
  auto& run = tiny();
  const auto tb = train_one(BranchKind::transformer, run.data, run.physics, run.config);
  const auto& h = tb.history;
  ASSERT_GE(h.best_epoch, 1u);
  double best = h.epochs.front().val_mae;
  for (const auto& e : h.epochs) best = std::min(best, e.val_mae);
  EXPECT_EQ(h.best_val_mae, best);
  EXPECT_EQ(h.epochs[h.best_epoch - 1].val_mae, best);
  const auto pred = tb.predict(run.data.windows.val);
  EXPECT_EQ(mean_abs_error(pred, run.data.windows.val.targets_mw), best);
}

TEST(Train, SameSeedSameWeightsAndPredictions) {
  auto& run = tiny();
  const auto a = train_one(BranchKind::cnn, run.data, run.physics, run.config);
  const auto b = train_one(BranchKind::cnn, run.data, run.physics, run.config);
  EXPECT_EQ(checkpoint_to_json(a).dump(), checkpoint_to_json(b).dump());
  const auto& test = run.data.windows.test;
  const auto pa = a.predict(test);
  EXPECT_EQ(pa.size(), test.size());
  EXPECT_EQ(pa, a.predict(test));
}

TEST(Train, CheckpointRoundTripReproducesPredictions) {
  auto& run = tiny();
  const auto tb = train_one(BranchKind::transformer, run.data, run.physics, run.config);
  const auto back = checkpoint_from_json(nlohmann::json::parse(checkpoint_to_json(tb).dump()));
  EXPECT_EQ(back.predict(run.data.windows.test), tb.predict(run.data.windows.test));
  EXPECT_EQ(back.history.best_epoch, tb.history.best_epoch);
}

TEST(Train, InvalidConfigRejected) {
  TrainConfig t;
  t.patience = t.max_epochs;
  EXPECT_THROW(t.validate(), Error);
  t = {};
  t.lambda1 = -1;
  EXPECT_THROW(t.validate(), Error);
  EXPECT_THROW(branch_kind_from_string("rnn"), Error);
  nlohmann::json bad = {{"schema", "pilf.checkpoint/0"}};
  EXPECT_THROW(checkpoint_from_json(bad), Error);
}
