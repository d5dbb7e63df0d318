#include <cmath>

#include <gtest/gtest.h>

#include "pilf/nn/adam.hpp"
#include "pilf/nn/attention.hpp"
#include "pilf/nn/layers.hpp"
#include "support/gradcheck.hpp"

using namespace pilf;

class LayerGradient : public ::testing::TestWithParam<std::size_t> {};

TEST_P(LayerGradient, MatchesCentralDifferences) {
  const auto& check = check::layer_checks()[GetParam()];
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    const auto r = check.run(seed);
    EXPECT_LT(r.max_rel_error, check.tolerance) << check.name << " seed " << seed << " worst " << r.worst;
  }
}

INSTANTIATE_TEST_SUITE_P(AllLayers, LayerGradient,
                         ::testing::Range<std::size_t>(0, check::layer_checks().size()),
                         [](const auto& info) { return std::string(check::layer_checks()[info.param].name); });

TEST(Softmax, TwoColumnRow) {
  Matrix s(1, 2);
  s << 0.0, std::log(3.0);
  const Matrix p = nn::softmax_rows(s);
  EXPECT_NEAR(p(0, 0), 0.25, 1e-15);
  EXPECT_NEAR(p(0, 1), 0.75, 1e-15);
}

TEST(Softmax, LargeScoresStayFinite) {
  Matrix s(1, 3);
  s << 1000.0, 1001.0, 999.0;
  const Matrix p = nn::softmax_rows(s);
  EXPECT_TRUE(p.allFinite());
  EXPECT_NEAR(p.sum(), 1.0, 1e-12);
}

TEST(PositionalEncoding, SinusoidValues) {
  const Matrix pe = nn::positional_encoding(3, 4);
  EXPECT_DOUBLE_EQ(pe(0, 0), 0.0);
  EXPECT_DOUBLE_EQ(pe(0, 1), 1.0);
  EXPECT_NEAR(pe(1, 0), 0.841471, 1e-6);
  EXPECT_NEAR(pe(1, 1), std::cos(1.0), 1e-12);
  EXPECT_NEAR(pe(1, 2), std::sin(1.0 / 100.0), 1e-12);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  nn::Parameter p;
  p.resize(1, 2);
  p.value << 1.0, -1.0;
  p.grad << 0.5, -3.0;
  nn::ParameterSet set;
  set.add("p", p);
  nn::AdamState st;
  st.lr = 0.1;
  nn::adam_step(set, st);
  // bias-corrected first step is lr * sign(g) up to eps
  EXPECT_NEAR(p.value(0, 0), 0.9, 1e-6);
  EXPECT_NEAR(p.value(0, 1), -0.9, 1e-6);
}

TEST(Adam, RejectsBadBetas) {
  nn::ParameterSet set;
  nn::AdamState st;
  st.beta1 = 1.0;
  EXPECT_THROW(nn::adam_step(set, st), Error);
}

TEST(Dropout, InferIsIdentityTrainPreservesMean) {
  Rng rng = derive_rng(3, 3);
  const Matrix x = Matrix::Ones(200, 50);
  nn::Dropout d(0.2);
  EXPECT_EQ(d.forward(x, nn::Mode::infer, rng), x);
  const Matrix y = d.forward(x, nn::Mode::train, rng);
  EXPECT_NEAR(y.mean(), 1.0, 0.02);
  const double zeros = static_cast<double>((y.array() == 0.0).count()) / static_cast<double>(y.size());
  EXPECT_NEAR(zeros, 0.2, 0.02);
}

TEST(Dropout, RejectsRateOne) { EXPECT_THROW(nn::Dropout(1.0), Error); }

TEST(BatchNorm, TrainOutputIsStandardizedPerChannel) {
  Rng rng = derive_rng(4, 4);
  nn::BatchNorm bn(3);
  const Matrix x = check::random_matrix(50, 3, rng, 5.0).array() + 2.0;
  const Matrix y = bn.forward(x, nn::Mode::train);
  for (Eigen::Index c = 0; c < 3; ++c) {
    EXPECT_NEAR(y.col(c).mean(), 0.0, 1e-12);
    EXPECT_NEAR(std::sqrt(y.col(c).array().square().mean()), 1.0, 1e-3);
  }
}

TEST(BatchNorm, BackwardBeforeForwardThrows) {
  nn::BatchNorm bn(2);
  EXPECT_THROW(bn.backward(Matrix::Zero(2, 2)), Error);
}

TEST(Attention, RejectsIndivisibleHeads) { EXPECT_THROW(nn::MultiHeadAttention(6, 4), Error); }

TEST(Conv1d, RejectsEvenKernel) { EXPECT_THROW(nn::Conv1d(2, 2, 2), Error); }

TEST(ParameterSet, SnapshotRestoreRoundTrip) {
  Rng rng = derive_rng(5, 5);
  nn::Dense d(3, 2);
  d.init(rng);
  nn::ParameterSet set;
  d.collect(set, "d");
  const auto snap = set.snapshot();
  d.weight.value.setZero();
  set.restore(snap);
  EXPECT_EQ(d.weight.value, snap.at("d.weight"));
  EXPECT_THROW(set.add("d.weight", d.weight), Error);
}
