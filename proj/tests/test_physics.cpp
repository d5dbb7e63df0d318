#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "pilf/physics.hpp"
#include "support/oracles.hpp"

using namespace pilf;

TEST(Envelope, ReferenceSpotValues) {
  const auto env = ercot_reference_envelope();
  EXPECT_NEAR(env.demand(0.0), 51230.0, 1e-9);
  EXPECT_NEAR(env.demand(30.0), 56748.9, 1e-9);
  // t0 belongs to the upper segment
  EXPECT_NEAR(env.demand(18.5), 37464.55, 1e-9);
  EXPECT_NEAR(env.demand(std::nextafter(18.5, 0.0)), 38513.1, 1e-6);
  EXPECT_NEAR(env.jump_at_breakpoint(), 1048.55, 1e-9);
}

TEST(Envelope, RejectsConcaveSegment) {
  auto env = ercot_reference_envelope();
  env.a1 = -1.0;
  EXPECT_THROW(env.validate(), Error);
}

TEST(EnvelopeFit, NoiselessRecoveryIsExact) {
  const auto truth = ercot_reference_envelope();
  const auto s = oracle::envelope_sample(truth, 2000, 0.0, 1);
  const auto fit = fit_envelope(s.temp, s.demand, truth.t0_c).envelope;
  const double coef[][2] = {{fit.a1, truth.a1}, {fit.b1, truth.b1}, {fit.c1, truth.c1},
                            {fit.a2, truth.a2}, {fit.b2, truth.b2}, {fit.c2, truth.c2}};
  for (const auto& c : coef) EXPECT_NEAR(c[0], c[1], 1e-6 * std::abs(c[1]));
}

TEST(EnvelopeFit, NoisyRecoveryWithinTwoPercent) {
  const auto truth = ercot_reference_envelope();
  const auto s = oracle::envelope_sample(truth, 10000, 500.0, 2);
  const auto fit = fit_envelope(s.temp, s.demand, truth.t0_c);
  EXPECT_LT(oracle::max_relative_curve_error(fit.envelope, truth), 0.02);
  ASSERT_EQ(fit.residuals.size(), s.temp.size());
}

TEST(EnvelopeFit, ContinuousVariantHasNoJump) {
  const auto truth = ercot_reference_envelope();
  const auto s = oracle::envelope_sample(truth, 3000, 300.0, 3);
  const auto fit = fit_envelope(s.temp, s.demand, truth.t0_c, true).envelope;
  EXPECT_NEAR(fit.jump_at_breakpoint(), 0.0, 1e-6);
}

TEST(EnvelopeFit, TooFewPointsOnOneSide) {
  std::vector<double> t = {10, 11, 12, 30, 31}, d = {1, 2, 3, 4, 5};
  EXPECT_THROW(fit_envelope(t, d, 18.5), Error);
}

TEST(EnvelopeFit, RankDeficientSegment) {
  // every point below t0 at the same temperature
  std::vector<double> t = {5, 5, 5, 5, 20, 25, 30, 35}, d = {1, 2, 3, 4, 5, 6, 7, 8};
  EXPECT_THROW(fit_envelope(t, d, 18.5), Error);
}

TEST(Tolerance, AlternatingResidualsGiveTheirSpread) {
  std::vector<double> t(100, 21.0), r(100);
  for (std::size_t i = 0; i < r.size(); ++i) r[i] = i % 2 ? 100.0 : -100.0;
  const auto tol = fit_tolerance(t, r, 2.0, 30, 50.0);
  EXPECT_DOUBLE_EQ(tol.sigma(21.0), 100.0);
  EXPECT_DOUBLE_EQ(tol.epsilon(21.0), 200.0);
}

TEST(Tolerance, SparseBinBorrowsNearestPopulated) {
  std::vector<double> t, r;
  for (int i = 0; i < 40; ++i) {
    t.push_back(10.5);
    r.push_back(i % 2 ? 300.0 : -300.0);
  }
  for (int i = 0; i < 40; ++i) {
    t.push_back(20.5);
    r.push_back(i % 2 ? 80.0 : -80.0);
  }
  t.push_back(14.5);  // a lone point, nearer the 10 C bin
  r.push_back(5000.0);
  const auto tol = fit_tolerance(t, r, 2.0, 30, 50.0);
  EXPECT_DOUBLE_EQ(tol.sigma(14.5), 300.0);
  EXPECT_DOUBLE_EQ(tol.sigma(20.5), 80.0);
  // below-range and above-range temperatures clamp to the end bins
  EXPECT_DOUBLE_EQ(tol.sigma(-30.0), 300.0);
  EXPECT_DOUBLE_EQ(tol.sigma(50.0), 80.0);
  tol.validate();
}

TEST(Tolerance, FloorApplies) {
  std::vector<double> t(50, 5.0), r(50, 7.0);
  EXPECT_DOUBLE_EQ(fit_tolerance(t, r).sigma(5.0), 50.0);
}

namespace {
ToleranceModel flat(double sigma) {
  ToleranceModel tol;
  tol.bin_edges_c = {-50.0, 60.0};
  tol.sigma_mw = {sigma};
  return tol;
}
}  // namespace

TEST(ParabolicPenalty, HandComputedExcess) {
  const auto env = ercot_reference_envelope();
  const auto tol = flat(100.0);
  std::vector<double> temp = {0.0}, pred = {51230.0 + 300.0};  // 100 MW past eps = 200
  const auto res = parabolic_penalty(pred, temp, env, tol);
  EXPECT_DOUBLE_EQ(res.loss, 10000.0);
  EXPECT_DOUBLE_EQ(res.grad[0], 200.0);
  EXPECT_EQ(res.violations, 1u);
  pred[0] = 51230.0 - 300.0;
  EXPECT_DOUBLE_EQ(parabolic_penalty(pred, temp, env, tol).grad[0], -200.0);
}

TEST(ParabolicPenalty, InsideBandIsFree) {
  const auto env = ercot_reference_envelope();
  std::vector<double> temp = {0.0, 30.0}, pred = {51230.0 + 199.0, 56748.9 - 150.0};
  const auto res = parabolic_penalty(pred, temp, env, flat(100.0));
  EXPECT_EQ(res.loss, 0.0);
  EXPECT_EQ(res.grad, std::vector<double>(2, 0.0));
}

TEST(RampPenalty, MeanOverPairs) {
  // steps 5000, 100, -4900 against delta 4950: one violation of 50 MW
  std::vector<double> pred = {40000, 45000, 45100, 40200};
  const auto res = ramp_penalty(pred, 4950.0);
  EXPECT_EQ(res.terms, 3u);
  EXPECT_DOUBLE_EQ(res.loss, 2500.0 / 3.0);
  EXPECT_DOUBLE_EQ(res.grad[1], 100.0 / 3.0);
  EXPECT_DOUBLE_EQ(res.grad[0], -100.0 / 3.0);
}

TEST(RampPenalty, SingleValueAndExplicitPairs) {
  std::vector<double> one = {1.0};
  EXPECT_EQ(ramp_penalty(one, 10.0).terms, 0u);
  std::vector<double> pred = {0.0, 100.0, 0.0};
  std::vector<IndexPair> pairs = {{0, 2}};
  EXPECT_EQ(ramp_penalty(pred, pairs, 10.0).loss, 0.0);
  EXPECT_THROW(ramp_penalty(pred, 0.0), Error);
}

TEST(CompositeLoss, LambdaZeroIsPlainMse) {
  const auto env = ercot_reference_envelope();
  std::vector<double> pred = {1.0, 3.0}, target = {0.0, 0.0}, temp = {0.0, 0.0};
  std::vector<IndexPair> pairs = {{0, 1}};
  const auto l = composite_loss(pred, target, temp, pairs, env, flat(100.0), {0.0, 0.0, 1.0});
  EXPECT_DOUBLE_EQ(l.total, 5.0);
  EXPECT_EQ(l.parabolic, 0.0);
  EXPECT_EQ(l.ramp, 0.0);
}

TEST(CompositeLoss, MseScaleStandardizesOnlyTheMse) {
  const auto env = ercot_reference_envelope();
  std::vector<double> pred = {51230.0 + 300.0}, target = {51230.0 + 100.0}, temp = {0.0};
  PhysicsLossConfig cfg{1.0, 0.0, 1.0};
  cfg.mse_scale = 0.25;
  const auto l = composite_loss(pred, target, temp, {}, env, flat(100.0), cfg);
  EXPECT_DOUBLE_EQ(l.mse, 10000.0);
  EXPECT_DOUBLE_EQ(l.total, 20000.0);
  EXPECT_DOUBLE_EQ(l.grad[0], 100.0 + 200.0);
}

TEST(Percentile, LinearInterpolation) {
  std::vector<double> v(1000);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<double>(999 - i);
  EXPECT_NEAR(percentile_linear(v, 99.5), 994.005, 1e-9);
  EXPECT_EQ(percentile_linear({7.0}, 50), 7.0);
  EXPECT_THROW(percentile_linear({}, 50), Error);
}

TEST(DeltaMax, UsesAbsoluteSteps) {
  std::vector<double> y = {0, 10, 5, 5, 25};
  EXPECT_DOUBLE_EQ(estimate_delta_max(y, 100.0), 20.0);
  EXPECT_DOUBLE_EQ(estimate_delta_max(y, 0.0), 0.0);
}

TEST(PhysicsJson, RoundTrip) {
  const auto env = ercot_reference_envelope();
  nlohmann::json j = env;
  const auto back = j.get<ParabolicEnvelope>();
  EXPECT_EQ(back.c2, env.c2);
  ToleranceModel tol = flat(120.0);
  nlohmann::json jt = tol;
  EXPECT_EQ(jt.get<ToleranceModel>().sigma_mw, tol.sigma_mw);
}
