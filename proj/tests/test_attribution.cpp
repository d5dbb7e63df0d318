#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <vector>

#include <gtest/gtest.h>

#include "pilf/attribution.hpp"
#include "support/gradcheck.hpp"
#include "support/oracles.hpp"

using namespace pilf;

namespace {

// f(window) = sum over steps of a weighted polynomial in the columns.
Predictor toy(std::function<double(const Eigen::Ref<const RowVector>&)> per_step, Eigen::Index steps) {
  return [per_step, steps](const Matrix& stacked) {
    std::vector<double> out(static_cast<std::size_t>(stacked.rows() / steps), 0.0);
    for (Eigen::Index r = 0; r < stacked.rows(); ++r) out[static_cast<std::size_t>(r / steps)] += per_step(stacked.row(r));
    return out;
  };
}

BackgroundSet random_background(std::size_t n, Eigen::Index steps, Eigen::Index cols, std::uint64_t seed) {
  Rng rng = derive_rng(seed, 3);
  return background_from_windows(check::random_matrix(static_cast<Eigen::Index>(n) * steps, cols, rng), steps);
}

double sum(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0); }

}  // namespace

TEST(ShapleyExact, LinearToyAgainstZeroBaseline) {
  auto f = toy([](const auto& x) { return 2 * x(0) + 3 * x(1); }, 1);
  Matrix x(1, 2);
  x << 1, 1;
  const auto bg = background_from_windows(Matrix::Zero(1, 2), 1);
  const auto r = shapley_exact(f, x, bg);
  EXPECT_NEAR(r.phi[0], 2.0, 1e-12);
  EXPECT_NEAR(r.phi[1], 3.0, 1e-12);
  EXPECT_EQ(r.base_value, 0.0);
  EXPECT_EQ(r.prediction, 5.0);
}

TEST(ShapleyExact, MatchesPermutationDefinitionWithInteractions) {
  const Eigen::Index steps = 3;
  auto f = toy([](const auto& x) { return x(0) * x(1) + std::sin(x(2)) * x(3) + x(0) * x(0); }, steps);
  Rng rng = derive_rng(1, 1);
  const Matrix x = check::random_matrix(steps, 4, rng);
  const auto bg = random_background(5, steps, 4, 2);
  const auto r = shapley_exact(f, x, bg);
  const auto brute = oracle::brute_shapley(f, x, bg);
  for (std::size_t j = 0; j < 4; ++j) EXPECT_NEAR(r.phi[j], brute[j], 1e-10);
  EXPECT_NEAR(sum(r.phi), r.prediction - r.base_value, 1e-10);
}

TEST(ShapleyExact, SymmetryAndNullPlayer) {
  const Eigen::Index steps = 2;
  auto f = toy([](const auto& x) { return x(0) * x(1) + x(0) + x(1); }, steps);  // column 2 unused
  Matrix x(steps, 3);
  x << 1.5, 1.5, 9, -0.5, -0.5, 4;
  Matrix b(steps, 3);
  b << 0.2, 0.2, -3, 0.7, 0.7, 1;
  const auto r = shapley_exact(f, x, background_from_windows(b, steps));
  EXPECT_NEAR(r.phi[0], r.phi[1], 1e-12);
  EXPECT_NEAR(r.phi[2], 0.0, 1e-12);
}

TEST(ShapleyExact, Linearity) {
  const Eigen::Index steps = 2;
  auto f = toy([](const auto& x) { return x(0) * x(1); }, steps);
  auto g = toy([](const auto& x) { return x(2) * x(2) - x(0); }, steps);
  auto fg = toy([](const auto& x) { return 3 * x(0) * x(1) + 2 * (x(2) * x(2) - x(0)); }, steps);
  Rng rng = derive_rng(2, 2);
  const Matrix x = check::random_matrix(steps, 3, rng);
  const auto bg = random_background(4, steps, 3, 5);
  const auto rf = shapley_exact(f, x, bg), rg = shapley_exact(g, x, bg), rfg = shapley_exact(fg, x, bg);
  for (std::size_t j = 0; j < 3; ++j) EXPECT_NEAR(rfg.phi[j], 3 * rf.phi[j] + 2 * rg.phi[j], 1e-10);
  const Matrix ens = ensemble_attribution(Eigen::Map<const Matrix>(rf.phi.data(), 1, 3),
                                          Eigen::Map<const Matrix>(rg.phi.data(), 1, 3), {0.6, 0.4});
  for (Eigen::Index j = 0; j < 3; ++j) EXPECT_NEAR(ens(0, j), 0.6 * rf.phi[static_cast<std::size_t>(j)] + 0.4 * rg.phi[static_cast<std::size_t>(j)], 1e-15);
}

TEST(ShapleyExact, ShapeChecks) {
  auto f = toy([](const auto& x) { return x(0); }, 2);
  const auto bg = random_background(2, 2, 3, 1);
  EXPECT_THROW(shapley_exact(f, Matrix::Zero(3, 3), bg), Error);
  EXPECT_THROW(shapley_exact(f, Matrix::Zero(2, 21), random_background(1, 2, 21, 1)), Error);
  EXPECT_THROW(ensemble_attribution(Matrix::Zero(1, 2), Matrix::Zero(1, 3), {}), Error);
}

TEST(ShapleySampled, EfficiencyHoldsForAnyPermutationCount) {
  const Eigen::Index steps = 2;
  auto f = toy([](const auto& x) { return x(0) * x(1) * x(2) + x(3); }, steps);
  Rng rng = derive_rng(3, 3);
  const Matrix x = check::random_matrix(steps, 5, rng);
  const auto bg = random_background(3, steps, 5, 4);
  const auto r = shapley_sampled(f, x, bg, 3, 17);
  EXPECT_NEAR(sum(r.phi), r.prediction - r.base_value, 1e-10);
  EXPECT_NEAR(r.phi[4], 0.0, 1e-12);
}

TEST(ShapleySampled, AdditiveModelIsExactAndInteractionsConverge) {
  const Eigen::Index steps = 2;
  Rng rng = derive_rng(4, 4);
  const Matrix x = check::random_matrix(steps, 4, rng);
  const auto bg = random_background(4, steps, 4, 6);
  auto additive = toy([](const auto& x) { return x(0) - 2 * x(1) + x(2) * x(2); }, steps);
  const auto ea = shapley_exact(additive, x, bg), sa = shapley_sampled(additive, x, bg, 2, 1);
  for (std::size_t j = 0; j < 4; ++j) EXPECT_NEAR(sa.phi[j], ea.phi[j], 1e-10);

  auto inter = toy([](const auto& x) { return x(0) * x(1) + x(2) * x(3) * x(0); }, steps);
  const auto e = shapley_exact(inter, x, bg);
  double err_small = 0, err_large = 0;
  const auto s_small = shapley_sampled(inter, x, bg, 4, 9), s_large = shapley_sampled(inter, x, bg, 20000, 9);
  for (std::size_t j = 0; j < 4; ++j) {
    err_small = std::max(err_small, std::abs(s_small.phi[j] - e.phi[j]));
    err_large = std::max(err_large, std::abs(s_large.phi[j] - e.phi[j]));
  }
  double scale = 0;
  for (double p : e.phi) scale = std::max(scale, std::abs(p));
  EXPECT_LT(err_large, 0.05 * scale);
  EXPECT_LE(err_large, err_small);
}

TEST(ShapleySampled, DeterministicForSeed) {
  auto f = toy([](const auto& x) { return x(0) * x(1); }, 2);
  Rng rng = derive_rng(5, 5);
  const Matrix x = check::random_matrix(2, 3, rng);
  const auto bg = random_background(2, 2, 3, 8);
  EXPECT_EQ(shapley_sampled(f, x, bg, 5, 3).phi, shapley_sampled(f, x, bg, 5, 3).phi);
}

TEST(Kendall, OneAdjacentSwap) {
  EXPECT_NEAR(kendall_tau({0, 1, 2, 3}, {1, 0, 2, 3}), 4.0 / 6.0, 1e-15);
  EXPECT_EQ(kendall_tau({2, 0, 1}, {2, 0, 1}), 1.0);
  EXPECT_EQ(kendall_tau({0, 1, 2}, {2, 1, 0}), -1.0);
}

TEST(Kendall, MatchesPairCountingOnAllPermutations) {
  for (std::size_t n = 2; n <= 5; ++n) {
    std::vector<std::size_t> ref(n);
    std::iota(ref.begin(), ref.end(), std::size_t{0});
    std::vector<std::size_t> a = ref;
    do {
      std::vector<std::size_t> b = ref;
      do {
        ASSERT_NEAR(kendall_tau(a, b), oracle::brute_kendall(a, b), 1e-15);
      } while (std::next_permutation(b.begin(), b.end()));
    } while (std::next_permutation(a.begin(), a.end()));
  }
}

TEST(Kendall, RejectsNonPermutations) {
  EXPECT_THROW(kendall_tau({0, 0}, {0, 1}), Error);
  EXPECT_THROW(kendall_tau({0, 1}, {0, 1, 2}), Error);
  EXPECT_THROW(kendall_tau({0}, {0}), Error);
}

TEST(Importance, MeanAbsoluteAndStableTies) {
  Matrix phi(2, 3);
  phi << 1, -2, 0.5, -1, 2, -0.5;
  const auto r = global_importance(phi);
  EXPECT_EQ(r.importance, (std::vector<double>{1, 2, 0.5}));
  EXPECT_EQ(r.rank, (std::vector<std::size_t>{1, 0, 2}));
  EXPECT_EQ(rank_by_importance({1, 1, 2}), (std::vector<std::size_t>{2, 0, 1}));
  EXPECT_THROW(global_importance(phi, std::vector<std::size_t>{}, "extreme"), Error);
}

TEST(Importance, RegimeComparison) {
  ImportanceRanking e{"extreme", {4, 1, 0}, {0, 1, 2}};
  ImportanceRanking n{"normal", {2, 3, 0}, {1, 0, 2}};
  const auto rows = regime_comparison(e, n, {"a", "b", "c"});
  EXPECT_EQ(rows[0].rank_extreme, 1u);
  EXPECT_EQ(rows[0].rank_normal, 2u);
  EXPECT_DOUBLE_EQ(rows[0].ratio, 2.0);
  EXPECT_DOUBLE_EQ(rows[2].ratio, 1.0);
  ImportanceRanking n0{"normal", {0, 3, 0}, {1, 0, 2}};
  EXPECT_TRUE(std::isinf(regime_comparison(e, n0, {"a", "b", "c"})[0].ratio));
  EXPECT_TRUE(regime_comparison_json(regime_comparison(e, n0, {"a", "b", "c"}))[0]["ratio"].is_null());
  EXPECT_EQ(regime_comparison_csv(rows).substr(0, 36), "feature,rank_normal,rank_extreme,rat");
}

TEST(Bootstrap, IdenticalBackgroundsAreFullyStable) {
  Matrix pb(4, 3);
  pb << 3, 2, 1, 3, 2, 1, 3, 2, 1, 3, 2, 1;
  const auto rep = bootstrap_stability({pb, pb}, 20, 1);
  EXPECT_EQ(rep.tau.size(), 20u);
  EXPECT_EQ(rep.mean_tau, 1.0);
  EXPECT_EQ(rep.reference_rank, (std::vector<std::size_t>{0, 1, 2}));
}

TEST(Bootstrap, ReweightingEqualsRecomputationOnResample) {
  // Shapley values are linear in the background distribution, so the
  // count-weighted cache equals an exact run on the resampled background.
  const Eigen::Index steps = 2;
  auto f = toy([](const auto& x) { return x(0) * x(1) + x(2); }, steps);
  Rng rng = derive_rng(6, 6);
  const Matrix x = check::random_matrix(steps, 3, rng);
  const auto bg = random_background(4, steps, 3, 10);
  const auto full = shapley_exact(f, x, bg);
  const std::vector<std::size_t> draw = {2, 0, 2, 3};
  Matrix stacked(4 * steps, 3);
  Vector w = Vector::Zero(4);
  for (std::size_t k = 0; k < draw.size(); ++k) {
    stacked.middleRows(static_cast<Eigen::Index>(k) * steps, steps) = bg.window(draw[k]);
    w(static_cast<Eigen::Index>(draw[k])) += 0.25;
  }
  const auto resampled = shapley_exact(f, x, background_from_windows(stacked, steps));
  const RowVector reweighted = w.transpose() * full.per_background;
  for (Eigen::Index j = 0; j < 3; ++j) EXPECT_NEAR(reweighted(j), resampled.phi[static_cast<std::size_t>(j)], 1e-12);
}

TEST(Bootstrap, Validation) {
  EXPECT_THROW(bootstrap_stability({Matrix::Zero(2, 2)}, 1, 1), Error);
  EXPECT_THROW(bootstrap_stability({}, 5, 1), Error);
  EXPECT_THROW(bootstrap_stability({Matrix::Zero(2, 2), Matrix::Zero(3, 2)}, 5, 1), Error);
}

namespace {
WindowSet calendar_windows(std::size_t n) {
  WindowSet ws;
  ws.inputs = Matrix::Zero(static_cast<Eigen::Index>(n * kWindowSteps), static_cast<Eigen::Index>(kFeatureCount));
  const UtcHour start = make_hour(2021, 1, 1, 0);
  for (std::size_t m = 0; m < n; ++m) {
    ws.inputs(static_cast<Eigen::Index>(m * kWindowSteps), 0) = static_cast<double>(m);
    const UtcHour t = start + static_cast<std::int64_t>(m * 13);
    ws.target_timestamps.push_back(t);
    ws.target_air_temp_c.push_back(15 + 10 * std::sin(static_cast<double>(m)));
    ws.targets_mw.push_back(0);
    ws.targets_std.push_back(0);
  }
  return ws;
}
}  // namespace

TEST(Background, SeasonsAndAllocation) {
  EXPECT_EQ(season_of_month(12), 0);
  EXPECT_EQ(season_of_month(2), 0);
  EXPECT_EQ(season_of_month(3), 1);
  EXPECT_EQ(season_of_month(8), 2);
  EXPECT_EQ(season_of_month(11), 3);
  const auto a = allocate_strata({{1, 5}, {2, 5}, {3, 5}}, 4);
  EXPECT_EQ(a.at(1), 2u);  // equal remainders: the lowest stratum id wins
  EXPECT_EQ(a.at(2), 1u);
  EXPECT_EQ(a.at(3), 1u);
  EXPECT_THROW(allocate_strata({{1, 2}}, 3), Error);
}

TEST(Background, StratifiedDrawIsDeterministicAndDistinct) {
  const WindowSet train = calendar_windows(600);
  const auto bg = stratified_background(train, 50, 42);
  ASSERT_EQ(bg.size(), 50u);
  EXPECT_EQ(std::set<std::size_t>(bg.source_index.begin(), bg.source_index.end()).size(), 50u);
  for (std::size_t k = 0; k < bg.size(); ++k) EXPECT_EQ(bg.window(k)(0, 0), static_cast<double>(bg.source_index[k]));
  EXPECT_EQ(stratified_background(train, 50, 42).source_index, bg.source_index);
  EXPECT_NE(stratified_background(train, 50, 43).source_index, bg.source_index);
  // stratum shares follow the population within one draw
  const auto strata = window_strata(train);
  std::map<int, std::size_t> pop, got;
  for (int s : strata) ++pop[s];
  for (int s : bg.stratum) ++got[s];
  for (const auto& [s, n] : got) EXPECT_LE(std::abs(static_cast<double>(n) - 50.0 * pop[s] / 600.0), 1.0);
}

TEST(Background, SizeErrors) {
  const WindowSet train = calendar_windows(10);
  EXPECT_THROW(stratified_background(train, 11, 1), Error);
  EXPECT_THROW(stratified_background(train, 0, 1), Error);
  EXPECT_THROW(background_from_windows(Matrix::Zero(5, 2), 2), Error);
}

TEST(AttributionCsv, HeaderAndShape) {
  AttributionMatrix m{"cnn", Matrix::Zero(1, kFeatureCount), {1.0}, {2.0}, {}};
  const auto text = attribution_csv({m}, {make_hour(2022, 1, 1, 5)}, feature_name_list());
  EXPECT_EQ(text.rfind("sample,target_utc,model,phi_demand_mw,", 0), 0u);
  EXPECT_NE(text.find("0,2022-01-01T05:00:00Z,cnn,"), std::string::npos);
  EXPECT_THROW(attribution_csv({m}, {}, feature_name_list()), Error);
}
