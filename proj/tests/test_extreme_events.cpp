#include <vector>

#include <gtest/gtest.h>

#include "pilf/extreme_events.hpp"
#include "support/oracles.hpp"

using namespace pilf;

namespace {
std::vector<double> noisy_series(std::size_t n, std::uint64_t seed) {
  Rng rng = derive_rng(seed, 1);
  std::vector<double> y(n);
  for (std::size_t i = 0; i < n; ++i) {
    y[i] = 50000 + 8000 * std::sin(static_cast<double>(i) / 24.0) + 1500 * standard_normal(rng);
    if (uniform01(rng) < 0.01) y[i] += 20000 * (uniform01(rng) < 0.5 ? -1 : 1);
  }
  return y;
}
}  // namespace

TEST(Hampel, MatchesNaiveRecomputation) {
  const auto y = noisy_series(2000, 7);
  HampelConfig cfg;
  cfg.window_hours = 48;
  EXPECT_EQ(hampel_flags(y, cfg), oracle::naive_hampel(y, cfg));
}

TEST(Hampel, SpikeIsFlaggedFlatNeighboursAreNot) {
  std::vector<double> y(101, 100.0);
  y[50] = 1000.0;
  HampelConfig cfg;
  cfg.window_hours = 10;
  const auto f = hampel_flags(y, cfg);
  EXPECT_EQ(f[50], 1);
  EXPECT_EQ(std::count(f.begin(), f.end(), 1), 1);
}

TEST(Hampel, ConstantSeriesUsesMadFloor) {
  std::vector<double> y(30, 5.0);
  y[3] = 5.0 + 1e-3;
  HampelConfig cfg;
  cfg.window_hours = 6;
  // MAD is zero, so the floor decides: 1e-3 > 3e-6
  EXPECT_EQ(hampel_flags(y, cfg)[3], 1);
}

TEST(Hampel, EvenWindowAtSeriesEdges) {
  std::vector<double> y = {1, 2, 3, 100};
  HampelConfig cfg;
  cfg.window_hours = 2;
  EXPECT_EQ(hampel_flags(y, cfg), oracle::naive_hampel(y, cfg));
}

TEST(Hampel, InvalidConfigAndEmptySeries) {
  HampelConfig cfg;
  cfg.k_mad = 0;
  std::vector<double> y = {1, 2, 3};
  EXPECT_THROW(hampel_flags(y, cfg), Error);
  EXPECT_THROW(hampel_flags(std::vector<double>{}, HampelConfig{}), Error);
}

TEST(Regimes, SplitPartitionsWindows) {
  WindowSet ws;
  ws.targets_mw = {1, 2, 3, 4};
  std::vector<std::uint8_t> flags = {0, 1, 1, 0};
  const auto s = split_regimes(ws, flags);
  EXPECT_EQ(s.extreme, (std::vector<std::size_t>{1, 2}));
  EXPECT_EQ(s.normal, (std::vector<std::size_t>{0, 3}));
  flags.pop_back();
  EXPECT_THROW(split_regimes(ws, flags), Error);
}

TEST(Regimes, FlagsForTargetsRequiresAlignment) {
  RegimeLabels labels{{UtcHour{10}, UtcHour{11}, UtcHour{12}}, {0, 1, 0}};
  EXPECT_EQ(flags_for_targets(labels, {UtcHour{11}, UtcHour{12}}), (std::vector<std::uint8_t>{1, 0}));
  EXPECT_THROW(flags_for_targets(labels, {UtcHour{13}}), Error);
}
