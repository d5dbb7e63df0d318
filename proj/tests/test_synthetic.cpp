#include <cmath>
#include <numbers>

#include <gtest/gtest.h>

#include "pilf/extreme_events.hpp"
#include "pilf/synthetic.hpp"

using namespace pilf;

namespace {
SyntheticConfig one_year(std::uint64_t seed) {
  auto c = default_synthetic_config(1, seed);
  return c;
}
}  // namespace

TEST(Synthetic, SameSeedSameBytes) {
  const auto a = generate_synthetic(one_year(3));
  const auto b = generate_synthetic(one_year(3));
  EXPECT_EQ(a.load_csv, b.load_csv);
  EXPECT_EQ(a.weather_csv, b.weather_csv);
  EXPECT_EQ(a.manifest.dump(), b.manifest.dump());
  EXPECT_NE(a.load_csv, generate_synthetic(one_year(4)).load_csv);
  EXPECT_EQ(a.hours.size(), 8760u);
}

TEST(Synthetic, NoiselessDemandFollowsTheGenerator) {
  auto c = one_year(5);
  c.noise_std_mw = 0;
  c.diurnal_amp_mw = 0;
  c.weekly_amp_mw = 0;
  const auto ds = generate_synthetic(c);
  std::size_t checked = 0;
  for (std::size_t i = 0; i < ds.hours.size(); ++i) {
    const double expect = c.envelope.demand(ds.temp_c[i]);
    if (expect < c.clip_min_mw || expect > c.clip_max_mw) continue;
    ASSERT_EQ(ds.demand_mw[i], expect) << i;
    ++checked;
  }
  EXPECT_EQ(checked + ds.clipped_hours, ds.hours.size());
}

TEST(Synthetic, DemandNoiseLeavesWeatherUnchanged) {
  auto c = one_year(5);
  const auto noisy = generate_synthetic(c);
  c.noise_std_mw = 0;
  EXPECT_EQ(generate_synthetic(c).weather_csv, noisy.weather_csv);
}

TEST(Synthetic, ColdSnapIsFlaggedAsExtreme) {
  const auto ds = generate_synthetic(one_year(7));
  const auto flags = hampel_flags(ds.demand_mw, HampelConfig{});
  std::size_t plateau = 0, flagged = 0;
  const ExtremeEvent* snap = nullptr;
  for (const auto& e : default_synthetic_config(1, 7).events)
    if (e.name == "cold_snap_1") snap = &e;
  ASSERT_NE(snap, nullptr);
  for (std::size_t i = 0; i < ds.hours.size(); ++i) {
    if (!snap->in_plateau(ds.hours[i])) continue;
    ++plateau;
    flagged += flags[i];
  }
  EXPECT_EQ(plateau, 72u);
  EXPECT_GT(flagged, plateau / 2);
}

TEST(Synthetic, EventProfileRampsInAndOut) {
  ExtremeEvent e{"x", UtcHour{100}, 10, -5.0, 1.0, 1.0};
  EXPECT_EQ(e.profile(UtcHour{100}, 3), 1.0);
  EXPECT_EQ(e.profile(UtcHour{109}, 3), 1.0);
  EXPECT_DOUBLE_EQ(e.profile(UtcHour{99}, 3), 0.75);
  EXPECT_DOUBLE_EQ(e.profile(UtcHour{110}, 3), 0.75);
  EXPECT_EQ(e.profile(UtcHour{96}, 3), 0.0);
  EXPECT_EQ(e.profile(UtcHour{113}, 3), 0.0);
}

TEST(Synthetic, ConfigJsonRoundTrip) {
  auto c = default_synthetic_config(2, 11);
  c.noise_std_mw = 123.0;
  const auto back = synthetic_config_from_json(synthetic_config_json(c));
  EXPECT_EQ(synthetic_config_json(back).dump(), synthetic_config_json(c).dump());
  EXPECT_EQ(back.events.size(), c.events.size());
}

TEST(Synthetic, InvalidConfigRejected) {
  auto c = one_year(1);
  c.temp_ar = 1.0;
  EXPECT_THROW(generate_synthetic(c), Error);
  c = one_year(1);
  c.years = 0;
  EXPECT_THROW(generate_synthetic(c), Error);
}
