#pragma once

// Synthetic hourly load and station weather built around a parabolic
// envelope. Output files use the ingest formats exactly.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <numbers>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "pilf/csv.hpp"
#include "pilf/error.hpp"
#include "pilf/ingest.hpp"
#include "pilf/physics.hpp"
#include "pilf/random.hpp"
#include "pilf/time.hpp"

namespace pilf {

/// One scheduled weather excursion. The full effect applies on
/// [start, start + duration_hours); it ramps linearly in and out over
/// `ramp_hours` on either side.
struct ExtremeEvent {
  std::string name;
  UtcHour start;
  int duration_hours = 48;
  double temp_offset_c = 0.0;
  double wind_multiplier = 1.0;
  double precip_multiplier = 1.0;

  /// Effect weight in [0, 1] at hour t.
  double profile(UtcHour t, int ramp_hours) const {
    const std::int64_t rel = t - start;
    if (rel >= 0 && rel < duration_hours) return 1.0;
    if (ramp_hours <= 0) return 0.0;
    if (rel < 0 && rel >= -ramp_hours) return 1.0 + static_cast<double>(rel) / (ramp_hours + 1);
    const std::int64_t after = rel - duration_hours + 1;
    if (rel >= duration_hours && after <= ramp_hours) return 1.0 - static_cast<double>(after) / (ramp_hours + 1);
    return 0.0;
  }

  bool in_plateau(UtcHour t) const { return t - start >= 0 && t - start < duration_hours; }
};

struct SyntheticConfig {
  int start_year = 2021;
  int years = 2;
  std::uint64_t seed = 7;
  ParabolicEnvelope envelope = ercot_reference_envelope();

  double temp_annual_mean_c = 19.0;
  double temp_seasonal_amp_c = 9.0;    // peak in mid-July
  double temp_diurnal_amp_c = 5.0;     // peak at 21 UTC
  double temp_noise_std_c = 2.5;       // stationary std of the AR(1) anomaly
  double temp_ar = 0.97;
  double station_spread_c = 0.3;

  double diurnal_amp_mw = 1200.0;      // peak at 23 UTC
  double weekly_amp_mw = 800.0;       // reduction on weekends and holidays
  double noise_std_mw = 300.0;
  double wind_threshold_ms = 12.0;     // wind below this never reaches demand
  double wind_load_mw_per_ms = 0.0;

  int event_ramp_hours = 6;
  double clip_min_mw = 29360.0;
  double clip_max_mw = 85435.0;
  std::vector<ExtremeEvent> events;

  UtcHour first_hour() const { return make_hour(start_year, 1, 1, 0); }
  UtcHour end_hour() const { return make_hour(start_year + years, 1, 1, 0); }

  void validate() const {
    require(years >= 1, "synthetic", "years must be at least 1");
    envelope.validate();
    require(temp_noise_std_c >= 0 && noise_std_mw >= 0 && station_spread_c >= 0, "synthetic",
            "noise levels must be non-negative");
    require(temp_ar >= 0 && temp_ar < 1, "synthetic", "temperature AR coefficient must lie in [0, 1)");
    require(clip_min_mw < clip_max_mw, "synthetic", "clip range is empty");
    for (const auto& e : events)
      require(e.duration_hours >= 1 && e.wind_multiplier >= 0 && e.precip_multiplier >= 0, "synthetic",
              "invalid event", e.name);
  }
};

/// Default schedule for a two-year set starting in `start_year`: events in
/// the first year (training), early second year (validation) and the rest
/// of the second year (test).
inline std::vector<ExtremeEvent> default_event_schedule(int start_year) {
  const int y0 = start_year, y1 = start_year + 1;
  return {
      {"cold_snap_1", make_hour(y0, 2, 14, 6), 72, -14.0, 3.5, 4.0},
      {"heat_wave_1", make_hour(y0, 7, 20, 12), 96, 6.0, 1.0, 1.0},
      {"cold_snap_2", make_hour(y0, 12, 22, 0), 60, -12.0, 3.0, 3.0},
      {"cold_snap_3", make_hour(y1, 1, 24, 6), 48, -12.0, 3.0, 3.0},
      {"heat_wave_2", make_hour(y1, 6, 15, 12), 96, 6.0, 1.0, 1.0},
      {"heat_wave_3", make_hour(y1, 8, 8, 12), 72, 5.5, 1.0, 1.0},
      {"cold_snap_4", make_hour(y1, 11, 28, 6), 72, -14.0, 3.5, 4.0},
  };
}

inline SyntheticConfig default_synthetic_config(int years = 2, std::uint64_t seed = 7) {
  SyntheticConfig c;
  c.years = years;
  c.seed = seed;
  for (const auto& e : default_event_schedule(c.start_year))
    if (e.start < c.end_hour()) c.events.push_back(e);
  return c;
}

struct SyntheticDataset {
  std::string load_csv;
  std::string weather_csv;
  std::string holidays_txt;
  nlohmann::json manifest;

  // hourly ground truth
  std::vector<UtcHour> hours;
  std::vector<double> demand_mw;
  std::vector<double> temp_c;        // station mean, as ingest will see it
  std::vector<std::uint8_t> in_event;  // inside an event plateau
  std::size_t clipped_hours = 0;
};

namespace detail {

inline std::string fixed(double v, int digits) {
  if (v == 0.0) v = 0.0;  // no "-0.00"
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

inline double round_to(double v, int digits) {
  const double scale = std::pow(10.0, digits);
  return std::round(v * scale) / scale;
}

inline nlohmann::json event_json(const ExtremeEvent& e) {
  return {{"name", e.name},
          {"start_utc", format_utc_hour(e.start)},
          {"duration_hours", e.duration_hours},
          {"temp_offset_c", e.temp_offset_c},
          {"wind_multiplier", e.wind_multiplier},
          {"precip_multiplier", e.precip_multiplier}};
}

}  // namespace detail

inline nlohmann::json synthetic_config_json(const SyntheticConfig& c) {
  nlohmann::json events = nlohmann::json::array();
  for (const auto& e : c.events) events.push_back(detail::event_json(e));
  return {{"start_year", c.start_year},
          {"years", c.years},
          {"seed", c.seed},
          {"envelope", c.envelope},
          {"temp_annual_mean_c", c.temp_annual_mean_c},
          {"temp_seasonal_amp_c", c.temp_seasonal_amp_c},
          {"temp_diurnal_amp_c", c.temp_diurnal_amp_c},
          {"temp_noise_std_c", c.temp_noise_std_c},
          {"temp_ar", c.temp_ar},
          {"station_spread_c", c.station_spread_c},
          {"diurnal_amp_mw", c.diurnal_amp_mw},
          {"weekly_amp_mw", c.weekly_amp_mw},
          {"noise_std_mw", c.noise_std_mw},
          {"wind_threshold_ms", c.wind_threshold_ms},
          {"wind_load_mw_per_ms", c.wind_load_mw_per_ms},
          {"event_ramp_hours", c.event_ramp_hours},
          {"clip_min_mw", c.clip_min_mw},
          {"clip_max_mw", c.clip_max_mw},
          {"events", events}};
}

inline SyntheticConfig synthetic_config_from_json(const nlohmann::json& j) {
  SyntheticConfig c;
  c.start_year = j.value("start_year", c.start_year);
  c.years = j.value("years", c.years);
  c.seed = j.value("seed", c.seed);
  if (j.contains("envelope")) c.envelope = j.at("envelope").get<ParabolicEnvelope>();
  c.temp_annual_mean_c = j.value("temp_annual_mean_c", c.temp_annual_mean_c);
  c.temp_seasonal_amp_c = j.value("temp_seasonal_amp_c", c.temp_seasonal_amp_c);
  c.temp_diurnal_amp_c = j.value("temp_diurnal_amp_c", c.temp_diurnal_amp_c);
  c.temp_noise_std_c = j.value("temp_noise_std_c", c.temp_noise_std_c);
  c.temp_ar = j.value("temp_ar", c.temp_ar);
  c.station_spread_c = j.value("station_spread_c", c.station_spread_c);
  c.diurnal_amp_mw = j.value("diurnal_amp_mw", c.diurnal_amp_mw);
  c.weekly_amp_mw = j.value("weekly_amp_mw", c.weekly_amp_mw);
  c.noise_std_mw = j.value("noise_std_mw", c.noise_std_mw);
  c.wind_threshold_ms = j.value("wind_threshold_ms", c.wind_threshold_ms);
  c.wind_load_mw_per_ms = j.value("wind_load_mw_per_ms", c.wind_load_mw_per_ms);
  c.event_ramp_hours = j.value("event_ramp_hours", c.event_ramp_hours);
  c.clip_min_mw = j.value("clip_min_mw", c.clip_min_mw);
  c.clip_max_mw = j.value("clip_max_mw", c.clip_max_mw);
  if (j.contains("events")) {
    for (const auto& e : j.at("events")) {
      c.events.push_back({e.at("name").get<std::string>(), parse_utc_hour(e.at("start_utc").get<std::string>()),
                          e.at("duration_hours").get<int>(), e.value("temp_offset_c", 0.0),
                          e.value("wind_multiplier", 1.0), e.value("precip_multiplier", 1.0)});
    }
  } else {
    for (const auto& e : default_event_schedule(c.start_year))
      if (e.start < c.end_hour()) c.events.push_back(e);
  }
  return c;
}

/// Deterministic for a fixed config. Each random component draws from its
/// own stream, so switching one noise source off leaves the others unchanged.
inline SyntheticDataset generate_synthetic(const SyntheticConfig& cfg) {
  cfg.validate();
  const UtcHour first = cfg.first_hour();
  const auto n = static_cast<std::size_t>(cfg.end_hour() - first);
  const auto& stations = reference_stations();  // sorted: BKS, JDD, TME
  const std::vector<std::string> station_list(stations.begin(), stations.end());
  const std::array<double, 3> station_offset = {0.0, -0.4, 0.3};
  const std::set<Date> holidays = us_federal_holidays(cfg.start_year, cfg.start_year + cfg.years - 1);

  Rng temp_rng = derive_rng(cfg.seed, 11);
  Rng station_rng = derive_rng(cfg.seed, 12);
  Rng wind_rng = derive_rng(cfg.seed, 13);
  Rng humid_rng = derive_rng(cfg.seed, 14);
  Rng rain_rng = derive_rng(cfg.seed, 15);
  Rng demand_rng = derive_rng(cfg.seed, 16);

  SyntheticDataset ds;
  ds.hours.resize(n);
  ds.demand_mw.resize(n);
  ds.temp_c.resize(n);
  ds.in_event.assign(n, 0);

  std::ostringstream load, weather;
  load << kLoadHeader << '\n';
  weather << kWeatherHeader << '\n';

  const double two_pi = 2.0 * std::numbers::pi;
  const double innovation = cfg.temp_noise_std_c * std::sqrt(1.0 - cfg.temp_ar * cfg.temp_ar);
  double anomaly = cfg.temp_noise_std_c * standard_normal(temp_rng);
  double wind_anom = 0.0;
  std::size_t event_hours = 0;

  for (std::size_t i = 0; i < n; ++i) {
    const UtcHour t = first + static_cast<std::int64_t>(i);
    const Date d = date_of(t);
    const int hour = hour_of_day(t);
    const double day_of_year = static_cast<double>(d.days - make_date(year_of(d), 1, 1).days);
    ds.hours[i] = t;

    if (i > 0) anomaly = cfg.temp_ar * anomaly + innovation * standard_normal(temp_rng);
    wind_anom = 0.9 * wind_anom + 0.6 * standard_normal(wind_rng);

    double temp_offset = 0.0, wind_mult = 1.0, precip_mult = 1.0, event_weight = 0.0;
    for (const auto& e : cfg.events) {
      const double p = e.profile(t, cfg.event_ramp_hours);
      if (p <= 0.0) continue;
      temp_offset += p * e.temp_offset_c;
      wind_mult *= 1.0 + p * (e.wind_multiplier - 1.0);
      precip_mult *= 1.0 + p * (e.precip_multiplier - 1.0);
      event_weight = std::max(event_weight, p);
      if (e.in_plateau(t)) ds.in_event[i] = 1;
    }
    event_hours += ds.in_event[i];

    const double seasonal = -std::cos(two_pi * (day_of_year - 15.0) / 365.25);  // +1 mid-July
    const double diurnal = std::cos(two_pi * (hour - 21) / 24.0);
    const double base_temp = cfg.temp_annual_mean_c + cfg.temp_seasonal_amp_c * seasonal +
                             cfg.temp_diurnal_amp_c * diurnal + anomaly + temp_offset;
    // normal wind stays below the threshold; only event multipliers push it over
    const double calm_wind = std::clamp(4.5 + 1.5 * wind_anom, 0.0, cfg.wind_threshold_ms - 1.0);
    const double wind_common = calm_wind * wind_mult;
    double rain = 0.0;
    if (uniform01(rain_rng) < 0.04) rain = -1.5 * std::log(std::max(uniform01(rain_rng), 1e-12));
    if (event_weight > 0.0 && precip_mult > 1.0) rain = (rain + 0.5) * precip_mult;
    const double humid_common = std::clamp(62.0 - 2.0 * cfg.temp_diurnal_amp_c * diurnal + 8.0 * standard_normal(humid_rng) +
                                               (rain > 0 ? 20.0 : 0.0), 5.0, 100.0);

    double temp_sum = 0.0, wind_sum = 0.0;
    for (std::size_t s = 0; s < station_list.size(); ++s) {
      const double temp = detail::round_to(base_temp + station_offset[s] + cfg.station_spread_c * standard_normal(station_rng), 2);
      const double wind = detail::round_to(std::max(0.0, wind_common * (1.0 + 0.05 * standard_normal(station_rng))), 2);
      const double humid = detail::round_to(std::clamp(humid_common + 2.0 * standard_normal(station_rng), 0.0, 100.0), 2);
      const double precip = detail::round_to(rain, 2);
      double feels = temp;
      if (temp >= 20.0) feels += 0.08 * (humid - 40.0) * (temp - 20.0) / 10.0;
      if (temp <= 10.0) feels -= 0.5 * wind * (10.0 - temp) / 10.0;
      feels = detail::round_to(feels, 2);
      int code = 0;
      if (precip > 0) code = temp < 0 ? static_cast<int>(WeatherType::snow)
                             : precip > 4.0 ? static_cast<int>(WeatherType::thunderstorm)
                                            : static_cast<int>(WeatherType::rain);
      else if (humid > 97.0) code = static_cast<int>(WeatherType::fog);
      temp_sum += temp;
      wind_sum += wind;
      weather << station_list[s] << ',' << format_utc_hour(t) << ',' << detail::fixed(temp, 2) << ','
              << detail::fixed(feels, 2) << ',' << detail::fixed(humid, 2) << ',' << detail::fixed(wind, 2) << ','
              << detail::fixed(precip, 2) << ',' << code << '\n';
    }
    const double temp_mean = temp_sum / static_cast<double>(station_list.size());
    const double wind_mean = wind_sum / static_cast<double>(station_list.size());
    ds.temp_c[i] = temp_mean;

    const bool off_day = iso_weekday(d) >= 6 || holidays.count(d) > 0;
    double demand = cfg.envelope.demand(temp_mean) + cfg.diurnal_amp_mw * std::cos(two_pi * (hour - 23) / 24.0) -
                    (off_day ? cfg.weekly_amp_mw : 0.0) +
                    cfg.wind_load_mw_per_ms * std::max(0.0, wind_mean - cfg.wind_threshold_ms);
    if (cfg.noise_std_mw > 0) demand += cfg.noise_std_mw * standard_normal(demand_rng);
    if (demand < cfg.clip_min_mw || demand > cfg.clip_max_mw) {
      ++ds.clipped_hours;
      demand = std::clamp(demand, cfg.clip_min_mw, cfg.clip_max_mw);
    }
    ds.demand_mw[i] = demand;
    load << format_utc_hour(t) << ',' << csv::format_double(demand) << '\n';
  }

  std::ostringstream hol;
  for (Date d : holidays) hol << format_date(d) << '\n';

  ds.load_csv = load.str();
  ds.weather_csv = weather.str();
  ds.holidays_txt = hol.str();
  ds.manifest = {{"generator", "pilf.synthetic/1"},
                 {"config", synthetic_config_json(cfg)},
                 {"first_hour_utc", format_utc_hour(first)},
                 {"hours", n},
                 {"stations", station_list},
                 {"event_plateau_hours", event_hours},
                 {"clipped_hours", ds.clipped_hours}};
  return ds;
}

}  // namespace pilf
