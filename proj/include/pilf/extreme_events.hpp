#pragma once

// Hampel flagging of extreme load hours and regime partitioning.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <sstream>
#include <vector>

#include "pilf/csv.hpp"
#include "pilf/error.hpp"
#include "pilf/ingest.hpp"
#include "pilf/time.hpp"

namespace pilf {

struct HampelConfig {
  std::size_t window_hours = 720;  // one month; centered span is 2*(window/2)+1 points
  double k_mad = 3.0;
  double mad_floor = 1e-6;

  std::size_t half_width() const { return window_hours / 2; }

  void validate() const {
    require(window_hours >= 2, "extreme_events", "Hampel window must cover at least two hours");
    require(k_mad > 0, "extreme_events", "k_mad must be positive");
    require(mad_floor > 0, "extreme_events", "mad_floor must be positive");
  }
};

namespace detail {

// Median of a sorted range; even counts average the two middle values.
inline double sorted_median(std::span<const double> s) {
  const std::size_t n = s.size();
  return n % 2 == 1 ? s[n / 2] : 0.5 * (s[n / 2 - 1] + s[n / 2]);
}

// Median of |s_i - m| for sorted s, by merging the two monotone deviation
// sequences that run outward from m.
inline double sorted_mad(std::span<const double> s, double m) {
  const std::size_t n = s.size();
  const std::size_t split = static_cast<std::size_t>(std::lower_bound(s.begin(), s.end(), m) - s.begin());
  std::ptrdiff_t left = static_cast<std::ptrdiff_t>(split) - 1;
  std::size_t right = split;
  auto next = [&]() {
    const bool take_left =
        right >= n || (left >= 0 && m - s[static_cast<std::size_t>(left)] <= s[right] - m);
    return take_left ? m - s[static_cast<std::size_t>(left--)] : s[right++] - m;
  };
  const std::size_t target = (n - 1) / 2;
  double prev = 0.0;
  for (std::size_t k = 0; k <= target; ++k) prev = next();
  if (n % 2 == 1) return prev;
  return 0.5 * (prev + next());
}

}  // namespace detail

/// Point i is flagged iff |y_i - median(W_i)| > k_mad * max(MAD(W_i), mad_floor)
/// where W_i is the window centered at i, clipped at the series ends. The
/// window is maintained incrementally as a sorted buffer.
inline std::vector<std::uint8_t> hampel_flags(std::span<const double> series, const HampelConfig& cfg) {
  cfg.validate();
  require(!series.empty(), "extreme_events", "Hampel filter needs a non-empty series");
  const std::size_t n = series.size();
  const std::size_t h = cfg.half_width();
  std::vector<std::uint8_t> flags(n, 0);
  std::vector<double> window;
  window.reserve(2 * h + 1);
  std::size_t lo = 0, hi = 0;  // current window covers [lo, hi)
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t want_lo = i > h ? i - h : 0;
    const std::size_t want_hi = std::min(n, i + h + 1);
    while (hi < want_hi) {
      window.insert(std::upper_bound(window.begin(), window.end(), series[hi]), series[hi]);
      ++hi;
    }
    while (lo < want_lo) {
      window.erase(std::lower_bound(window.begin(), window.end(), series[lo]));
      ++lo;
    }
    const double med = detail::sorted_median(window);
    const double mad = std::max(detail::sorted_mad(window, med), cfg.mad_floor);
    flags[i] = std::abs(series[i] - med) > cfg.k_mad * mad ? 1 : 0;
  }
  return flags;
}

/// Hourly flags for an observed load series.
struct RegimeLabels {
  std::vector<UtcHour> timestamps;
  std::vector<std::uint8_t> flags;

  std::size_t extreme_count() const { return static_cast<std::size_t>(std::count(flags.begin(), flags.end(), 1)); }
  std::size_t normal_count() const { return flags.size() - extreme_count(); }

  std::string to_csv(std::span<const double> demand) const {
    require(demand.size() == flags.size(), "extreme_events", "demand and flags lengths differ");
    std::ostringstream out;
    out << "timestamp_utc,demand_mw,flag\n";
    for (std::size_t i = 0; i < flags.size(); ++i)
      out << format_utc_hour(timestamps[i]) << ',' << csv::format_double(demand[i]) << ',' << int(flags[i]) << '\n';
    return out.str();
  }
};

/// Flags computed on the observed demand of the test range only.
inline RegimeLabels label_test_range(const RangeSeries& test_series, const HampelConfig& cfg) {
  return {test_series.timestamps, hampel_flags(test_series.demand_mw, cfg)};
}

/// Flags aligned to the target hours of a window set. Every target hour must
/// be present in the labels.
inline std::vector<std::uint8_t> flags_for_targets(const RegimeLabels& labels, const std::vector<UtcHour>& targets) {
  std::vector<std::uint8_t> out;
  out.reserve(targets.size());
  for (UtcHour t : targets) {
    auto it = std::lower_bound(labels.timestamps.begin(), labels.timestamps.end(), t);
    if (it == labels.timestamps.end() || *it != t)
      throw Error("extreme_events", "flags are not aligned to the test target hours", format_utc_hour(t));
    out.push_back(labels.flags[static_cast<std::size_t>(it - labels.timestamps.begin())]);
  }
  return out;
}

struct RegimeSplit {
  std::vector<std::size_t> extreme;  // window indices
  std::vector<std::size_t> normal;
};

inline RegimeSplit split_regimes(const WindowSet& test, std::span<const std::uint8_t> flags) {
  require(flags.size() == test.size(), "extreme_events", "flags are not aligned to the test windows",
          std::to_string(flags.size()) + " vs " + std::to_string(test.size()));
  RegimeSplit s;
  for (std::size_t i = 0; i < flags.size(); ++i) (flags[i] ? s.extreme : s.normal).push_back(i);
  return s;
}

}  // namespace pilf
