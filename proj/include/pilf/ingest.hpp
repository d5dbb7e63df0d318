#pragma once

// Load/weather ingestion: CSV parsing, hourly alignment, gap imputation,
// calendar encoding, standardization and windowing.
//
// File formats (version 1):
//   load CSV     header `timestamp_utc,demand_mw`
//   weather CSV  header `station,timestamp_utc,temp_c,feels_like_c,humidity_pct,wind_ms,precip_mm,wx_code`
//                empty field = missing
//   holidays     one ISO date (YYYY-MM-DD) per line, '#' comments allowed
//   frame CSV    header `timestamp_utc,<13 feature names>`, empty field = missing

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "pilf/csv.hpp"
#include "pilf/error.hpp"
#include "pilf/matrix.hpp"
#include "pilf/time.hpp"

namespace pilf {

inline constexpr std::size_t kFeatureCount = 13;
inline constexpr std::size_t kWindowSteps = 24;

enum Feature : std::size_t {
  kDemand = 0,
  kDemandLag24,
  kAirTemp,
  kFeelsLike,
  kHumidity,
  kWind,
  kPrecip,
  kWxCode,
  kHourOfDay,
  kDayOfWeek,
  kMonth,
  kWeekend,
  kHoliday,
};

inline constexpr std::array<const char*, kFeatureCount> kFeatureNames = {
    "demand_mw",  "demand_lag24_mw", "air_temp_c",  "feels_like_c", "humidity_pct",
    "wind_ms",    "precip_mm",       "wx_code",     "hour",         "day_of_week",
    "month",      "weekend",         "holiday"};

/// Continuous columns are standardized; the weather code and the calendar
/// indicators pass through as plain integers.
inline constexpr bool is_continuous(std::size_t f) { return f <= kPrecip; }
inline constexpr bool is_calendar(std::size_t f) { return f >= kHourOfDay; }

/// Present-weather categories for the `wx_code` column.
enum class WeatherType : int { clear = 0, rain = 1, snow = 2, fog = 3, thunderstorm = 4, other = 5 };

inline const std::set<std::string>& reference_stations() {
  static const std::set<std::string> s{"BKS", "JDD", "TME"};
  return s;
}

struct RawLoadRecord {
  UtcHour timestamp;
  double demand_mw = 0.0;
};

struct RawWeatherRecord {
  std::string station_id;
  UtcHour timestamp;
  std::optional<double> air_temp_c;
  std::optional<double> feels_like_c;
  std::optional<double> humidity_pct;
  std::optional<double> wind_ms;
  std::optional<double> precip_mm;
  std::optional<int> wx_code;
};

inline constexpr const char* kLoadHeader = "timestamp_utc,demand_mw";
inline constexpr const char* kWeatherHeader =
    "station,timestamp_utc,temp_c,feels_like_c,humidity_pct,wind_ms,precip_mm,wx_code";

namespace detail {

inline std::string line_ctx(const std::string& path, std::size_t line) {
  return path + ":" + std::to_string(line);
}

}  // namespace detail

inline std::vector<RawLoadRecord> parse_load_csv(const std::string& path) {
  csv::LineReader reader(path);
  std::string line;
  if (!reader.next(line) || csv::trim(line) != kLoadHeader) {
    throw Error("ingest", "load CSV header mismatch, expected '" + std::string(kLoadHeader) + "'",
                detail::line_ctx(path, reader.line_no));
  }
  std::vector<RawLoadRecord> out;
  while (reader.next(line)) {
    auto fields = csv::split(line);
    const auto ctx = detail::line_ctx(path, reader.line_no);
    if (fields.size() != 2) throw Error("ingest", "malformed load row: expected 2 fields", ctx);
    RawLoadRecord rec;
    try {
      rec.timestamp = parse_utc_hour(csv::trim(fields[0]));
      rec.demand_mw = csv::parse_double(fields[1]);
    } catch (const Error& e) {
      throw Error("ingest", std::string("malformed load row: ") + e.what(), ctx);
    }
    if (!(rec.demand_mw > 0.0)) throw Error("ingest", "demand must be positive", ctx);
    if (!out.empty()) {
      if (rec.timestamp == out.back().timestamp) throw Error("ingest", "duplicate timestamp", ctx);
      if (rec.timestamp < out.back().timestamp) throw Error("ingest", "timestamps not increasing", ctx);
    }
    out.push_back(rec);
  }
  return out;
}

inline std::vector<RawWeatherRecord> parse_weather_csv(const std::string& path) {
  csv::LineReader reader(path);
  std::string line;
  if (!reader.next(line) || csv::trim(line) != kWeatherHeader) {
    throw Error("ingest", "weather CSV header mismatch, expected '" + std::string(kWeatherHeader) + "'",
                detail::line_ctx(path, reader.line_no));
  }
  std::vector<RawWeatherRecord> out;
  while (reader.next(line)) {
    auto fields = csv::split(line);
    const auto ctx = detail::line_ctx(path, reader.line_no);
    if (fields.size() != 8) throw Error("ingest", "malformed weather row: expected 8 fields", ctx);
    RawWeatherRecord rec;
    try {
      rec.station_id = std::string(csv::trim(fields[0]));
      rec.timestamp = parse_utc_hour(csv::trim(fields[1]));
      rec.air_temp_c = csv::parse_optional_double(fields[2]);
      rec.feels_like_c = csv::parse_optional_double(fields[3]);
      rec.humidity_pct = csv::parse_optional_double(fields[4]);
      rec.wind_ms = csv::parse_optional_double(fields[5]);
      rec.precip_mm = csv::parse_optional_double(fields[6]);
      if (auto code = csv::parse_optional_double(fields[7])) {
        if (*code != std::floor(*code) || *code < 0 || *code > 5) throw Error("ingest", "wx_code must be an integer in [0, 5]");
        rec.wx_code = static_cast<int>(*code);
      }
    } catch (const Error& e) {
      throw Error("ingest", std::string("malformed weather row: ") + e.what(), ctx);
    }
    if (rec.station_id.empty()) throw Error("ingest", "empty station id", ctx);
    if (rec.humidity_pct && (*rec.humidity_pct < 0 || *rec.humidity_pct > 100))
      throw Error("ingest", "humidity outside [0, 100]", ctx);
    if (rec.wind_ms && *rec.wind_ms < 0) throw Error("ingest", "negative wind speed", ctx);
    if (rec.precip_mm && *rec.precip_mm < 0) throw Error("ingest", "negative precipitation", ctx);
    out.push_back(std::move(rec));
  }
  return out;
}

inline std::set<Date> parse_holiday_file(const std::string& path) {
  csv::LineReader reader(path);
  std::string line;
  std::set<Date> out;
  while (reader.next(line)) {
    try {
      out.insert(parse_date(csv::trim(line)));
    } catch (const Error& e) {
      throw Error("ingest", std::string("malformed holiday line: ") + e.what(), detail::line_ctx(path, reader.line_no));
    }
  }
  return out;
}

/// Hourly table on a gap-free grid. Column-major storage: `columns[f][row]`.
struct AlignedFrame {
  std::vector<UtcHour> timestamps;
  std::array<std::vector<double>, kFeatureCount> columns;
  std::array<std::vector<std::uint8_t>, kFeatureCount> missing;

  std::size_t rows() const { return timestamps.size(); }

  bool row_complete(std::size_t r) const {
    for (std::size_t f = 0; f < kFeatureCount; ++f)
      if (missing[f][r]) return false;
    return true;
  }

  std::size_t missing_count(std::size_t f) const {
    return static_cast<std::size_t>(std::count(missing[f].begin(), missing[f].end(), 1));
  }

  std::optional<std::size_t> row_of(UtcHour t) const {
    if (timestamps.empty()) return std::nullopt;
    std::int64_t off = t - timestamps.front();
    if (off < 0 || off >= static_cast<std::int64_t>(rows())) return std::nullopt;
    return static_cast<std::size_t>(off);
  }
};

/// Recomputes the lag-24h column from the demand column.
inline void refresh_lag24(AlignedFrame& frame) {
  const std::size_t n = frame.rows();
  auto& lag = frame.columns[kDemandLag24];
  auto& lag_missing = frame.missing[kDemandLag24];
  lag.assign(n, 0.0);
  lag_missing.assign(n, 1);
  for (std::size_t r = kWindowSteps; r < n; ++r) {
    if (!frame.missing[kDemand][r - kWindowSteps]) {
      lag[r] = frame.columns[kDemand][r - kWindowSteps];
      lag_missing[r] = 0;
    }
  }
}

namespace detail {

inline int modal_code(const std::vector<int>& codes) {
  std::array<int, 6> counts{};
  for (int c : codes) ++counts[static_cast<std::size_t>(c)];
  // ties resolve to the smaller code
  return static_cast<int>(std::max_element(counts.begin(), counts.end()) - counts.begin());
}

}  // namespace detail

/// Aligns load and station weather onto one hourly grid spanning the load
/// range. Weather values are per-hour means over the reporting stations in
/// `stations`; the weather code is the per-hour mode. Hours without load or
/// without any reporting station stay marked missing. Calendar columns are
/// left missing for `encode_calendar`.
inline AlignedFrame align_hourly(const std::vector<RawLoadRecord>& load,
                                 const std::vector<RawWeatherRecord>& weather,
                                 const std::set<std::string>& stations) {
  require(!stations.empty(), "ingest", "at least one station is required");
  require(!load.empty(), "ingest", "load series is empty");
  const UtcHour first = load.front().timestamp;
  const UtcHour last = load.back().timestamp;
  const std::size_t n = static_cast<std::size_t>(last - first) + 1;

  AlignedFrame frame;
  frame.timestamps.resize(n);
  for (std::size_t r = 0; r < n; ++r) frame.timestamps[r] = first + static_cast<std::int64_t>(r);
  for (std::size_t f = 0; f < kFeatureCount; ++f) {
    frame.columns[f].assign(n, 0.0);
    frame.missing[f].assign(n, 1);
  }
  for (const auto& rec : load) {
    auto r = static_cast<std::size_t>(rec.timestamp - first);
    frame.columns[kDemand][r] = rec.demand_mw;
    frame.missing[kDemand][r] = 0;
  }

  constexpr std::array<std::size_t, 5> kWeatherCols = {kAirTemp, kFeelsLike, kHumidity, kWind, kPrecip};
  std::array<std::vector<double>, 5> sums;
  std::array<std::vector<int>, 5> counts;
  for (std::size_t k = 0; k < 5; ++k) {
    sums[k].assign(n, 0.0);
    counts[k].assign(n, 0);
  }
  std::vector<std::vector<int>> codes(n);
  std::size_t in_range = 0;
  for (const auto& rec : weather) {
    if (!stations.count(rec.station_id)) continue;
    if (rec.timestamp < first || rec.timestamp > last) continue;
    ++in_range;
    auto r = static_cast<std::size_t>(rec.timestamp - first);
    const std::array<const std::optional<double>*, 5> vals = {&rec.air_temp_c, &rec.feels_like_c, &rec.humidity_pct,
                                                              &rec.wind_ms, &rec.precip_mm};
    for (std::size_t k = 0; k < 5; ++k) {
      if (*vals[k]) {
        sums[k][r] += **vals[k];
        ++counts[k][r];
      }
    }
    if (rec.wx_code) codes[r].push_back(*rec.wx_code);
  }
  if (in_range == 0) throw Error("ingest", "load and weather time ranges do not intersect for the selected stations");

  for (std::size_t k = 0; k < 5; ++k) {
    const std::size_t f = kWeatherCols[k];
    for (std::size_t r = 0; r < n; ++r) {
      if (counts[k][r] > 0) {
        frame.columns[f][r] = sums[k][r] / counts[k][r];
        frame.missing[f][r] = 0;
      }
    }
  }
  for (std::size_t r = 0; r < n; ++r) {
    if (!codes[r].empty()) {
      frame.columns[kWxCode][r] = detail::modal_code(codes[r]);
      frame.missing[kWxCode][r] = 0;
    }
  }
  refresh_lag24(frame);
  return frame;
}

struct GapRun {
  std::size_t column = 0;
  std::size_t start_row = 0;
  std::size_t length = 0;
  bool boundary = false;
};

struct ImputeResult {
  AlignedFrame frame;
  std::vector<GapRun> unfilled;  // runs too long to fill, or touching a series boundary
  std::size_t filled_values = 0;
};

/// Fills interior missing runs of length <= max_gap_hours by linear
/// interpolation between the flanking observations (the weather code takes
/// the left flanking code instead). Demand gaps are filled before the lag
/// column is rebuilt. Calendar and lag columns are never interpolated.
inline ImputeResult impute_linear(const AlignedFrame& input, std::size_t max_gap_hours = 6) {
  ImputeResult res{input, {}, 0};
  AlignedFrame& frame = res.frame;
  const std::size_t n = frame.rows();
  for (std::size_t f = 0; f < kFeatureCount; ++f) {
    if (is_calendar(f) || f == kDemandLag24) continue;
    auto& col = frame.columns[f];
    auto& miss = frame.missing[f];
    if (n > 0 && frame.missing_count(f) == n) {
      throw Error("ingest", std::string("column entirely missing: ") + kFeatureNames[f], kFeatureNames[f]);
    }
    std::size_t r = 0;
    while (r < n) {
      if (!miss[r]) {
        ++r;
        continue;
      }
      std::size_t start = r;
      while (r < n && miss[r]) ++r;
      const std::size_t len = r - start;
      const bool boundary = start == 0 || r == n;
      if (boundary || len > max_gap_hours) {
        res.unfilled.push_back({f, start, len, boundary});
        continue;
      }
      const double left = col[start - 1];
      const double right = col[r];
      for (std::size_t k = 0; k < len; ++k) {
        double frac = static_cast<double>(k + 1) / static_cast<double>(len + 1);
        col[start + k] = f == kWxCode ? left : left + (right - left) * frac;
        miss[start + k] = 0;
      }
      res.filled_values += len;
    }
  }
  refresh_lag24(frame);
  return res;
}

/// Fills hour-of-day [0, 23], ISO day-of-week [1, 7], month [1, 12], weekend
/// and holiday flags.
inline AlignedFrame encode_calendar(AlignedFrame frame, const std::set<Date>& holidays) {
  const std::size_t n = frame.rows();
  for (std::size_t r = 0; r < n; ++r) {
    const UtcHour t = frame.timestamps[r];
    const Date d = date_of(t);
    const int wd = iso_weekday(d);
    frame.columns[kHourOfDay][r] = hour_of_day(t);
    frame.columns[kDayOfWeek][r] = wd;
    frame.columns[kMonth][r] = month_of(d);
    frame.columns[kWeekend][r] = wd >= 6 ? 1.0 : 0.0;
    frame.columns[kHoliday][r] = holidays.count(d) ? 1.0 : 0.0;
    for (std::size_t f = kHourOfDay; f < kFeatureCount; ++f) frame.missing[f][r] = 0;
  }
  return frame;
}

struct SplitSpec {
  HourRange train;
  HourRange val;
  HourRange test;

  void validate() const {
    require(!train.empty() && !val.empty() && !test.empty(), "ingest", "split ranges must be non-empty");
    require(train.end <= val.begin && val.end <= test.begin, "ingest",
            "split ranges must be disjoint and chronologically ordered");
  }
};

enum class SplitTag { train, val, test };

inline const char* to_string(SplitTag s) {
  switch (s) {
    case SplitTag::train: return "train";
    case SplitTag::val: return "val";
    case SplitTag::test: return "test";
  }
  return "?";
}

/// Per-column affine scaling fitted on the training split. Columns that are
/// not continuous keep mean 0 and std 1 and are flagged as passthrough.
struct Standardizer {
  std::array<double, kFeatureCount> mean{};
  std::array<double, kFeatureCount> std{};
  std::array<bool, kFeatureCount> standardized{};
  std::string fitted_on = "train";

  double transform(std::size_t f, double v) const { return (v - mean[f]) / std[f]; }
  double inverse(std::size_t f, double z) const { return z * std[f] + mean[f]; }

  double target_mean() const { return mean[kDemand]; }
  double target_std() const { return std[kDemand]; }
};

/// Population mean/std of each continuous column over complete training rows.
/// A zero-variance column is an error unless `substitute_unit_std` is set.
inline Standardizer fit_standardizer(const AlignedFrame& frame, const SplitSpec& split,
                                     bool substitute_unit_std = false) {
  Standardizer s;
  std::array<double, kFeatureCount> sum{};
  std::array<std::size_t, kFeatureCount> count{};
  for (std::size_t r = 0; r < frame.rows(); ++r) {
    if (!split.train.contains(frame.timestamps[r])) continue;
    for (std::size_t f = 0; f < kFeatureCount; ++f) {
      if (!is_continuous(f) || frame.missing[f][r]) continue;
      sum[f] += frame.columns[f][r];
      ++count[f];
    }
  }
  for (std::size_t f = 0; f < kFeatureCount; ++f) {
    s.standardized[f] = is_continuous(f);
    s.mean[f] = 0.0;
    s.std[f] = 1.0;
    if (!is_continuous(f)) continue;
    if (count[f] == 0) throw Error("ingest", std::string("training range has no values for column ") + kFeatureNames[f], kFeatureNames[f]);
    const double m = sum[f] / static_cast<double>(count[f]);
    double ss = 0.0;
    for (std::size_t r = 0; r < frame.rows(); ++r) {
      if (!split.train.contains(frame.timestamps[r]) || frame.missing[f][r]) continue;
      const double d = frame.columns[f][r] - m;
      ss += d * d;
    }
    const double sd = std::sqrt(ss / static_cast<double>(count[f]));
    s.mean[f] = m;
    if (!(sd > 0.0)) {
      if (!substitute_unit_std)
        throw Error("ingest", std::string("zero-variance column: ") + kFeatureNames[f], kFeatureNames[f]);
      s.std[f] = 1.0;
    } else {
      s.std[f] = sd;
    }
  }
  return s;
}

/// Windows of 24 consecutive hours with the next hour as target. `inputs`
/// stacks windows vertically: rows [m*24, m*24+24) hold window m (standardized).
struct WindowSet {
  Matrix inputs;
  std::vector<double> targets_mw;
  std::vector<double> targets_std;
  std::vector<UtcHour> target_timestamps;
  std::vector<double> target_air_temp_c;
  SplitTag split = SplitTag::train;

  std::size_t size() const { return targets_mw.size(); }

  auto window(std::size_t m) const {
    return inputs.middleRows(static_cast<Eigen::Index>(m * kWindowSteps), kWindowSteps);
  }

  WindowSet subset(const std::vector<std::size_t>& idx) const {
    WindowSet out;
    out.split = split;
    out.inputs.resize(static_cast<Eigen::Index>(idx.size() * kWindowSteps), static_cast<Eigen::Index>(kFeatureCount));
    for (std::size_t k = 0; k < idx.size(); ++k) {
      require(idx[k] < size(), "ingest", "window index out of range");
      out.inputs.middleRows(static_cast<Eigen::Index>(k * kWindowSteps), kWindowSteps) = window(idx[k]);
      out.targets_mw.push_back(targets_mw[idx[k]]);
      out.targets_std.push_back(targets_std[idx[k]]);
      out.target_timestamps.push_back(target_timestamps[idx[k]]);
      out.target_air_temp_c.push_back(target_air_temp_c[idx[k]]);
    }
    return out;
  }
};

/// Builds the windows of one split. A window ending at row t needs rows
/// t-23 .. t+1 inside the split range, on the grid and complete, so a
/// contiguous run of L usable hours yields L - 24 windows.
inline WindowSet make_windows(const AlignedFrame& frame, const Standardizer& standardizer, const HourRange& range,
                              SplitTag tag) {
  WindowSet ws;
  ws.split = tag;
  const std::size_t n = frame.rows();
  std::vector<std::size_t> ends;
  std::size_t run = 0;  // length of the current complete in-range run ending at r
  for (std::size_t r = 0; r < n; ++r) {
    const bool usable = range.contains(frame.timestamps[r]) && frame.row_complete(r);
    run = usable ? run + 1 : 0;
    // r is the target row; the window ends at r - 1
    if (run >= kWindowSteps + 1) ends.push_back(r - 1);
  }
  if (ends.empty()) {
    throw Error("ingest", std::string("split '") + to_string(tag) + "' has fewer than 25 contiguous complete hours",
                to_string(tag));
  }
  const std::size_t m_count = ends.size();
  ws.inputs.resize(static_cast<Eigen::Index>(m_count * kWindowSteps), static_cast<Eigen::Index>(kFeatureCount));
  ws.targets_mw.reserve(m_count);
  for (std::size_t m = 0; m < m_count; ++m) {
    const std::size_t end = ends[m];
    for (std::size_t k = 0; k < kWindowSteps; ++k) {
      const std::size_t r = end + 1 - kWindowSteps + k;
      for (std::size_t f = 0; f < kFeatureCount; ++f) {
        ws.inputs(static_cast<Eigen::Index>(m * kWindowSteps + k), static_cast<Eigen::Index>(f)) =
            standardizer.transform(f, frame.columns[f][r]);
      }
    }
    const std::size_t target = end + 1;
    ws.targets_mw.push_back(frame.columns[kDemand][target]);
    ws.targets_std.push_back(standardizer.transform(kDemand, frame.columns[kDemand][target]));
    ws.target_timestamps.push_back(frame.timestamps[target]);
    ws.target_air_temp_c.push_back(frame.columns[kAirTemp][target]);
  }
  return ws;
}

struct SplitWindows {
  WindowSet train;
  WindowSet val;
  WindowSet test;
};

inline SplitWindows make_windows(const AlignedFrame& frame, const Standardizer& standardizer, const SplitSpec& split) {
  split.validate();
  return {make_windows(frame, standardizer, split.train, SplitTag::train),
          make_windows(frame, standardizer, split.val, SplitTag::val),
          make_windows(frame, standardizer, split.test, SplitTag::test)};
}

/// Demand series (MW) restricted to a range, with its timestamps; used for
/// Delta_max estimation and envelope calibration.
struct RangeSeries {
  std::vector<UtcHour> timestamps;
  std::vector<double> demand_mw;
  std::vector<double> air_temp_c;
};

inline RangeSeries series_in_range(const AlignedFrame& frame, const HourRange& range) {
  RangeSeries s;
  for (std::size_t r = 0; r < frame.rows(); ++r) {
    if (!range.contains(frame.timestamps[r])) continue;
    if (frame.missing[kDemand][r] || frame.missing[kAirTemp][r]) continue;
    s.timestamps.push_back(frame.timestamps[r]);
    s.demand_mw.push_back(frame.columns[kDemand][r]);
    s.air_temp_c.push_back(frame.columns[kAirTemp][r]);
  }
  return s;
}

inline std::string frame_to_csv(const AlignedFrame& frame, const std::string& comment = {}) {
  std::ostringstream out;
  if (!comment.empty()) out << "# " << comment << "\n";
  out << "timestamp_utc";
  for (auto name : kFeatureNames) out << ',' << name;
  out << '\n';
  for (std::size_t r = 0; r < frame.rows(); ++r) {
    out << format_utc_hour(frame.timestamps[r]);
    for (std::size_t f = 0; f < kFeatureCount; ++f) {
      out << ',';
      if (!frame.missing[f][r]) out << csv::format_double(frame.columns[f][r]);
    }
    out << '\n';
  }
  return out.str();
}

inline AlignedFrame read_frame_csv(const std::string& path) {
  csv::LineReader reader(path);
  std::string line;
  std::string header = "timestamp_utc";
  for (auto name : kFeatureNames) header += std::string(",") + name;
  if (!reader.next(line) || csv::trim(line) != header) {
    throw Error("ingest", "frame CSV header mismatch", detail::line_ctx(path, reader.line_no));
  }
  AlignedFrame frame;
  while (reader.next(line)) {
    auto fields = csv::split(line);
    const auto ctx = detail::line_ctx(path, reader.line_no);
    if (fields.size() != kFeatureCount + 1) throw Error("ingest", "malformed frame row", ctx);
    UtcHour t = parse_utc_hour(csv::trim(fields[0]));
    if (!frame.timestamps.empty() && t != frame.timestamps.back() + 1)
      throw Error("ingest", "frame rows must be on a gap-free hourly grid", ctx);
    frame.timestamps.push_back(t);
    for (std::size_t f = 0; f < kFeatureCount; ++f) {
      auto v = csv::parse_optional_double(fields[f + 1]);
      frame.columns[f].push_back(v.value_or(0.0));
      frame.missing[f].push_back(v ? 0 : 1);
    }
  }
  return frame;
}

}  // namespace pilf
