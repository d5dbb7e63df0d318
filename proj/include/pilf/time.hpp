#pragma once

#include <chrono>
#include <compare>
#include <cstdint>
#include <cstdio>
#include <set>
#include <string>
#include <string_view>

#include "pilf/error.hpp"

namespace pilf {

/// Whole UTC hour, counted from the Unix epoch.
struct UtcHour {
  std::int64_t hours = 0;

  constexpr auto operator<=>(const UtcHour&) const = default;
  constexpr UtcHour operator+(std::int64_t h) const { return {hours + h}; }
  constexpr UtcHour operator-(std::int64_t h) const { return {hours - h}; }
  constexpr std::int64_t operator-(UtcHour o) const { return hours - o.hours; }
};

/// Calendar date as days since the Unix epoch.
struct Date {
  std::int32_t days = 0;
  constexpr auto operator<=>(const Date&) const = default;
};

namespace detail {

inline int parse_int(std::string_view s, std::size_t pos, std::size_t len, bool& ok) {
  if (pos + len > s.size()) {
    ok = false;
    return 0;
  }
  int v = 0;
  for (std::size_t i = pos; i < pos + len; ++i) {
    char c = s[i];
    if (c < '0' || c > '9') {
      ok = false;
      return 0;
    }
    v = v * 10 + (c - '0');
  }
  return v;
}

}  // namespace detail

inline std::chrono::sys_days to_sys_days(Date d) {
  return std::chrono::sys_days{std::chrono::days{d.days}};
}

inline Date make_date(int y, unsigned m, unsigned d) {
  using namespace std::chrono;
  year_month_day ymd{year{y}, month{m}, day{d}};
  if (!ymd.ok()) throw Error("time", "invalid calendar date", std::to_string(y) + "-" + std::to_string(m) + "-" + std::to_string(d));
  return Date{static_cast<std::int32_t>(sys_days{ymd}.time_since_epoch().count())};
}

inline UtcHour make_hour(int y, unsigned m, unsigned d, int h) {
  Date date = make_date(y, m, d);
  return UtcHour{static_cast<std::int64_t>(date.days) * 24 + h};
}

inline Date date_of(UtcHour t) {
  std::int64_t days = t.hours >= 0 ? t.hours / 24 : -((-t.hours + 23) / 24);
  return Date{static_cast<std::int32_t>(days)};
}

inline int hour_of_day(UtcHour t) {
  return static_cast<int>(t.hours - static_cast<std::int64_t>(date_of(t).days) * 24);
}

inline std::chrono::year_month_day ymd_of(Date d) { return std::chrono::year_month_day{to_sys_days(d)}; }

/// ISO weekday: Monday = 1 ... Sunday = 7.
inline int iso_weekday(Date d) { return static_cast<int>(std::chrono::weekday{to_sys_days(d)}.iso_encoding()); }

inline int month_of(Date d) { return static_cast<int>(static_cast<unsigned>(ymd_of(d).month())); }
inline int year_of(Date d) { return static_cast<int>(ymd_of(d).year()); }

/// Accepts `YYYY-MM-DD` followed by `T` or a space and `HH[:MM[:SS]]`, with an
/// optional trailing `Z`. Minutes and seconds must be zero.
inline UtcHour parse_utc_hour(std::string_view s) {
  while (!s.empty() && (s.back() == ' ' || s.back() == '\r')) s.remove_suffix(1);
  if (!s.empty() && s.back() == 'Z') s.remove_suffix(1);
  bool ok = s.size() >= 13 && s[4] == '-' && s[7] == '-' && (s[10] == 'T' || s[10] == ' ');
  int y = detail::parse_int(s, 0, 4, ok);
  int mo = detail::parse_int(s, 5, 2, ok);
  int d = detail::parse_int(s, 8, 2, ok);
  int h = detail::parse_int(s, 11, 2, ok);
  int mi = 0, sec = 0;
  if (ok && s.size() > 13) {
    ok = s.size() >= 16 && s[13] == ':';
    mi = detail::parse_int(s, 14, 2, ok);
    if (ok && s.size() > 16) {
      ok = s.size() == 19 && s[16] == ':';
      sec = detail::parse_int(s, 17, 2, ok);
    }
  }
  if (!ok || h > 23 || mo < 1 || mo > 12 || d < 1 || d > 31) {
    throw Error("time", "malformed ISO-8601 timestamp", std::string(s));
  }
  if (mi != 0 || sec != 0) throw Error("time", "timestamp is not on the hour", std::string(s));
  return make_hour(y, static_cast<unsigned>(mo), static_cast<unsigned>(d), h);
}

inline Date parse_date(std::string_view s) {
  while (!s.empty() && (s.back() == ' ' || s.back() == '\r')) s.remove_suffix(1);
  bool ok = s.size() == 10 && s[4] == '-' && s[7] == '-';
  int y = detail::parse_int(s, 0, 4, ok);
  int mo = detail::parse_int(s, 5, 2, ok);
  int d = detail::parse_int(s, 8, 2, ok);
  if (!ok || mo < 1 || mo > 12 || d < 1 || d > 31) throw Error("time", "malformed ISO date", std::string(s));
  return make_date(y, static_cast<unsigned>(mo), static_cast<unsigned>(d));
}

inline std::string format_date(Date d) {
  auto ymd = ymd_of(d);
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()));
  return buf;
}

inline std::string format_utc_hour(UtcHour t) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%sT%02d:00:00Z", format_date(date_of(t)).c_str(), hour_of_day(t));
  return buf;
}

/// Half-open hour interval [begin, end).
struct HourRange {
  UtcHour begin;
  UtcHour end;

  bool contains(UtcHour t) const { return begin <= t && t < end; }
  std::int64_t length() const { return end - begin; }
  bool empty() const { return end <= begin; }
};

namespace detail {

inline Date nth_weekday(int y, unsigned m, unsigned iso_wd, unsigned n) {
  using namespace std::chrono;
  year_month_weekday ymw{year{y}, month{m}, weekday_indexed{weekday{iso_wd % 7}, n}};
  return Date{static_cast<std::int32_t>(sys_days{ymw}.time_since_epoch().count())};
}

inline Date last_weekday(int y, unsigned m, unsigned iso_wd) {
  using namespace std::chrono;
  year_month_weekday_last ymwl{year{y}, month{m}, weekday_last{weekday{iso_wd % 7}}};
  return Date{static_cast<std::int32_t>(sys_days{ymwl}.time_since_epoch().count())};
}

// Saturday holidays are observed on Friday, Sunday holidays on Monday.
inline Date observed(Date d) {
  int wd = iso_weekday(d);
  if (wd == 6) return Date{d.days - 1};
  if (wd == 7) return Date{d.days + 1};
  return d;
}

}  // namespace detail

/// Observed U.S. federal holidays for the given year (OPM rules, Juneteenth
/// from 2021 onward).
inline std::set<Date> us_federal_holidays(int y) {
  using detail::last_weekday;
  using detail::nth_weekday;
  using detail::observed;
  std::set<Date> out;
  out.insert(observed(make_date(y, 1, 1)));
  out.insert(nth_weekday(y, 1, 1, 3));   // MLK day
  out.insert(nth_weekday(y, 2, 1, 3));   // Washington's birthday
  out.insert(last_weekday(y, 5, 1));     // Memorial day
  if (y >= 2021) out.insert(observed(make_date(y, 6, 19)));
  out.insert(observed(make_date(y, 7, 4)));
  out.insert(nth_weekday(y, 9, 1, 1));   // Labor day
  out.insert(nth_weekday(y, 10, 1, 2));  // Columbus day
  out.insert(observed(make_date(y, 11, 11)));
  out.insert(nth_weekday(y, 11, 4, 4));  // Thanksgiving
  out.insert(observed(make_date(y, 12, 25)));
  return out;
}

inline std::set<Date> us_federal_holidays(int first_year, int last_year) {
  std::set<Date> out;
  for (int y = first_year - 1; y <= last_year + 1; ++y) {
    auto h = us_federal_holidays(y);
    out.insert(h.begin(), h.end());
  }
  return out;
}

}  // namespace pilf
