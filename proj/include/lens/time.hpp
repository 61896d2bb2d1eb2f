#pragma once

#include <chrono>
#include <compare>
#include <cstdint>
#include <cstdio>
#include <optional>
#include <string>
#include <string_view>

namespace lens {

inline constexpr std::int64_t kMinutesPerHour = 60;
inline constexpr std::int64_t kMinutesPerDay = 1440;

// A UTC minute, counted from 1970-01-01T00:00Z.
struct Minute {
  std::int64_t value = 0;

  constexpr Minute() = default;
  constexpr explicit Minute(std::int64_t v) : value(v) {}

  friend constexpr auto operator<=>(Minute, Minute) = default;

  constexpr Minute operator+(std::int64_t minutes) const { return Minute{value + minutes}; }
  constexpr Minute operator-(std::int64_t minutes) const { return Minute{value - minutes}; }
  friend constexpr std::int64_t operator-(Minute a, Minute b) { return a.value - b.value; }
  constexpr Minute& operator++() {
    ++value;
    return *this;
  }
};

namespace detail {

constexpr std::int64_t floor_div(std::int64_t a, std::int64_t b) {
  std::int64_t q = a / b;
  if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
  return q;
}

constexpr std::int64_t floor_mod(std::int64_t a, std::int64_t b) { return a - floor_div(a, b) * b; }

inline bool read_digits(std::string_view s, std::size_t pos, std::size_t n, int& out) {
  if (pos + n > s.size()) return false;
  int v = 0;
  for (std::size_t i = pos; i < pos + n; ++i) {
    if (s[i] < '0' || s[i] > '9') return false;
    v = v * 10 + (s[i] - '0');
  }
  out = v;
  return true;
}

}  // namespace detail

// Hour-of-day bin in [0, 24) after shifting by a fixed offset from UTC.
constexpr int hour_of_day(Minute m, std::int64_t tz_offset_minutes = 0) {
  return static_cast<int>(detail::floor_mod(m.value + tz_offset_minutes, kMinutesPerDay) / kMinutesPerHour);
}

// Calendar day number (days since epoch) after shifting by the same offset.
constexpr std::int64_t day_index(Minute m, std::int64_t tz_offset_minutes = 0) {
  return detail::floor_div(m.value + tz_offset_minutes, kMinutesPerDay);
}

// Parses "YYYY-MM-DDTHH:MM" followed by optional ":SS[.fff]" and a zone of
// "Z" or "+HH:MM"/"-HH:MM". Seconds are truncated and offsets folded into UTC.
inline std::optional<Minute> parse_timestamp(std::string_view s) {
  int y = 0, mo = 0, d = 0, h = 0, mi = 0;
  if (!detail::read_digits(s, 0, 4, y) || s.size() < 16 || s[4] != '-' ||
      !detail::read_digits(s, 5, 2, mo) || s[7] != '-' || !detail::read_digits(s, 8, 2, d) ||
      (s[10] != 'T' && s[10] != ' ') || !detail::read_digits(s, 11, 2, h) || s[13] != ':' ||
      !detail::read_digits(s, 14, 2, mi)) {
    return std::nullopt;
  }
  std::size_t pos = 16;
  if (pos < s.size() && s[pos] == ':') {
    int sec = 0;
    if (!detail::read_digits(s, pos + 1, 2, sec) || sec > 60) return std::nullopt;
    pos += 3;
    if (pos < s.size() && s[pos] == '.') {
      ++pos;
      const std::size_t frac_start = pos;
      while (pos < s.size() && s[pos] >= '0' && s[pos] <= '9') ++pos;
      if (pos == frac_start) return std::nullopt;
    }
  }
  std::int64_t offset = 0;
  if (pos == s.size()) return std::nullopt;
  if (s[pos] == 'Z') {
    ++pos;
  } else if (s[pos] == '+' || s[pos] == '-') {
    int oh = 0, om = 0;
    if (!detail::read_digits(s, pos + 1, 2, oh) || pos + 3 >= s.size() || s[pos + 3] != ':' ||
        !detail::read_digits(s, pos + 4, 2, om)) {
      return std::nullopt;
    }
    offset = (s[pos] == '+' ? 1 : -1) * (oh * kMinutesPerHour + om);
    pos += 6;
  } else {
    return std::nullopt;
  }
  if (pos != s.size() || h > 23 || mi > 59) return std::nullopt;

  using namespace std::chrono;
  const year_month_day ymd{year{y}, month{static_cast<unsigned>(mo)}, day{static_cast<unsigned>(d)}};
  if (!ymd.ok()) return std::nullopt;
  const std::int64_t days = sys_days{ymd}.time_since_epoch().count();
  return Minute{days * kMinutesPerDay + h * kMinutesPerHour + mi - offset};
}

inline std::string format_timestamp(Minute m) {
  using namespace std::chrono;
  const std::int64_t days = detail::floor_div(m.value, kMinutesPerDay);
  const std::int64_t rem = m.value - days * kMinutesPerDay;
  const year_month_day ymd{sys_days{std::chrono::days{days}}};
  char buf[32];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02d:%02dZ", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()),
                static_cast<int>(rem / kMinutesPerHour), static_cast<int>(rem % kMinutesPerHour));
  return buf;
}

}  // namespace lens
