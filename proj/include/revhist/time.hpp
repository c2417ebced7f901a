#pragma once

#include <chrono>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

namespace revhist {

// Revision timestamps are UTC with second precision.
using Timestamp = std::chrono::sys_seconds;
using Date = std::chrono::sys_days;

// Half-open [start, end) interval.
struct TimeRange {
  Timestamp start;
  Timestamp end;

  bool contains(Timestamp t) const { return start <= t && t < end; }
  bool valid() const { return start < end; }
  friend bool operator==(const TimeRange&, const TimeRange&) = default;
};

enum class Granularity { day, week };

std::string_view to_string(Granularity g);
std::optional<Granularity> parse_granularity(std::string_view text);

// Strict `YYYY-MM-DDTHH:MM:SSZ`. Throws Error(bad_timestamp).
Timestamp parse_iso8601(std::string_view text);
std::optional<Timestamp> try_parse_iso8601(std::string_view text);
std::string format_iso8601(Timestamp t);

// `YYYY-MM-DD`, or a full ISO-8601 instant. Throws Error(bad_timestamp).
Timestamp parse_date_or_instant(std::string_view text);
std::string format_date(Date d);

Date day_of(Timestamp t);
// Monday of the ISO week containing `d`.
Date iso_week_start(Date d);
Date bucket_start(Timestamp t, Granularity g);
Date next_bucket(Date d, Granularity g);

inline Timestamp to_timestamp(Date d) { return Timestamp{d}; }

} // namespace revhist
