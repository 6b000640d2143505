#pragma once

#include <chrono>
#include <string>
#include <string_view>

namespace satseries {

/// UTC instant with second resolution, used for sensing times and POI bounds.
using Timestamp = std::chrono::sys_seconds;

/// UTC instant with millisecond resolution, used by clocks and journals.
using Instant = std::chrono::sys_time<std::chrono::milliseconds>;

/// Parses `YYYY-MM-DDTHH:MM:SS[.fff]Z` (also accepts a `+00:00` suffix).
/// Fractional seconds are truncated. Throws ParseError.
Timestamp parse_timestamp(std::string_view text);

/// `2018-01-01T00:00:00Z`
std::string format_timestamp(Timestamp t);

/// `20180101T000000Z`, safe for use in file names.
std::string format_timestamp_compact(Timestamp t);

/// Inverse of format_timestamp_compact.
Timestamp parse_timestamp_compact(std::string_view text);

/// `2018-01-01T00:00:00.000Z`
std::string format_instant(Instant t);

Instant parse_instant(std::string_view text);

/// Days since 1970-01-01 for the UTC calendar day containing `t`.
long long utc_day_number(Timestamp t);

} // namespace satseries
