#pragma once

#include <cstdint>
#include <optional>
#include <string>

namespace buzz {

// Seconds since the Unix epoch, always UTC.
using UtcSeconds = int64_t;

// Parses ISO-8601 timestamps with an explicit timezone ("Z" or "+HH:MM"),
// e.g. "2024-10-01T08:00:00Z". Fractional seconds are truncated. Returns
// nullopt on any syntax or calendar violation.
std::optional<UtcSeconds> parse_iso8601(const std::string& text);

// Renders as "YYYY-MM-DDTHH:MM:SSZ".
std::string format_iso8601(UtcSeconds t);

int hour_of_day(UtcSeconds t);            // 0..23, UTC
int weekday_index(UtcSeconds t);          // 0 = Sunday .. 6 = Saturday
const char* weekday_name(UtcSeconds t);   // "Sunday" .. "Saturday"

// "2024-10-05T19:00:00Z (Saturday, hour 19)" -- the rendering shared by the
// augmented-input template and all prompt templates.
std::string render_time_line(UtcSeconds t);

}  // namespace buzz
