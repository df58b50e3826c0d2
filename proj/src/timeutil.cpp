#include "buzz/timeutil.hpp"

#include <array>
#include <cstdio>

namespace buzz {
namespace {

// Howard Hinnant's civil-date algorithms.
int64_t days_from_civil(int y, int m, int d) {
    y -= m <= 2;
    const int64_t era = (y >= 0 ? y : y - 399) / 400;
    const unsigned yoe = static_cast<unsigned>(y - era * 400);
    const unsigned doy = (153u * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
    const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    return era * 146097 + static_cast<int64_t>(doe) - 719468;
}

void civil_from_days(int64_t z, int& y, int& m, int& d) {
    z += 719468;
    const int64_t era = (z >= 0 ? z : z - 146096) / 146097;
    const unsigned doe = static_cast<unsigned>(z - era * 146097);
    const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
    const int64_t yy = static_cast<int64_t>(yoe) + era * 400;
    const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    const unsigned mp = (5 * doy + 2) / 153;
    d = static_cast<int>(doy - (153 * mp + 2) / 5 + 1);
    m = static_cast<int>(mp < 10 ? mp + 3 : mp - 9);
    y = static_cast<int>(yy + (m <= 2));
}

bool is_leap(int y) { return y % 4 == 0 && (y % 100 != 0 || y % 400 == 0); }

int days_in_month(int y, int m) {
    static constexpr std::array<int, 12> lengths{31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};
    if (m == 2 && is_leap(y)) return 29;
    return lengths[m - 1];
}

bool read_digits(const std::string& s, size_t pos, int count, int& out) {
    if (pos + count > s.size()) return false;
    int v = 0;
    for (int i = 0; i < count; ++i) {
        char c = s[pos + i];
        if (c < '0' || c > '9') return false;
        v = v * 10 + (c - '0');
    }
    out = v;
    return true;
}

constexpr const char* kWeekdayNames[7] = {"Sunday",   "Monday", "Tuesday", "Wednesday",
                                          "Thursday", "Friday", "Saturday"};

int64_t floor_div(int64_t a, int64_t b) {
    int64_t q = a / b;
    if (a % b != 0 && ((a < 0) != (b < 0))) --q;
    return q;
}

int64_t floor_mod(int64_t a, int64_t b) { return a - floor_div(a, b) * b; }

}  // namespace

std::optional<UtcSeconds> parse_iso8601(const std::string& text) {
    int year, month, day, hour, minute, second;
    if (!read_digits(text, 0, 4, year)) return std::nullopt;
    if (text.size() < 5 || text[4] != '-') return std::nullopt;
    if (!read_digits(text, 5, 2, month)) return std::nullopt;
    if (text.size() < 8 || text[7] != '-') return std::nullopt;
    if (!read_digits(text, 8, 2, day)) return std::nullopt;
    if (text.size() < 11 || (text[10] != 'T' && text[10] != 't' && text[10] != ' '))
        return std::nullopt;
    if (!read_digits(text, 11, 2, hour)) return std::nullopt;
    if (text.size() < 14 || text[13] != ':') return std::nullopt;
    if (!read_digits(text, 14, 2, minute)) return std::nullopt;
    if (text.size() < 17 || text[16] != ':') return std::nullopt;
    if (!read_digits(text, 17, 2, second)) return std::nullopt;

    size_t pos = 19;
    if (pos < text.size() && text[pos] == '.') {  // fractional seconds: truncate
        ++pos;
        size_t start = pos;
        while (pos < text.size() && text[pos] >= '0' && text[pos] <= '9') ++pos;
        if (pos == start) return std::nullopt;
    }

    // timezone designator is required
    if (pos >= text.size()) return std::nullopt;
    int offset_sec = 0;
    char tz = text[pos];
    if (tz == 'Z' || tz == 'z') {
        ++pos;
    } else if (tz == '+' || tz == '-') {
        ++pos;
        int oh, om = 0;
        if (!read_digits(text, pos, 2, oh)) return std::nullopt;
        pos += 2;
        if (pos < text.size() && text[pos] == ':') ++pos;
        if (pos < text.size()) {
            if (!read_digits(text, pos, 2, om)) return std::nullopt;
            pos += 2;
        }
        if (oh > 23 || om > 59) return std::nullopt;
        offset_sec = (oh * 3600 + om * 60) * (tz == '+' ? 1 : -1);
    } else {
        return std::nullopt;
    }
    if (pos != text.size()) return std::nullopt;

    if (month < 1 || month > 12) return std::nullopt;
    if (day < 1 || day > days_in_month(year, month)) return std::nullopt;
    if (hour > 23 || minute > 59 || second > 59) return std::nullopt;

    int64_t days = days_from_civil(year, month, day);
    return days * 86400 + hour * 3600 + minute * 60 + second - offset_sec;
}

std::string format_iso8601(UtcSeconds t) {
    int64_t days = floor_div(t, 86400);
    int64_t rem = floor_mod(t, 86400);
    int y, m, d;
    civil_from_days(days, y, m, d);
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%04d-%02d-%02dT%02d:%02d:%02dZ", y, m, d,
                  static_cast<int>(rem / 3600), static_cast<int>((rem / 60) % 60),
                  static_cast<int>(rem % 60));
    return buf;
}

int hour_of_day(UtcSeconds t) { return static_cast<int>(floor_mod(t, 86400) / 3600); }

int weekday_index(UtcSeconds t) {
    int64_t days = floor_div(t, 86400);
    return static_cast<int>(floor_mod(days + 4, 7));  // 1970-01-01 was a Thursday
}

const char* weekday_name(UtcSeconds t) { return kWeekdayNames[weekday_index(t)]; }

std::string render_time_line(UtcSeconds t) {
    return format_iso8601(t) + " (" + weekday_name(t) + ", hour " + std::to_string(hour_of_day(t)) +
           ")";
}

}  // namespace buzz
