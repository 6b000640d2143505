#include "satseries/core/time.hpp"

#include <cctype>
#include <cstdio>

#include "satseries/core/error.hpp"

namespace satseries {
namespace {

int read_digits(std::string_view text, std::size_t pos, std::size_t count) {
    if (pos + count > text.size()) {
        throw ParseError("invalid timestamp: '" + std::string(text) + "'");
    }
    int value = 0;
    for (std::size_t i = pos; i < pos + count; ++i) {
        if (!std::isdigit(static_cast<unsigned char>(text[i]))) {
            throw ParseError("invalid timestamp: '" + std::string(text) + "'");
        }
        value = value * 10 + (text[i] - '0');
    }
    return value;
}

void expect_char(std::string_view text, std::size_t pos, char c) {
    if (pos >= text.size() || text[pos] != c) {
        throw ParseError("invalid timestamp: '" + std::string(text) + "'");
    }
}

Timestamp make_timestamp(std::string_view text, int y, int mo, int d, int h, int mi, int s) {
    using namespace std::chrono;
    const year_month_day ymd{year{y}, month{static_cast<unsigned>(mo)}, day{static_cast<unsigned>(d)}};
    if (!ymd.ok() || h > 23 || mi > 59 || s > 60) {
        throw ParseError("invalid timestamp: '" + std::string(text) + "'");
    }
    return sys_days{ymd} + hours{h} + minutes{mi} + seconds{s};
}

struct Fields {
    int year, month, day, hour, minute, second;
    unsigned millis;
};

Fields split(Instant t) {
    using namespace std::chrono;
    const auto dp = floor<days>(t);
    const year_month_day ymd{dp};
    const hh_mm_ss tod{t - dp};
    return {int(ymd.year()), int(unsigned(ymd.month())), int(unsigned(ymd.day())),
            int(tod.hours().count()), int(tod.minutes().count()), int(tod.seconds().count()),
            unsigned(tod.subseconds().count())};
}

} // namespace

Timestamp parse_timestamp(std::string_view text) {
    return std::chrono::time_point_cast<std::chrono::seconds>(parse_instant(text));
}

Instant parse_instant(std::string_view text) {
    const int y = read_digits(text, 0, 4);
    expect_char(text, 4, '-');
    const int mo = read_digits(text, 5, 2);
    expect_char(text, 7, '-');
    const int d = read_digits(text, 8, 2);
    expect_char(text, 10, 'T');
    const int h = read_digits(text, 11, 2);
    expect_char(text, 13, ':');
    const int mi = read_digits(text, 14, 2);
    expect_char(text, 16, ':');
    const int s = read_digits(text, 17, 2);
    std::size_t pos = 19;
    int millis = 0;
    if (pos < text.size() && text[pos] == '.') {
        ++pos;
        int digits = 0;
        while (pos < text.size() && std::isdigit(static_cast<unsigned char>(text[pos]))) {
            if (digits < 3) {
                millis = millis * 10 + (text[pos] - '0');
            }
            ++digits;
            ++pos;
        }
        if (digits == 0) {
            throw ParseError("invalid timestamp: '" + std::string(text) + "'");
        }
        for (; digits < 3; ++digits) {
            millis *= 10;
        }
    }
    const std::string_view rest = text.substr(pos);
    if (rest != "Z" && rest != "+00:00") {
        throw ParseError("invalid timestamp (expected UTC 'Z'): '" + std::string(text) + "'");
    }
    return Instant{make_timestamp(text, y, mo, d, h, mi, s)} + std::chrono::milliseconds{millis};
}

std::string format_timestamp(Timestamp t) {
    const Fields f = split(Instant{t});
    char buf[32];
    std::snprintf(buf, sizeof buf, "%04d-%02d-%02dT%02d:%02d:%02dZ", f.year, f.month, f.day, f.hour,
                  f.minute, f.second);
    return buf;
}

std::string format_timestamp_compact(Timestamp t) {
    const Fields f = split(Instant{t});
    char buf[32];
    std::snprintf(buf, sizeof buf, "%04d%02d%02dT%02d%02d%02dZ", f.year, f.month, f.day, f.hour,
                  f.minute, f.second);
    return buf;
}

Timestamp parse_timestamp_compact(std::string_view text) {
    if (text.size() != 16 || text[8] != 'T' || text[15] != 'Z') {
        throw ParseError("invalid compact timestamp: '" + std::string(text) + "'");
    }
    return make_timestamp(text, read_digits(text, 0, 4), read_digits(text, 4, 2),
                          read_digits(text, 6, 2), read_digits(text, 9, 2),
                          read_digits(text, 11, 2), read_digits(text, 13, 2));
}

std::string format_instant(Instant t) {
    const Fields f = split(t);
    char buf[40];
    std::snprintf(buf, sizeof buf, "%04d-%02d-%02dT%02d:%02d:%02d.%03uZ", f.year, f.month, f.day,
                  f.hour, f.minute, f.second, f.millis);
    return buf;
}

long long utc_day_number(Timestamp t) {
    return std::chrono::floor<std::chrono::days>(t).time_since_epoch().count();
}

} // namespace satseries
