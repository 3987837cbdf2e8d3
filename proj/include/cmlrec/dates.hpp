#pragma once

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cstdio>
#include <string>
#include <string_view>

#include "error.hpp"

namespace cmlrec {

using Date = std::chrono::sys_days;
using Timestamp = std::chrono::sys_seconds;

namespace detail {

inline int parse_int(std::string_view s, std::string_view whole) {
    int value = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
    if (ec != std::errc{} || ptr != s.data() + s.size()) {
        throw Error(ErrorKind::ParseError, "bad date/time '" + std::string(whole) + "'");
    }
    return value;
}

}

/// Parses an ISO-8601 calendar date (YYYY-MM-DD).
inline Date parse_date(std::string_view s) {
    if (s.size() != 10 || s[4] != '-' || s[7] != '-') {
        throw Error(ErrorKind::ParseError, "bad date '" + std::string(s) + "'");
    }
    std::chrono::year_month_day ymd{std::chrono::year{detail::parse_int(s.substr(0, 4), s)},
                                    std::chrono::month{static_cast<unsigned>(detail::parse_int(s.substr(5, 2), s))},
                                    std::chrono::day{static_cast<unsigned>(detail::parse_int(s.substr(8, 2), s))}};
    if (!ymd.ok()) {
        throw Error(ErrorKind::ParseError, "invalid calendar date '" + std::string(s) + "'");
    }
    return Date{ymd};
}

/// Parses YYYY-MM-DD, YYYY-MM-DDTHH:MM:SS or YYYY-MM-DD HH:MM:SS, with an
/// optional trailing 'Z'. Times are treated as UTC.
inline Timestamp parse_timestamp(std::string_view s) {
    if (!s.empty() && s.back() == 'Z') {
        s.remove_suffix(1);
    }
    Date day = parse_date(s.substr(0, std::min<std::size_t>(s.size(), 10)));
    if (s.size() == 10) {
        return Timestamp{day};
    }
    if (s.size() != 19 || (s[10] != 'T' && s[10] != ' ') || s[13] != ':' || s[16] != ':') {
        throw Error(ErrorKind::ParseError, "bad timestamp '" + std::string(s) + "'");
    }
    int h = detail::parse_int(s.substr(11, 2), s);
    int m = detail::parse_int(s.substr(14, 2), s);
    int sec = detail::parse_int(s.substr(17, 2), s);
    if (h > 23 || m > 59 || sec > 60) {
        throw Error(ErrorKind::ParseError, "bad time of day '" + std::string(s) + "'");
    }
    return Timestamp{day} + std::chrono::hours{h} + std::chrono::minutes{m} + std::chrono::seconds{sec};
}

inline std::string format_date(Date d) {
    std::chrono::year_month_day ymd{d};
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(ymd.year()), static_cast<unsigned>(ymd.month()),
                  static_cast<unsigned>(ymd.day()));
    return buf;
}

inline std::string format_timestamp(Timestamp t) {
    auto day = std::chrono::floor<std::chrono::days>(t);
    std::chrono::hh_mm_ss hms{t - day};
    char buf[32];
    std::snprintf(buf, sizeof buf, "T%02ld:%02ld:%02ld", static_cast<long>(hms.hours().count()),
                  static_cast<long>(hms.minutes().count()), static_cast<long>(hms.seconds().count()));
    return format_date(day) + buf;
}

/// Fractional days from `from` to `to` (negative when `to` precedes `from`).
inline double days_between(Timestamp from, Timestamp to) {
    return std::chrono::duration<double, std::ratio<86400>>(to - from).count();
}

inline Timestamp start_of(Date d) { return Timestamp{d}; }

}
