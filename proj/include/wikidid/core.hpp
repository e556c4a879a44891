#pragma once

// Core value types shared across the pipeline: civil dates, UTC instants,
// error types and small string/number parsing helpers.

#include <charconv>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace wikidid {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct IoError : Error {
    using Error::Error;
};

struct FormatError : Error {
    using Error::Error;
};

struct ConfigError : Error {
    using Error::Error;
};

// Unix seconds, always UTC.
using Instant = std::int64_t;

namespace detail {

// Days from civil date, epoch 1970-01-01 (Gregorian, proleptic).
constexpr std::int32_t days_from_civil(int y, unsigned m, unsigned d) noexcept {
    y -= m <= 2;
    const int era = (y >= 0 ? y : y - 399) / 400;
    const unsigned yoe = static_cast<unsigned>(y - era * 400);
    const unsigned doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
    const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    return era * 146097 + static_cast<std::int32_t>(doe) - 719468;
}

constexpr void civil_from_days(std::int32_t z, int& y, unsigned& m, unsigned& d) noexcept {
    z += 719468;
    const int era = (z >= 0 ? z : z - 146096) / 146097;
    const unsigned doe = static_cast<unsigned>(z - era * 146097);
    const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
    y = static_cast<int>(yoe) + era * 400;
    const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    const unsigned mp = (5 * doy + 2) / 153;
    d = doy - (153 * mp + 2) / 5 + 1;
    m = mp + (mp < 10 ? 3 : -9);
    y += m <= 2;
}

} // namespace detail

// Calendar date, stored as days since 1970-01-01.
class Date {
public:
    constexpr Date() = default;
    constexpr explicit Date(std::int32_t days) : days_(days) {}

    static constexpr Date from_ymd(int year, unsigned month, unsigned day) {
        return Date(detail::days_from_civil(year, month, day));
    }

    constexpr std::int32_t days() const { return days_; }

    constexpr int year() const {
        int y; unsigned m, d;
        detail::civil_from_days(days_, y, m, d);
        return y;
    }
    constexpr unsigned month() const {
        int y; unsigned m, d;
        detail::civil_from_days(days_, y, m, d);
        return m;
    }
    constexpr unsigned day() const {
        int y; unsigned m, d;
        detail::civil_from_days(days_, y, m, d);
        return d;
    }

    // Same month/day in another year; Feb 29 maps to Feb 28 off leap years.
    Date with_year(int target_year) const {
        int y; unsigned m, d;
        detail::civil_from_days(days_, y, m, d);
        if (m == 2 && d == 29) {
            const bool leap = (target_year % 4 == 0 && target_year % 100 != 0) || target_year % 400 == 0;
            if (!leap) d = 28;
        }
        return from_ymd(target_year, m, d);
    }

    std::string to_string() const {
        int y; unsigned m, d;
        detail::civil_from_days(days_, y, m, d);
        char buf[16];
        std::snprintf(buf, sizeof(buf), "%04d-%02u-%02u", y, m, d);
        return buf;
    }

    constexpr Date operator+(std::int32_t n) const { return Date(days_ + n); }
    constexpr Date operator-(std::int32_t n) const { return Date(days_ - n); }
    constexpr std::int32_t operator-(Date o) const { return days_ - o.days_; }
    Date& operator+=(std::int32_t n) { days_ += n; return *this; }
    Date& operator++() { ++days_; return *this; }
    constexpr auto operator<=>(const Date&) const = default;

private:
    std::int32_t days_ = 0;
};

// "YYYY-MM-DD"
inline std::optional<Date> try_parse_date(std::string_view s) {
    if (s.size() != 10 || s[4] != '-' || s[7] != '-') return std::nullopt;
    int y; unsigned m, d;
    auto num = [](std::string_view t, auto& out) {
        auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), out);
        return ec == std::errc() && p == t.data() + t.size();
    };
    if (!num(s.substr(0, 4), y) || !num(s.substr(5, 2), m) || !num(s.substr(8, 2), d)) return std::nullopt;
    if (m < 1 || m > 12 || d < 1 || d > 31) return std::nullopt;
    return Date::from_ymd(y, m, d);
}

inline Date parse_date(std::string_view s) {
    auto d = try_parse_date(s);
    if (!d) throw FormatError("invalid date: " + std::string(s));
    return *d;
}

// Accepts "YYYY-MM-DD HH:MM:SS", with optional 'T' separator, optional
// fractional seconds and optional trailing 'Z'. Always UTC.
inline std::optional<Instant> try_parse_timestamp(std::string_view s) {
    if (s.size() >= 1 && s.back() == 'Z') s.remove_suffix(1);
    if (s.size() < 19) return std::nullopt;
    if (s[4] != '-' || s[7] != '-' || (s[10] != ' ' && s[10] != 'T') || s[13] != ':' || s[16] != ':')
        return std::nullopt;
    auto date = try_parse_date(s.substr(0, 10));
    if (!date) return std::nullopt;
    unsigned hh, mi, ss;
    auto num = [](std::string_view t, unsigned& out) {
        auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), out);
        return ec == std::errc() && p == t.data() + t.size();
    };
    if (!num(s.substr(11, 2), hh) || !num(s.substr(14, 2), mi) || !num(s.substr(17, 2), ss))
        return std::nullopt;
    if (hh > 23 || mi > 59 || ss > 60) return std::nullopt;
    if (s.size() > 19) {
        if (s[19] != '.') return std::nullopt;
        for (char c : s.substr(20))
            if (c < '0' || c > '9') return std::nullopt;
    }
    return static_cast<Instant>(date->days()) * 86400 + hh * 3600 + mi * 60 + ss;
}

inline std::string format_timestamp(Instant t) {
    std::int64_t days = t / 86400;
    std::int64_t sod = t % 86400;
    if (sod < 0) { sod += 86400; --days; }
    const Date d(static_cast<std::int32_t>(days));
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%s %02d:%02d:%02d", d.to_string().c_str(),
                  static_cast<int>(sod / 3600), static_cast<int>(sod % 3600 / 60),
                  static_cast<int>(sod % 60));
    return buf;
}

inline Date utc_date(Instant t) {
    std::int64_t days = t / 86400;
    if (t % 86400 < 0) --days;
    return Date(static_cast<std::int32_t>(days));
}

// Splits on a single-character delimiter; keeps empty fields.
inline void split_into(std::string_view line, char delim, std::vector<std::string_view>& out) {
    out.clear();
    std::size_t start = 0;
    while (true) {
        const std::size_t pos = line.find(delim, start);
        if (pos == std::string_view::npos) {
            out.push_back(line.substr(start));
            return;
        }
        out.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
}

inline std::optional<std::int64_t> try_parse_i64(std::string_view s) {
    std::int64_t v;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size() || s.empty()) return std::nullopt;
    return v;
}

inline std::optional<double> try_parse_f64(std::string_view s) {
    double v;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size() || s.empty()) return std::nullopt;
    return v;
}

} // namespace wikidid
