#pragma once

// Gap-free daily series and the smoothing / outlier policies applied to them.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "wikidid/core.hpp"

namespace wikidid {

// Daily values over a contiguous date range. Undefined days (e.g. revert
// rate with zero edits) are stored as NaN.
struct DateSeries {
    Date start;
    std::vector<double> values;

    std::size_t size() const { return values.size(); }
    bool empty() const { return values.empty(); }
    Date date_at(std::size_t i) const { return start + static_cast<std::int32_t>(i); }
    Date end() const { return start + static_cast<std::int32_t>(values.size()); } // one past last

    bool covers(Date d) const { return d >= start && d < end(); }
    double at(Date d) const {
        if (!covers(d)) throw Error("date out of series coverage: " + d.to_string());
        return values[static_cast<std::size_t>(d - start)];
    }
    double& operator[](std::size_t i) { return values[i]; }
    double operator[](std::size_t i) const { return values[i]; }
};

inline double median(std::vector<double> v) {
    if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// Raw median absolute deviation, no consistency scaling.
inline double mad(const std::vector<double>& v, double med) {
    std::vector<double> dev;
    dev.reserve(v.size());
    for (double x : v) dev.push_back(std::abs(x - med));
    return median(std::move(dev));
}

// Trailing w-day arithmetic mean; the first w-1 days have no value and are
// dropped, so the output starts w-1 days later.
inline DateSeries rolling_mean(const DateSeries& s, int w = 7) {
    if (w < 1) throw Error("rolling_mean: window must be >= 1");
    DateSeries out;
    if (s.size() < static_cast<std::size_t>(w)) {
        out.start = s.start;
        return out;
    }
    out.start = s.start + (w - 1);
    out.values.resize(s.size() - w + 1);
    for (std::size_t i = 0; i + w <= s.size(); ++i) {
        double sum = 0.0;
        for (int j = 0; j < w; ++j) sum += s.values[i + j];
        out.values[i] = sum / w;
    }
    return out;
}

struct MadResult {
    DateSeries series;
    std::vector<Date> replaced; // ascending
};

// Per calendar month: values deviating from the monthly median M by more
// than k*MAD are replaced by M. With MAD = 0 the comparison |x-M| > 0 stands,
// so any value different from M is replaced. NaN days are left alone and do
// not enter the median.
inline MadResult monthly_mad_replace(const DateSeries& s, double k = 5.0) {
    if (!(k > 0)) throw Error("monthly_mad_replace: threshold must be positive");
    MadResult out{s, {}};
    std::size_t i = 0;
    while (i < s.size()) {
        const Date d0 = s.date_at(i);
        const int y = d0.year();
        const unsigned m = d0.month();
        std::size_t j = i;
        while (j < s.size() && s.date_at(j).year() == y && s.date_at(j).month() == m) ++j;

        std::vector<double> month;
        month.reserve(j - i);
        for (std::size_t t = i; t < j; ++t)
            if (!std::isnan(s.values[t])) month.push_back(s.values[t]);
        if (!month.empty()) {
            const double med = median(month);
            const double scale = mad(month, med);
            for (std::size_t t = i; t < j; ++t) {
                const double x = s.values[t];
                if (!std::isnan(x) && std::abs(x - med) > k * scale) {
                    out.series.values[t] = med;
                    out.replaced.push_back(s.date_at(t));
                }
            }
        }
        i = j;
    }
    return out;
}

} // namespace wikidid
