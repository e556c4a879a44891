#pragma once

// Mobility-report ingestion and changepoint detection. Mobility series are
// percent changes from a pre-pandemic baseline, so the baseline level is the
// zero line by construction.

#include <array>
#include <cmath>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "wikidid/core.hpp"
#include "wikidid/profile.hpp"
#include "wikidid/series.hpp"

namespace wikidid {

enum class MobilityCategory {
    RetailAndRecreation,
    GroceryAndPharmacy,
    Parks,
    TransitStations,
    Workplaces,
    Residential,
};

inline constexpr std::array<MobilityCategory, 6> kAllMobilityCategories = {
    MobilityCategory::RetailAndRecreation, MobilityCategory::GroceryAndPharmacy,
    MobilityCategory::Parks,               MobilityCategory::TransitStations,
    MobilityCategory::Workplaces,          MobilityCategory::Residential,
};

inline const char* to_string(MobilityCategory c) {
    switch (c) {
        case MobilityCategory::RetailAndRecreation: return "retail_and_recreation";
        case MobilityCategory::GroceryAndPharmacy: return "grocery_and_pharmacy";
        case MobilityCategory::Parks: return "parks";
        case MobilityCategory::TransitStations: return "transit_stations";
        case MobilityCategory::Workplaces: return "workplaces";
        case MobilityCategory::Residential: return "residential";
    }
    return "?";
}

inline MobilityCategory mobility_category_from_string(std::string_view s) {
    for (MobilityCategory c : kAllMobilityCategories)
        if (s == to_string(c)) return c;
    throw ConfigError("unknown mobility category: " + std::string(s));
}

// Country-level daily observation; absent categories stay unset.
struct MobilityObservation {
    std::string country;
    Date date;
    std::array<std::optional<double>, 6> pct_change;

    std::optional<double> value(MobilityCategory c) const {
        return pct_change[static_cast<std::size_t>(c)];
    }
};

namespace detail {

// RFC4180-style field split, enough for the mobility reports (no embedded
// newlines).
inline void csv_split(std::string_view line, std::vector<std::string>& out) {
    out.clear();
    std::string field;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    field += '"';
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                field += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            out.push_back(std::move(field));
            field.clear();
        } else {
            field += c;
        }
    }
    out.push_back(std::move(field));
}

} // namespace detail

// Parses the Google Community Mobility Reports global CSV. Keeps only
// country-level rows (all sub-region fields empty).
inline std::vector<MobilityObservation> load_google_mobility(std::istream& is) {
    std::string line;
    if (!std::getline(is, line)) throw FormatError("mobility csv: missing header");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::vector<std::string> f;
    detail::csv_split(line, f);
    std::unordered_map<std::string, std::size_t> index;
    for (std::size_t i = 0; i < f.size(); ++i) index.emplace(f[i], i);
    auto require = [&](const std::string& name) {
        auto it = index.find(name);
        if (it == index.end()) throw FormatError("mobility csv: missing header column: " + name);
        return it->second;
    };
    const std::size_t col_country = require("country_region_code");
    const std::size_t col_sub1 = require("sub_region_1");
    const std::size_t col_sub2 = require("sub_region_2");
    const std::size_t col_date = require("date");
    std::array<std::size_t, 6> col_cat{};
    for (std::size_t c = 0; c < 6; ++c)
        col_cat[c] = require(std::string(to_string(kAllMobilityCategories[c])) +
                             "_percent_change_from_baseline");
    // Present in newer report revisions only.
    const auto metro_it = index.find("metro_area");
    const std::optional<std::size_t> col_metro =
        metro_it == index.end() ? std::nullopt : std::optional<std::size_t>(metro_it->second);

    std::vector<MobilityObservation> out;
    std::size_t line_no = 1;
    while (std::getline(is, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        detail::csv_split(line, f);
        if (f.size() <= col_cat[5])
            throw FormatError("mobility csv: short row at line " + std::to_string(line_no));
        if (!f[col_sub1].empty() || !f[col_sub2].empty()) continue;
        if (col_metro && !f[*col_metro].empty()) continue;
        MobilityObservation obs;
        obs.country = f[col_country];
        const auto d = try_parse_date(f[col_date]);
        if (!d) throw FormatError("mobility csv: bad date at line " + std::to_string(line_no));
        obs.date = *d;
        for (std::size_t c = 0; c < 6; ++c) {
            const std::string& cell = f[col_cat[c]];
            if (cell.empty()) continue;
            const auto v = try_parse_f64(cell);
            if (!v || !std::isfinite(*v))
                throw FormatError("mobility csv: bad value at line " + std::to_string(line_no));
            obs.pct_change[c] = *v;
        }
        out.push_back(std::move(obs));
    }
    return out;
}

inline std::vector<MobilityObservation> load_google_mobility(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open mobility csv: " + path);
    return load_google_mobility(in);
}

struct WeightedMobility {
    DateSeries series;
    std::vector<std::string> warnings;
};

// Population-weighted aggregate over the profile's countries for one
// category. Days where a country is missing renormalize over the present
// ones and are recorded as warnings; days with no data at all are NaN.
inline WeightedMobility aggregate_weighted(const std::vector<MobilityObservation>& observations,
                                           const LanguageProfile& profile,
                                           MobilityCategory category) {
    const std::vector<double> weights = profile.normalized_weights();
    std::unordered_map<std::string, std::map<Date, double>> by_country;
    for (const auto& obs : observations) {
        const auto v = obs.value(category);
        if (v) by_country[obs.country][obs.date] = *v;
    }

    WeightedMobility out;
    std::optional<Date> lo, hi;
    for (const auto& cw : profile.mobility_countries) {
        const auto it = by_country.find(cw.country);
        if (it == by_country.end() || it->second.empty()) continue;
        const Date first = it->second.begin()->first;
        const Date last = it->second.rbegin()->first;
        if (!lo || first < *lo) lo = first;
        if (!hi || last > *hi) hi = last;
    }
    if (!lo) return out;

    out.series.start = *lo;
    out.series.values.resize(static_cast<std::size_t>(*hi - *lo) + 1);
    for (Date d = *lo; d <= *hi; ++d) {
        double acc = 0.0, wsum = 0.0;
        for (std::size_t i = 0; i < profile.mobility_countries.size(); ++i) {
            const auto& cw = profile.mobility_countries[i];
            const auto it = by_country.find(cw.country);
            const auto vit = it == by_country.end() ? std::map<Date, double>::const_iterator{}
                                                    : it->second.find(d);
            if (it != by_country.end() && vit != it->second.end()) {
                acc += weights[i] * vit->second;
                wsum += weights[i];
            } else {
                out.warnings.push_back(profile.code + ": no " + cw.country + " mobility on " +
                                       d.to_string() + "; weights renormalized");
            }
        }
        out.series.values[static_cast<std::size_t>(d - *lo)] =
            wsum > 0.0 ? acc / wsum : std::numeric_limits<double>::quiet_NaN();
    }
    return out;
}

// ---------------------------------------------------------------------------
// Binary segmentation

// A split is only accepted when it reduces the within-segment sum of squared
// deviations by more than this slack, which absorbs the rounding noise of
// prefix-sum cost evaluation (an exactly constant segment must yield no
// changepoint).
inline double binseg_gain_tolerance(double segment_sq_sum) {
    return 1e-9 + 1e-12 * std::abs(segment_sq_sum);
}

// Greedy top-down binary segmentation under an L2 cost. Returned indices are
// ascending; each index is the first point of the segment to its right. Both
// resulting sub-segments must have at least min_segment points. Ties in gain
// break toward the earliest index.
inline std::vector<std::size_t> binary_segment(const std::vector<double>& series,
                                               std::size_t max_changepoints,
                                               std::size_t min_segment) {
    const std::size_t n = series.size();
    std::vector<std::size_t> accepted;
    if (max_changepoints == 0 || min_segment == 0 || n < 2 * min_segment) return accepted;
    for (double x : series)
        if (std::isnan(x)) throw Error("binary_segment: series contains NaN");

    std::vector<double> s1(n + 1, 0.0), s2(n + 1, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        s1[i + 1] = s1[i] + series[i];
        s2[i + 1] = s2[i] + series[i] * series[i];
    }
    auto cost = [&](std::size_t a, std::size_t b) { // [a, b)
        const double len = static_cast<double>(b - a);
        const double sum = s1[b] - s1[a];
        return (s2[b] - s2[a]) - sum * sum / len;
    };

    struct Segment {
        std::size_t begin, end;
    };
    // Segments stay ordered by position so equal gains resolve to the
    // earliest split index.
    std::vector<Segment> segments{{0, n}};
    while (accepted.size() < max_changepoints) {
        double best_gain = 0.0;
        std::size_t best_seg = 0, best_split = 0;
        bool found = false;
        for (std::size_t si = 0; si < segments.size(); ++si) {
            const auto [a, b] = segments[si];
            if (b - a < 2 * min_segment) continue;
            const double parent = cost(a, b);
            const double tol = binseg_gain_tolerance(s2[b] - s2[a]);
            for (std::size_t t = a + min_segment; t + min_segment <= b; ++t) {
                const double gain = parent - cost(a, t) - cost(t, b);
                if (gain > tol && gain > best_gain) {
                    best_gain = gain;
                    best_seg = si;
                    best_split = t;
                    found = true;
                }
            }
        }
        if (!found) break;
        const Segment seg = segments[best_seg];
        segments[best_seg] = {seg.begin, best_split};
        segments.insert(segments.begin() + static_cast<std::ptrdiff_t>(best_seg) + 1,
                        {best_split, seg.end});
        accepted.push_back(best_split);
    }
    std::sort(accepted.begin(), accepted.end());
    return accepted;
}

struct DetectedChangepoint {
    Date date;
    double mean_shift = 0.0; // post-segment mean minus pre-segment mean
};

struct BinsegParams {
    std::size_t max_changepoints = 4;
    std::size_t min_segment = 7;
};

// Among detected changepoints inside the search window, returns the one with
// the largest downward shift in segment means. Expects a smoothed series.
inline std::optional<DetectedChangepoint> detect_mobility_changepoint(
    const DateSeries& series, Date window_start, Date window_end,
    const BinsegParams& params = {}) {
    const std::vector<std::size_t> cps =
        binary_segment(series.values, params.max_changepoints, params.min_segment);
    if (cps.empty()) return std::nullopt;

    std::vector<std::size_t> bounds;
    bounds.push_back(0);
    bounds.insert(bounds.end(), cps.begin(), cps.end());
    bounds.push_back(series.size());

    auto mean = [&](std::size_t a, std::size_t b) {
        double sum = 0.0;
        for (std::size_t i = a; i < b; ++i) sum += series.values[i];
        return sum / static_cast<double>(b - a);
    };

    std::optional<DetectedChangepoint> best;
    for (std::size_t k = 1; k + 1 < bounds.size(); ++k) {
        const Date date = series.date_at(bounds[k]);
        if (date < window_start || date > window_end) continue;
        const double shift = mean(bounds[k], bounds[k + 1]) - mean(bounds[k - 1], bounds[k]);
        if (shift < 0.0 && (!best || shift < best->mean_shift))
            best = DetectedChangepoint{date, shift};
    }
    return best;
}

// Earliest date after the mobility changepoint from which the mean of the
// remaining series stays within the band. Values are percent changes from
// baseline, so the band is band*100 percentage points wide around the given
// baseline level (the zero line for these reports).
inline std::optional<Date> detect_normality_changepoint(const DateSeries& series,
                                                        Date mobility_changepoint,
                                                        double baseline = 0.0,
                                                        double band = 0.10) {
    if (series.empty()) return std::nullopt;
    const double half_width = band * 100.0;
    const Date first_candidate = std::max(mobility_changepoint + 1, series.start);
    if (first_candidate >= series.end()) return std::nullopt;

    // Suffix means are not monotone in the start date, so every candidate is
    // checked; the final update is the earliest qualifying one.
    const std::size_t first_idx = static_cast<std::size_t>(first_candidate - series.start);
    double suffix_sum = 0.0;
    std::size_t count = 0;
    std::optional<Date> found;
    for (std::size_t i = series.size(); i-- > first_idx;) {
        suffix_sum += series.values[i];
        ++count;
        if (std::abs(suffix_sum / static_cast<double>(count) - baseline) <= half_width)
            found = series.date_at(i);
    }
    return found;
}

} // namespace wikidid
