#pragma once

// Per-language configuration: timezone, size class, mobility aggregation
// weights and optional changepoint overrides.

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "wikidid/core.hpp"

namespace wikidid {

enum class SizeClass { Large, Medium, Small };

inline const char* to_string(SizeClass s) {
    switch (s) {
        case SizeClass::Large: return "large";
        case SizeClass::Medium: return "medium";
        default: return "small";
    }
}

inline SizeClass size_class_from_string(std::string_view s) {
    if (s == "large") return SizeClass::Large;
    if (s == "medium") return SizeClass::Medium;
    if (s == "small") return SizeClass::Small;
    throw ConfigError("unknown size class: " + std::string(s));
}

// 2019 edit-count thresholds: >5M large, 1.5M..5M medium, <1.5M small.
inline SizeClass size_class_for_edits(std::int64_t edits_2019) {
    if (edits_2019 > 5'000'000) return SizeClass::Large;
    if (edits_2019 >= 1'500'000) return SizeClass::Medium;
    return SizeClass::Small;
}

struct ChangepointPair {
    Date mobility_date;
    std::optional<Date> normality_date; // strictly after mobility_date when present
};

struct CountryWeight {
    std::string country; // ISO 3166-1 alpha-2
    double population = 0.0;
};

struct LanguageProfile {
    std::string code;
    std::string timezone = "UTC";
    SizeClass size_class = SizeClass::Small;
    std::vector<CountryWeight> mobility_countries;
    std::optional<ChangepointPair> changepoint_override;

    // Population weights normalized to sum to 1; rejects nonpositive or
    // non-finite populations.
    std::vector<double> normalized_weights() const {
        double total = 0.0;
        for (const auto& cw : mobility_countries) {
            if (!(cw.population > 0.0) || !std::isfinite(cw.population))
                throw ConfigError("profile " + code + ": population weight for " + cw.country +
                                  " must be positive and finite");
            total += cw.population;
        }
        std::vector<double> w;
        w.reserve(mobility_countries.size());
        for (const auto& cw : mobility_countries) w.push_back(cw.population / total);
        return w;
    }
};

} // namespace wikidid
