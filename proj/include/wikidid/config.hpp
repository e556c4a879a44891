#pragma once

// Pipeline configuration: a single JSON document drives every subcommand.

#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "wikidid/core.hpp"
#include "wikidid/did.hpp"
#include "wikidid/mobility.hpp"
#include "wikidid/profile.hpp"
#include "wikidid/rest.hpp"

namespace wikidid {

inline constexpr int kConfigSchemaVersion = 1;

struct PipelineConfig {
    int schema_version = kConfigSchemaVersion;
    std::string snapshot; // dump snapshot identifier (results are snapshot-dependent)

    std::string dumps_dir;
    std::string mobility_csv;
    std::string exclusions_dir; // optional: {code}.txt page-id lists
    std::string out_dir = "out";
    std::string cache_dir = "cache";

    Date coverage_start = Date::from_ymd(2018, 1, 1);
    Date coverage_end = Date::from_ymd(2020, 12, 31);

    WindowParams window; // n_windows, window_len, baseline_len, ci multiplier
    double mad_threshold = 5.0;
    LogPolicy log_policy = LogPolicy::Log1p;

    MobilityCategory mobility_category = MobilityCategory::Workplaces;
    BinsegParams binseg;
    Date search_start = Date::from_ymd(2020, 2, 1);
    Date search_end = Date::from_ymd(2020, 5, 31);
    double normality_band = 0.10;

    PanelYears years;
    std::string baseline_language = "da";
    bool robustness = false; // add window14 / cp-minus7 / cp-plus7 variants

    std::vector<LanguageProfile> languages;
    rest::RestConfig rest;

    int baseline_index() const {
        for (std::size_t i = 0; i < languages.size(); ++i)
            if (languages[i].code == baseline_language) return static_cast<int>(i);
        throw ConfigError("baseline language not in language list: " + baseline_language);
    }

    const LanguageProfile& profile(const std::string& code) const {
        for (const auto& p : languages)
            if (p.code == code) return p;
        throw ConfigError("unknown language: " + code);
    }

    void validate() const {
        if (schema_version != kConfigSchemaVersion)
            throw ConfigError("unsupported config schema_version " + std::to_string(schema_version));
        if (languages.empty()) throw ConfigError("languages must be non-empty");
        if (window.window_len < 1 || window.baseline_len < 1 || window.n_windows < 1)
            throw ConfigError("window parameters must be positive");
        if (window.ci_multiplier <= 0) throw ConfigError("ci multiplier must be positive");
        if (!(mad_threshold > 0)) throw ConfigError("mad_threshold must be positive");
        if (!(normality_band > 0.0 && normality_band <= 1.0))
            throw ConfigError("normality_band must be in (0, 1]");
        if (binseg.min_segment < 1 || binseg.max_changepoints < 1)
            throw ConfigError("binseg parameters must be positive");
        if (coverage_start >= coverage_end) throw ConfigError("coverage range is empty");
        if (search_start > search_end) throw ConfigError("search window is empty");
        for (int y : years.control)
            if (y == years.treated) throw ConfigError("treated year cannot be a control year");
        for (const auto& p : languages) {
            if (p.code.empty()) throw ConfigError("language code must be non-empty");
            if (!p.mobility_countries.empty()) (void)p.normalized_weights();
            if (p.changepoint_override && p.changepoint_override->normality_date &&
                *p.changepoint_override->normality_date <= p.changepoint_override->mobility_date)
                throw ConfigError(p.code + ": normality date must be after the mobility date");
        }
        (void)baseline_index();
    }
};

namespace detail {

inline Date json_date(const nlohmann::json& j, const char* key, Date fallback) {
    if (!j.contains(key)) return fallback;
    return parse_date(j.at(key).get<std::string>());
}

} // namespace detail

inline PipelineConfig parse_config(const nlohmann::json& j) {
    PipelineConfig c;
    c.schema_version = j.value("schema_version", kConfigSchemaVersion);
    c.snapshot = j.value("snapshot", std::string());
    c.dumps_dir = j.value("dumps_dir", std::string());
    c.mobility_csv = j.value("mobility_csv", std::string());
    c.exclusions_dir = j.value("exclusions_dir", std::string());
    c.out_dir = j.value("out_dir", std::string("out"));
    c.cache_dir = j.value("cache_dir", std::string("cache"));
    c.coverage_start = detail::json_date(j, "coverage_start", c.coverage_start);
    c.coverage_end = detail::json_date(j, "coverage_end", c.coverage_end);

    if (j.contains("window")) {
        const auto& w = j.at("window");
        c.window.baseline_len = w.value("baseline_len", 30);
        c.window.window_len = w.value("window_len", 7);
        c.window.n_windows = w.value("n_windows", 120);
        c.window.ci_multiplier = w.value("ci_se_multiplier", 2.0);
    }
    c.mad_threshold = j.value("mad_threshold", 5.0);
    const std::string log_policy = j.value("log_transform", std::string("log1p"));
    if (log_policy == "log1p") c.log_policy = LogPolicy::Log1p;
    else if (log_policy == "ln_drop_zero") c.log_policy = LogPolicy::LnDropZero;
    else throw ConfigError("log_transform must be log1p or ln_drop_zero");

    c.mobility_category =
        mobility_category_from_string(j.value("mobility_category", std::string("workplaces")));
    if (j.contains("binseg")) {
        const auto& b = j.at("binseg");
        c.binseg.max_changepoints = b.value("max_changepoints", std::size_t{4});
        c.binseg.min_segment = b.value("min_segment", std::size_t{7});
    }
    c.search_start = detail::json_date(j, "search_start", c.search_start);
    c.search_end = detail::json_date(j, "search_end", c.search_end);
    c.normality_band = j.value("normality_band", 0.10);

    if (j.contains("years")) {
        const auto& y = j.at("years");
        c.years.treated = y.value("treated", 2020);
        if (y.contains("control")) c.years.control = y.at("control").get<std::vector<int>>();
    }
    c.baseline_language = j.value("baseline_language", std::string("da"));
    c.robustness = j.value("robustness", false);

    if (j.contains("rest")) {
        const auto& r = j.at("rest");
        c.rest.base_url = r.value("base_url", c.rest.base_url);
        c.rest.user_agent = r.value("user_agent", c.rest.user_agent);
        c.rest.requests_per_second = r.value("requests_per_second", c.rest.requests_per_second);
        c.rest.cross_check = r.value("cross_check", false);
    }
    c.rest.cache_dir = c.cache_dir;

    if (!j.contains("languages")) throw ConfigError("config is missing languages");
    for (const auto& lj : j.at("languages")) {
        LanguageProfile p;
        p.code = lj.at("code").get<std::string>();
        p.timezone = lj.value("timezone", std::string("UTC"));
        p.size_class = size_class_from_string(lj.value("size_class", std::string("small")));
        if (lj.contains("mobility_countries")) {
            for (const auto& cj : lj.at("mobility_countries"))
                p.mobility_countries.push_back(
                    {cj.at("country").get<std::string>(), cj.at("population").get<double>()});
        }
        if (lj.contains("changepoint_override") && !lj.at("changepoint_override").is_null()) {
            const auto& o = lj.at("changepoint_override");
            ChangepointPair cp;
            cp.mobility_date = parse_date(o.at("mobility_date").get<std::string>());
            if (o.contains("normality_date") && !o.at("normality_date").is_null())
                cp.normality_date = parse_date(o.at("normality_date").get<std::string>());
            p.changepoint_override = cp;
        }
        c.languages.push_back(std::move(p));
    }

    c.validate();
    return c;
}

inline PipelineConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("config " + path + " is not valid JSON: " + e.what());
    }
    try {
        return parse_config(j);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("config " + path + ": " + e.what());
    }
}

} // namespace wikidid
