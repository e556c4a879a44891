#pragma once

// Subcommand implementations. Stages communicate exclusively through files
// under out_dir (metrics CSVs, changepoints JSON, effects CSVs), so partial
// re-runs are possible and every stage is a deterministic function of
// (config, input files). Exit codes: 0 ok, 1 fatal input error, 2 partial
// failure.

#include <algorithm>
#include <atomic>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "wikidid/config.hpp"
#include "wikidid/did.hpp"
#include "wikidid/dump.hpp"
#include "wikidid/metrics.hpp"
#include "wikidid/mobility.hpp"
#include "wikidid/rest.hpp"
#include "wikidid/svg.hpp"

namespace wikidid::pipeline {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFatal = 1;
inline constexpr int kExitPartial = 2;

// ---------------------------------------------------------------------------
// Paths + atomic writes

inline std::string metrics_csv_path(const PipelineConfig& cfg, const std::string& code) {
    return cfg.out_dir + "/metrics_" + code + ".csv";
}
inline std::string ingest_report_path(const PipelineConfig& cfg) {
    return cfg.out_dir + "/ingest_report.json";
}
inline std::string changepoints_path(const PipelineConfig& cfg) {
    return cfg.out_dir + "/changepoints.json";
}
inline std::string effects_csv_path(const PipelineConfig& cfg, MetricKind kind) {
    return cfg.out_dir + "/effects_" + std::string(to_string(kind)) + ".csv";
}
inline std::string band_check_csv_path(const PipelineConfig& cfg, const std::string& code) {
    return cfg.out_dir + "/band_check_" + code + ".csv";
}

// write-temp-then-rename so concurrent readers never see partial files
inline void atomic_write(const std::string& path, const std::string& content) {
    const auto parent = std::filesystem::path(path).parent_path();
    if (!parent.empty()) std::filesystem::create_directories(parent);
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot write " + tmp);
        out << content;
    }
    std::filesystem::rename(tmp, path);
}

inline std::vector<LanguageProfile> select_languages(const PipelineConfig& cfg,
                                                     const std::vector<std::string>& only) {
    if (only.empty()) return cfg.languages;
    std::vector<LanguageProfile> out;
    for (const auto& code : only) out.push_back(cfg.profile(code));
    return out;
}

inline std::string resolve_dump_path(const PipelineConfig& cfg, const std::string& code) {
    for (const char* suffix : {".tsv", ".tsv.gz", ".tsv.bz2"}) {
        const std::string candidate = cfg.dumps_dir + "/" + code + suffix;
        if (std::filesystem::exists(candidate)) return candidate;
    }
    throw IoError("no dump found for " + code + " under " + cfg.dumps_dir +
                  " (tried .tsv, .tsv.gz, .tsv.bz2)");
}

// ---------------------------------------------------------------------------
// ingest

struct LanguageIngest {
    std::string language;
    IngestCounters counters;
    std::uint64_t events = 0;
    std::uint64_t excluded = 0;
    std::string error; // empty on success
};

namespace detail {

inline LanguageIngest ingest_one(const PipelineConfig& cfg, const LanguageProfile& profile) {
    LanguageIngest result;
    result.language = profile.code;

    std::unordered_set<std::int64_t> exclusions;
    if (!cfg.exclusions_dir.empty()) {
        const std::string path = cfg.exclusions_dir + "/" + profile.code + ".txt";
        if (std::filesystem::exists(path)) exclusions = load_page_exclusions(path);
    }

    DumpReader reader = open_dump_stream(resolve_dump_path(cfg, profile.code), profile);
    DailyAggregator agg;
    while (auto event = reader.next()) {
        if (!apply_exclusion_list(*event, exclusions)) {
            ++result.excluded;
            continue;
        }
        ++result.events;
        agg.add(*event);
    }
    result.counters = reader.counters();

    const auto days = agg.finish(cfg.coverage_start, cfg.coverage_end);

    // Flag, per metric, the days the MAD policy replaces.
    std::array<std::vector<bool>, 8> flags;
    for (std::size_t m = 0; m < kAllMetricKinds.size(); ++m) {
        flags[m].assign(days.size(), false);
        const MetricSeries series = series_from_daily(days, profile.code, kAllMetricKinds[m]);
        const MetricSeries replaced = monthly_mad_replace(series, cfg.mad_threshold);
        for (Date d : replaced.outlier_flags)
            flags[m][static_cast<std::size_t>(d - series.data.start)] = true;
    }

    std::ostringstream csv;
    write_metrics_csv(csv, days, flags);
    atomic_write(metrics_csv_path(cfg, profile.code), csv.str());
    return result;
}

inline void run_per_language(const std::vector<LanguageProfile>& languages,
                             std::vector<LanguageIngest>& results,
                             const std::function<LanguageIngest(const LanguageProfile&)>& work) {
    results.resize(languages.size());
    std::atomic<std::size_t> next{0};
    const unsigned n_threads = std::max(1u, std::min<unsigned>(
        std::thread::hardware_concurrency(), static_cast<unsigned>(languages.size())));
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < n_threads; ++t) {
        pool.emplace_back([&] {
            while (true) {
                const std::size_t i = next.fetch_add(1);
                if (i >= languages.size()) return;
                try {
                    results[i] = work(languages[i]);
                } catch (const std::exception& e) {
                    results[i].language = languages[i].code;
                    results[i].error = e.what();
                }
            }
        });
    }
    for (auto& th : pool) th.join();
}

// REST cross-check of dump-derived band counts: the dump and the statistics
// API count activity bands independently, so discrepancies are reported, not
// asserted away. Per-date rows go to CSV, summary quantiles to JSON.
inline void band_cross_check(const PipelineConfig& cfg, rest::EditorsClient& client,
                             const std::string& code, const std::vector<DailyMetrics>& days) {
    std::ostringstream csv;
    csv << "band,date,api,dump,abs_diff,rel_diff\n";
    char buf[160];
    nlohmann::json summary;
    summary["language"] = code;
    for (rest::ActivityBand band : rest::kAllBands) {
        const auto points =
            client.fetch_editors_by_activity(code, band, cfg.coverage_start, cfg.coverage_end);
        const MetricSeries dump = series_from_daily(days, code, rest::band_metric(band));
        const auto report = rest::compare_band_sources(points, dump.data);
        for (const auto& r : report.rows) {
            std::snprintf(buf, sizeof(buf), "%s,%s,%.10g,%.10g,%.10g,%.10g\n",
                          rest::api_level(band), r.date.to_string().c_str(), r.api, r.dump,
                          r.abs_diff, r.rel_diff);
            csv << buf;
        }
        summary["bands"][rest::api_level(band)] = {{"days", report.rows.size()},
                                                   {"max_abs", report.max_abs},
                                                   {"mean_abs", report.mean_abs},
                                                   {"p50_abs", report.p50_abs},
                                                   {"p90_abs", report.p90_abs}};
    }
    atomic_write(band_check_csv_path(cfg, code), csv.str());
    atomic_write(cfg.out_dir + "/band_check_" + code + "_summary.json", summary.dump(2) + "\n");
}

} // namespace detail

// Streams each language's dump into a daily metrics CSV plus a counters
// report. Languages run in parallel; re-runs overwrite deterministically.
inline int cmd_ingest(const PipelineConfig& cfg, const std::vector<std::string>& only = {},
                      std::ostream& log = std::cerr) {
    const auto languages = select_languages(cfg, only);
    std::vector<LanguageIngest> results;
    detail::run_per_language(languages, results, [&](const LanguageProfile& p) {
        return detail::ingest_one(cfg, p);
    });

    nlohmann::json report;
    report["languages"] = nlohmann::json::array();
    bool failed = false;
    for (const auto& r : results) {
        nlohmann::json lj{{"language", r.language},
                          {"lines_read", r.counters.lines_read},
                          {"records_skipped", r.counters.records_skipped},
                          {"parse_errors", r.counters.parse_errors},
                          {"events", r.events},
                          {"excluded", r.excluded}};
        if (!r.error.empty()) {
            lj["error"] = r.error;
            failed = true;
            log << "ingest " << r.language << ": " << r.error << "\n";
        }
        report["languages"].push_back(std::move(lj));
    }
    atomic_write(ingest_report_path(cfg), report.dump(2) + "\n");
    if (failed) return kExitFatal;

    // Optional API cross-check over the freshly written CSVs. Sequential so
    // one client's rate limit covers all requests.
    if (cfg.rest.cross_check) {
        rest::RestConfig rc = cfg.rest;
        rc.cache_dir = cfg.cache_dir;
        rest::EditorsClient client(rc);
        for (const auto& p : languages) {
            std::ifstream in(metrics_csv_path(cfg, p.code));
            detail::band_cross_check(cfg, client, p.code, read_metrics_csv(in));
        }
    }
    return kExitOk;
}

// ---------------------------------------------------------------------------
// changepoints

struct LanguageChangepoint {
    std::string language;
    ChangepointPair pair;
    std::string method;   // "override" or "detected"
    double mean_shift = 0.0;
};

inline int cmd_changepoints(const PipelineConfig& cfg, const std::vector<std::string>& only = {},
                            std::ostream& log = std::cerr) {
    const auto languages = select_languages(cfg, only);

    bool need_mobility = false;
    for (const auto& p : languages)
        if (!p.changepoint_override) need_mobility = true;

    std::vector<MobilityObservation> observations;
    if (need_mobility) observations = load_google_mobility(cfg.mobility_csv);

    std::vector<LanguageChangepoint> found;
    std::vector<std::pair<std::string, std::string>> errors;
    for (const auto& p : languages) {
        if (p.changepoint_override) {
            found.push_back({p.code, *p.changepoint_override, "override", 0.0});
            continue;
        }
        try {
            if (p.mobility_countries.empty())
                throw ConfigError("no mobility countries configured for " + p.code);
            const auto weighted = aggregate_weighted(observations, p, cfg.mobility_category);
            for (const auto& w : weighted.warnings) log << "changepoints: " << w << "\n";
            const DateSeries smoothed = rolling_mean(weighted.series, 7);
            const auto cp = detect_mobility_changepoint(smoothed, cfg.search_start, cfg.search_end,
                                                        cfg.binseg);
            if (!cp)
                throw Error("no downward mobility changepoint in " +
                            cfg.search_start.to_string() + ".." + cfg.search_end.to_string());
            ChangepointPair pair;
            pair.mobility_date = cp->date;
            pair.normality_date =
                detect_normality_changepoint(smoothed, cp->date, 0.0, cfg.normality_band);
            found.push_back({p.code, pair, "detected", cp->mean_shift});
        } catch (const std::exception& e) {
            errors.emplace_back(p.code, e.what());
            log << "changepoints " << p.code << ": " << e.what() << "\n";
        }
    }

    nlohmann::json doc;
    doc["category"] = to_string(cfg.mobility_category);
    doc["languages"] = nlohmann::json::array();
    for (const auto& c : found) {
        nlohmann::json lj{{"language", c.language},
                          {"mobility_date", c.pair.mobility_date.to_string()},
                          {"method", c.method}};
        lj["normality_date"] = c.pair.normality_date
                                   ? nlohmann::json(c.pair.normality_date->to_string())
                                   : nlohmann::json(nullptr);
        if (c.method == "detected") lj["mean_shift"] = c.mean_shift;
        doc["languages"].push_back(std::move(lj));
    }
    doc["errors"] = nlohmann::json::array();
    for (const auto& [code, msg] : errors)
        doc["errors"].push_back({{"language", code}, {"message", msg}});
    atomic_write(changepoints_path(cfg), doc.dump(2) + "\n");
    return errors.empty() ? kExitOk : kExitPartial;
}

inline std::map<std::string, ChangepointPair> read_changepoints(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open changepoints file: " + path);
    nlohmann::json doc;
    in >> doc;
    std::map<std::string, ChangepointPair> out;
    for (const auto& lj : doc.at("languages")) {
        ChangepointPair pair;
        pair.mobility_date = parse_date(lj.at("mobility_date").get<std::string>());
        if (lj.contains("normality_date") && !lj.at("normality_date").is_null())
            pair.normality_date = parse_date(lj.at("normality_date").get<std::string>());
        out[lj.at("language").get<std::string>()] = pair;
    }
    return out;
}

// ---------------------------------------------------------------------------
// did

inline const std::vector<std::string>& robustness_variant_names() {
    static const std::vector<std::string> names{"window14", "cp-minus7", "cp-plus7"};
    return names;
}

// Window parameters + changepoint shift for one robustness variant.
inline void apply_variant(const std::string& variant, WindowParams& params,
                          std::vector<Date>& cps) {
    if (variant == "base") return;
    if (variant == "window14") {
        params.window_len = 14;
    } else if (variant == "cp-minus7") {
        for (auto& d : cps) d = d - 7;
    } else if (variant == "cp-plus7") {
        for (auto& d : cps) d = d + 7;
    } else {
        throw ConfigError("unknown variant: " + variant);
    }
}

inline int cmd_did(const PipelineConfig& cfg, const std::vector<std::string>& only = {},
                   const std::optional<std::string>& variant_filter = std::nullopt,
                   std::ostream& log = std::cerr) {
    const auto languages = select_languages(cfg, only);
    if (languages.size() < 2) throw ConfigError("did needs at least 2 languages");

    // Baseline language: configured one if selected, else the first selected.
    int baseline_idx = 0;
    bool baseline_found = false;
    for (std::size_t i = 0; i < languages.size(); ++i) {
        if (languages[i].code == cfg.baseline_language) {
            baseline_idx = static_cast<int>(i);
            baseline_found = true;
        }
    }
    if (!baseline_found)
        log << "did: configured baseline " << cfg.baseline_language
            << " not in the selection; using " << languages[0].code << "\n";

    // Inputs are the files previous stages wrote.
    std::vector<std::string> missing;
    if (!std::filesystem::exists(changepoints_path(cfg))) missing.push_back(changepoints_path(cfg));
    for (const auto& p : languages)
        if (!std::filesystem::exists(metrics_csv_path(cfg, p.code)))
            missing.push_back(metrics_csv_path(cfg, p.code));
    if (!missing.empty()) {
        std::string msg = "missing inputs:";
        for (const auto& m : missing) msg += " " + m;
        throw IoError(msg);
    }

    const auto cps_by_code = read_changepoints(changepoints_path(cfg));
    std::vector<Date> base_cps;
    std::vector<std::string> codes;
    for (const auto& p : languages) {
        const auto it = cps_by_code.find(p.code);
        if (it == cps_by_code.end())
            throw IoError("no changepoint for " + p.code + " in " + changepoints_path(cfg));
        base_cps.push_back(it->second.mobility_date);
        codes.push_back(p.code);
    }

    std::vector<std::vector<DailyMetrics>> daily(languages.size());
    for (std::size_t i = 0; i < languages.size(); ++i) {
        std::ifstream in(metrics_csv_path(cfg, languages[i].code));
        daily[i] = read_metrics_csv(in);
    }

    std::vector<std::string> variants{"base"};
    if (variant_filter) {
        variants = {*variant_filter};
    } else if (cfg.robustness) {
        for (const auto& v : robustness_variant_names()) variants.push_back(v);
    }

    bool any_window_failed = false;
    for (MetricKind kind : kAllMetricKinds) {
        // Outlier policy first, then the window sequence.
        std::vector<DateSeries> series;
        for (std::size_t i = 0; i < languages.size(); ++i) {
            const MetricSeries raw = series_from_daily(daily[i], languages[i].code, kind);
            series.push_back(monthly_mad_replace(raw, cfg.mad_threshold).data);
        }

        std::vector<EffectSeries> all_effects;
        for (const auto& variant : variants) {
            WindowParams params = cfg.window;
            std::vector<Date> cps = base_cps;
            apply_variant(variant, params, cps);
            const auto run =
                run_window_sequence(series, codes, cps, params, cfg.years,
                                    transform_for(kind, cfg.log_policy), baseline_idx, kind, variant);
            for (const auto& [n, msg] : run.failed_windows) {
                any_window_failed = true;
                log << "did " << to_string(kind) << " " << variant << " window " << n << ": " << msg
                    << "\n";
            }
            for (auto& es : run.effects) all_effects.push_back(es);
        }
        std::ostringstream csv;
        write_effects_csv(csv, all_effects);
        atomic_write(effects_csv_path(cfg, kind), csv.str());
    }
    return any_window_failed ? kExitPartial : kExitOk;
}

// ---------------------------------------------------------------------------
// plot

inline std::vector<EffectSeries> read_effects_csv(std::istream& is) {
    std::string line;
    if (!std::getline(is, line)) return {};
    std::vector<EffectSeries> out;
    std::vector<std::string_view> f;
    while (std::getline(is, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        split_into(line, ',', f);
        if (f.size() != 10) throw FormatError("effects csv: bad column count");
        const MetricKind kind = metric_kind_from_string(f[0]);
        const std::string language(f[1]);
        const std::string variant(f[9]);
        if (out.empty() || out.back().language != language || out.back().kind != kind ||
            out.back().variant != variant) {
            out.push_back(EffectSeries{language, kind, variant, {}});
        }
        EffectPoint p;
        p.window_n = static_cast<int>(*try_parse_i64(f[2]));
        p.delta = *try_parse_f64(f[3]);
        p.se = *try_parse_f64(f[4]);
        p.ci_lo = *try_parse_f64(f[5]);
        p.ci_hi = *try_parse_f64(f[6]);
        p.n_rows = *try_parse_i64(f[8]);
        out.back().points.push_back(p);
    }
    return out;
}

namespace detail {

inline int day_of_year(Date d) { return d - Date::from_ymd(d.year(), 1, 1); }

inline std::string series_plot_path(const PipelineConfig& cfg, MetricKind kind,
                                    const std::string& code) {
    return cfg.out_dir + "/plots/series_" + std::string(to_string(kind)) + "_" + code + ".svg";
}

inline std::string effect_plot_path(const PipelineConfig& cfg, MetricKind kind,
                                    const std::string& code) {
    return cfg.out_dir + "/plots/effects_" + std::string(to_string(kind)) + "_" + code + ".svg";
}

} // namespace detail

inline int cmd_plot(const PipelineConfig& cfg, const std::vector<std::string>& only = {},
                    std::ostream& log = std::cerr) {
    (void)log;
    const auto languages = select_languages(cfg, only);

    std::vector<std::string> missing;
    if (!std::filesystem::exists(changepoints_path(cfg))) missing.push_back(changepoints_path(cfg));
    for (const auto& p : languages)
        if (!std::filesystem::exists(metrics_csv_path(cfg, p.code)))
            missing.push_back(metrics_csv_path(cfg, p.code));
    for (MetricKind kind : kAllMetricKinds)
        if (!std::filesystem::exists(effects_csv_path(cfg, kind)))
            missing.push_back(effects_csv_path(cfg, kind));
    if (!missing.empty()) {
        std::string msg = "missing inputs:";
        for (const auto& m : missing) msg += " " + m;
        throw IoError(msg);
    }

    const auto cps_by_code = read_changepoints(changepoints_path(cfg));

    // Rolling 7-day series charts for edit volume and newcomers.
    for (const auto& p : languages) {
        std::ifstream in(metrics_csv_path(cfg, p.code));
        const auto days = read_metrics_csv(in);
        for (MetricKind kind : {MetricKind::EditVolume, MetricKind::Newcomers}) {
            const MetricSeries raw = series_from_daily(days, p.code, kind);
            const DateSeries smooth = rolling_mean(raw.data, 7);

            std::vector<int> years_wanted = cfg.years.control;
            years_wanted.push_back(cfg.years.treated);
            std::sort(years_wanted.begin(), years_wanted.end());
            std::vector<svg::YearSeries> years;
            for (int year : years_wanted) {
                svg::YearSeries ys;
                ys.label = std::to_string(year);
                for (std::size_t i = 0; i < smooth.size(); ++i) {
                    const Date d = smooth.date_at(i);
                    if (d.year() == year) ys.points.emplace_back(detail::day_of_year(d), smooth.values[i]);
                }
                years.push_back(std::move(ys));
            }

            std::vector<svg::MarkerLine> markers;
            const auto it = cps_by_code.find(p.code);
            if (it != cps_by_code.end()) {
                markers.push_back({detail::day_of_year(it->second.mobility_date), "cp-mobility",
                                   "#b2182b"});
                if (it->second.normality_date)
                    markers.push_back({detail::day_of_year(*it->second.normality_date),
                                       "cp-normality", "#1b7837"});
            }
            const std::string title =
                p.code + ": rolling 7-day " + std::string(to_string(kind));
            atomic_write(detail::series_plot_path(cfg, kind, p.code),
                         svg::series_chart(title, years, markers));
        }
    }

    // Effect curves per metric and language, base variant.
    for (MetricKind kind : kAllMetricKinds) {
        std::ifstream in(effects_csv_path(cfg, kind));
        const auto all = read_effects_csv(in);
        for (const auto& p : languages) {
            const EffectSeries* found = nullptr;
            for (const auto& es : all)
                if (es.language == p.code && es.variant == "base") found = &es;
            if (!found || found->points.empty()) continue;
            const std::string title = p.code + ": delta " + std::string(to_string(kind)) +
                                      " by days after changepoint";
            atomic_write(detail::effect_plot_path(cfg, kind, p.code),
                         svg::effect_chart(title, *found, cfg.window.n_windows));
        }
    }
    return kExitOk;
}

// ---------------------------------------------------------------------------

inline int cmd_all(const PipelineConfig& cfg, const std::vector<std::string>& only = {},
                   const std::optional<std::string>& variant = std::nullopt,
                   std::ostream& log = std::cerr) {
    int worst = kExitOk;
    for (int code : {cmd_ingest(cfg, only, log), cmd_changepoints(cfg, only, log),
                     cmd_did(cfg, only, variant, log), cmd_plot(cfg, only, log)}) {
        if (code == kExitFatal) return kExitFatal;
        worst = std::max(worst, code);
    }
    return worst;
}

} // namespace wikidid::pipeline
