#pragma once

// Rolling-window triple difference-in-differences. Each window fits
//   V = b0 + b1'L + b2*Y + b3*P + b4'(YL) + b5'(PL) + b6*(YP) + b7'(YPL) + e
// on log-scale daily metric values, where L are indicators for the
// non-baseline languages, Y flags the pandemic year and P the
// post-changepoint treatment period. The per-language effect is b6 + b7[l].

#include <Eigen/Dense>

#include <cmath>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "wikidid/core.hpp"
#include "wikidid/metrics.hpp"
#include "wikidid/series.hpp"

namespace wikidid {

struct PanelError : Error {
    using Error::Error;
};

struct RankError : Error {
    using Error::Error;
};

struct PanelRow {
    int language_index = 0;
    int year_flag = 0;   // 1 = treated (pandemic) year
    int period_flag = 0; // 1 = post-changepoint treatment window
    double log_value = 0.0;
};

struct WindowSpec {
    int n = 0;            // window start, days after the changepoint
    int window_len = 7;   // treatment days per window
    int baseline_len = 30;

    void validate() const {
        if (n < 0 || window_len < 1 || baseline_len < 1)
            throw ConfigError("window spec out of range");
    }
};

struct PanelYears {
    int treated = 2020;
    std::vector<int> control = {2018, 2019};
};

// How a metric value enters the regression.
enum class ValueTransform {
    Log1p,      // ln(1 + V); keeps zero-count days in the panel
    LnPositive, // ln(V); days with V <= 0 are dropped
    Raw,        // untransformed (signed byte deltas)
};

enum class LogPolicy { Log1p, LnDropZero };

inline ValueTransform transform_for(MetricKind kind, LogPolicy policy = LogPolicy::Log1p) {
    switch (kind) {
        case MetricKind::RevertRate: return ValueTransform::Log1p; // undefined days are dropped
        case MetricKind::ByteDelta: return ValueTransform::Raw;
        default:
            return policy == LogPolicy::Log1p ? ValueTransform::Log1p : ValueTransform::LnPositive;
    }
}

// Builds the stacked panel: per language, the baseline_len days before its
// changepoint plus treatment days {cp+n .. cp+n+window_len-1}, taken in the
// treated year and re-anchored to the same month-day in each control year
// (Feb 29 falls back to Feb 28). NaN values (undefined revert rate) and,
// under LnPositive, non-positive values drop their day; any date outside
// series coverage is a fatal panel error listing the gaps.
inline std::vector<PanelRow> build_panel(const std::vector<DateSeries>& series_by_language,
                                         const std::vector<Date>& changepoints,
                                         const WindowSpec& spec, const PanelYears& years,
                                         ValueTransform transform) {
    spec.validate();
    if (series_by_language.size() != changepoints.size())
        throw PanelError("series/changepoint count mismatch");

    std::vector<int> all_years = years.control;
    all_years.push_back(years.treated);
    std::sort(all_years.begin(), all_years.end());

    std::vector<PanelRow> rows;
    std::vector<std::string> gaps;
    for (std::size_t lang = 0; lang < series_by_language.size(); ++lang) {
        const DateSeries& s = series_by_language[lang];
        const Date cp = changepoints[lang];
        std::vector<std::pair<Date, int>> days; // (treated-year date, P)
        for (int i = spec.baseline_len; i >= 1; --i) days.emplace_back(cp - i, 0);
        for (int i = 0; i < spec.window_len; ++i) days.emplace_back(cp + spec.n + i, 1);

        for (int year : all_years) {
            const int y_flag = year == years.treated ? 1 : 0;
            for (const auto& [anchor, p_flag] : days) {
                const Date d = anchor.with_year(year);
                if (!s.covers(d)) {
                    gaps.push_back("language " + std::to_string(lang) + ": " + d.to_string());
                    continue;
                }
                const double v = s.at(d);
                double log_value;
                switch (transform) {
                    case ValueTransform::Log1p:
                        if (std::isnan(v)) continue;
                        log_value = std::log1p(v);
                        break;
                    case ValueTransform::LnPositive:
                        if (std::isnan(v) || v <= 0.0) continue;
                        log_value = std::log(v);
                        break;
                    case ValueTransform::Raw:
                        if (std::isnan(v)) continue;
                        log_value = v;
                        break;
                }
                if (!std::isfinite(log_value))
                    throw PanelError("non-finite panel value for language " + std::to_string(lang) +
                                     " on " + d.to_string());
                rows.push_back({static_cast<int>(lang), y_flag, p_flag, log_value});
            }
        }
    }
    if (!gaps.empty()) {
        std::string msg = "panel dates missing from series:";
        for (const auto& g : gaps) msg += " " + g;
        throw PanelError(msg);
    }
    return rows;
}

// Column bookkeeping for the saturated design. Order:
// [1 | L | Y | P | YL | PL | YP | YPL], each indicator block holding the
// n_languages-1 non-baseline languages in ascending language order.
struct DesignLayout {
    int n_languages = 0;
    int baseline_index = 0;

    int n_indicator() const { return n_languages - 1; }
    int n_cols() const { return 4 + 4 * n_indicator(); }

    // Slot of a non-baseline language within an indicator block.
    int slot(int language_index) const {
        return language_index < baseline_index ? language_index : language_index - 1;
    }

    int col_intercept() const { return 0; }
    int col_language(int lang) const { return 1 + slot(lang); }
    int col_year() const { return 1 + n_indicator(); }
    int col_period() const { return col_year() + 1; }
    int col_year_language(int lang) const { return col_period() + 1 + slot(lang); }
    int col_period_language(int lang) const { return col_period() + 1 + n_indicator() + slot(lang); }
    int col_year_period() const { return col_period() + 1 + 2 * n_indicator(); }
    int col_year_period_language(int lang) const { return col_year_period() + 1 + slot(lang); }
};

struct Design {
    Eigen::MatrixXd X;
    Eigen::VectorXd y;
    DesignLayout layout;
};

inline Design build_design(const std::vector<PanelRow>& rows, int n_languages,
                           int baseline_language_index) {
    if (n_languages < 2) throw RankError("design needs at least 2 languages");
    if (baseline_language_index < 0 || baseline_language_index >= n_languages)
        throw ConfigError("baseline language index out of range");

    // Every (language, Y, P) cell must be populated or the saturated model
    // is rank deficient; report the specific empty cell.
    std::vector<int> cell_counts(static_cast<std::size_t>(n_languages) * 4, 0);
    for (const PanelRow& r : rows) {
        if (r.language_index < 0 || r.language_index >= n_languages)
            throw PanelError("row language index out of range");
        ++cell_counts[static_cast<std::size_t>(r.language_index) * 4 + r.year_flag * 2 +
                      r.period_flag];
    }
    for (int lang = 0; lang < n_languages; ++lang)
        for (int yf = 0; yf < 2; ++yf)
            for (int pf = 0; pf < 2; ++pf)
                if (cell_counts[static_cast<std::size_t>(lang) * 4 + yf * 2 + pf] == 0)
                    throw RankError("empty design cell: language " + std::to_string(lang) +
                                    ", Y=" + std::to_string(yf) + ", P=" + std::to_string(pf));

    DesignLayout layout{n_languages, baseline_language_index};
    Design d;
    d.layout = layout;
    d.X = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(rows.size()), layout.n_cols());
    d.y = Eigen::VectorXd(static_cast<Eigen::Index>(rows.size()));
    for (Eigen::Index i = 0; i < d.X.rows(); ++i) {
        const PanelRow& r = rows[static_cast<std::size_t>(i)];
        const double yv = r.year_flag, pv = r.period_flag;
        d.X(i, layout.col_intercept()) = 1.0;
        d.X(i, layout.col_year()) = yv;
        d.X(i, layout.col_period()) = pv;
        d.X(i, layout.col_year_period()) = yv * pv;
        if (r.language_index != baseline_language_index) {
            d.X(i, layout.col_language(r.language_index)) = 1.0;
            d.X(i, layout.col_year_language(r.language_index)) = yv;
            d.X(i, layout.col_period_language(r.language_index)) = pv;
            d.X(i, layout.col_year_period_language(r.language_index)) = yv * pv;
        }
        d.y(i) = r.log_value;
    }
    return d;
}

struct DidFit {
    Eigen::VectorXd beta;
    Eigen::MatrixXd covariance;
    double sigma2 = 0.0;
    Eigen::Index dof = 0;
    Eigen::Index n_rows = 0;
    DesignLayout layout;
};

// Least squares through a column-pivoted Householder QR; rank deficiency is
// an error, never a silent pseudo-inverse. Coefficient covariance comes from
// the R factor: (X'X)^-1 = P R^-1 R^-T P'.
inline DidFit fit_ols(const Design& design) {
    const Eigen::Index n = design.X.rows(), p = design.X.cols();
    if (n < p) throw RankError("fewer rows than design columns");
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design.X);
    if (qr.rank() < p) throw RankError("design matrix is rank deficient");

    DidFit fit;
    fit.layout = design.layout;
    fit.n_rows = n;
    fit.beta = qr.solve(design.y);
    const double rss = (design.y - design.X * fit.beta).squaredNorm();
    fit.dof = n - p;
    fit.sigma2 = fit.dof > 0 ? rss / static_cast<double>(fit.dof) : 0.0;

    const Eigen::MatrixXd r_inv = qr.matrixR()
                                      .topLeftCorner(p, p)
                                      .triangularView<Eigen::Upper>()
                                      .solve(Eigen::MatrixXd::Identity(p, p));
    Eigen::MatrixXd xtx_inv = r_inv * r_inv.transpose();
    xtx_inv = qr.colsPermutation() * xtx_inv * qr.colsPermutation().transpose();
    fit.covariance = fit.sigma2 * xtx_inv;
    fit.covariance = 0.5 * (fit.covariance + fit.covariance.transpose()).eval();
    return fit;
}

struct Effect {
    double delta = 0.0;
    double se = 0.0;
};

// delta = b6 (+ b7[l] for non-baseline languages), with the matching linear
// combination of the covariance for its standard error.
inline Effect effect_for_language(const DidFit& fit, int language_index) {
    const DesignLayout& lo = fit.layout;
    const int c6 = lo.col_year_period();
    if (language_index == lo.baseline_index) {
        return {fit.beta(c6), std::sqrt(std::max(0.0, fit.covariance(c6, c6)))};
    }
    const int c7 = lo.col_year_period_language(language_index);
    const double delta = fit.beta(c6) + fit.beta(c7);
    const double var = fit.covariance(c6, c6) + fit.covariance(c7, c7) + 2.0 * fit.covariance(c6, c7);
    return {delta, std::sqrt(std::max(0.0, var))};
}

inline double effect_to_percent(double delta) { return 100.0 * std::exp(delta); }

// ---------------------------------------------------------------------------
// Window sequences

struct EffectPoint {
    int window_n = 0;
    double delta = 0.0;
    double se = 0.0;
    double ci_lo = 0.0;
    double ci_hi = 0.0;
    Eigen::Index n_rows = 0;
};

struct EffectSeries {
    std::string language;
    MetricKind kind = MetricKind::EditVolume;
    std::string variant = "base";
    std::vector<EffectPoint> points;
};

struct WindowParams {
    int n_windows = 120;
    int window_len = 7;
    int baseline_len = 30;
    double ci_multiplier = 2.0; // CI = delta +- 2 SE
};

struct WindowRunResult {
    std::vector<EffectSeries> effects; // one per language, input order
    std::vector<std::pair<int, std::string>> failed_windows;
};

// One independent fit per window n. A failing window is recorded and skipped;
// the remaining windows proceed.
inline WindowRunResult run_window_sequence(const std::vector<DateSeries>& series_by_language,
                                           const std::vector<std::string>& language_codes,
                                           const std::vector<Date>& changepoints,
                                           const WindowParams& params, const PanelYears& years,
                                           ValueTransform transform, int baseline_language_index,
                                           MetricKind kind, const std::string& variant = "base") {
    const int n_languages = static_cast<int>(series_by_language.size());
    WindowRunResult out;
    out.effects.resize(series_by_language.size());
    for (int lang = 0; lang < n_languages; ++lang) {
        out.effects[lang].language = language_codes[lang];
        out.effects[lang].kind = kind;
        out.effects[lang].variant = variant;
    }
    for (int n = 0; n < params.n_windows; ++n) {
        WindowSpec spec{n, params.window_len, params.baseline_len};
        try {
            const auto rows = build_panel(series_by_language, changepoints, spec, years, transform);
            const DidFit fit = fit_ols(build_design(rows, n_languages, baseline_language_index));
            for (int lang = 0; lang < n_languages; ++lang) {
                const Effect e = effect_for_language(fit, lang);
                out.effects[lang].points.push_back({n, e.delta, e.se,
                                                    e.delta - params.ci_multiplier * e.se,
                                                    e.delta + params.ci_multiplier * e.se,
                                                    fit.n_rows});
            }
        } catch (const Error& err) {
            out.failed_windows.emplace_back(n, err.what());
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Effects CSV (one file per metric; rows ordered language, window_n)

inline constexpr const char* kEffectsCsvHeader =
    "metric,language,window_n,delta,se,ci_lo,ci_hi,percent,n_rows,variant_label";

inline void write_effects_csv(std::ostream& os, const std::vector<EffectSeries>& effects) {
    os << kEffectsCsvHeader << '\n';
    char buf[256];
    for (const EffectSeries& s : effects) {
        for (const EffectPoint& p : s.points) {
            std::snprintf(buf, sizeof(buf), "%s,%s,%d,%.10g,%.10g,%.10g,%.10g,%.10g,%lld,%s\n",
                          to_string(s.kind), s.language.c_str(), p.window_n, p.delta, p.se, p.ci_lo,
                          p.ci_hi, effect_to_percent(p.delta), static_cast<long long>(p.n_rows),
                          s.variant.c_str());
            os << buf;
        }
    }
}

} // namespace wikidid
