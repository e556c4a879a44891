#pragma once

// Daily activity metrics aggregated from revision events, one language at a
// time. Actor rules differ per metric: edit volume counts humans only,
// identity reverts count every actor, byte deltas include bots.

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <ostream>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "wikidid/core.hpp"
#include "wikidid/dump.hpp"
#include "wikidid/series.hpp"

namespace wikidid {

struct OrderingError : Error {
    using Error::Error;
};

inline constexpr int kEditorBands = 4; // 1-4, 5-24, 25-99, 100+

struct DailyMetrics {
    Date date;
    std::int64_t edit_volume = 0;
    std::int64_t newcomers = 0;
    std::int64_t identity_reverts = 0;
    std::optional<double> revert_rate; // undefined when edit_volume == 0
    std::array<std::int64_t, kEditorBands> editors_band{};
    std::int64_t byte_delta_sum = 0;
};

enum class MetricKind {
    EditVolume,
    Newcomers,
    RevertRate,
    Editors1to4,
    Editors5to24,
    Editors25to99,
    Editors100plus,
    ByteDelta,
};

inline constexpr std::array<MetricKind, 8> kAllMetricKinds = {
    MetricKind::EditVolume,     MetricKind::Newcomers,     MetricKind::RevertRate,
    MetricKind::Editors1to4,    MetricKind::Editors5to24,  MetricKind::Editors25to99,
    MetricKind::Editors100plus, MetricKind::ByteDelta,
};

inline const char* to_string(MetricKind k) {
    switch (k) {
        case MetricKind::EditVolume: return "edit_volume";
        case MetricKind::Newcomers: return "newcomers";
        case MetricKind::RevertRate: return "revert_rate";
        case MetricKind::Editors1to4: return "editors_1_4";
        case MetricKind::Editors5to24: return "editors_5_24";
        case MetricKind::Editors25to99: return "editors_25_99";
        case MetricKind::Editors100plus: return "editors_100plus";
        case MetricKind::ByteDelta: return "byte_delta_sum";
    }
    return "?";
}

inline MetricKind metric_kind_from_string(std::string_view s) {
    for (MetricKind k : kAllMetricKinds)
        if (s == to_string(k)) return k;
    throw ConfigError("unknown metric: " + std::string(s));
}

struct MetricSeries {
    std::string language;
    MetricKind kind = MetricKind::EditVolume;
    DateSeries data;
    std::vector<Date> outlier_flags; // dates replaced by the outlier policy
};

inline MetricSeries rolling_mean(const MetricSeries& s, int w = 7) {
    MetricSeries out{s.language, s.kind, rolling_mean(s.data, w), s.outlier_flags};
    return out;
}

inline MetricSeries monthly_mad_replace(const MetricSeries& s, double k = 5.0) {
    MadResult r = monthly_mad_replace(s.data, k);
    MetricSeries out{s.language, s.kind, std::move(r.series), s.outlier_flags};
    for (Date d : r.replaced) out.outlier_flags.push_back(d);
    return out;
}

// ---------------------------------------------------------------------------
// Streaming daily aggregation

// Sequential fold over one language's events, which must arrive in
// chronological order (dump files are timestamp-sorted; a local-date
// regression is a fatal ordering error because newcomer attribution depends
// on first occurrence). The seen-user set spans the full input history.
class DailyAggregator {
public:
    void add(const RevisionEvent& e) {
        if (have_day_ && e.local_date < day_.date)
            throw OrderingError("events out of chronological order at " + e.local_date.to_string() +
                                " after " + day_.date.to_string());
        if (!have_day_ || e.local_date != day_.date) {
            flush();
            day_ = DailyMetrics{};
            day_.date = e.local_date;
            have_day_ = true;
        }

        if (e.is_identity_revert) ++day_.identity_reverts; // every actor, bots included
        day_.byte_delta_sum += e.byte_delta;               // bots included
        if (e.user_kind == UserKind::Bot) return;

        ++day_.edit_volume;
        if (e.user_kind == UserKind::Registered) {
            const std::int64_t uid = *e.user_id;
            if (seen_users_.insert(uid).second) ++day_.newcomers;
            ++today_edits_[uid];
        }
    }

    // Materializes the gap-free daily sequence. Without an explicit coverage
    // range the span of observed events is used. Count metrics are zero on
    // empty days; revert rate is undefined there.
    std::vector<DailyMetrics> finish(std::optional<Date> cover_start = std::nullopt,
                                     std::optional<Date> cover_end = std::nullopt) {
        flush();
        std::vector<DailyMetrics> out;
        if (days_.empty() && !cover_start) return out;
        const Date lo = cover_start ? *cover_start : days_.front().date;
        const Date hi = cover_end ? *cover_end : (days_.empty() ? lo : days_.back().date);
        std::size_t next = 0;
        while (next < days_.size() && days_[next].date < lo) ++next;
        for (Date d = lo; d <= hi; ++d) {
            if (next < days_.size() && days_[next].date == d) {
                out.push_back(days_[next]);
                ++next;
            } else {
                DailyMetrics zero;
                zero.date = d;
                out.push_back(zero);
            }
        }
        return out;
    }

    std::size_t distinct_registered_users() const { return seen_users_.size(); }

private:
    void flush() {
        if (!have_day_) return;
        for (const auto& [uid, n] : today_edits_) {
            const int band = n <= 4 ? 0 : n <= 24 ? 1 : n <= 99 ? 2 : 3;
            ++day_.editors_band[band];
        }
        today_edits_.clear();
        if (day_.edit_volume > 0)
            day_.revert_rate = static_cast<double>(day_.identity_reverts) / day_.edit_volume;
        days_.push_back(day_);
        have_day_ = false;
    }

    std::unordered_set<std::int64_t> seen_users_;
    std::unordered_map<std::int64_t, std::uint32_t> today_edits_;
    DailyMetrics day_{};
    bool have_day_ = false;
    std::vector<DailyMetrics> days_;
};

inline std::vector<DailyMetrics> aggregate_daily(const std::vector<RevisionEvent>& events,
                                                 std::optional<Date> cover_start = std::nullopt,
                                                 std::optional<Date> cover_end = std::nullopt) {
    DailyAggregator agg;
    for (const auto& e : events) agg.add(e);
    return agg.finish(cover_start, cover_end);
}

inline double metric_value(const DailyMetrics& d, MetricKind k) {
    switch (k) {
        case MetricKind::EditVolume: return static_cast<double>(d.edit_volume);
        case MetricKind::Newcomers: return static_cast<double>(d.newcomers);
        case MetricKind::RevertRate:
            return d.revert_rate ? *d.revert_rate : std::numeric_limits<double>::quiet_NaN();
        case MetricKind::Editors1to4: return static_cast<double>(d.editors_band[0]);
        case MetricKind::Editors5to24: return static_cast<double>(d.editors_band[1]);
        case MetricKind::Editors25to99: return static_cast<double>(d.editors_band[2]);
        case MetricKind::Editors100plus: return static_cast<double>(d.editors_band[3]);
        case MetricKind::ByteDelta: return static_cast<double>(d.byte_delta_sum);
    }
    return 0.0;
}

inline MetricSeries series_from_daily(const std::vector<DailyMetrics>& days,
                                      const std::string& language, MetricKind kind) {
    MetricSeries s;
    s.language = language;
    s.kind = kind;
    if (days.empty()) return s;
    s.data.start = days.front().date;
    s.data.values.reserve(days.size());
    for (const auto& d : days) s.data.values.push_back(metric_value(d, kind));
    return s;
}

// ---------------------------------------------------------------------------
// Per-language metrics CSV

inline constexpr const char* kMetricsCsvHeader =
    "date,edit_volume,newcomers,identity_reverts,revert_rate,"
    "editors_1_4,editors_5_24,editors_25_99,editors_100plus,byte_delta_sum,outlier_flags";

// One row per day. revert_rate is an empty cell when undefined. The
// outlier_flags column holds one 0/1 per regressed metric, in
// kAllMetricKinds order, marking days the MAD policy would replace.
inline void write_metrics_csv(std::ostream& os, const std::vector<DailyMetrics>& days,
                              const std::array<std::vector<bool>, 8>& outlier_flags) {
    os << kMetricsCsvHeader << '\n';
    char buf[64];
    for (std::size_t i = 0; i < days.size(); ++i) {
        const DailyMetrics& d = days[i];
        os << d.date.to_string() << ',' << d.edit_volume << ',' << d.newcomers << ','
           << d.identity_reverts << ',';
        if (d.revert_rate) {
            std::snprintf(buf, sizeof(buf), "%.10g", *d.revert_rate);
            os << buf;
        }
        os << ',' << d.editors_band[0] << ',' << d.editors_band[1] << ',' << d.editors_band[2]
           << ',' << d.editors_band[3] << ',' << d.byte_delta_sum << ',';
        for (std::size_t m = 0; m < kAllMetricKinds.size(); ++m)
            os << (outlier_flags[m].size() > i && outlier_flags[m][i] ? '1' : '0');
        os << '\n';
    }
}

inline std::vector<DailyMetrics> read_metrics_csv(std::istream& is) {
    std::string line;
    if (!std::getline(is, line)) return {};
    std::vector<DailyMetrics> out;
    std::vector<std::string_view> f;
    std::size_t line_no = 1;
    while (std::getline(is, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        split_into(line, ',', f);
        if (f.size() != 11) throw FormatError("metrics csv: bad column count at line " + std::to_string(line_no));
        DailyMetrics d;
        d.date = parse_date(f[0]);
        auto i64 = [&](std::string_view s) {
            const auto v = try_parse_i64(s);
            if (!v) throw FormatError("metrics csv: bad integer at line " + std::to_string(line_no));
            return *v;
        };
        d.edit_volume = i64(f[1]);
        d.newcomers = i64(f[2]);
        d.identity_reverts = i64(f[3]);
        if (!f[4].empty()) {
            const auto v = try_parse_f64(f[4]);
            if (!v) throw FormatError("metrics csv: bad revert_rate at line " + std::to_string(line_no));
            d.revert_rate = *v;
        }
        for (int b = 0; b < kEditorBands; ++b) d.editors_band[b] = i64(f[5 + b]);
        d.byte_delta_sum = i64(f[9]);
        out.push_back(d);
    }
    return out;
}

} // namespace wikidid
