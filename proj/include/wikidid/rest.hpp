#pragma once

// Client for the Wikimedia statistics REST endpoint (daily editors by
// activity level), with an on-disk response cache and a shared rate limit.
// Band counts cross-check the dump-derived editors_band series.

#include <algorithm>
#include <array>
#include <cctype>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "wikidid/core.hpp"
#include "wikidid/metrics.hpp"
#include "wikidid/series.hpp"

namespace wikidid::rest {

struct FetchError : Error {
    using Error::Error;
};

enum class ActivityBand { B1to4, B5to24, B25to99, B100plus };

inline constexpr std::array<ActivityBand, 4> kAllBands = {
    ActivityBand::B1to4, ActivityBand::B5to24, ActivityBand::B25to99, ActivityBand::B100plus};

// Path segment used by the statistics endpoint.
inline const char* api_level(ActivityBand b) {
    switch (b) {
        case ActivityBand::B1to4: return "1..4-edits";
        case ActivityBand::B5to24: return "5..24-edits";
        case ActivityBand::B25to99: return "25..99-edits";
        case ActivityBand::B100plus: return "100..-edits";
    }
    return "?";
}

inline MetricKind band_metric(ActivityBand b) {
    switch (b) {
        case ActivityBand::B1to4: return MetricKind::Editors1to4;
        case ActivityBand::B5to24: return MetricKind::Editors5to24;
        case ActivityBand::B25to99: return MetricKind::Editors25to99;
        case ActivityBand::B100plus: return MetricKind::Editors100plus;
    }
    return MetricKind::Editors1to4;
}

struct ApiEditorPoint {
    std::string language;
    ActivityBand band = ActivityBand::B1to4;
    Date date;
    std::int64_t count = 0;

    bool operator==(const ApiEditorPoint&) const = default;
};

// ---------------------------------------------------------------------------
// Clock + rate limiting (injectable for tests)

class Clock {
public:
    virtual ~Clock() = default;
    virtual double now_seconds() = 0;
    virtual void sleep_seconds(double s) = 0;
};

class SystemClock final : public Clock {
public:
    double now_seconds() override {
        return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch())
            .count();
    }
    void sleep_seconds(double s) override {
        std::this_thread::sleep_for(std::chrono::duration<double>(s));
    }
};

// Enforces a minimum spacing between requests across threads.
class RateLimiter {
public:
    RateLimiter(double requests_per_second, Clock& clock)
        : min_interval_(requests_per_second > 0 ? 1.0 / requests_per_second : 0.0), clock_(clock) {}

    void acquire() {
        double wait = 0.0;
        {
            std::lock_guard<std::mutex> lock(mu_);
            const double now = clock_.now_seconds();
            const double earliest = next_allowed_;
            const double start = std::max(now, earliest);
            next_allowed_ = start + min_interval_;
            wait = start - now;
        }
        if (wait > 0.0) clock_.sleep_seconds(wait);
    }

private:
    double min_interval_;
    Clock& clock_;
    std::mutex mu_;
    double next_allowed_ = 0.0;
};

// ---------------------------------------------------------------------------
// Disk cache: one JSON document per request key. Entries never expire (the
// statistics are historical); refresh bypasses reads but still writes.

class DiskCache {
public:
    explicit DiskCache(std::filesystem::path dir) : dir_(std::move(dir)) {
        std::filesystem::create_directories(dir_);
    }

    static std::string sanitize(const std::string& key) {
        std::string out;
        out.reserve(key.size());
        for (char c : key)
            out += (std::isalnum(static_cast<unsigned char>(c)) || c == '.' || c == '-' || c == '_')
                       ? c
                       : '_';
        return out;
    }

    std::optional<std::string> get(const std::string& key) const {
        std::ifstream in(path_for(key), std::ios::binary);
        if (!in) return std::nullopt;
        return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    }

    void put(const std::string& key, const std::string& body) const {
        const auto target = path_for(key);
        const auto tmp = target.string() + ".tmp";
        {
            std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
            out << body;
        }
        std::filesystem::rename(tmp, target);
    }

    std::filesystem::path path_for(const std::string& key) const {
        return dir_ / (sanitize(key) + ".json");
    }

private:
    std::filesystem::path dir_;
};

// ---------------------------------------------------------------------------
// Client

struct RestConfig {
    std::string base_url = "https://wikimedia.org/api/rest_v1";
    std::string user_agent = "wikidid/0.1 (editor-activity analysis pipeline)";
    double requests_per_second = 2.0;
    std::string cache_dir = "cache";
    bool refresh = false;     // bypass cache reads
    bool cross_check = false; // compare API band counts against the dumps during ingest
};

// WIKIDID_REST_BASE_URL overrides the configured endpoint (fixture servers).
inline std::string resolve_base_url(const std::string& configured) {
    const char* env = std::getenv("WIKIDID_REST_BASE_URL");
    return env && *env ? env : configured;
}

namespace detail {

struct SplitUrl {
    std::string origin;      // scheme://host[:port]
    std::string path_prefix; // possibly empty, no trailing slash
};

inline SplitUrl split_url(const std::string& url) {
    const auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) throw ConfigError("base url needs a scheme: " + url);
    const auto path_start = url.find('/', scheme_end + 3);
    SplitUrl out;
    if (path_start == std::string::npos) {
        out.origin = url;
    } else {
        out.origin = url.substr(0, path_start);
        out.path_prefix = url.substr(path_start);
        while (!out.path_prefix.empty() && out.path_prefix.back() == '/') out.path_prefix.pop_back();
    }
    return out;
}

inline std::optional<Date> parse_api_timestamp(const std::string& ts) {
    // "2020010100", "20200101" or ISO "2020-01-01T...".
    if (ts.size() >= 10 && ts[4] == '-' && ts[7] == '-') return try_parse_date(ts.substr(0, 10));
    if (ts.size() >= 8) {
        const auto iso = ts.substr(0, 4) + "-" + ts.substr(4, 2) + "-" + ts.substr(6, 2);
        return try_parse_date(iso);
    }
    return std::nullopt;
}

} // namespace detail

class EditorsClient {
public:
    explicit EditorsClient(RestConfig config, Clock* clock = nullptr)
        : config_(std::move(config)),
          base_url_(resolve_base_url(config_.base_url)),
          own_clock_(clock ? nullptr : std::make_unique<SystemClock>()),
          limiter_(config_.requests_per_second, clock ? *clock : *own_clock_),
          cache_(config_.cache_dir) {}

    // Daily registered-editor counts for one language and activity band over
    // an inclusive date range. Cached responses are served without network
    // access; a fetched range must cover every requested day.
    std::vector<ApiEditorPoint> fetch_editors_by_activity(const std::string& language,
                                                          ActivityBand band, Date from, Date to) {
        if (from > to) return {};
        const std::string project = language + ".wikipedia.org";
        const std::string path = "/metrics/editors/aggregate/" + project + "/user/content/" +
                                 api_level(band) + "/daily/" + compact(from) + "/" + compact(to);
        const std::string key = "editors_" + project + "_" + api_level(band) + "_" + compact(from) +
                                "_" + compact(to);

        std::string body;
        if (!config_.refresh) {
            if (auto cached = cache_.get(key)) body = std::move(*cached);
        }
        if (body.empty()) {
            body = http_get(path);
            cache_.put(key, body);
        }
        return parse_points(body, language, band, from, to);
    }

    std::size_t network_requests() const { return network_requests_; }

private:
    static std::string compact(Date d) {
        char buf[16];
        std::snprintf(buf, sizeof(buf), "%04d%02u%02u", d.year(), d.month(), d.day());
        return buf;
    }

    std::string http_get(const std::string& path) {
        limiter_.acquire();
        ++network_requests_;
        const auto url = detail::split_url(base_url_);
        httplib::Client cli(url.origin);
        cli.set_default_headers({{"User-Agent", config_.user_agent}});
        cli.set_connection_timeout(10);
        cli.set_read_timeout(30);
        const auto res = cli.Get(url.path_prefix + path);
        if (!res)
            throw FetchError("request failed for " + path + ": " + httplib::to_string(res.error()));
        if (res->status != 200)
            throw FetchError("HTTP " + std::to_string(res->status) + " for " + path);
        return res->body;
    }

    std::vector<ApiEditorPoint> parse_points(const std::string& body, const std::string& language,
                                             ActivityBand band, Date from, Date to) const {
        nlohmann::json doc;
        try {
            doc = nlohmann::json::parse(body);
        } catch (const nlohmann::json::exception& e) {
            throw FetchError(std::string("bad response JSON: ") + e.what());
        }
        std::vector<ApiEditorPoint> out;
        if (!doc.contains("items") || !doc["items"].is_array())
            throw FetchError("response JSON has no items array");
        for (const auto& item : doc["items"]) {
            if (!item.contains("results")) continue;
            for (const auto& r : item["results"]) {
                const auto ts = r.value("timestamp", std::string());
                const auto date = detail::parse_api_timestamp(ts);
                if (!date) throw FetchError("unparseable result timestamp: " + ts);
                if (*date < from || *date > to) continue;
                ApiEditorPoint p;
                p.language = language;
                p.band = band;
                p.date = *date;
                p.count = r.value("editors", std::int64_t{0});
                out.push_back(std::move(p));
            }
        }
        std::sort(out.begin(), out.end(),
                  [](const ApiEditorPoint& a, const ApiEditorPoint& b) { return a.date < b.date; });

        std::string missing;
        int n_missing = 0;
        std::size_t i = 0;
        for (Date d = from; d <= to; ++d) {
            while (i < out.size() && out[i].date < d) ++i;
            if (i >= out.size() || out[i].date != d) {
                ++n_missing;
                if (n_missing <= 10) missing += (missing.empty() ? "" : ", ") + d.to_string();
            }
        }
        if (n_missing > 0)
            throw FetchError("response missing " + std::to_string(n_missing) +
                             " dates in range: " + missing + (n_missing > 10 ? ", ..." : ""));
        return out;
    }

    RestConfig config_;
    std::string base_url_;
    std::unique_ptr<SystemClock> own_clock_;
    RateLimiter limiter_;
    DiskCache cache_;
    std::size_t network_requests_ = 0;
};

// ---------------------------------------------------------------------------
// API vs dump comparison

struct BandDiscrepancy {
    Date date;
    double api = 0.0;
    double dump = 0.0;
    double abs_diff = 0.0;
    double rel_diff = 0.0; // |api-dump| / max(1, dump)
};

struct BandComparison {
    std::vector<BandDiscrepancy> rows; // dates in both sources, ascending
    double max_abs = 0.0;
    double mean_abs = 0.0;
    double p50_abs = 0.0;
    double p90_abs = 0.0;
};

inline BandComparison compare_band_sources(const std::vector<ApiEditorPoint>& api_points,
                                           const DateSeries& dump_series) {
    BandComparison out;
    std::vector<double> abs_diffs;
    for (const auto& p : api_points) {
        if (!dump_series.covers(p.date)) continue;
        BandDiscrepancy d;
        d.date = p.date;
        d.api = static_cast<double>(p.count);
        d.dump = dump_series.at(p.date);
        d.abs_diff = std::abs(d.api - d.dump);
        d.rel_diff = d.abs_diff / std::max(1.0, std::abs(d.dump));
        abs_diffs.push_back(d.abs_diff);
        out.rows.push_back(d);
    }
    if (abs_diffs.empty()) return out;
    std::sort(abs_diffs.begin(), abs_diffs.end());
    out.max_abs = abs_diffs.back();
    double acc = 0.0;
    for (double v : abs_diffs) acc += v;
    out.mean_abs = acc / static_cast<double>(abs_diffs.size());
    out.p50_abs = abs_diffs[abs_diffs.size() / 2];
    out.p90_abs = abs_diffs[std::min(abs_diffs.size() - 1, abs_diffs.size() * 9 / 10)];
    return out;
}

} // namespace wikidid::rest
