#include <catch2/catch_amalgamated.hpp>

#include <atomic>
#include <thread>

#include "test_util.hpp"
#include "wikidid/rest.hpp"
#include "wikidid/synth.hpp"

using namespace wikidid;
using namespace wikidid::rest;

namespace {

class FakeClock final : public Clock {
public:
    double now_seconds() override { return now_; }
    void sleep_seconds(double s) override {
        REQUIRE(s >= 0.0);
        now_ += s;
        total_slept_ += s;
    }
    double now_ = 0.0;
    double total_slept_ = 0.0;
};

// Serves canned statistics responses and counts hits.
class FixtureServer {
public:
    FixtureServer() {
        server_.Get(R"(/metrics/editors/aggregate/(.+)/user/content/(.+)/daily/(\d+)/(\d+))",
                    [this](const httplib::Request& req, httplib::Response& res) {
                        ++hits_;
                        last_user_agent_ = req.get_header_value("User-Agent");
                        if (fail_) {
                            res.status = 503;
                            return;
                        }
                        res.set_content(body_, "application/json");
                    });
        port_ = server_.bind_to_any_port("127.0.0.1");
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
    }
    ~FixtureServer() {
        server_.stop();
        thread_.join();
    }

    std::string base_url() const { return "http://127.0.0.1:" + std::to_string(port_); }

    int hits() const { return hits_; }
    void set_body(std::string body) { body_ = std::move(body); }
    void set_fail(bool fail) { fail_ = fail; }
    std::string last_user_agent() const { return last_user_agent_; }

private:
    httplib::Server server_;
    std::thread thread_;
    int port_ = 0;
    std::atomic<int> hits_{0};
    std::string body_;
    std::atomic<bool> fail_{false};
    std::string last_user_agent_;
};

std::string canned_body(Date from, Date to, std::int64_t base_count) {
    std::string results;
    std::int64_t c = base_count;
    for (Date d = from; d <= to; ++d, ++c) {
        if (!results.empty()) results += ",";
        char ts[16];
        std::snprintf(ts, sizeof(ts), "%04d%02u%02u00", d.year(), d.month(), d.day());
        results += "{\"timestamp\":\"" + std::string(ts) + "\",\"editors\":" + std::to_string(c) + "}";
    }
    return "{\"items\":[{\"project\":\"xx.wikipedia.org\",\"granularity\":\"daily\",\"results\":[" +
           results + "]}]}";
}

RestConfig config_for(const FixtureServer& server, const testutil::TempDir& tmp) {
    RestConfig cfg;
    cfg.base_url = server.base_url();
    cfg.cache_dir = tmp.file("cache");
    cfg.requests_per_second = 1000.0;
    return cfg;
}

} // namespace

TEST_CASE("fixture server responses parse into points") {
    FixtureServer server;
    testutil::TempDir tmp;
    const Date from = parse_date("2020-01-01"), to = parse_date("2020-01-05");
    server.set_body(canned_body(from, to, 100));

    EditorsClient client(config_for(server, tmp));
    const auto points = client.fetch_editors_by_activity("xx", ActivityBand::B5to24, from, to);
    REQUIRE(points.size() == 5);
    for (std::size_t i = 0; i < points.size(); ++i) {
        CHECK(points[i].date == from + static_cast<std::int32_t>(i));
        CHECK(points[i].count == 100 + static_cast<std::int64_t>(i));
        CHECK(points[i].band == ActivityBand::B5to24);
        CHECK(points[i].language == "xx");
    }
    CHECK(server.hits() == 1);
    CHECK(server.last_user_agent().find("wikidid") != std::string::npos);
}

TEST_CASE("second identical call is served from cache") {
    FixtureServer server;
    testutil::TempDir tmp;
    const Date from = parse_date("2020-02-01"), to = parse_date("2020-02-03");
    server.set_body(canned_body(from, to, 7));

    EditorsClient client(config_for(server, tmp));
    const auto first = client.fetch_editors_by_activity("xx", ActivityBand::B1to4, from, to);
    CHECK(server.hits() == 1);
    const auto second = client.fetch_editors_by_activity("xx", ActivityBand::B1to4, from, to);
    CHECK(server.hits() == 1); // zero additional network requests
    CHECK(first == second);

    // A fresh client over the same cache directory needs no network at all.
    server.set_fail(true);
    EditorsClient offline(config_for(server, tmp));
    const auto third = offline.fetch_editors_by_activity("xx", ActivityBand::B1to4, from, to);
    CHECK(third == first);
    CHECK(offline.network_requests() == 0);
}

TEST_CASE("refresh bypasses the cache") {
    FixtureServer server;
    testutil::TempDir tmp;
    const Date from = parse_date("2020-02-01"), to = parse_date("2020-02-02");
    server.set_body(canned_body(from, to, 7));

    auto cfg = config_for(server, tmp);
    EditorsClient client(cfg);
    (void)client.fetch_editors_by_activity("xx", ActivityBand::B1to4, from, to);
    CHECK(server.hits() == 1);

    cfg.refresh = true;
    EditorsClient refresher(cfg);
    (void)refresher.fetch_editors_by_activity("xx", ActivityBand::B1to4, from, to);
    CHECK(server.hits() == 2);
}

TEST_CASE("empty date range yields an empty sequence without requests") {
    FixtureServer server;
    testutil::TempDir tmp;
    EditorsClient client(config_for(server, tmp));
    CHECK(client
              .fetch_editors_by_activity("xx", ActivityBand::B1to4, parse_date("2020-02-02"),
                                         parse_date("2020-02-01"))
              .empty());
    CHECK(server.hits() == 0);
}

TEST_CASE("partial responses are an error listing missing dates") {
    FixtureServer server;
    testutil::TempDir tmp;
    // Ask for 5 days but serve only 3.
    server.set_body(canned_body(parse_date("2020-01-01"), parse_date("2020-01-03"), 1));
    EditorsClient client(config_for(server, tmp));
    try {
        client.fetch_editors_by_activity("xx", ActivityBand::B1to4, parse_date("2020-01-01"),
                                         parse_date("2020-01-05"));
        FAIL("expected FetchError");
    } catch (const FetchError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("2020-01-04") != std::string::npos);
        CHECK(msg.find("2020-01-05") != std::string::npos);
    }
}

TEST_CASE("http failure with an empty cache is an explicit error") {
    FixtureServer server;
    testutil::TempDir tmp;
    server.set_fail(true);
    EditorsClient client(config_for(server, tmp));
    CHECK_THROWS_AS(client.fetch_editors_by_activity("xx", ActivityBand::B1to4,
                                                     parse_date("2020-01-01"),
                                                     parse_date("2020-01-02")),
                    FetchError);
}

TEST_CASE("environment variable overrides the endpoint") {
    FixtureServer server;
    testutil::TempDir tmp;
    const Date from = parse_date("2020-03-01"), to = parse_date("2020-03-02");
    server.set_body(canned_body(from, to, 3));

    RestConfig cfg;
    cfg.base_url = "http://192.0.2.1:1"; // unreachable; the env var must win
    cfg.cache_dir = tmp.file("cache");
    cfg.requests_per_second = 1000.0;
    setenv("WIKIDID_REST_BASE_URL", server.base_url().c_str(), 1);
    EditorsClient client(cfg);
    const auto points = client.fetch_editors_by_activity("xx", ActivityBand::B100plus, from, to);
    unsetenv("WIKIDID_REST_BASE_URL");
    CHECK(points.size() == 2);
    CHECK(server.hits() == 1);
}

TEST_CASE("cache round trip is value-identical") {
    testutil::TempDir tmp;
    DiskCache cache(tmp.file("cache"));
    const std::string body = "{\"items\":[{\"results\":[]}]}";
    cache.put("some/key with spaces", body);
    const auto got = cache.get("some/key with spaces");
    REQUIRE(got.has_value());
    CHECK(*got == body);
    CHECK_FALSE(cache.get("other").has_value());
}

TEST_CASE("rate limiter enforces the configured spacing") {
    FakeClock clock;
    RateLimiter limiter(4.0, clock); // 250ms spacing
    std::vector<double> request_times;
    for (int i = 0; i < 10; ++i) {
        limiter.acquire();
        request_times.push_back(clock.now_seconds());
    }
    for (std::size_t i = 1; i < request_times.size(); ++i)
        CHECK(request_times[i] - request_times[i - 1] >= 0.25 - 1e-9);
    // Ten requests at 4/s take at least 2.25 simulated seconds.
    CHECK(clock.now_seconds() >= 2.25 - 1e-9);
}

TEST_CASE("rate limiter is lenient when requests are already spaced out") {
    FakeClock clock;
    RateLimiter limiter(4.0, clock);
    limiter.acquire();
    clock.now_ += 10.0;
    const double before = clock.total_slept_;
    limiter.acquire();
    CHECK(clock.total_slept_ == before); // no sleep needed
}

// ---------------------------------------------------------------------------
// compare_band_sources

namespace {

std::vector<ApiEditorPoint> points_from(const DateSeries& s, std::int64_t offset) {
    std::vector<ApiEditorPoint> out;
    for (std::size_t i = 0; i < s.size(); ++i)
        out.push_back({"xx", ActivityBand::B1to4, s.date_at(i),
                       static_cast<std::int64_t>(s.values[i]) + offset});
    return out;
}

} // namespace

TEST_CASE("identical sources produce an all-zero report") {
    DateSeries dump{parse_date("2020-01-01"), {5, 6, 7, 8}};
    const auto report = compare_band_sources(points_from(dump, 0), dump);
    REQUIRE(report.rows.size() == 4);
    CHECK(report.max_abs == 0.0);
    CHECK(report.mean_abs == 0.0);
    for (const auto& r : report.rows) CHECK(r.abs_diff == 0.0);
}

TEST_CASE("constant offset shows up as a constant difference") {
    DateSeries dump{parse_date("2020-01-01"), {5, 6, 7, 8}};
    const auto report = compare_band_sources(points_from(dump, 1), dump);
    REQUIRE(report.rows.size() == 4);
    for (const auto& r : report.rows) CHECK(r.abs_diff == 1.0);
    CHECK(report.max_abs == 1.0);
    CHECK(report.p50_abs == 1.0);
}

TEST_CASE("random fixtures match per-date subtraction") {
    synth::Rng rng(12);
    DateSeries dump{parse_date("2020-01-01"), {}};
    std::vector<ApiEditorPoint> api;
    for (int i = 0; i < 50; ++i) {
        dump.values.push_back(static_cast<double>(rng.below(100)));
        api.push_back({"xx", ActivityBand::B1to4, dump.date_at(static_cast<std::size_t>(i)),
                       static_cast<std::int64_t>(rng.below(100))});
    }
    const auto report = compare_band_sources(api, dump);
    REQUIRE(report.rows.size() == 50);
    double max_abs = 0.0, acc = 0.0;
    for (int i = 0; i < 50; ++i) {
        const double expected = std::abs(static_cast<double>(api[i].count) - dump.values[i]);
        CHECK(report.rows[i].abs_diff == expected);
        max_abs = std::max(max_abs, expected);
        acc += expected;
    }
    CHECK(report.max_abs == max_abs);
    CHECK_THAT(report.mean_abs, Catch::Matchers::WithinAbs(acc / 50.0, 1e-12));
}
