#include <catch2/catch_amalgamated.hpp>

#include <sstream>

#include "oracles.hpp"
#include "wikidid/mobility.hpp"
#include "wikidid/synth.hpp"

using namespace wikidid;

namespace {

const char* kHeader =
    "country_region_code,country_region,sub_region_1,sub_region_2,metro_area,iso_3166_2_code,"
    "census_fips_code,place_id,date,retail_and_recreation_percent_change_from_baseline,"
    "grocery_and_pharmacy_percent_change_from_baseline,parks_percent_change_from_baseline,"
    "transit_stations_percent_change_from_baseline,workplaces_percent_change_from_baseline,"
    "residential_percent_change_from_baseline";

std::vector<MobilityObservation> parse(const std::string& body) {
    std::istringstream is(std::string(kHeader) + "\n" + body);
    return load_google_mobility(is);
}

LanguageProfile profile_with(std::vector<CountryWeight> countries) {
    LanguageProfile p{.code = "xx", .timezone = "UTC"};
    p.mobility_countries = std::move(countries);
    return p;
}

DateSeries series_of(Date start, std::vector<double> values) {
    return DateSeries{start, std::move(values)};
}

} // namespace

TEST_CASE("google csv: empty data section") {
    CHECK(parse("").empty());
}

TEST_CASE("google csv: one country row") {
    const auto obs = parse("IT,Italy,,,,,,ChIJ,2020-03-15,-70,-40,-50,-60,-63,20\n");
    REQUIRE(obs.size() == 1);
    CHECK(obs[0].country == "IT");
    CHECK(obs[0].date == parse_date("2020-03-15"));
    CHECK(obs[0].value(MobilityCategory::Workplaces) == -63.0);
    CHECK(obs[0].value(MobilityCategory::Residential) == 20.0);
}

TEST_CASE("google csv: sub-region rows are excluded") {
    const auto obs = parse(
        "IT,Italy,Lombardy,,,IT-25,,ChIJ,2020-03-15,-70,-40,-50,-60,-80,25\n"
        "IT,Italy,,,Milan Metro,,,ChIJ,2020-03-15,-70,-40,-50,-60,-80,25\n"
        "IT,Italy,,,,,,ChIJ,2020-03-15,,,,,-63,\n");
    REQUIRE(obs.size() == 1);
    CHECK(obs[0].value(MobilityCategory::Workplaces) == -63.0);
    // Missing cells leave the category absent.
    CHECK_FALSE(obs[0].value(MobilityCategory::Parks).has_value());
}

TEST_CASE("google csv: quoted fields") {
    const auto obs = parse("KR,\"Korea, South\",,,,,,ChIJ,2020-03-15,-1,-2,-3,-4,-5,-6\n");
    REQUIRE(obs.size() == 1);
    CHECK(obs[0].country == "KR");
}

TEST_CASE("google csv: missing header is fatal") {
    std::istringstream is("country_region_code,date\nIT,2020-03-15\n");
    CHECK_THROWS_AS(load_google_mobility(is), FormatError);
    std::istringstream empty("");
    CHECK_THROWS_AS(load_google_mobility(empty), FormatError);
}

TEST_CASE("weighted aggregation: single country passes through") {
    const auto obs = parse(
        "IT,Italy,,,,,,x,2020-03-01,,,,,-10,\n"
        "IT,Italy,,,,,,x,2020-03-02,,,,,-20,\n");
    const auto w = aggregate_weighted(obs, profile_with({{"IT", 60.0e6}}), MobilityCategory::Workplaces);
    REQUIRE(w.series.size() == 2);
    CHECK(w.series.values[0] == -10.0);
    CHECK(w.series.values[1] == -20.0);
    CHECK(w.warnings.empty());
}

TEST_CASE("weighted aggregation: equal populations average") {
    const auto obs = parse(
        "AA,A,,,,,,x,2020-03-01,,,,,-10,\n"
        "BB,B,,,,,,x,2020-03-01,,,,,-30,\n");
    const auto w = aggregate_weighted(obs, profile_with({{"AA", 5.0e6}, {"BB", 5.0e6}}),
                                      MobilityCategory::Workplaces);
    REQUIRE(w.series.size() == 1);
    CHECK_THAT(w.series.values[0], Catch::Matchers::WithinAbs(-20.0, 1e-12));
}

TEST_CASE("weighted aggregation matches brute force and scales freely") {
    synth::Rng rng(42);
    std::ostringstream body;
    body.precision(12);
    std::vector<std::array<double, 10>> values(3);
    const char* cc[3] = {"AA", "BB", "CC"};
    for (int c = 0; c < 3; ++c)
        for (int d = 0; d < 10; ++d) {
            values[c][d] = std::round((-80.0 + rng.next_double() * 100.0) * 100.0) / 100.0;
            body << cc[c] << ",X,,,,,,x,2020-03-" << (d < 9 ? "0" : "") << d + 1 << ",,,,,"
                 << values[c][d] << ",\n";
        }
    const auto obs = parse(body.str());

    const double w0 = 0.5, w1 = 0.3, w2 = 0.2;
    for (double scale : {1.0, 7.5}) {
        const auto agg = aggregate_weighted(
            obs, profile_with({{"AA", w0 * scale}, {"BB", w1 * scale}, {"CC", w2 * scale}}),
            MobilityCategory::Workplaces);
        REQUIRE(agg.series.size() == 10);
        for (int d = 0; d < 10; ++d) {
            const double expected = w0 * values[0][d] + w1 * values[1][d] + w2 * values[2][d];
            CHECK_THAT(agg.series.values[d], Catch::Matchers::WithinAbs(expected, 1e-9));
        }
    }
}

TEST_CASE("weighted aggregation renormalizes when a country is missing") {
    const auto obs = parse(
        "AA,A,,,,,,x,2020-03-01,,,,,-10,\n"
        "BB,B,,,,,,x,2020-03-01,,,,,-30,\n"
        "AA,A,,,,,,x,2020-03-02,,,,,-12,\n");
    const auto w = aggregate_weighted(obs, profile_with({{"AA", 8.0e6}, {"BB", 2.0e6}}),
                                      MobilityCategory::Workplaces);
    REQUIRE(w.series.size() == 2);
    CHECK_THAT(w.series.values[0], Catch::Matchers::WithinAbs(0.8 * -10 + 0.2 * -30, 1e-12));
    CHECK_THAT(w.series.values[1], Catch::Matchers::WithinAbs(-12.0, 1e-12)); // BB absent
    REQUIRE(w.warnings.size() == 1);
    CHECK(w.warnings[0].find("BB") != std::string::npos);
}

TEST_CASE("nonpositive population weights are rejected") {
    const auto obs = parse("AA,A,,,,,,x,2020-03-01,,,,,-10,\n");
    CHECK_THROWS_AS(
        aggregate_weighted(obs, profile_with({{"AA", 0.0}}), MobilityCategory::Workplaces),
        ConfigError);
}

// ---------------------------------------------------------------------------
// binary segmentation

TEST_CASE("constant series has no changepoints") {
    CHECK(binary_segment(std::vector<double>(100, 17.5), 4, 7).empty());
    CHECK(binary_segment(std::vector<double>(100, -123.456), 4, 7).empty());
}

TEST_CASE("noiseless step is found exactly") {
    std::vector<double> x(100, 0.0);
    for (std::size_t i = 50; i < 100; ++i) x[i] = -40.0;
    const auto cps = binary_segment(x, 4, 7);
    REQUIRE(cps.size() == 1);
    CHECK(cps[0] == 50);
}

TEST_CASE("two noiseless steps are both recovered") {
    std::vector<double> x(120, 0.0);
    for (std::size_t i = 40; i < 80; ++i) x[i] = -40.0;
    for (std::size_t i = 80; i < 120; ++i) x[i] = -10.0;
    const auto cps = binary_segment(x, 2, 7);
    REQUIRE(cps.size() == 2);
    CHECK(cps[0] == 40);
    CHECK(cps[1] == 80);
}

TEST_CASE("series shorter than two min_segments yields nothing") {
    CHECK(binary_segment({1.0, 5.0, 9.0}, 4, 2).empty());
}

TEST_CASE("binary segmentation agrees with the exhaustive-rescan oracle") {
    synth::Rng rng(2025);
    for (std::size_t len = 4; len <= 60; ++len) {
        for (int rep = 0; rep < 4; ++rep) {
            std::vector<double> x(len);
            const std::size_t step_at = 1 + rng.below(len - 2);
            const double jump = (rep % 2 == 0) ? 0.0 : -30.0;
            for (std::size_t i = 0; i < len; ++i)
                x[i] = (i >= step_at ? jump : 0.0) + rng.normal(0.0, 5.0);
            const std::size_t min_seg = 2;
            const std::size_t max_k = 3;
            CHECK(binary_segment(x, max_k, min_seg) ==
                  oracle::naive_binary_segment(x, max_k, min_seg));
        }
    }
}

TEST_CASE("changepoints respect min_segment and strict ordering") {
    synth::Rng rng(99);
    for (int rep = 0; rep < 20; ++rep) {
        std::vector<double> x(90);
        for (auto& v : x) v = rng.normal(0.0, 10.0);
        const std::size_t min_seg = 7;
        const auto cps = binary_segment(x, 4, min_seg);
        std::size_t prev = 0;
        for (std::size_t cp : cps) {
            CHECK(cp >= prev + min_seg);
            CHECK(cp + min_seg <= x.size());
            prev = cp;
        }
    }
}

TEST_CASE("total cost is non-increasing in accepted changepoints") {
    synth::Rng rng(123);
    std::vector<double> x(80);
    for (std::size_t i = 0; i < x.size(); ++i)
        x[i] = (i >= 30 ? -35.0 : 0.0) + (i >= 60 ? 15.0 : 0.0) + rng.normal(0.0, 3.0);

    auto total_cost = [&](const std::vector<std::size_t>& cps) {
        std::vector<std::size_t> bounds{0};
        bounds.insert(bounds.end(), cps.begin(), cps.end());
        bounds.push_back(x.size());
        double acc = 0.0;
        for (std::size_t k = 0; k + 1 < bounds.size(); ++k)
            acc += oracle::sse(x, bounds[k], bounds[k + 1]);
        return acc;
    };

    double prev = total_cost({});
    for (std::size_t k = 1; k <= 4; ++k) {
        const double cost = total_cost(binary_segment(x, k, 7));
        CHECK(cost <= prev + 1e-9);
        prev = cost;
    }
}

// ---------------------------------------------------------------------------
// changepoint detection

TEST_CASE("mobility changepoint: single downward step") {
    const Date start = parse_date("2020-01-01");
    std::vector<double> x(150, 0.0);
    for (std::size_t i = 65; i < x.size(); ++i) x[i] = -40.0;
    const auto cp = detect_mobility_changepoint(series_of(start, x), parse_date("2020-02-01"),
                                                parse_date("2020-05-31"));
    REQUIRE(cp.has_value());
    CHECK(cp->date == start + 65);
    CHECK_THAT(cp->mean_shift, Catch::Matchers::WithinAbs(-40.0, 1e-9));
}

TEST_CASE("mobility changepoint: picks the largest drop, not the rise") {
    const Date start = parse_date("2020-01-01");
    std::vector<double> x(150, 0.0);
    for (std::size_t i = 40; i < x.size(); ++i) x[i] = 10.0;  // +10 step
    for (std::size_t i = 90; i < x.size(); ++i) x[i] = -40.0; // then the drop
    const auto cp = detect_mobility_changepoint(series_of(start, x), parse_date("2020-01-15"),
                                                parse_date("2020-05-31"));
    REQUIRE(cp.has_value());
    CHECK(cp->date == start + 90);
}

TEST_CASE("mobility changepoint: none found in an upward-only series") {
    const Date start = parse_date("2020-01-01");
    std::vector<double> x(100, 0.0);
    for (std::size_t i = 50; i < x.size(); ++i) x[i] = 25.0;
    CHECK_FALSE(detect_mobility_changepoint(series_of(start, x), parse_date("2020-01-01"),
                                            parse_date("2020-06-30"))
                    .has_value());
}

TEST_CASE("mobility changepoint: search window filters candidates") {
    const Date start = parse_date("2020-01-01");
    std::vector<double> x(150, 0.0);
    for (std::size_t i = 30; i < x.size(); ++i) x[i] = -40.0;
    // The drop lands on Jan 31, outside a February-onward window.
    CHECK_FALSE(detect_mobility_changepoint(series_of(start, x), parse_date("2020-02-15"),
                                            parse_date("2020-05-31"))
                    .has_value());
}

TEST_CASE("lockdown-shaped series: drop in early March, slow recovery") {
    // Roughly the shape of a 2020 workplaces series for a hard-lockdown
    // country: flat winter, sharp drop around March 9, slow climb back to a
    // configurable end level.
    auto make_series = [](double end_level) {
        synth::Rng rng(2718);
        const Date start = parse_date("2020-01-01");
        const Date drop = parse_date("2020-03-09");
        DateSeries s{start, {}};
        for (Date d = start; d <= parse_date("2020-08-31"); ++d) {
            double level = 0.0;
            if (d >= drop) level = std::min(-62.0 + 0.45 * (d - drop), end_level);
            s.values.push_back(level + rng.normal(0.0, 3.0));
        }
        return rolling_mean(s, 7);
    };

    // Restrictions never lift: detection in early-to-mid March, no
    // normality changepoint (the series stays well outside the band).
    const DateSeries stuck = make_series(-20.0);
    const auto cp = detect_mobility_changepoint(stuck, parse_date("2020-02-01"),
                                                parse_date("2020-05-31"));
    REQUIRE(cp.has_value());
    CHECK(cp->date >= parse_date("2020-03-05"));
    CHECK(cp->date <= parse_date("2020-03-20"));
    CHECK(cp->mean_shift < 0.0);
    CHECK_FALSE(detect_normality_changepoint(stuck, cp->date, 0.0, 0.10).has_value());

    // Full recovery: a normality date exists, strictly after the mobility
    // changepoint and no earlier than the ramp's re-entry into the band.
    const DateSeries recovered = make_series(-2.0);
    const auto cp2 = detect_mobility_changepoint(recovered, parse_date("2020-02-01"),
                                                 parse_date("2020-05-31"));
    REQUIRE(cp2.has_value());
    const auto normality = detect_normality_changepoint(recovered, cp2->date, 0.0, 0.10);
    REQUIRE(normality.has_value());
    CHECK(*normality - cp2->date >= 1);
    CHECK(*normality >= parse_date("2020-04-01"));
}

TEST_CASE("normality changepoint: exact return to baseline") {
    // -40 until the recovery date, then exactly 0 for the short remainder.
    // (With a long zero tail the suffix mean already qualifies a few days
    // before the return; 2 tail days keep the example exact.)
    const Date start = parse_date("2020-03-01");
    std::vector<double> x(30, -40.0);
    x[28] = x[29] = 0.0;
    const auto norm = detect_normality_changepoint(series_of(start, x), start + 5, 0.0, 0.10);
    REQUIRE(norm.has_value());
    CHECK(*norm == start + 28);
}

TEST_CASE("normality changepoint: never recovers") {
    const std::vector<double> x(60, -40.0);
    CHECK_FALSE(detect_normality_changepoint(series_of(parse_date("2020-03-01"), x),
                                             parse_date("2020-03-05"))
                    .has_value());
}

TEST_CASE("normality changepoint matches the suffix-mean rescan") {
    synth::Rng rng(314);
    for (int rep = 0; rep < 25; ++rep) {
        // V-shaped recovery with noise.
        std::vector<double> x;
        for (int i = 0; i < 20; ++i) x.push_back(-60.0 + 3.0 * i + rng.normal(0.0, 2.0));
        for (int i = 0; i < 15; ++i) x.push_back(rng.normal(0.0, 2.0));
        const Date start = parse_date("2020-03-01");
        const Date cp = start + 2;
        const auto got = detect_normality_changepoint(series_of(start, x), cp, 0.0, 0.10);

        // Exhaustive scan over all candidate suffix starts.
        std::optional<Date> expected;
        for (std::size_t t = static_cast<std::size_t>(cp + 1 - start); t < x.size(); ++t) {
            double mean = 0.0;
            for (std::size_t i = t; i < x.size(); ++i) mean += x[i];
            mean /= static_cast<double>(x.size() - t);
            if (std::abs(mean) <= 10.0) {
                expected = start + static_cast<std::int32_t>(t);
                break;
            }
        }
        CHECK(got == expected);
        if (got) CHECK(*got - cp >= 1); // strictly after the mobility changepoint
    }
}
