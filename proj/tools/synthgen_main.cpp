// wikidid-synthgen: writes a self-contained synthetic corpus (dump TSVs,
// Google-format mobility CSV, pipeline config) with known ground truth, so
// the whole pipeline can be exercised without real dumps.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

#include <nlohmann/json.hpp>

#include "wikidid/core.hpp"
#include "wikidid/synth.hpp"

using namespace wikidid;

int main(int argc, char** argv) {
    CLI::App app{"Generate a synthetic corpus for the analysis pipeline"};

    std::string out_dir;
    std::uint64_t seed = 1;
    int n_languages = 4;
    double lambda = 120.0;
    std::string shock_language;
    double shock_multiplier = 1.35;
    std::string shock_start = "2020-03-12";
    std::string coverage_start = "2018-01-01";
    std::string coverage_end = "2020-12-31";

    app.add_option("--out", out_dir, "output directory")->required();
    app.add_option("--seed", seed, "generator seed");
    app.add_option("--languages", n_languages, "number of synthetic languages")
        ->check(CLI::Range(2, 12));
    app.add_option("--lambda", lambda, "base non-bot edits per day");
    app.add_option("--shock-language", shock_language,
                   "language receiving a multiplicative lift after its changepoint");
    app.add_option("--shock-multiplier", shock_multiplier, "lift factor");
    app.add_option("--shock-start", shock_start, "first shocked day");

    CLI11_PARSE(app, argc, argv);

    try {
        std::filesystem::create_directories(out_dir + "/dumps");

        synth::SynthConfig cfg;
        cfg.seed = seed;
        cfg.start = parse_date(coverage_start);
        cfg.end = parse_date(coverage_end);
        for (int i = 0; i < n_languages; ++i) {
            const std::string code(2, static_cast<char>('a' + i));
            cfg.languages.push_back({code, lambda});
        }

        std::optional<synth::ShockSpec> shock;
        if (!shock_language.empty()) {
            synth::ShockSpec s;
            s.start = parse_date(shock_start);
            s.end = cfg.end;
            s.multiplier = shock_multiplier;
            s.affected_languages = {shock_language};
            shock = s;
        }

        const auto log = synth::gen_revision_log(cfg, shock);
        for (const auto& [code, records] : log.records_by_language) {
            std::ofstream out(out_dir + "/dumps/" + code + ".tsv");
            synth::write_dump_tsv(out, records);
        }

        // Mobility: one country per language, staggered lockdown steps.
        std::ofstream mob(out_dir + "/mobility.csv");
        mob << "country_region_code,country_region,sub_region_1,sub_region_2,metro_area,"
               "iso_3166_2_code,census_fips_code,place_id,date,"
               "retail_and_recreation_percent_change_from_baseline,"
               "grocery_and_pharmacy_percent_change_from_baseline,"
               "parks_percent_change_from_baseline,"
               "transit_stations_percent_change_from_baseline,"
               "workplaces_percent_change_from_baseline,"
               "residential_percent_change_from_baseline\n";
        const Date mob_start = parse_date("2020-02-15");
        const Date mob_end = parse_date("2020-08-31");
        for (int i = 0; i < n_languages; ++i) {
            const std::string code(2, static_cast<char>('a' + i));
            std::string country = code;
            for (auto& ch : country) ch = static_cast<char>(std::toupper(ch));
            const Date step = parse_date("2020-03-08") + i; // staggered per language
            const auto series = synth::gen_mobility(mob_start, mob_end, step, -42.0, 2.0,
                                                    synth::stream_seed(seed, "mob" + code));
            char buf[64];
            for (std::size_t d = 0; d < series.size(); ++d) {
                std::snprintf(buf, sizeof(buf), "%.2f", series.values[d]);
                mob << country << ",Synthetic " << country << ",,,,,,place-" << country << ","
                    << series.date_at(d).to_string() << ",,,,," << buf << ",\n";
            }
        }
        mob.close();

        nlohmann::json jc;
        jc["schema_version"] = 1;
        jc["snapshot"] = "synthetic-" + std::to_string(seed);
        jc["dumps_dir"] = out_dir + "/dumps";
        jc["mobility_csv"] = out_dir + "/mobility.csv";
        jc["out_dir"] = out_dir + "/out";
        jc["cache_dir"] = out_dir + "/cache";
        jc["coverage_start"] = coverage_start;
        jc["coverage_end"] = coverage_end;
        jc["languages"] = nlohmann::json::array();
        for (int i = 0; i < n_languages; ++i) {
            const std::string code(2, static_cast<char>('a' + i));
            std::string country = code;
            for (auto& ch : country) ch = static_cast<char>(std::toupper(ch));
            jc["languages"].push_back(
                {{"code", code},
                 {"timezone", "UTC"},
                 {"size_class", i < n_languages / 2 ? "large" : "small"},
                 {"mobility_countries",
                  nlohmann::json::array({{{"country", country}, {"population", 1.0e6}}})}});
        }
        jc["baseline_language"] = std::string(2, 'a');

        std::ofstream conf(out_dir + "/config.json");
        conf << jc.dump(2) << "\n";

        std::cout << "wrote " << out_dir << "/dumps (" << n_languages << " languages), "
                  << out_dir << "/mobility.csv, " << out_dir << "/config.json\n";
        if (shock)
            std::cout << "injected log-effect " << log.truth.log_effect << " for "
                      << shock_language << " from " << shock_start << "\n";
        return 0;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
