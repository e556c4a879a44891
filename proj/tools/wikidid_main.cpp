// wikidid: quantify activity shifts in wiki edit logs around mobility
// changepoints. Subcommands run the pipeline stages; all I/O goes through
// the config file and the output directory.

#include <CLI11.hpp>

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "wikidid/config.hpp"
#include "wikidid/pipeline.hpp"

namespace {

std::vector<std::string> split_csv_list(const std::string& s) {
    std::vector<std::string> out;
    std::string item;
    for (char c : s) {
        if (c == ',') {
            if (!item.empty()) out.push_back(item);
            item.clear();
        } else {
            item += c;
        }
    }
    if (!item.empty()) out.push_back(item);
    return out;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Volunteer-activity analysis over wiki edit logs: daily metrics, "
                 "mobility changepoints and rolling-window triple-DiD effects"};
    app.require_subcommand(1);
    app.fallthrough(); // global flags may follow the subcommand

    std::string config_path;
    std::string languages_csv;
    std::string variant;
    std::string out_override;
    bool refresh = false;

    app.add_option("--config", config_path, "pipeline config JSON")->required();
    app.add_option("--languages", languages_csv, "comma-separated language subset");
    app.add_option("--variant", variant, "analysis variant")
        ->check(CLI::IsMember({"base", "window14", "cp-minus7", "cp-plus7"}));
    app.add_flag("--refresh", refresh, "bypass the REST response cache");
    app.add_option("--out", out_override, "override the configured output directory");

    auto* ingest = app.add_subcommand("ingest", "parse dumps into daily metrics CSVs");
    auto* changepoints =
        app.add_subcommand("changepoints", "detect or echo per-language changepoints");
    auto* did = app.add_subcommand("did", "fit rolling-window DiD effects");
    auto* plot = app.add_subcommand("plot", "emit SVG figures from results");
    auto* all = app.add_subcommand("all", "run ingest, changepoints, did and plot");

    CLI11_PARSE(app, argc, argv);

    try {
        wikidid::PipelineConfig cfg = wikidid::load_config(config_path);
        if (!out_override.empty()) cfg.out_dir = out_override;
        if (refresh) cfg.rest.refresh = true;
        const auto only = split_csv_list(languages_csv);
        const std::optional<std::string> variant_opt =
            variant.empty() ? std::nullopt : std::optional<std::string>(variant);

        if (ingest->parsed()) return wikidid::pipeline::cmd_ingest(cfg, only);
        if (changepoints->parsed()) return wikidid::pipeline::cmd_changepoints(cfg, only);
        if (did->parsed()) return wikidid::pipeline::cmd_did(cfg, only, variant_opt);
        if (plot->parsed()) return wikidid::pipeline::cmd_plot(cfg, only);
        if (all->parsed()) return wikidid::pipeline::cmd_all(cfg, only, variant_opt);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return wikidid::pipeline::kExitFatal;
    }
    return wikidid::pipeline::kExitFatal;
}
