// Command-line front end for the pipeline stages.

#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "rmna/pipeline.hpp"
#include "rmna/util.hpp"

namespace {

rmna::PipelineConfig resolve_config(const std::string& config_path,
                                    const std::vector<std::string>& overrides) {
    rmna::PipelineConfig cfg;
    if (!config_path.empty()) cfg = rmna::PipelineConfig::load(config_path);
    for (const std::string& kv : overrides) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos)
            throw rmna::ConfigError("--set expects key=value, got '" + kv + "'");
        cfg.set(std::string(rmna::trim(kv.substr(0, eq))),
                std::string(rmna::trim(kv.substr(eq + 1))));
    }
    return cfg;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"rule-mined neighbor aggregation for knowledge-graph link prediction"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out_dir = "out";
    std::vector<std::string> overrides;
    app.add_option("--config", config_path, "configuration file (key = value lines)");
    app.add_option("--out-dir", out_dir, "artifact directory");
    app.add_option("--set", overrides, "override a config key, e.g. --set seed=7")
        ->take_all();

    struct Sub {
        const char* name;
        const char* help;
    };
    const Sub subs[] = {
        {"pretrain", "train base embeddings on the training graph"},
        {"mine", "mine path-shaped horn rules with support/hc/confidence"},
        {"filter", "keep rules above the hc/confidence thresholds"},
        {"match", "synthesize transformed one-hop neighbors from the selected rules"},
        {"train-agg", "train the two-layer neighbor aggregation model"},
        {"train-dec", "train the convolutional decoder on aggregated embeddings"},
        {"eval", "rank test triples and report MRR / Hits@n"},
        {"pipeline", "run every stage in order"},
    };
    std::string mode_flag, scorer_flag, dump_ranks;
    for (const Sub& s : subs) {
        CLI::App* sub = app.add_subcommand(s.name, s.help);
        if (std::string(s.name) == "eval") {
            sub->add_option("--mode", mode_flag, "ranking mode: raw|filtered");
            sub->add_option("--scorer", scorer_flag, "energy source: decoder|na|transe");
            sub->add_option("--dump-ranks", dump_ranks, "write per-triple ranks to this file");
        }
    }

    CLI11_PARSE(app, argc, argv);

    try {
        rmna::PipelineConfig cfg = resolve_config(config_path, overrides);
        const std::string cmd = app.get_subcommands().front()->get_name();
        if (!mode_flag.empty()) cfg.set("eval_mode", mode_flag);
        if (!scorer_flag.empty()) cfg.set("scorer", scorer_flag);

        rmna::log_info("command: " + cmd + " (seed " + std::to_string(cfg.seed) + ")");
        rmna::log_info("resolved config:\n" + cfg.dump());

        rmna::Artifacts art{out_dir};
        if (cmd == "pretrain")
            rmna::run_pretrain(cfg, art);
        else if (cmd == "mine")
            rmna::run_mine(cfg, art);
        else if (cmd == "filter")
            rmna::run_filter(cfg, art);
        else if (cmd == "match")
            rmna::run_match(cfg, art);
        else if (cmd == "train-agg")
            rmna::run_train_agg(cfg, art);
        else if (cmd == "train-dec")
            rmna::run_train_dec(cfg, art);
        else if (cmd == "eval")
            std::cout << rmna::format_report(rmna::run_eval(cfg, art, dump_ranks));
        else if (cmd == "pipeline")
            std::cout << rmna::format_report(rmna::run_pipeline(cfg, art));
    } catch (const rmna::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "unexpected error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
