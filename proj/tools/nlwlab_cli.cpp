// Command-line front end: one subcommand per experiment type, a shared config
// file, and deterministic outputs under --out.

#include <CLI11.hpp>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include "nlwlab/experiments.hpp"

namespace {

struct CommonOptions {
    std::string config_path;
    std::string out_dir = "out";
    unsigned workers = 1;
    bool has_seed = false;
    uint64_t seed = 0;
};

int run_kind(const std::string& kind, const CommonOptions& opt) {
    std::ifstream in(opt.config_path);
    if (!in) {
        std::fprintf(stderr, "error: cannot open config %s\n", opt.config_path.c_str());
        return 2;
    }
    std::stringstream buf;
    buf << in.rdbuf();

    nlwlab::ExperimentConfig cfg;
    try {
        cfg = nlwlab::parse_config_text(buf.str());
    } catch (const nlwlab::ConfigError& e) {
        std::fprintf(stderr, "%s\n", e.what());
        return 2;
    }
    if (cfg.kind != kind) {
        std::fprintf(stderr,
                     "error: config experiment.kind is '%s' but the '%s' subcommand was used\n",
                     cfg.kind.c_str(), kind.c_str());
        return 2;
    }
    if (opt.has_seed) {
        cfg.seed = opt.seed;
        // keep the manifest hash in sync with the effective configuration
        nlwlab::json root = nlwlab::json::parse(cfg.canonical);
        root["seed"] = opt.seed;
        cfg.canonical = root.dump();
    }

    try {
        nlwlab::RunResult res = nlwlab::run_experiment(cfg, opt.out_dir, opt.workers);
        std::printf("%s: %s (manifest %s)\n", kind.c_str(),
                    res.exit_code == 0 ? "pass" : "FAIL", res.manifest_path.string().c_str());
        return res.exit_code;
    } catch (const nlwlab::ConfigError& e) {
        std::fprintf(stderr, "%s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"nlwlab: spectral stochastic nonlinear wave simulation laboratory"};
    app.require_subcommand(1);

    CommonOptions opt;
    const std::vector<std::string> kinds{"simulate", "pressure", "ldp",
                                         "couple",   "eigen",    "verify"};
    std::string chosen;
    for (const std::string& kind : kinds) {
        CLI::App* sub = app.add_subcommand(kind, "run a '" + kind + "' experiment");
        sub->add_option("--config", opt.config_path, "experiment config (JSON)")->required();
        sub->add_option("--out", opt.out_dir, "output directory");
        sub->add_option("--workers", opt.workers, "worker threads");
        sub->add_option("--seed", opt.seed, "override the config seed")
            ->each([&](const std::string&) { opt.has_seed = true; });
        sub->callback([&chosen, kind] { chosen = kind; });
    }

    CLI11_PARSE(app, argc, argv);
    return run_kind(chosen, opt);
}
