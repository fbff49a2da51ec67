#include "commands.hpp"
#include "config.hpp"

#include "mhalab/diversity.hpp"
#include "mhalab/error.hpp"

#include "CLI11.hpp"

#include <functional>
#include <iostream>

int main(int argc, char** argv) {
    CLI::App app{"Multi-head attention as an ensemble of Nadaraya-Watson regressors"};
    app.set_version_flag("--version", cli::version_string());
    app.require_subcommand(1);

    cli::Invocation inv;
    std::uint64_t seed = 0;
    std::string out;
    std::function<int(const cli::Invocation&)> action;

    auto add = [&](const std::string& name, const std::string& help,
                   int (*fn)(const cli::Invocation&)) {
        CLI::App* sub = app.add_subcommand(name, help);
        sub->add_option("--config", inv.config, "Run configuration (JSON)")->required();
        sub->add_option("--seed", seed, "Override the master seed");
        sub->add_option("--out", out, "Output directory");
        sub->callback([&, fn, sub] {
            if (sub->count("--seed")) inv.seed = seed;
            if (sub->count("--out")) inv.out = out;
            action = fn;
        });
    };
    add("decompose", "Monte Carlo bias-variance-covariance decomposition", cli::cmd_decompose);
    add("sweep-hdi", "MSE along a head-diversity sweep", cli::cmd_sweep_hdi);
    add("sweep-arch", "Budget-constrained (H, d_k) sweep", cli::cmd_sweep_arch);
    add("weights-compare", "Uniform, Fibonacci and geometric head weighting",
        cli::cmd_weights_compare);
    add("optimize-proj", "Minimize cross-Gram overlap on unit-norm projections",
        cli::cmd_optimize_proj);

    CLI::App* hdi = app.add_subcommand("hdi", "Head diversity of projections in a weight file");
    std::string positional;
    hdi->add_option("file", positional, "Weight file (JSON)");
    hdi->add_option("--weights", inv.weights, "Weight file (JSON)");
    hdi->add_option("--out", out, "Also write hdi.csv and report.json here");
    hdi->callback([&] {
        if (inv.weights.empty()) inv.weights = positional;
        if (hdi->count("--out")) inv.out = out;
        action = cli::cmd_hdi;
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? cli::kExitOk : cli::kExitError;
    }
    if (action == nullptr) return cli::kExitError;
    if (hdi->parsed() && inv.weights.empty()) {
        std::cerr << "error: hdi needs a weight file\n";
        return cli::kExitError;
    }

    try {
        return action(inv);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
    }
    return cli::kExitError;
}
