// Acceptance run: one PASS/FAIL line per criterion, exit 0 only if all pass.

#include "config.hpp"

#include "mhalab/arch_search.hpp"
#include "mhalab/csv.hpp"
#include "mhalab/decomposition.hpp"
#include "mhalab/diversity.hpp"
#include "mhalab/parallel.hpp"
#include "mhalab/seeding.hpp"

#include "CLI11.hpp"

#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <sstream>

namespace fs = std::filesystem;
using namespace mhalab;
using cli::Fields;
using cli::json;

namespace {

struct Paths {
    fs::path configs;
    fs::path fixtures;
    fs::path cli;
};

struct Verdict {
    bool pass = false;
    std::string detail;
};

std::string fmt(double v) {
    std::ostringstream s;
    s.precision(3);
    s << v;
    return s.str();
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

/// Plan fields of a decompose-style config.
ExperimentPlan load_plan(const fs::path& file) {
    json doc = cli::load_config(file.string());
    Fields top(doc, "");
    RegressionTask task = cli::parse_task(top.object("task"));
    const cli::ProjectionSpec spec = cli::parse_projection(top.object("projections"), true);
    ProjectionSet proj = cli::build_projection(spec, task.p());
    WeightScheme weights = make_weights(WeightKind::uniform, proj.H());
    if (top.has("weights")) weights = cli::parse_weights(top.object("weights"), proj.H());
    return ExperimentPlan{std::move(task), std::move(proj), std::move(weights), top.count("n"),
                          top.count("R"), top.count("Q"), top.seed("seed")};
}

Verdict nw_identity() {
    std::mt19937_64 rng(derive_seed(1, "acceptance"));
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_int_distribution<int> dim(1, 6), count(1, 64);
    auto gaussian = [&](std::size_t r, std::size_t c, double scale) {
        Matrix m(r, c);
        for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < c; ++j) m(i, j) = scale * normal(rng);
        return m;
    };
    double worst = 0.0;
    for (int t = 0; t < 1000; ++t) {
        const std::size_t p = dim(rng), d_k = dim(rng), n = count(rng);
        Vector wv(p);
        for (double& v : wv) v = normal(rng);
        const HeadConfig head(gaussian(p, d_k, 0.5), gaussian(p, d_k, 0.5), wv, 1.0);
        Dataset data;
        data.xs = gaussian(n, p, 1.0);
        data.ys = gaussian(n, 1, 1.0).data();
        data.eps.assign(n, 0.0);
        const Matrix x = gaussian(1, p, 1.0);
        const double a = attend(head, x.row(0), data).estimate;
        const double b =
            nw_reference(attention_logits(head, x.row(0), data), attention_values(head, data));
        worst = std::max(worst, std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)}));
    }
    return {worst <= 1e-12, "max relative error " + fmt(worst) + " <= 1e-12 over 1000 instances"};
}

Verdict bvc_identity(const Paths& paths) {
    const ExperimentPlan plan = load_plan(paths.configs / "decompose_canonical.json");
    set_thread_count(1);
    const auto t0 = std::chrono::steady_clock::now();
    const DecompositionReport rep = mc_decompose(plan);
    const double elapsed = seconds_since(t0);
    set_thread_count(0);
    const bool ok = rep.identity_holds(4.0) && elapsed < 120.0;
    return {ok, "residual " + fmt(rep.identity_residual.value) + " <= 4 x stderr " +
                    fmt(rep.identity_residual.se) + ", single-threaded " + fmt(elapsed) + " s"};
}

Verdict covariance(const Paths& paths) {
    const DecompositionReport orth = mc_decompose(load_plan(paths.configs / "decompose_canonical.json"));
    const DecompositionReport same = mc_decompose(load_plan(paths.configs / "decompose_identical.json"));
    double worst_orth = 0.0, worst_same = 0.0;
    for (std::size_t h = 0; h < orth.H; ++h)
        for (std::size_t g = h + 1; g < orth.H; ++g) {
            worst_orth = std::max(worst_orth, std::abs(orth.cov(h, g)) / orth.cov_stderr(h, g));
            const double se = std::max(same.cov_stderr(h, g), 1e-300);
            worst_same = std::max(worst_same, std::abs(same.cov(h, g) - same.head_var[h]) / se);
        }
    return {worst_orth <= 4.0 && worst_same <= 4.0,
            "mix=1 max |C|/stderr " + fmt(worst_orth) + " <= 4; mix=0 max |C - V|/stderr " +
                fmt(worst_same) + " <= 4"};
}

Verdict diversity_monotone(const Paths& paths) {
    json doc = cli::load_config((paths.configs / "sweep_hdi.json").string());
    Fields top(doc, "");
    HdiSweepBase base{cli::parse_task(top.object("task"))};
    Fields f = top.object("projections");
    base.H = f.count("H");
    base.d_k = f.count("d_k");
    base.projection_seed = f.seed("seed", 0);
    base.key_scale = f.number("key_scale", 1.0);
    base.n = top.count("n");
    base.R = top.count("R");
    base.Q = top.count("Q");
    base.master_seed = top.seed("seed");
    const std::vector<double> grid = top.numbers("mix_grid");
    const auto t0 = std::chrono::steady_clock::now();
    const HdiSweepResult res = hdi_sweep(base, grid);
    const double elapsed = seconds_since(t0);
    const bool ok = grid.size() == 6 && res.spearman <= -0.8 &&
                    res.endpoint_diff > 4.0 * res.endpoint_diff_stderr && elapsed < 600.0;
    return {ok, "spearman " + fmt(res.spearman) + " <= -0.8; endpoint diff " +
                    fmt(res.endpoint_diff) + " > 4 x " + fmt(res.endpoint_diff_stderr)};
}

Verdict optimizer(const Paths& paths) {
    json doc = cli::load_config((paths.configs / "optimize_proj.json").string());
    Fields top(doc, "");
    const std::size_t p = top.count("p"), d_k = top.count("d_k"), H = top.count("H");
    const std::size_t steps = top.count("steps"), starts = top.count("starts", 10);
    const double step_size = top.number("step_size");
    const std::uint64_t seed = top.seed("seed");
    double worst = 0.0;
    for (std::size_t i = 0; i < starts; ++i) {
        const OptimizeResult r =
            optimize_projections(p, d_k, H, derive_seed(seed, "start", i), steps, step_size);
        worst = std::max(worst, r.trace.back());
    }

    std::mt19937_64 rng(derive_seed(seed, "gradient-check"));
    std::normal_distribution<double> normal(0.0, 1.0);
    const double step = 1e-6;
    double grad_err = 0.0;
    for (int point = 0; point < 20; ++point) {
        std::vector<Matrix> keys(H, Matrix(p, d_k));
        for (Matrix& k : keys)
            for (std::size_t i = 0; i < p; ++i)
                for (std::size_t j = 0; j < d_k; ++j) k(i, j) = normal(rng);
        const std::vector<Matrix> grad = gram_objective_gradient(keys);
        for (std::size_t h = 0; h < H; ++h)
            for (std::size_t i = 0; i < p; ++i)
                for (std::size_t j = 0; j < d_k; ++j) {
                    std::vector<Matrix> up = keys, dn = keys;
                    up[h](i, j) += step;
                    dn[h](i, j) -= step;
                    const double fd = (gram_objective(up) - gram_objective(dn)) / (2 * step);
                    const double a = grad[h](i, j);
                    grad_err = std::max(grad_err, std::abs(a - fd) / std::max({1.0, std::abs(a), std::abs(fd)}));
                }
    }
    return {starts == 10 && worst <= 1e-8 && grad_err <= 1e-5,
            "worst final objective " + fmt(worst) + " <= 1e-8 over " + std::to_string(starts) +
                " starts; gradient relative error " + fmt(grad_err) + " <= 1e-5"};
}

Verdict architecture(const Paths& paths) {
    json doc = cli::load_config((paths.configs / "sweep_arch.json").string());
    Fields top(doc, "");
    const RegressionTask task = cli::parse_task(top.object("task"));
    ArchSweepConfig cfg;
    cfg.D = top.count("D");
    cfg.R = top.count("R");
    cfg.Q = top.count("Q");
    cfg.seed = top.seed("seed");
    cfg.key_scale = top.number("key_scale", 1.0);
    const std::vector<std::size_t> n_grid = top.counts("n_grid");
    const ScalingTrend trend = scaling_trend(task, cfg, n_grid);
    std::string path;
    for (const auto& s : trend.sweeps)
        path += (path.empty() ? "" : " -> ") + std::to_string(s.argmin_d_k);
    const bool monotone = trend.verdict != TrendVerdict::violated;
    const bool interior = trend.sweeps.back().interior_argmin();
    return {cfg.D == 16 && monotone && interior,
            "d_k* " + path + " (" + std::string(to_string(trend.verdict)) + "); interior minimum at n=" +
                std::to_string(trend.sweeps.back().n) + ": " + (interior ? "yes" : "no")};
}

Verdict weighting(const Paths& paths) {
    auto run = [&](const std::string& name) {
        json doc = cli::load_config((paths.configs / name).string());
        Fields top(doc, "");
        const ExperimentPlan plan = load_plan(paths.configs / name);
        return weighting_compare(plan, top.numbers("rho_grid"), 2.0);
    };
    const WeightingResult het = run("weights_heterogeneous.json");
    const WeightingResult hom = run("weights_homogeneous.json");
    const bool ok = het.delta_v > 0.0 && het.geometric_beats_uniform && !hom.geometric_beats_uniform;
    return {ok, "heterogeneous: delta_v " + fmt(het.delta_v) + ", argmin " + het.argmin +
                    ", beats uniform " + (het.geometric_beats_uniform ? "yes" : "no") +
                    "; homogeneous: beats uniform " + (hom.geometric_beats_uniform ? "yes" : "no")};
}

Verdict hdi_endpoints(const Paths& paths) {
    const HdiValue orth = hdi(read_weight_file((paths.fixtures / "hdi_orthogonal.json").string()));
    const HdiValue same = hdi(read_weight_file((paths.fixtures / "hdi_identical.json").string()));
    const bool ok = std::abs(orth.hdi - 1.0) <= 1e-12 && std::abs(orth.hdi_normalized - 1.0) <= 1e-12 &&
                    std::abs(same.hdi_normalized) <= 1e-12;
    return {ok, "orthogonal hdi " + fmt(orth.hdi) + ", normalized " + fmt(orth.hdi_normalized) +
                    "; identical normalized " + fmt(same.hdi_normalized) + ", literal " +
                    fmt(same.hdi)};
}

std::string command_for(const std::string& stem) {
    if (stem.rfind("decompose", 0) == 0) return "decompose";
    if (stem.rfind("sweep_hdi", 0) == 0) return "sweep-hdi";
    if (stem.rfind("sweep_arch", 0) == 0) return "sweep-arch";
    if (stem.rfind("weights", 0) == 0) return "weights-compare";
    if (stem.rfind("optimize", 0) == 0) return "optimize-proj";
    return "";
}

std::map<std::string, std::string> csv_files(const fs::path& dir) {
    std::map<std::string, std::string> out;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (entry.path().extension() != ".csv") continue;
        std::ifstream in(entry.path(), std::ios::binary);
        out[entry.path().filename().string()] =
            std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
    }
    return out;
}

Verdict determinism(const Paths& paths) {
    const fs::path scratch =
        fs::temp_directory_path() / ("mha-nw-lab-acceptance-" + std::to_string(::getpid()));
    fs::remove_all(scratch);
    fs::create_directories(scratch);
    std::vector<fs::path> configs;
    for (const auto& entry : fs::directory_iterator(paths.configs))
        if (entry.path().extension() == ".json") configs.push_back(entry.path());
    std::sort(configs.begin(), configs.end());

    std::size_t checked = 0;
    std::vector<std::string> failures;
    for (const fs::path& cfg : configs) {
        const std::string stem = cfg.stem().string();
        const std::string cmd = command_for(stem);
        if (cmd.empty()) {
            failures.push_back(stem + " (no command)");
            continue;
        }
        std::vector<std::map<std::string, std::string>> runs;
        const std::pair<const char*, const char*> variants[] = {{"a", "1"}, {"b", "1"}, {"c", "4"}};
        for (const auto& [tag, threads] : variants) {
            const fs::path out = scratch / (stem + "-" + tag);
            const std::string line = std::string("MHA_NW_LAB_THREADS=") + threads + " '" +
                                     paths.cli.string() + "' " + cmd + " --config '" + cfg.string() +
                                     "' --out '" + out.string() + "' > /dev/null 2>&1";
            const int status = std::system(line.c_str());
            if (status == -1 || !fs::exists(out / "MANIFEST")) {
                failures.push_back(stem + " (run failed)");
                break;
            }
            runs.push_back(csv_files(out));
        }
        if (runs.size() != 3) continue;
        if (runs[0].empty() || runs[0] != runs[1] || runs[0] != runs[2]) {
            failures.push_back(stem);
        } else {
            ++checked;
        }
    }
    fs::remove_all(scratch);
    std::string detail = std::to_string(checked) + "/" + std::to_string(configs.size()) +
                         " shipped configs byte-identical across two runs and threads {1, 4}";
    for (const auto& f : failures) detail += "; differs: " + f;
    return {failures.empty() && checked > 0, detail};
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Acceptance criteria for mha-nw-lab"};
    Paths paths{MHA_NW_LAB_SOURCE_DIR "/configs", MHA_NW_LAB_SOURCE_DIR "/fixtures", MHA_NW_LAB_CLI};
    std::string configs = paths.configs.string(), fixtures = paths.fixtures.string(),
                cli_path = paths.cli.string();
    app.add_option("--configs", configs, "Directory of shipped configs");
    app.add_option("--fixtures", fixtures, "Directory of weight-file fixtures");
    app.add_option("--cli", cli_path, "Path to the mha-nw-lab executable");
    CLI11_PARSE(app, argc, argv);
    paths = {configs, fixtures, cli_path};

    struct Criterion {
        int id;
        const char* title;
        std::function<Verdict()> run;
    };
    const std::vector<Criterion> criteria{
        {1, "NW identity", nw_identity},
        {2, "BVC identity", [&] { return bvc_identity(paths); }},
        {3, "orthogonality kills covariance", [&] { return covariance(paths); }},
        {4, "diversity monotonicity", [&] { return diversity_monotone(paths); }},
        {5, "projection optimizer", [&] { return optimizer(paths); }},
        {6, "architecture sweep", [&] { return architecture(paths); }},
        {7, "weighting dominance", [&] { return weighting(paths); }},
        {8, "HDI endpoints", [&] { return hdi_endpoints(paths); }},
        {9, "determinism", [&] { return determinism(paths); }},
    };

    bool all = true;
    for (const auto& c : criteria) {
        Verdict v;
        try {
            v = c.run();
        } catch (const std::exception& e) {
            v = {false, std::string("error: ") + e.what()};
        }
        all = all && v.pass;
        std::cout << "criterion " << c.id << " [" << c.title << "]: " << (v.pass ? "PASS" : "FAIL")
                  << " (" << v.detail << ")" << std::endl;
    }
    return all ? 0 : 2;
}
