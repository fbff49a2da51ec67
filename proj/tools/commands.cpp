#include "commands.hpp"

#include "config.hpp"
#include "output.hpp"

#include "mhalab/arch_search.hpp"
#include "mhalab/csv.hpp"
#include "mhalab/decomposition.hpp"
#include "mhalab/diversity.hpp"
#include "mhalab/error.hpp"
#include "mhalab/seeding.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <memory>
#include <numeric>
#include <sstream>

namespace fs = std::filesystem;
using mhalab::format_double;

namespace cli {

std::string version_string() {
    return std::string("mha-nw-lab ") + MHA_NW_LAB_VERSION + " (" + MHA_NW_LAB_GIT_DESCRIBE + ")";
}

namespace {

/// Parsed top-level fields common to every config-driven command.
struct Run {
    json echo;
    std::string name;
    std::uint64_t seed = 0;
    fs::path out;
    fs::path config_dir;
};

std::string fmt(double v) { return format_double(v); }
std::string fmt(std::size_t v) { return std::to_string(v); }

class Table {
public:
    explicit Table(std::vector<std::string> header) : writer_(buf_) { writer_.row(header); }
    void row(const std::vector<std::string>& fields) { writer_.row(fields); }
    std::string str() const { return buf_.str(); }

private:
    std::ostringstream buf_;
    mhalab::CsvWriter writer_;
};

struct Gate {
    std::string name;
    double value = 0.0;
    double threshold = 0.0;
    std::string relation;
    bool pass = false;
};

json gates_json(const std::vector<Gate>& gates) {
    json arr = json::array();
    for (const auto& g : gates) {
        arr.push_back({{"name", g.name},
                       {"value", g.value},
                       {"relation", g.relation},
                       {"threshold", g.threshold},
                       {"pass", g.pass}});
    }
    return arr;
}

int report_gates(const std::vector<Gate>& gates) {
    bool ok = true;
    for (const auto& g : gates) {
        std::cout << "gate " << g.name << ": " << (g.pass ? "PASS" : "FAIL") << " ("
                  << format_double(g.value) << ' ' << g.relation << ' '
                  << format_double(g.threshold) << ")\n";
        ok = ok && g.pass;
    }
    return ok ? kExitOk : kExitGate;
}

json report_header(const std::string& command, const Run& run) {
    return {{"version", 1},
            {"code_version", MHA_NW_LAB_GIT_DESCRIBE},
            {"command", command},
            {"name", run.name},
            {"seed", run.seed},
            {"config", run.echo}};
}

/// Loads the config, applies --seed/--out, and reads the shared top-level keys.
struct Session {
    Run run;
    json doc;
    std::unique_ptr<Fields> top;

    Session(const Invocation& inv, const std::string& command) {
        doc = load_config(inv.config);
        if (inv.seed) doc["seed"] = *inv.seed;
        top = std::make_unique<Fields>(doc, "");
        top->count("version");
        run.seed = top->seed("seed");
        run.name = top->text("name", command);
        const std::string default_out = "runs/" + command;
        run.out = inv.out ? fs::path(*inv.out) : fs::path(top->text("output", default_out));
        run.config_dir = fs::path(inv.config).parent_path();
        run.echo = doc;
        run.echo.erase("output");
    }

    void resolve_weights_file(ProjectionSpec& spec) const {
        if (!spec.weights_file.empty() && fs::path(spec.weights_file).is_relative()) {
            spec.weights_file = (run.config_dir / spec.weights_file).string();
        }
    }
};

} // namespace

int cmd_decompose(const Invocation& inv) {
    Session s(inv, "decompose");
    Fields& top = *s.top;
    const mhalab::RegressionTask task = parse_task(top.object("task"));
    ProjectionSpec pspec = parse_projection(top.object("projections"), true);
    s.resolve_weights_file(pspec);
    const mhalab::ProjectionSet proj = build_projection(pspec, task.p());
    const mhalab::WeightScheme weights = parse_weights(top.object("weights"), proj.H());
    const std::size_t n = top.count("n");
    const std::size_t R = top.count("R");
    const std::size_t Q = top.count("Q");
    double k_sigma = 4.0;
    if (top.has("gates")) {
        Fields g = top.object("gates");
        k_sigma = g.number("k_sigma", k_sigma);
        g.finish();
    }
    top.finish();

    const mhalab::ExperimentPlan plan{task, proj, weights, n, R, Q, s.run.seed};
    const mhalab::DecompositionReport rep = mhalab::mc_decompose(plan);
    std::vector<mhalab::CovBoundRow> bound;
    if (proj.H() >= 2) bound = mhalab::check_cov_bound(rep, proj, task);

    OutputDir out(s.run.out);
    const std::string& ex = s.run.name;

    Table table({"experiment", "quantity", "h", "h2", "value", "stderr"});
    auto term = [&](const std::string& q, const mhalab::Estimate& e) {
        table.row({ex, q, "", "", fmt(e.value), fmt(e.se)});
    };
    term("mse_direct", rep.mse_direct);
    term("ensemble_bias_sq", rep.ensemble_bias_sq);
    term("variance_term", rep.variance_term);
    term("covariance_term", rep.covariance_term);
    term("identity_residual", rep.identity_residual);
    for (std::size_t h = 0; h < rep.H; ++h) {
        table.row({ex, "head_bias_sq", fmt(h), "", fmt(rep.head_bias_sq[h]), ""});
        table.row({ex, "head_var", fmt(h), "", fmt(rep.head_var[h]), fmt(rep.head_var_stderr[h])});
        table.row({ex, "head_mse", fmt(h), "", fmt(rep.head_mse[h]), fmt(rep.head_mse_stderr[h])});
    }
    for (std::size_t h = 0; h < rep.H; ++h)
        for (std::size_t g = h + 1; g < rep.H; ++g)
            table.row({ex, "cov", fmt(h), fmt(g), fmt(rep.cov(h, g)), fmt(rep.cov_stderr(h, g))});
    out.write("decomposition.csv", table.str());

    if (!bound.empty()) {
        Table bt({"experiment", "h", "h2", "abs_cov", "cov_stderr", "gram_frobsq_normalized",
                  "min_density", "bound", "satisfied"});
        for (const auto& b : bound) {
            bt.row({ex, fmt(b.h), fmt(b.h2), fmt(b.abs_cov), fmt(b.cov_stderr),
                    fmt(b.gram_frobsq), fmt(b.min_density), fmt(b.bound),
                    b.satisfied ? "true" : "false"});
        }
        out.write("cov_bound.csv", bt.str());
    }

    std::string dat = "# q m(x) bias_h... var_h...\n";
    for (std::size_t q = 0; q < rep.Q; ++q) {
        dat += fmt(q) + " " + fmt(rep.truth[q]);
        for (std::size_t h = 0; h < rep.H; ++h) dat += " " + fmt(rep.bias_per_query(q, h));
        for (std::size_t h = 0; h < rep.H; ++h) dat += " " + fmt(rep.var_per_query(q, h));
        dat += "\n";
    }
    out.write("per_query.dat", dat);

    std::vector<Gate> gates{
        {"identity_residual", rep.identity_residual.value, k_sigma * rep.identity_residual.se,
         "<=", rep.identity_holds(k_sigma)},
        {"cov_min_eigenvalue", rep.cov_min_eigenvalue, -4.0 * mhalab::max_abs(rep.cov_stderr),
         ">=", rep.cov_psd}};

    json report = report_header("decompose", s.run);
    report["results"] = {
        {"H", rep.H},
        {"n", rep.n},
        {"R", rep.R},
        {"Q", rep.Q},
        {"weights", rep.weights.alpha},
        {"weight_scheme", rep.weights.label()},
        {"mse_direct", {rep.mse_direct.value, rep.mse_direct.se}},
        {"ensemble_bias_sq", {rep.ensemble_bias_sq.value, rep.ensemble_bias_sq.se}},
        {"variance_term", {rep.variance_term.value, rep.variance_term.se}},
        {"covariance_term", {rep.covariance_term.value, rep.covariance_term.se}},
        {"identity_residual", {rep.identity_residual.value, rep.identity_residual.se}},
        {"head_bias", rep.head_bias},
        {"head_bias_sq", rep.head_bias_sq},
        {"head_var", rep.head_var},
        {"head_mse", rep.head_mse},
        {"cov", rep.cov.data()},
        {"cov_stderr", rep.cov_stderr.data()},
        {"cov_min_eigenvalue", rep.cov_min_eigenvalue},
        {"degenerate_weight_vectors", rep.degenerate},
        {"hdi", proj.H() >= 2 ? json(mhalab::hdi(proj).hdi) : json(nullptr)},
        {"hdi_normalized", proj.H() >= 2 ? json(mhalab::hdi(proj).hdi_normalized) : json(nullptr)},
        {"lipschitz", task.lipschitz()},
        {"task", task.id()}};
    report["gates"] = gates_json(gates);
    out.write("report.json", report.dump(2) + "\n");
    out.write("config.json", s.run.echo.dump(2) + "\n");
    out.commit();

    std::cout << "mse_direct " << fmt(rep.mse_direct.value) << " +- " << fmt(rep.mse_direct.se)
              << "\nensemble_bias_sq " << fmt(rep.ensemble_bias_sq.value) << "\nvariance_term "
              << fmt(rep.variance_term.value) << "\ncovariance_term "
              << fmt(rep.covariance_term.value) << "\nidentity_residual "
              << fmt(rep.identity_residual.value) << " (stderr " << fmt(rep.identity_residual.se)
              << ")\n";
    if (rep.degenerate > 0) {
        std::cerr << "warning: " << rep.degenerate
                  << " degenerate softmax weight vectors (entropy < 1e-6)\n";
    }
    return report_gates(gates);
}

int cmd_hdi(const Invocation& inv) {
    const std::vector<mhalab::Matrix> keys = mhalab::read_weight_file(inv.weights);
    const mhalab::ProjectionSet proj = mhalab::projection_set_from_keys(keys);
    const mhalab::DiversityReport div = mhalab::diversity_report(proj);

    Table table({"h", "h2", "gram_frobsq", "gram_frobsq_normalized", "min_angle", "max_angle"});
    json pairs = json::array();
    std::cout << "heads " << proj.H() << ", p " << proj.p() << ", d_k " << proj.d_k() << "\n";
    for (const auto& [pair, angles] : div.principal_angles) {
        const auto [h, g] = pair;
        const double lo = *std::min_element(angles.begin(), angles.end());
        const double hi = *std::max_element(angles.begin(), angles.end());
        std::cout << "pair (" << h << ", " << g << "): |G|_F^2 " << fmt(div.gram_frobsq(h, g))
                  << ", angles [" << fmt(lo) << ", " << fmt(hi) << "] rad\n";
        table.row({fmt(h), fmt(g), fmt(div.gram_frobsq(h, g)),
                   fmt(div.gram_frobsq_normalized(h, g)), fmt(lo), fmt(hi)});
        pairs.push_back({{"h", h},
                         {"h2", g},
                         {"gram_frobsq", div.gram_frobsq(h, g)},
                         {"gram_frobsq_normalized", div.gram_frobsq_normalized(h, g)},
                         {"principal_angles", angles}});
    }
    std::cout << "hdi " << fmt(div.hdi) << "\nhdi_normalized " << fmt(div.hdi_normalized) << "\n";

    if (inv.out) {
        OutputDir out(*inv.out);
        json report = {{"version", 1},
                       {"code_version", MHA_NW_LAB_GIT_DESCRIBE},
                       {"command", "hdi"},
                       {"weights", fs::path(inv.weights).filename().string()},
                       {"hdi", div.hdi},
                       {"hdi_normalized", div.hdi_normalized},
                       {"pairs", pairs}};
        out.write("hdi.csv", table.str());
        out.write("report.json", report.dump(2) + "\n");
        out.commit();
    }
    return kExitOk;
}

int cmd_sweep_hdi(const Invocation& inv) {
    Session s(inv, "sweep-hdi");
    Fields& top = *s.top;
    mhalab::HdiSweepBase base{parse_task(top.object("task"))};
    {
        Fields f = top.object("projections");
        base.H = f.count("H");
        base.d_k = f.count("d_k");
        base.projection_seed = f.seed("seed", 0);
        base.key_scale = f.number("key_scale", 1.0);
        f.finish();
    }
    base.n = top.count("n");
    base.R = top.count("R");
    base.Q = top.count("Q");
    base.master_seed = s.run.seed;
    const std::vector<double> grid = top.numbers("mix_grid");
    double spearman_max = -0.8, k_sigma = 4.0;
    if (top.has("gates")) {
        Fields g = top.object("gates");
        spearman_max = g.number("spearman_max", spearman_max);
        k_sigma = g.number("k_sigma", k_sigma);
        g.finish();
    }
    top.finish();

    const mhalab::HdiSweepResult res = mhalab::hdi_sweep(base, grid);

    OutputDir out(s.run.out);
    Table table({"experiment", "mix", "hdi", "hdi_normalized", "mse", "stderr",
                 "identity_residual", "identity_stderr"});
    std::string dat = "# hdi_normalized mse stderr\n";
    json rows = json::array();
    for (const auto& r : res.rows) {
        table.row({s.run.name, fmt(r.mix), fmt(r.hdi), fmt(r.hdi_normalized), fmt(r.mse),
                   fmt(r.se), fmt(r.identity_residual), fmt(r.identity_stderr)});
        dat += fmt(r.hdi_normalized) + " " + fmt(r.mse) + " " + fmt(r.se) + "\n";
        rows.push_back({{"mix", r.mix},
                        {"hdi", r.hdi},
                        {"hdi_normalized", r.hdi_normalized},
                        {"mse", r.mse},
                        {"stderr", r.se}});
        std::cout << "mix " << fmt(r.mix) << "  hdi_normalized " << fmt(r.hdi_normalized)
                  << "  mse " << fmt(r.mse) << " +- " << fmt(r.se) << "\n";
    }
    out.write("sweep_hdi.csv", table.str());
    out.write("sweep_hdi.dat", dat);

    std::vector<Gate> gates{
        {"spearman", res.spearman, spearman_max, "<=", res.spearman <= spearman_max},
        {"endpoint_diff", res.endpoint_diff, k_sigma * res.endpoint_diff_stderr, ">",
         res.endpoint_diff > k_sigma * res.endpoint_diff_stderr}};
    json report = report_header("sweep-hdi", s.run);
    report["results"] = {{"rows", rows},
                         {"spearman", res.spearman},
                         {"endpoint_diff", res.endpoint_diff},
                         {"endpoint_diff_stderr", res.endpoint_diff_stderr}};
    report["gates"] = gates_json(gates);
    out.write("report.json", report.dump(2) + "\n");
    out.write("config.json", s.run.echo.dump(2) + "\n");
    out.commit();

    std::cout << "spearman " << fmt(res.spearman) << "\nendpoint_diff " << fmt(res.endpoint_diff)
              << " (stderr " << fmt(res.endpoint_diff_stderr) << ")\n";
    return report_gates(gates);
}

int cmd_sweep_arch(const Invocation& inv) {
    Session s(inv, "sweep-arch");
    Fields& top = *s.top;
    const mhalab::RegressionTask task = parse_task(top.object("task"));
    mhalab::ArchSweepConfig cfg;
    cfg.D = top.count("D");
    cfg.R = top.count("R");
    cfg.Q = top.count("Q");
    cfg.seed = s.run.seed;
    cfg.key_scale = top.number("key_scale", 1.0);
    cfg.identical_control = top.flag("identical_control", false);
    std::vector<std::size_t> n_grid;
    if (top.has("n_grid")) {
        n_grid = top.counts("n_grid");
    } else {
        n_grid = {top.count("n")};
    }
    bool gate_monotone = n_grid.size() >= 3, gate_interior = false;
    if (top.has("gates")) {
        Fields g = top.object("gates");
        gate_monotone = g.flag("monotone", gate_monotone);
        gate_interior = g.flag("interior_minimum", gate_interior);
        g.finish();
    }
    top.finish();

    std::vector<mhalab::ArchSweepResult> sweeps;
    std::optional<mhalab::ScalingTrend> trend;
    if (n_grid.size() >= 3) {
        trend = mhalab::scaling_trend(task, cfg, n_grid);
        sweeps = trend->sweeps;
    } else {
        for (std::size_t n : n_grid) {
            cfg.n = n;
            sweeps.push_back(mhalab::sweep_architectures(task, cfg));
        }
    }
    for (const auto& reason : sweeps.front().skipped) std::cerr << "skipped " << reason << "\n";

    OutputDir out(s.run.out);
    Table table({"experiment", "n", "H", "d_k", "mse", "stderr", "bias_sq", "var_term", "cov_term",
                 "identity_residual", "identity_stderr", "control_mse", "control_diff",
                 "control_diff_stderr", "model"});
    Table summary({"experiment", "n", "d_k_star", "H_star", "c1", "c2", "fit_residual"});
    auto opt = [](const std::optional<double>& v) { return v ? format_double(*v) : std::string(); };
    json sweeps_json = json::array();
    for (const auto& sw : sweeps) {
        std::string dat = "# d_k mse stderr\n";
        json rows = json::array();
        for (const auto& r : sw.rows) {
            table.row({s.run.name, fmt(sw.n), fmt(r.H), fmt(r.d_k), fmt(r.mse), fmt(r.se),
                       fmt(r.bias_sq), fmt(r.var_term), fmt(r.cov_term),
                       fmt(r.identity_residual), fmt(r.identity_stderr), opt(r.control_mse),
                       opt(r.control_diff), opt(r.control_diff_se),
                       fmt(sw.model(static_cast<double>(r.d_k)))});
            dat += fmt(r.d_k) + " " + fmt(r.mse) + " " + fmt(r.se) + "\n";
            rows.push_back({{"H", r.H}, {"d_k", r.d_k}, {"mse", r.mse}, {"stderr", r.se}});
        }
        summary.row({s.run.name, fmt(sw.n), fmt(sw.argmin_d_k), fmt(sw.argmin_H), fmt(sw.c1),
                     fmt(sw.c2), fmt(sw.fit_residual)});
        out.write("arch_n" + std::to_string(sw.n) + ".dat", dat);
        sweeps_json.push_back({{"n", sw.n},
                               {"rows", rows},
                               {"argmin", {{"H", sw.argmin_H}, {"d_k", sw.argmin_d_k}}},
                               {"c1", sw.c1},
                               {"c2", sw.c2},
                               {"fit_residual", sw.fit_residual},
                               {"interior_argmin", sw.interior_argmin()},
                               {"skipped", sw.skipped},
                               {"smoothness_d", nullptr}});
        std::cout << "n " << sw.n << ": d_k* " << sw.argmin_d_k << ", H* " << sw.argmin_H << "\n";
    }
    out.write("sweep_arch.csv", table.str());
    out.write("argmin.csv", summary.str());

    std::vector<Gate> gates;
    if (gate_monotone) {
        const bool ok = trend && trend->verdict != mhalab::TrendVerdict::violated;
        gates.push_back({"d_k_star_non_decreasing", ok ? 1.0 : 0.0, 1.0, "==", ok});
    }
    if (gate_interior) {
        const bool ok = sweeps.back().interior_argmin();
        gates.push_back({"interior_minimum_at_largest_n",
                         static_cast<double>(sweeps.back().argmin_d_k), 0.0, "interior", ok});
    }
    json report = report_header("sweep-arch", s.run);
    report["results"] = {{"D", cfg.D}, {"sweeps", sweeps_json}};
    if (trend) {
        report["results"]["verdict"] = std::string(mhalab::to_string(trend->verdict));
        report["results"]["sublinear"] = trend->sublinear;
        std::cout << "verdict " << mhalab::to_string(trend->verdict)
                  << (trend->sublinear ? ", sublinear\n" : ", not sublinear\n");
    }
    report["gates"] = gates_json(gates);
    out.write("report.json", report.dump(2) + "\n");
    out.write("config.json", s.run.echo.dump(2) + "\n");
    out.commit();
    return report_gates(gates);
}

int cmd_weights_compare(const Invocation& inv) {
    Session s(inv, "weights-compare");
    Fields& top = *s.top;
    const mhalab::RegressionTask task = parse_task(top.object("task"));
    ProjectionSpec pspec = parse_projection(top.object("projections"), true);
    s.resolve_weights_file(pspec);
    const mhalab::ProjectionSet proj = build_projection(pspec, task.p());
    const std::size_t n = top.count("n");
    const std::size_t R = top.count("R");
    const std::size_t Q = top.count("Q");
    const std::vector<double> rho_grid = top.numbers("rho_grid");
    double k_sigma = 2.0;
    std::string expect = "geometric_wins";
    if (top.has("gates")) {
        Fields g = top.object("gates");
        k_sigma = g.number("k_sigma", k_sigma);
        expect = g.text("expect", expect);
        g.finish();
    }
    if (expect != "geometric_wins" && expect != "no_winner") {
        throw ConfigError("config: field 'gates.expect' must be \"geometric_wins\" or \"no_winner\"");
    }
    top.finish();

    const mhalab::ExperimentPlan plan{task, proj, mhalab::make_weights(mhalab::WeightKind::uniform, proj.H()),
                                      n, R, Q, s.run.seed};
    const mhalab::WeightingResult res = mhalab::weighting_compare(plan, rho_grid, k_sigma);

    OutputDir out(s.run.out);
    Table table({"experiment", "scheme", "rho", "mse", "stderr", "diff_vs_uniform", "diff_stderr"});
    std::string dat = "# rho mse stderr\n";
    json rows = json::array();
    for (const auto& r : res.rows) {
        table.row({s.run.name, r.scheme, fmt(r.rho), fmt(r.mse), fmt(r.se),
                   fmt(r.diff_vs_uniform), fmt(r.diff_stderr)});
        if (r.rho > 0.0) dat += fmt(r.rho) + " " + fmt(r.mse) + " " + fmt(r.se) + "\n";
        rows.push_back({{"scheme", r.scheme},
                        {"rho", r.rho},
                        {"mse", r.mse},
                        {"stderr", r.se},
                        {"diff_vs_uniform", r.diff_vs_uniform},
                        {"diff_stderr", r.diff_stderr}});
        std::cout << r.scheme << "  mse " << fmt(r.mse) << "  diff vs uniform "
                  << fmt(r.diff_vs_uniform) << " +- " << fmt(r.diff_stderr) << "\n";
    }
    out.write("weights.csv", table.str());
    out.write("weights.dat", dat);

    std::vector<Gate> gates;
    if (expect == "geometric_wins") {
        gates.push_back({"delta_v_positive", res.delta_v, 0.0, ">", res.delta_v > 0.0});
        gates.push_back({"geometric_beats_uniform", res.geometric_beats_uniform ? 1.0 : 0.0, 1.0,
                         "==", res.geometric_beats_uniform});
    } else {
        gates.push_back({"no_rho_beats_uniform", res.geometric_beats_uniform ? 1.0 : 0.0, 0.0,
                         "==", !res.geometric_beats_uniform});
    }
    json report = report_header("weights-compare", s.run);
    report["results"] = {{"head_order", res.head_order},
                         {"pilot_head_mse", res.head_mse},
                         {"head_var", res.head_var},
                         {"delta_v", res.delta_v},
                         {"rows", rows},
                         {"argmin", res.argmin},
                         {"geometric_beats_uniform", res.geometric_beats_uniform}};
    report["gates"] = gates_json(gates);
    out.write("report.json", report.dump(2) + "\n");
    out.write("config.json", s.run.echo.dump(2) + "\n");
    out.commit();
    std::cout << "delta_v " << fmt(res.delta_v) << "\nargmin " << res.argmin << "\n";
    return report_gates(gates);
}

int cmd_optimize_proj(const Invocation& inv) {
    Session s(inv, "optimize-proj");
    Fields& top = *s.top;
    const std::size_t p = top.count("p");
    const std::size_t d_k = top.count("d_k");
    const std::size_t H = top.count("H");
    const std::size_t steps = top.count("steps");
    const double step_size = top.number("step_size");
    const std::size_t starts = top.count("starts", 10);
    double objective_max = 1e-8;
    if (top.has("gates")) {
        Fields g = top.object("gates");
        objective_max = g.number("objective_max", objective_max);
        g.finish();
    }
    top.finish();
    if (H * d_k > p) {
        throw mhalab::Infeasible("infeasible: H * d_k = " + std::to_string(H * d_k) +
                                 " exceeds p = " + std::to_string(p));
    }
    if (starts < 1) throw ConfigError("config: field 'starts' must be at least 1");

    std::vector<mhalab::OptimizeResult> results;
    for (std::size_t i = 0; i < starts; ++i) {
        results.push_back(mhalab::optimize_projections(
            p, d_k, H, mhalab::derive_seed(s.run.seed, "start", i), steps, step_size));
    }

    OutputDir out(s.run.out);
    Table trace({"experiment", "start", "step", "objective"});
    Table finals({"experiment", "start", "iterations", "final_objective", "hdi", "hdi_normalized"});
    std::string dat = "# step objective (start 0)\n";
    double worst = 0.0;
    json rows = json::array();
    for (std::size_t i = 0; i < results.size(); ++i) {
        const auto& r = results[i];
        for (std::size_t t = 0; t < r.trace.size(); ++t) {
            trace.row({s.run.name, fmt(i), fmt(t), fmt(r.trace[t])});
            if (i == 0) dat += fmt(t) + " " + fmt(r.trace[t]) + "\n";
        }
        const double final_j = r.trace.back();
        worst = std::max(worst, final_j);
        const auto div = H >= 2 ? mhalab::hdi(r.projections) : mhalab::HdiValue{1.0, 1.0};
        finals.row({s.run.name, fmt(i), fmt(r.iterations), fmt(final_j), fmt(div.hdi),
                    fmt(div.hdi_normalized)});
        rows.push_back({{"start", i},
                        {"iterations", r.iterations},
                        {"final_objective", final_j},
                        {"hdi_normalized", div.hdi_normalized}});
        std::cout << "start " << i << ": " << r.iterations << " steps, objective "
                  << fmt(final_j) << "\n";
    }
    out.write("trace.csv", trace.str());
    out.write("optimize.csv", finals.str());
    out.write("trace.dat", dat);
    std::vector<mhalab::Matrix> keys;
    for (const auto& hd : results.front().projections.heads()) keys.push_back(hd.wk());
    out.write("projections.json", mhalab::write_weight_document(keys));

    std::vector<Gate> gates{{"final_objective_max", worst, objective_max, "<=", worst <= objective_max}};
    json report = report_header("optimize-proj", s.run);
    report["results"] = {{"starts", rows}, {"worst_final_objective", worst}};
    report["gates"] = gates_json(gates);
    out.write("report.json", report.dump(2) + "\n");
    out.write("config.json", s.run.echo.dump(2) + "\n");
    out.commit();
    return report_gates(gates);
}

} // namespace cli
