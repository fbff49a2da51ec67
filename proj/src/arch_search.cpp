#include "mhalab/arch_search.hpp"

#include "mhalab/decomposition.hpp"
#include "mhalab/diversity.hpp"
#include "mhalab/error.hpp"
#include "mhalab/seeding.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace mhalab {

std::vector<Allocation> enumerate_allocations(std::size_t D) {
    if (D < 1) throw InvalidArgument("budget D must be at least 1");
    std::vector<Allocation> out;
    for (std::size_t d = 1; d <= D; ++d)
        if (D % d == 0) out.push_back({D / d, d});
    return out;
}

bool ArchSweepResult::interior_argmin() const {
    if (rows.size() < 3) return false;
    return argmin_d_k != rows.front().d_k && argmin_d_k != rows.back().d_k;
}

namespace {

double bias_feature(double d) { return 1.0 / (d * d); }
double var_feature(double d, double n, double D) { return std::pow(d, 0.5 * d + 1.0) / (n * D); }

} // namespace

double ArchSweepResult::model(double d_k) const {
    return c1 * bias_feature(d_k) +
           c2 * var_feature(d_k, static_cast<double>(n), static_cast<double>(D));
}

namespace {

// Two-column nonnegative least squares by enumerating the active sets.
void fit_model(ArchSweepResult& res) {
    const double n = static_cast<double>(res.n);
    const double D = static_cast<double>(res.D);
    std::vector<double> f1, f2, y;
    for (const auto& row : res.rows) {
        const double d = static_cast<double>(row.d_k);
        f1.push_back(bias_feature(d));
        f2.push_back(var_feature(d, n, D));
        y.push_back(row.mse);
    }
    auto sse = [&](double a, double b) {
        double s = 0.0;
        for (std::size_t i = 0; i < y.size(); ++i) {
            const double r = y[i] - a * f1[i] - b * f2[i];
            s += r * r;
        }
        return s;
    };
    auto inner = [](const std::vector<double>& u, const std::vector<double>& v) {
        double s = 0.0;
        for (std::size_t i = 0; i < u.size(); ++i) s += u[i] * v[i];
        return s;
    };
    const double s11 = inner(f1, f1), s22 = inner(f2, f2), s12 = inner(f1, f2);
    const double t1 = inner(f1, y), t2 = inner(f2, y);

    std::vector<std::pair<double, double>> candidates{{0.0, 0.0}};
    if (s11 > 0.0) candidates.emplace_back(std::max(0.0, t1 / s11), 0.0);
    if (s22 > 0.0) candidates.emplace_back(0.0, std::max(0.0, t2 / s22));
    const double det = s11 * s22 - s12 * s12;
    if (std::abs(det) > 1e-300) {
        const double a = (t1 * s22 - t2 * s12) / det;
        const double b = (t2 * s11 - t1 * s12) / det;
        if (a >= 0.0 && b >= 0.0) candidates.emplace_back(a, b);
    }
    double best = std::numeric_limits<double>::infinity();
    for (const auto& [a, b] : candidates) {
        const double s = sse(a, b);
        if (s < best) {
            best = s;
            res.c1 = a;
            res.c2 = b;
        }
    }
    res.fit_residual = y.empty() ? 0.0 : std::sqrt(best / static_cast<double>(y.size()));
}

} // namespace

ArchSweepResult sweep_architectures(const RegressionTask& task, const ArchSweepConfig& cfg) {
    ArchSweepResult res;
    res.D = cfg.D;
    res.n = cfg.n;
    for (const Allocation& alloc : enumerate_allocations(cfg.D)) {
        if (alloc.H * alloc.d_k > task.p()) {
            res.skipped.push_back("H = " + std::to_string(alloc.H) + ", d_k = " +
                                  std::to_string(alloc.d_k) + ": infeasible, H * d_k exceeds p = " +
                                  std::to_string(task.p()));
            continue;
        }
        const std::uint64_t proj_seed = derive_seed(cfg.seed, "projection", alloc.d_k);
        const WeightScheme uniform = make_weights(WeightKind::uniform, alloc.H);
        const ProjectionSet proj = with_key_scale(
            make_projection_family(task.p(), alloc.d_k, alloc.H, 1.0, proj_seed), cfg.key_scale);
        const DecompositionReport rep = decompose(
            compute_head_estimates(task, proj, cfg.n, cfg.R, cfg.Q, cfg.seed), uniform);

        ArchRow row;
        row.H = alloc.H;
        row.d_k = alloc.d_k;
        row.mse = rep.mse_direct.value;
        row.se = rep.mse_direct.se;
        row.bias_sq = rep.ensemble_bias_sq.value;
        row.var_term = rep.variance_term.value;
        row.cov_term = rep.covariance_term.value;
        row.identity_residual = rep.identity_residual.value;
        row.identity_stderr = rep.identity_residual.se;
        if (cfg.identical_control) {
            const ProjectionSet same = with_key_scale(
                make_projection_family(task.p(), alloc.d_k, alloc.H, 0.0, proj_seed),
                cfg.key_scale);
            const DecompositionReport ctl = decompose(
                compute_head_estimates(task, same, cfg.n, cfg.R, cfg.Q, cfg.seed), uniform);
            Vector diff(rep.R);
            double mean = 0.0;
            for (std::size_t r = 0; r < rep.R; ++r) {
                diff[r] = rep.replicate_sq_error[r] - ctl.replicate_sq_error[r];
                mean += diff[r];
            }
            mean /= static_cast<double>(rep.R);
            double ss = 0.0;
            for (double d : diff) ss += (d - mean) * (d - mean);
            row.control_mse = ctl.mse_direct.value;
            row.control_diff = mean;
            row.control_diff_se =
                std::sqrt(ss / static_cast<double>(rep.R - 1) / static_cast<double>(rep.R));
        }
        res.rows.push_back(row);
    }
    if (res.rows.empty()) throw EmptySweep();

    // Rows are ascending in d_k, so a strict comparison keeps the larger H on ties.
    const ArchRow* best = &res.rows.front();
    for (const auto& row : res.rows)
        if (row.mse < best->mse) best = &row;
    res.argmin_H = best->H;
    res.argmin_d_k = best->d_k;
    fit_model(res);
    return res;
}

std::string_view to_string(TrendVerdict v) noexcept {
    switch (v) {
    case TrendVerdict::flat: return "flat";
    case TrendVerdict::non_decreasing: return "non-decreasing";
    case TrendVerdict::violated: return "violated";
    }
    return "?";
}

ScalingTrend scaling_trend(const RegressionTask& task, const ArchSweepConfig& cfg,
                           const std::vector<std::size_t>& n_grid) {
    if (n_grid.size() < 3) throw InvalidArgument("scaling trend needs at least 3 values of n");
    if (!std::is_sorted(n_grid.begin(), n_grid.end()) ||
        std::adjacent_find(n_grid.begin(), n_grid.end()) != n_grid.end()) {
        throw InvalidArgument("n grid must be strictly ascending");
    }
    ScalingTrend out;
    for (std::size_t n : n_grid) {
        ArchSweepConfig c = cfg;
        c.n = n;
        out.sweeps.push_back(sweep_architectures(task, c));
    }
    bool monotone = true, constant = true;
    for (std::size_t i = 1; i < out.sweeps.size(); ++i) {
        const auto prev = out.sweeps[i - 1].argmin_d_k;
        const auto cur = out.sweeps[i].argmin_d_k;
        if (cur < prev) monotone = false;
        if (cur != prev) constant = false;
    }
    out.verdict = !monotone ? TrendVerdict::violated
                            : (constant ? TrendVerdict::flat : TrendVerdict::non_decreasing);
    const double dk_growth = static_cast<double>(out.sweeps.back().argmin_d_k) /
                             static_cast<double>(out.sweeps.front().argmin_d_k);
    const double n_growth =
        static_cast<double>(n_grid.back()) / static_cast<double>(n_grid.front());
    out.sublinear = dk_growth < n_growth;
    return out;
}

} // namespace mhalab
