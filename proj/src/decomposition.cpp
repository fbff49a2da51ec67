#include "mhalab/decomposition.hpp"

#include "mhalab/attention.hpp"
#include "mhalab/diversity.hpp"
#include "mhalab/error.hpp"
#include "mhalab/parallel.hpp"
#include "mhalab/seeding.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <random>

namespace mhalab {

namespace {

double mean_of(const Vector& v) {
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

/// Standard error of the mean of per-replicate influence values.
double se_of_mean(const Vector& psi) {
    const std::size_t R = psi.size();
    if (R < 2) return 0.0;
    const double m = mean_of(psi);
    double ss = 0.0;
    for (double v : psi) ss += (v - m) * (v - m);
    return std::sqrt(ss / static_cast<double>(R - 1) / static_cast<double>(R));
}

void check_plan_sizes(std::size_t n, std::size_t R, std::size_t Q) {
    if (R < 2) throw InvalidArgument("R = " + std::to_string(R) + ": need at least 2 replicates");
    if (Q < 1) throw InvalidArgument("Q must be at least 1");
    if (n < 1) throw InvalidArgument("n must be at least 1");
}

} // namespace

HeadEstimates compute_head_estimates(const RegressionTask& task, const ProjectionSet& proj,
                                     std::size_t n, std::size_t R, std::size_t Q,
                                     std::uint64_t master_seed) {
    check_plan_sizes(n, R, Q);
    if (proj.p() != task.p()) {
        throw ShapeError("projections expect p = " + std::to_string(proj.p()) +
                         " but the task has p = " + std::to_string(task.p()));
    }
    HeadEstimates est;
    est.R = R;
    est.Q = Q;
    est.H = proj.H();
    est.n = n;
    est.master_seed = master_seed;
    est.queries = sample_queries(task, Q, derive_seed(master_seed, "query"));
    est.truth.resize(Q);
    for (std::size_t q = 0; q < Q; ++q) est.truth[q] = task.mean(est.queries.row(q));
    est.dev.assign(R * Q * est.H, 0.0);

    std::vector<std::size_t> degenerate(R, 0);
    parallel_for(R, [&](std::size_t r) {
        const Dataset data = sample_dataset(task, n, derive_seed(master_seed, "data", r));
        for (std::size_t h = 0; h < est.H; ++h) {
            const BatchAttention out = attend_batch(proj.head(h), est.queries, data);
            degenerate[r] += out.degenerate;
            for (std::size_t q = 0; q < Q; ++q) {
                const double v = out.estimates[q];
                if (!std::isfinite(v)) throw ReplicateFailure(r, h, q);
                est.dev[(r * Q + q) * est.H + h] = v - est.truth[q];
            }
        }
    });
    est.degenerate = std::accumulate(degenerate.begin(), degenerate.end(), std::size_t{0});
    return est;
}

HeadEstimates select_replicates(const HeadEstimates& est, const std::vector<std::size_t>& rows) {
    HeadEstimates out = est;
    out.R = rows.size();
    out.dev.assign(out.R * est.Q * est.H, 0.0);
    const std::size_t block = est.Q * est.H;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i] >= est.R) throw InvalidArgument("replicate index out of range");
        std::copy_n(est.dev.begin() + static_cast<std::ptrdiff_t>(rows[i] * block), block,
                    out.dev.begin() + static_cast<std::ptrdiff_t>(i * block));
    }
    return out;
}

DecompositionReport decompose(const HeadEstimates& est, const WeightScheme& weights) {
    const std::size_t R = est.R, Q = est.Q, H = est.H;
    if (R < 2) throw InvalidArgument("decomposition needs at least 2 replicates");
    if (weights.H() != H) {
        throw InvalidArgument("weight scheme has " + std::to_string(weights.H()) +
                              " entries for " + std::to_string(H) + " heads");
    }
    const Vector& a = weights.alpha;
    const double Rd = static_cast<double>(R);
    const double Qd = static_cast<double>(Q);

    DecompositionReport rep;
    rep.H = H;
    rep.R = R;
    rep.Q = Q;
    rep.n = est.n;
    rep.master_seed = est.master_seed;
    rep.weights = weights;
    rep.queries = est.queries;
    rep.truth = est.truth;
    rep.degenerate = est.degenerate;
    rep.bias_per_query = Matrix(Q, H);
    rep.var_per_query = Matrix(Q, H);
    rep.head_bias.assign(H, 0.0);
    rep.head_bias_sq.assign(H, 0.0);
    rep.head_var.assign(H, 0.0);
    rep.head_mse.assign(H, 0.0);
    rep.cov = Matrix(H, H);

    // Per-replicate influence values, averaged over queries.
    Vector psi_mse(R, 0.0), psi_bias(R, 0.0), psi_var(R, 0.0), psi_cov(R, 0.0);
    std::vector<Vector> psi_head_var(H, Vector(R, 0.0)), psi_head_mse(H, Vector(R, 0.0));
    std::vector<Vector> psi_pair(H * H, Vector(R, 0.0));

    double bias_sq = 0.0, var_term = 0.0, cov_term = 0.0;
    Vector mean_dev(H), centered(H);
    Matrix c(H, H);
    for (std::size_t q = 0; q < Q; ++q) {
        std::fill(mean_dev.begin(), mean_dev.end(), 0.0);
        for (std::size_t r = 0; r < R; ++r)
            for (std::size_t h = 0; h < H; ++h) mean_dev[h] += est(r, q, h);
        for (double& m : mean_dev) m /= Rd;

        c = Matrix(H, H);
        for (std::size_t r = 0; r < R; ++r) {
            for (std::size_t h = 0; h < H; ++h) centered[h] = est(r, q, h) - mean_dev[h];
            for (std::size_t h = 0; h < H; ++h)
                for (std::size_t g = h; g < H; ++g) c(h, g) += centered[h] * centered[g];
        }
        for (std::size_t h = 0; h < H; ++h)
            for (std::size_t g = h; g < H; ++g) c(g, h) = c(h, g) = c(h, g) / (Rd - 1.0);

        double ens_mean = 0.0;
        for (std::size_t h = 0; h < H; ++h) ens_mean += a[h] * mean_dev[h];
        double ens_var = 0.0, vq = 0.0, cq = 0.0;
        for (std::size_t h = 0; h < H; ++h)
            for (std::size_t g = 0; g < H; ++g) {
                const double t = a[h] * a[g] * c(h, g);
                ens_var += t;
                (h == g ? vq : cq) += t;
            }
        bias_sq += ens_mean * ens_mean - ens_var / Rd;
        var_term += vq;
        cov_term += cq;

        for (std::size_t h = 0; h < H; ++h) {
            rep.bias_per_query(q, h) = mean_dev[h];
            rep.var_per_query(q, h) = c(h, h);
            rep.head_bias[h] += mean_dev[h];
            rep.head_bias_sq[h] += mean_dev[h] * mean_dev[h] - c(h, h) / Rd;
            for (std::size_t g = 0; g < H; ++g) rep.cov(h, g) += c(h, g);
        }

        for (std::size_t r = 0; r < R; ++r) {
            double e = 0.0, ec = 0.0, pv = 0.0;
            for (std::size_t h = 0; h < H; ++h) {
                const double d = est(r, q, h);
                centered[h] = d - mean_dev[h];
                e += a[h] * d;
                ec += a[h] * centered[h];
                pv += a[h] * a[h] * centered[h] * centered[h];
                psi_head_var[h][r] += centered[h] * centered[h];
                psi_head_mse[h][r] += d * d;
            }
            for (std::size_t h = 0; h < H; ++h)
                for (std::size_t g = h + 1; g < H; ++g)
                    psi_pair[h * H + g][r] += centered[h] * centered[g];
            psi_mse[r] += e * e;
            psi_bias[r] += 2.0 * ens_mean * ec;
            psi_var[r] += pv;
            psi_cov[r] += ec * ec - pv;
        }
    }

    auto scale = [&](Vector& v) {
        for (double& x : v) x /= Qd;
    };
    for (auto* v : {&psi_mse, &psi_bias, &psi_var, &psi_cov}) scale(*v);
    for (auto& v : psi_head_var) scale(v);
    for (auto& v : psi_head_mse) scale(v);
    for (auto& v : psi_pair) scale(v);

    rep.ensemble_bias_sq = {bias_sq / Qd, se_of_mean(psi_bias)};
    rep.variance_term = {var_term / Qd, se_of_mean(psi_var)};
    rep.covariance_term = {cov_term / Qd, se_of_mean(psi_cov)};
    rep.mse_direct = {mean_of(psi_mse), se_of_mean(psi_mse)};
    rep.replicate_sq_error = psi_mse;

    Vector psi_sum(R);
    for (std::size_t r = 0; r < R; ++r) psi_sum[r] = psi_bias[r] + psi_var[r] + psi_cov[r];
    const double sum = rep.ensemble_bias_sq.value + rep.variance_term.value +
                       rep.covariance_term.value;
    const double se_sum = se_of_mean(psi_sum);
    rep.identity_residual = {std::abs(rep.mse_direct.value - sum),
                             std::hypot(rep.mse_direct.se, se_sum)};

    rep.head_var_stderr.resize(H);
    rep.head_mse_stderr.resize(H);
    rep.cov_stderr = Matrix(H, H);
    for (std::size_t h = 0; h < H; ++h) {
        rep.head_bias[h] /= Qd;
        rep.head_bias_sq[h] /= Qd;
        for (std::size_t g = 0; g < H; ++g) rep.cov(h, g) /= Qd;
        rep.head_var[h] = rep.cov(h, h);
        rep.head_var_stderr[h] = se_of_mean(psi_head_var[h]);
        rep.cov_stderr(h, h) = rep.head_var_stderr[h];
        rep.head_mse[h] = mean_of(psi_head_mse[h]);
        rep.head_mse_stderr[h] = se_of_mean(psi_head_mse[h]);
        for (std::size_t g = h + 1; g < H; ++g)
            rep.cov_stderr(h, g) = rep.cov_stderr(g, h) = se_of_mean(psi_pair[h * H + g]);
    }

    rep.cov_min_eigenvalue = symmetric_eigenvalues(rep.cov).front();
    rep.cov_psd = rep.cov_min_eigenvalue >= -4.0 * max_abs(rep.cov_stderr);
    return rep;
}

DecompositionReport mc_decompose(const ExperimentPlan& plan) {
    const HeadEstimates est =
        compute_head_estimates(plan.task, plan.proj, plan.n, plan.R, plan.Q, plan.master_seed);
    return decompose(est, plan.weights);
}

BootstrapStderr bootstrap_stderr(const HeadEstimates& est, const WeightScheme& weights,
                                 std::size_t resamples, std::uint64_t seed) {
    if (resamples < 2) throw InvalidArgument("bootstrap needs at least 2 resamples");
    std::vector<DecompositionReport> reps(resamples);
    parallel_for(resamples, [&](std::size_t b) {
        Rng rng(derive_seed(seed, "bootstrap", b));
        std::uniform_int_distribution<std::size_t> pick(0, est.R - 1);
        std::vector<std::size_t> rows(est.R);
        for (auto& r : rows) r = pick(rng);
        reps[b] = decompose(select_replicates(est, rows), weights);
    });
    auto sd = [&](auto field) {
        Vector v(resamples);
        for (std::size_t b = 0; b < resamples; ++b) v[b] = field(reps[b]);
        const double m = mean_of(v);
        double ss = 0.0;
        for (double x : v) ss += (x - m) * (x - m);
        return std::sqrt(ss / static_cast<double>(resamples - 1));
    };
    BootstrapStderr out;
    out.ensemble_bias_sq = sd([](const DecompositionReport& r) { return r.ensemble_bias_sq.value; });
    out.variance_term = sd([](const DecompositionReport& r) { return r.variance_term.value; });
    out.covariance_term = sd([](const DecompositionReport& r) { return r.covariance_term.value; });
    out.mse_direct = sd([](const DecompositionReport& r) { return r.mse_direct.value; });
    return out;
}

namespace {

// Lower Cholesky factor of a symmetric positive definite matrix.
Matrix cholesky(const Matrix& s) {
    const std::size_t d = s.rows();
    Matrix l(d, d);
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j <= i; ++j) {
            double acc = s(i, j);
            for (std::size_t k = 0; k < j; ++k) acc -= l(i, k) * l(j, k);
            if (i == j) {
                if (!(acc > 0.0)) throw RankDeficient(i, d);
                l(i, i) = std::sqrt(acc);
            } else {
                l(i, j) = acc / l(j, j);
            }
        }
    return l;
}

Vector forward_solve(const Matrix& l, std::span<const double> b) {
    Vector z(b.begin(), b.end());
    for (std::size_t i = 0; i < z.size(); ++i) {
        for (std::size_t k = 0; k < i; ++k) z[i] -= l(i, k) * z[k];
        z[i] /= l(i, i);
    }
    return z;
}

Vector backward_solve_t(const Matrix& l, Vector z) {
    for (std::size_t i = z.size(); i-- > 0;) {
        for (std::size_t k = i + 1; k < z.size(); ++k) z[i] -= l(k, i) * z[k];
        z[i] /= l(i, i);
    }
    return z;
}

constexpr std::size_t kKdeSamples = 10000;

ProjectedDensity gaussian_density(const Matrix& wk, std::span<const double> key) {
    const std::size_t d = wk.cols();
    const Matrix l = cholesky(matmul_tn(wk, wk));
    const Vector z = forward_solve(l, key);
    double logdet = 0.0;
    for (std::size_t i = 0; i < d; ++i) logdet += 2.0 * std::log(l(i, i));
    const double quad = dot(z, z);
    ProjectedDensity out;
    out.value = std::exp(-0.5 * quad - 0.5 * logdet -
                         0.5 * static_cast<double>(d) * std::log(2.0 * std::numbers::pi));
    const Vector sinv_k = backward_solve_t(l, z);
    out.gradient.resize(d);
    for (std::size_t i = 0; i < d; ++i) out.gradient[i] = -out.value * sinv_k[i];
    return out;
}

// Product Gaussian kernel with Scott's bandwidth on keys of uniform draws.
ProjectedDensity uniform_kde(const RegressionTask& task, const Matrix& wk,
                             std::span<const double> key) {
    const std::size_t p = wk.rows();
    const std::size_t d = wk.cols();
    Rng rng(derive_seed(task.spec().param_seed, "kde"));
    std::uniform_real_distribution<double> unif(-1.0, 1.0);
    Matrix keys(kKdeSamples, d);
    Vector x(p);
    for (std::size_t i = 0; i < kKdeSamples; ++i) {
        for (double& v : x) v = unif(rng);
        const Vector k = matvec_t(wk, x);
        for (std::size_t j = 0; j < d; ++j) keys(i, j) = k[j];
    }
    const double N = static_cast<double>(kKdeSamples);
    const double factor = std::pow(N, -1.0 / (static_cast<double>(d) + 4.0));
    Vector bw(d);
    for (std::size_t j = 0; j < d; ++j) {
        double m = 0.0, ss = 0.0;
        for (std::size_t i = 0; i < kKdeSamples; ++i) m += keys(i, j);
        m /= N;
        for (std::size_t i = 0; i < kKdeSamples; ++i) ss += (keys(i, j) - m) * (keys(i, j) - m);
        bw[j] = factor * std::sqrt(ss / (N - 1.0));
        if (!(bw[j] > 0.0)) throw RankDeficient(j, d);
    }
    double norm = std::pow(2.0 * std::numbers::pi, -0.5 * static_cast<double>(d));
    for (double b : bw) norm /= b;

    ProjectedDensity out;
    out.approximate = true;
    out.gradient.assign(d, 0.0);
    for (std::size_t i = 0; i < kKdeSamples; ++i) {
        double e = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
            const double u = (key[j] - keys(i, j)) / bw[j];
            e += u * u;
        }
        const double k = norm * std::exp(-0.5 * e) / N;
        out.value += k;
        for (std::size_t j = 0; j < d; ++j)
            out.gradient[j] -= k * (key[j] - keys(i, j)) / (bw[j] * bw[j]);
    }
    return out;
}

} // namespace

ProjectedDensity projected_density(const RegressionTask& task, const Matrix& wk,
                                   std::span<const double> key) {
    if (key.size() != wk.cols()) throw ShapeError("key dimension differs from d_k");
    return task.law() == InputLaw::gaussian ? gaussian_density(wk, key)
                                            : uniform_kde(task, wk, key);
}

TheoryValues theoretical_bias_variance(const RegressionTask& task, const HeadConfig& head,
                                       std::span<const double> query_x, std::size_t n) {
    if (n < 1) throw InvalidArgument("n must be at least 1");
    if (query_x.size() != task.p() || head.p() != task.p()) {
        throw ShapeError("query, head and task dimensions differ");
    }
    const Vector key = matvec_t(head.wk(), query_x);
    const ProjectedDensity dens = projected_density(task, head.wk(), key);
    if (dens.value < 1e-8) throw DensityTooSmall(dens.value);

    const double dk = static_cast<double>(head.d_k());
    const double h2 = 1.0 / dk;
    const Vector chain = matvec_t(head.wk(), task.gradient(query_x));
    double drift = 0.0;
    for (std::size_t j = 0; j < chain.size(); ++j) drift += chain[j] * dens.gradient[j] / dens.value;

    TheoryValues out;
    out.density = dens.value;
    out.approximate = dens.approximate;
    out.bias = 0.5 * h2 * (task.laplacian(query_x) + 2.0 * drift);
    const double sigma = task.noise_sd_at(query_x);
    const double h_pow = std::pow(dk, -0.5 * dk);
    out.variance = sigma * sigma / (static_cast<double>(n) * h_pow * dens.value);
    return out;
}

std::vector<CovBoundRow> check_cov_bound(const DecompositionReport& report,
                                         const ProjectionSet& proj, const RegressionTask& task) {
    if (report.queries.rows() == 0) {
        throw MissingDensity("report carries no query points to evaluate the projected density");
    }
    if (proj.H() != report.H) throw InvalidArgument("report and projections differ in H");
    const std::size_t H = proj.H();
    const double dk = static_cast<double>(proj.d_k());
    const double h_pow = std::pow(dk, -0.5 * dk);
    const double L = task.lipschitz();

    Vector min_density(H);
    parallel_for(H, [&](std::size_t h) {
        const Matrix& wk = proj.head(h).wk();
        double lo = std::numeric_limits<double>::infinity();
        for (std::size_t q = 0; q < report.queries.rows(); ++q) {
            const Vector key = matvec_t(wk, report.queries.row(q));
            lo = std::min(lo, projected_density(task, wk, key).value);
        }
        min_density[h] = lo;
    });

    const DiversityReport div = diversity_report(proj);
    std::vector<CovBoundRow> rows;
    for (std::size_t h = 0; h < H; ++h)
        for (std::size_t g = h + 1; g < H; ++g) {
            CovBoundRow row;
            row.h = h;
            row.h2 = g;
            row.abs_cov = std::abs(report.cov(h, g));
            row.cov_stderr = report.cov_stderr(h, g);
            row.gram_frobsq = div.gram_frobsq_normalized(h, g);
            row.min_density = min_density[h];
            if (!(row.min_density > 0.0)) {
                throw MissingDensity("projected density vanishes at a query for head " +
                                     std::to_string(h));
            }
            row.bound = L * L * row.gram_frobsq /
                        (static_cast<double>(report.n) * h_pow * row.min_density);
            row.satisfied = row.abs_cov <= row.bound + 4.0 * row.cov_stderr;
            rows.push_back(row);
        }
    return rows;
}

namespace {

Vector average_ranks(const Vector& v) {
    std::vector<std::size_t> idx(v.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](auto i, auto j) { return v[i] < v[j]; });
    Vector ranks(v.size());
    for (std::size_t i = 0; i < idx.size();) {
        std::size_t j = i;
        while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
        const double r = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t k = i; k <= j; ++k) ranks[idx[k]] = r;
        i = j + 1;
    }
    return ranks;
}

} // namespace

double spearman(const Vector& a, const Vector& b) {
    if (a.size() != b.size() || a.size() < 2) {
        throw InvalidArgument("spearman needs two equal-length samples of size >= 2");
    }
    const Vector ra = average_ranks(a), rb = average_ranks(b);
    const double ma = mean_of(ra), mb = mean_of(rb);
    double sab = 0.0, saa = 0.0, sbb = 0.0;
    for (std::size_t i = 0; i < ra.size(); ++i) {
        sab += (ra[i] - ma) * (rb[i] - mb);
        saa += (ra[i] - ma) * (ra[i] - ma);
        sbb += (rb[i] - mb) * (rb[i] - mb);
    }
    if (saa == 0.0 || sbb == 0.0) return 0.0;
    return sab / std::sqrt(saa * sbb);
}

namespace {

struct PairedDiff {
    double mean = 0.0;
    double se = 0.0;
};

PairedDiff paired(const Vector& x, const Vector& y) {
    Vector d(x.size());
    for (std::size_t r = 0; r < x.size(); ++r) d[r] = x[r] - y[r];
    return {mean_of(d), se_of_mean(d)};
}

} // namespace

HdiSweepResult hdi_sweep(const HdiSweepBase& base, const std::vector<double>& mix_grid) {
    if (base.H < 2) throw NeedsTwoHeads();
    if (mix_grid.size() < 2) throw InvalidArgument("mix grid needs at least two points");
    for (double m : mix_grid)
        if (!(m >= 0.0 && m <= 1.0)) throw InvalidArgument("mix grid values must lie in [0, 1]");

    const WeightScheme uniform = make_weights(WeightKind::uniform, base.H);
    HdiSweepResult out;
    std::vector<Vector> sq_error;
    for (double mix : mix_grid) {
        const ProjectionSet family =
            make_projection_family(base.task.p(), base.d_k, base.H, mix, base.projection_seed);
        const ProjectionSet proj = with_key_scale(family, base.key_scale);
        const HdiValue div = hdi(proj);
        const DecompositionReport rep = decompose(
            compute_head_estimates(base.task, proj, base.n, base.R, base.Q, base.master_seed),
            uniform);
        out.rows.push_back({mix, div.hdi, div.hdi_normalized, rep.mse_direct.value,
                            rep.mse_direct.se, rep.identity_residual.value,
                            rep.identity_residual.se});
        sq_error.push_back(rep.replicate_sq_error);
    }

    Vector diversity, mse;
    for (const auto& row : out.rows) {
        diversity.push_back(row.hdi_normalized);
        mse.push_back(row.mse);
    }
    out.spearman = spearman(diversity, mse);
    const auto lo = std::min_element(mix_grid.begin(), mix_grid.end()) - mix_grid.begin();
    const auto hi = std::max_element(mix_grid.begin(), mix_grid.end()) - mix_grid.begin();
    const PairedDiff d = paired(sq_error[static_cast<std::size_t>(lo)],
                                sq_error[static_cast<std::size_t>(hi)]);
    out.endpoint_diff = d.mean;
    out.endpoint_diff_stderr = d.se;
    return out;
}

WeightingResult weighting_compare(const ExperimentPlan& plan, const std::vector<double>& rho_grid,
                                  double k) {
    const std::size_t H = plan.proj.H();
    if (H < 2) throw NeedsTwoHeads();
    const WeightScheme uniform = make_weights(WeightKind::uniform, H);

    WeightingResult out;
    const DecompositionReport pilot = decompose(
        compute_head_estimates(plan.task, plan.proj, plan.n, plan.R, plan.Q,
                               derive_seed(plan.master_seed, "pilot")),
        uniform);
    out.head_mse = pilot.head_mse;
    out.head_order.resize(H);
    std::iota(out.head_order.begin(), out.head_order.end(), 0);
    std::stable_sort(out.head_order.begin(), out.head_order.end(),
                     [&](auto i, auto j) { return pilot.head_mse[i] < pilot.head_mse[j]; });

    const ProjectionSet ranked = plan.proj.permuted(out.head_order);
    const HeadEstimates est =
        compute_head_estimates(plan.task, ranked, plan.n, plan.R, plan.Q, plan.master_seed);

    std::vector<WeightScheme> schemes{uniform, make_weights(WeightKind::fibonacci, H)};
    for (double rho : rho_grid) schemes.push_back(make_weights(WeightKind::geometric, H, rho));

    std::vector<DecompositionReport> reports(schemes.size());
    parallel_for(schemes.size(), [&](std::size_t i) { reports[i] = decompose(est, schemes[i]); });

    out.head_var = reports.front().head_var;
    out.delta_v = *std::max_element(out.head_var.begin(), out.head_var.end()) -
                  *std::min_element(out.head_var.begin(), out.head_var.end());

    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < schemes.size(); ++i) {
        const auto& rep = reports[i];
        const PairedDiff d = paired(rep.replicate_sq_error, reports.front().replicate_sq_error);
        WeightingRow row;
        row.scheme = schemes[i].label();
        row.rho = schemes[i].kind == WeightKind::geometric ? schemes[i].rho : 0.0;
        row.mse = rep.mse_direct.value;
        row.se = rep.mse_direct.se;
        row.diff_vs_uniform = d.mean;
        row.diff_stderr = d.se;
        // Differences at rounding level (identical heads) are not improvements.
        const bool above_rounding = std::abs(d.mean) > 1e-12 * reports.front().mse_direct.value;
        if (schemes[i].kind == WeightKind::geometric && above_rounding && d.mean < -k * d.se) {
            out.geometric_beats_uniform = true;
        }
        if (row.mse < best) {
            best = row.mse;
            out.argmin = row.scheme;
        }
        out.rows.push_back(std::move(row));
    }
    return out;
}

} // namespace mhalab
