#include "doctest.h"

#include "support.hpp"

#include "mhalab/decomposition.hpp"
#include "mhalab/diversity.hpp"
#include "mhalab/error.hpp"
#include "mhalab/parallel.hpp"
#include "mhalab/seeding.hpp"

#include <cmath>
#include <numbers>

using namespace mhalab;

namespace {

RegressionTask quadratic_task(std::size_t p, double sigma = 1.0) {
    TaskSpec s;
    s.family = Family::quadratic;
    s.p = p;
    s.noise_sd = sigma;
    s.amplitude = 0.1;
    s.param_seed = 7;
    return make_task(s);
}

ExperimentPlan small_plan(double mix, std::size_t H = 3, std::uint64_t seed = 99) {
    return ExperimentPlan{quadratic_task(6),
                          with_key_scale(make_projection_family(6, 2, H, mix, 5), 1.7),
                          make_weights(WeightKind::uniform, H),
                          150,
                          60,
                          12,
                          seed};
}

/// Sample covariance with an R - 1 denominator, written directly.
double sample_cov(const HeadEstimates& est, std::size_t q, std::size_t h, std::size_t g) {
    double mh = 0.0, mg = 0.0;
    for (std::size_t r = 0; r < est.R; ++r) {
        mh += est(r, q, h);
        mg += est(r, q, g);
    }
    mh /= static_cast<double>(est.R);
    mg /= static_cast<double>(est.R);
    double s = 0.0;
    for (std::size_t r = 0; r < est.R; ++r) s += (est(r, q, h) - mh) * (est(r, q, g) - mg);
    return s / static_cast<double>(est.R - 1);
}

} // namespace

TEST_CASE("decomposition identity holds on a completed experiment") {
    const DecompositionReport rep = mc_decompose(small_plan(1.0));
    const double sum = rep.ensemble_bias_sq.value + rep.variance_term.value +
                       rep.covariance_term.value;
    CHECK(std::abs(rep.mse_direct.value - sum) <= 1e-12 * rep.mse_direct.value);
    CHECK(rep.identity_residual.value <= 4.0 * rep.identity_residual.se);
    CHECK(rep.identity_holds());
    CHECK(rep.replicate_sq_error.size() == 60);
}

TEST_CASE("estimates agree with directly computed sample moments") {
    const ExperimentPlan plan = small_plan(0.6);
    const HeadEstimates est =
        compute_head_estimates(plan.task, plan.proj, plan.n, plan.R, plan.Q, plan.master_seed);
    const DecompositionReport rep = decompose(est, plan.weights);

    // Head outputs recomputed from scratch for one replicate.
    const Dataset d = sample_dataset(plan.task, plan.n, derive_seed(plan.master_seed, "data", 7));
    for (std::size_t q = 0; q < plan.Q; ++q)
        for (std::size_t h = 0; h < 3; ++h) {
            const double direct = attend(plan.proj.head(h), est.queries.row(q), d).estimate -
                                  plan.task.mean(est.queries.row(q));
            CHECK(std::abs(est(7, q, h) - direct) <= 1e-12);
        }

    double cov01 = 0.0, var2 = 0.0;
    for (std::size_t q = 0; q < plan.Q; ++q) {
        cov01 += sample_cov(est, q, 0, 1);
        var2 += sample_cov(est, q, 2, 2);
    }
    CHECK(rep.cov(0, 1) == doctest::Approx(cov01 / plan.Q).epsilon(1e-10));
    CHECK(rep.head_var[2] == doctest::Approx(var2 / plan.Q).epsilon(1e-10));
    CHECK(rep.cov(1, 0) == rep.cov(0, 1));
    for (std::size_t h = 0; h < 3; ++h) CHECK(rep.cov(h, h) == rep.head_var[h]);
}

TEST_CASE("uniform variance term is the mean head variance over H") {
    const DecompositionReport rep = mc_decompose(small_plan(0.4, 4));
    double sum = 0.0;
    for (double v : rep.head_var) sum += v;
    CHECK(rep.variance_term.value == doctest::Approx(sum / 16.0).epsilon(1e-14));
}

TEST_CASE("identical heads: covariance equals variance") {
    const DecompositionReport rep = mc_decompose(small_plan(0.0));
    for (std::size_t h = 0; h < 3; ++h)
        for (std::size_t g = 0; g < 3; ++g) CHECK(rep.cov(h, g) == doctest::Approx(rep.head_var[0]));
    CHECK(rep.variance_term.value + rep.covariance_term.value ==
          doctest::Approx(rep.head_var[0]).epsilon(1e-12));
    CHECK(rep.mse_direct.value == doctest::Approx(rep.head_mse[0]).epsilon(1e-12));
}

TEST_CASE("noise-free data lowers the variance and keeps the identity") {
    TaskSpec s;
    s.family = Family::linear;
    s.p = 3;
    s.param_seed = 1;
    s.noise_sd = 0.0;
    const RegressionTask quiet = make_task(s);
    s.noise_sd = 1.0;
    const RegressionTask noisy = make_task(s);
    const ProjectionSet one = with_key_scale(make_projection_family(3, 2, 1, 0.0, 3), 1.7);
    const WeightScheme w = make_weights(WeightKind::uniform, 1);
    const DecompositionReport a = mc_decompose({quiet, one, w, 300, 60, 16, 9});
    const DecompositionReport b = mc_decompose({noisy, one, w, 300, 60, 16, 9});
    CHECK(a.variance_term.value < b.variance_term.value);
    CHECK(a.covariance_term.value == 0.0);
    CHECK(a.mse_direct.value ==
          doctest::Approx(a.ensemble_bias_sq.value + a.variance_term.value).epsilon(1e-12));
}

TEST_CASE("delta-method stderrs agree with the bootstrap") {
    const ExperimentPlan plan = small_plan(1.0);
    const HeadEstimates est =
        compute_head_estimates(plan.task, plan.proj, plan.n, plan.R, plan.Q, plan.master_seed);
    const DecompositionReport rep = decompose(est, plan.weights);
    const BootstrapStderr boot = bootstrap_stderr(est, plan.weights, 200, 4);
    auto within_two = [](double a, double b) { return a <= 2.0 * b && b <= 2.0 * a; };
    CHECK(within_two(rep.mse_direct.se, boot.mse_direct));
    CHECK(within_two(rep.variance_term.se, boot.variance_term));
    CHECK(within_two(rep.ensemble_bias_sq.se, boot.ensemble_bias_sq));
}

TEST_CASE("covariance matrix is positive semidefinite within noise") {
    const DecompositionReport rep = mc_decompose(small_plan(0.5, 4));
    CHECK(rep.cov_psd);
    CHECK(rep.cov_min_eigenvalue >= -4.0 * max_abs(rep.cov_stderr));
}

TEST_CASE("plans are validated") {
    ExperimentPlan plan = small_plan(1.0);
    plan.R = 1;
    CHECK_THROWS_AS(mc_decompose(plan), InvalidArgument);
    plan = small_plan(1.0);
    plan.Q = 0;
    CHECK_THROWS_AS(mc_decompose(plan), InvalidArgument);
    plan = small_plan(1.0);
    plan.weights = make_weights(WeightKind::uniform, 2);
    CHECK_THROWS(mc_decompose(plan));
}

TEST_CASE("same seed gives bit-identical reports across thread counts") {
    const ExperimentPlan plan = small_plan(0.7);
    set_thread_count(1);
    const HeadEstimates one =
        compute_head_estimates(plan.task, plan.proj, plan.n, plan.R, plan.Q, plan.master_seed);
    set_thread_count(4);
    const HeadEstimates four =
        compute_head_estimates(plan.task, plan.proj, plan.n, plan.R, plan.Q, plan.master_seed);
    set_thread_count(0);
    CHECK(one.dev == four.dev);
    const DecompositionReport a = decompose(one, plan.weights);
    const DecompositionReport b = decompose(four, plan.weights);
    CHECK(a.mse_direct.value == b.mse_direct.value);
    CHECK(a.cov == b.cov);
    CHECK(a.identity_residual.se == b.identity_residual.se);

    const DecompositionReport c = mc_decompose(small_plan(0.7, 3, 100));
    CHECK(c.mse_direct.value != a.mse_direct.value);
}

TEST_CASE("replicate selection keeps the chosen rows") {
    const ExperimentPlan plan = small_plan(1.0);
    const HeadEstimates est =
        compute_head_estimates(plan.task, plan.proj, plan.n, plan.R, plan.Q, plan.master_seed);
    const HeadEstimates sub = select_replicates(est, {3, 3, 10});
    REQUIRE(sub.R == 3);
    CHECK(sub(0, 5, 1) == est(3, 5, 1));
    CHECK(sub(1, 5, 1) == est(3, 5, 1));
    CHECK(sub(2, 0, 2) == est(10, 0, 2));
}

TEST_CASE("theory: linear bias has no curvature term, variance scales as 1/n") {
    TaskSpec s;
    s.family = Family::linear;
    s.p = 3;
    s.noise_sd = 1.0;
    const RegressionTask lin = make_task(s);
    const HeadConfig head = make_projection_family(3, 2, 1, 0.0, 1).head(0);
    const Vector x{0.3, -0.2, 0.5};
    const TheoryValues t = theoretical_bias_variance(lin, head, x, 500);
    const ProjectedDensity pd = projected_density(lin, head.wk(), matvec_t(head.wk(), x));
    const Vector grad_m = matvec_t(head.wk(), lin.gradient(x));
    const double expected = (1.0 / 4.0) * 2.0 * dot(grad_m, pd.gradient) / pd.value;
    CHECK(t.bias == doctest::Approx(expected).epsilon(1e-12));
    CHECK(theoretical_bias_variance(lin, head, x, 1000).variance == doctest::Approx(t.variance / 2));
}

TEST_CASE("theory: Gaussian projected density matches the closed form") {
    // W = e1 scaled by 2: the key is N(0, 4).
    const RegressionTask task = quadratic_task(2);
    const Matrix wk{{2.0}, {0.0}};
    const ProjectedDensity pd = projected_density(task, wk, Vector{1.0});
    const double expected = std::exp(-1.0 / 8.0) / std::sqrt(2.0 * std::numbers::pi * 4.0);
    CHECK(pd.value == doctest::Approx(expected).epsilon(1e-12));
    CHECK(pd.gradient[0] == doctest::Approx(-expected / 4.0).epsilon(1e-12));
    CHECK_FALSE(pd.approximate);
}

TEST_CASE("theory: tiny projected density is rejected") {
    const RegressionTask task = quadratic_task(2);
    const HeadConfig head = HeadConfig::regression(Matrix{{1.0}, {0.0}});
    CHECK_THROWS_AS(theoretical_bias_variance(task, head, Vector{12.0, 0.0}, 100), DensityTooSmall);
}

TEST_CASE("theory: bias sign and size against Monte Carlo at the origin") {
    TaskSpec s;
    s.family = Family::quadratic;
    s.p = 4;
    s.amplitude = 0.3;
    s.param_seed = 7;
    const RegressionTask task = make_task(s);
    const HeadConfig head = make_projection_family(4, 2, 1, 0.0, 11).head(0);
    const Vector x(4, 0.0);
    const std::size_t n = 2000;
    const TheoryValues t = theoretical_bias_variance(task, head, x, n);

    double sum = 0.0;
    const int R = 400;
    for (int r = 0; r < R; ++r) {
        const Dataset d = sample_dataset(task, n, derive_seed(5, "data", r));
        sum += attend(head, x, d).estimate - task.mean(x);
    }
    const double mc = sum / R;
    CHECK(mc * t.bias > 0.0);
    CHECK(std::abs(t.bias) <= 3.0 * std::abs(mc));
    CHECK(std::abs(mc) <= 3.0 * std::abs(t.bias));
}

TEST_CASE("covariance bound: orthogonal heads have zero bound and satisfy it") {
    TaskSpec s;
    s.family = Family::quadratic;
    s.p = 8;
    s.amplitude = 0.1;
    s.param_seed = 7;
    const RegressionTask task = make_task(s);
    const ProjectionSet proj = with_key_scale(make_projection_family(8, 2, 4, 1.0, 11), 1.7);
    const DecompositionReport rep =
        mc_decompose({task, proj, make_weights(WeightKind::uniform, 4), 500, 400, 64, 2024});
    const std::vector<CovBoundRow> rows = check_cov_bound(rep, proj, task);
    CHECK(rows.size() == 6);
    for (const CovBoundRow& row : rows) {
        CHECK(row.bound <= 1e-20);
        CHECK(row.abs_cov <= 4.0 * row.cov_stderr);
        CHECK(row.satisfied);
    }
}

TEST_CASE("covariance bound grows with the cross-Gram along the family") {
    const RegressionTask task = quadratic_task(6);
    double prev_bound = INFINITY, prev_gram = INFINITY;
    for (double mix : {0.0, 0.25, 0.5, 0.75}) {
        const ExperimentPlan plan = small_plan(mix);
        const DecompositionReport rep = mc_decompose(plan);
        const CovBoundRow row = check_cov_bound(rep, plan.proj, plan.task).front();
        REQUIRE(row.h == 0);
        REQUIRE(row.h2 == 1);
        CHECK(row.gram_frobsq < prev_gram);
        CHECK(row.bound < prev_bound);
        CHECK(row.bound > 0.0);
        prev_bound = row.bound;
        prev_gram = row.gram_frobsq;
    }
}

TEST_CASE("spearman: perfect, reversed and tied ranks") {
    CHECK(spearman({1, 2, 3, 4}, {10, 20, 30, 40}) == doctest::Approx(1.0));
    CHECK(spearman({1, 2, 3, 4}, {4, 3, 2, 1}) == doctest::Approx(-1.0));
    // Average ranks a = (1.5, 1.5, 3), b = (1, 2, 3): Pearson on ranks is sqrt(3)/2.
    CHECK(spearman({5, 5, 7}, {1, 2, 3}) == doctest::Approx(std::sqrt(3.0) / 2.0));
}

TEST_CASE("hdi sweep needs two heads and a valid grid") {
    HdiSweepBase base{quadratic_task(6), 2, 1, 1.7, 5, 100, 10, 4, 1};
    CHECK_THROWS_AS(hdi_sweep(base, {0.0, 1.0}), NeedsTwoHeads);
    base.H = 3;
    CHECK_THROWS_AS(hdi_sweep(base, {0.0, 1.5}), InvalidArgument);
}

TEST_CASE("hdi sweep endpoints: diverse heads beat identical heads") {
    const HdiSweepBase base{quadratic_task(6), 2, 3, 1.7, 5, 150, 80, 16, 3};
    const HdiSweepResult res = hdi_sweep(base, {0.0, 1.0});
    REQUIRE(res.rows.size() == 2);
    CHECK(res.rows[0].hdi_normalized < res.rows[1].hdi_normalized);
    CHECK(res.endpoint_diff == doctest::Approx(res.rows[0].mse - res.rows[1].mse));
    CHECK(res.endpoint_diff > 4.0 * res.endpoint_diff_stderr);
    for (const HdiSweepRow& row : res.rows) CHECK(row.identity_residual <= 4.0 * row.identity_stderr);

    const HdiSweepResult again = hdi_sweep(base, {0.0, 1.0});
    CHECK(again.rows[1].mse == res.rows[1].mse);
}

TEST_CASE("weighting: rho = 1 reproduces uniform and identical heads tie") {
    ExperimentPlan plan = small_plan(0.0);
    const WeightingResult same = weighting_compare(plan, {0.5, 0.9, 1.0});
    REQUIRE(same.rows.size() == 5);
    CHECK(same.rows[0].scheme == "uniform");
    const WeightingRow& rho_one = same.rows.back();
    CHECK(rho_one.rho == 1.0);
    CHECK(rho_one.mse == same.rows[0].mse);
    CHECK(rho_one.diff_vs_uniform == 0.0);
    CHECK(same.delta_v == doctest::Approx(0.0).epsilon(1e-12));
    CHECK_FALSE(same.geometric_beats_uniform);

    plan = small_plan(1.0, 2);
    plan.proj = contaminate_values(plan.proj, {0.0, 3.0});
    const WeightingResult mixed = weighting_compare(plan, {0.3, 0.5, 0.8, 1.0});
    CHECK(mixed.head_order.front() == 0);
    CHECK(mixed.delta_v > 0.0);
    CHECK(mixed.head_var.front() < mixed.head_var.back());
    CHECK(mixed.geometric_beats_uniform);
}
