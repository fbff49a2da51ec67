#include "doctest.h"

#include "support.hpp"

#include "mhalab/error.hpp"
#include "mhalab/seeding.hpp"
#include "mhalab/synthetic.hpp"

#include <cmath>
#include <sstream>

using namespace mhalab;

namespace {

TaskSpec spec_of(Family f, std::size_t p, double sigma, InputLaw law = InputLaw::gaussian) {
    TaskSpec s;
    s.family = f;
    s.p = p;
    s.noise_sd = sigma;
    s.law = law;
    s.param_seed = 3;
    return s;
}

} // namespace

TEST_CASE("linear task is beta^T x and noise free at sigma 0") {
    const RegressionTask task = make_task(Family::linear, 2, 0.0);
    const Vector x{0.3, -1.2};
    CHECK(task.mean(x) == doctest::Approx(task.beta()[0] * x[0] + task.beta()[1] * x[1]));
    const Dataset d = sample_dataset(task, 50, 9);
    for (std::size_t i = 0; i < d.n(); ++i) CHECK(d.ys[i] == task.mean(d.xs.row(i)));
}

TEST_CASE("quadratic laplacian is twice the trace of A") {
    const RegressionTask task = make_task(Family::quadratic, 3, 1.0);
    const Matrix& a = task.quadratic_form();
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 3; ++j) CHECK(a(i, j) == a(j, i));
    const double trace = a(0, 0) + a(1, 1) + a(2, 2);
    CHECK(task.laplacian(Vector{0.1, 0.2, 0.3}) == doctest::Approx(2.0 * trace));
}

TEST_CASE("sine mixture Lipschitz bound covers a numeric gradient maximization") {
    const RegressionTask task = make_task(Family::sine_mixture, 4, 1.0);
    const Matrix& w = task.frequencies();
    double sum_norm = 0.0;
    for (std::size_t j = 0; j < w.rows(); ++j) sum_norm += norm2(w.row(j));
    CHECK(task.lipschitz() == doctest::Approx(sum_norm));

    std::mt19937_64 rng(10);
    double observed = 0.0;
    for (int t = 0; t < 10000; ++t) {
        const Vector x = testing::random_vector(4, rng);
        const double h = 1e-6;
        double sq = 0.0;
        for (std::size_t k = 0; k < 4; ++k) {
            Vector up = x, dn = x;
            up[k] += h;
            dn[k] -= h;
            const double g = (task.mean(up) - task.mean(dn)) / (2 * h);
            sq += g * g;
        }
        observed = std::max(observed, std::sqrt(sq));
    }
    CHECK(observed <= task.lipschitz() * (1 + 1e-6));
    CHECK(task.lipschitz_observed() <= task.lipschitz() * (1 + 1e-9));
}

TEST_CASE("unknown family names are rejected") {
    CHECK_THROWS_AS(make_task("cubic", 2, 1.0), UnsupportedFamily);
    CHECK_THROWS_AS(make_task(Family::linear, 0, 1.0), InvalidArgument);
    CHECK_THROWS_AS(make_task(Family::linear, 2, -1.0), InvalidArgument);
}

TEST_CASE("analytic derivatives agree with central finite differences") {
    const double step = 1e-5;
    for (Family f : {Family::linear, Family::quadratic, Family::sine_mixture, Family::radial}) {
        CAPTURE(to_string(f));
        const RegressionTask task = make_task(spec_of(f, 3, 1.0));
        std::mt19937_64 rng(11);
        for (int t = 0; t < 100; ++t) {
            const Vector x = testing::random_vector(3, rng);
            const Vector g = task.gradient(x);
            const Matrix hess = task.hessian(x);
            for (std::size_t k = 0; k < 3; ++k) {
                Vector up = x, dn = x;
                up[k] += step;
                dn[k] -= step;
                const double fd = (task.mean(up) - task.mean(dn)) / (2 * step);
                CHECK(testing::relative_error(g[k], fd) < 1e-5);
                const Vector gu = task.gradient(up), gd = task.gradient(dn);
                for (std::size_t j = 0; j < 3; ++j)
                    CHECK(testing::relative_error(hess(j, k), (gu[j] - gd[j]) / (2 * step)) < 1e-5);
            }
            CHECK(task.laplacian(x) ==
                  doctest::Approx(hess(0, 0) + hess(1, 1) + hess(2, 2)).epsilon(1e-12));
        }
    }
}

TEST_CASE("datasets are bit-identical for the same seed") {
    const RegressionTask task = make_task(spec_of(Family::sine_mixture, 3, 0.5));
    const Dataset a = sample_dataset(task, 200, derive_seed(5, "data", 1));
    const Dataset b = sample_dataset(task, 200, derive_seed(5, "data", 1));
    std::ostringstream sa, sb;
    write_dataset_csv(a, sa);
    write_dataset_csv(b, sb);
    CHECK(sa.str() == sb.str());
    CHECK(a.xs == b.xs);
    CHECK(a.ys == b.ys);

    const Dataset c = sample_dataset(task, 200, derive_seed(5, "data", 2));
    CHECK_FALSE(a.ys == c.ys);
    CHECK(a.task_id == task.id());
}

TEST_CASE("dataset csv header and row count") {
    const RegressionTask task = make_task(Family::linear, 2, 1.0);
    std::ostringstream out;
    write_dataset_csv(sample_dataset(task, 3, 1), out);
    const std::string s = out.str();
    CHECK(s.rfind("x_1,x_2,y,epsilon\r\n", 0) == 0);
    std::size_t lines = 0;
    for (char ch : s) lines += ch == '\n';
    CHECK(lines == 4);
}

TEST_CASE("residual variance falls in the chi-square 99% interval") {
    const RegressionTask task = make_task(spec_of(Family::quadratic, 2, 1.0));
    const Dataset d = sample_dataset(task, 10000, 77);
    double mean = 0.0, worst = 0.0;
    for (std::size_t i = 0; i < d.n(); ++i) {
        worst = std::max(worst, std::abs(d.ys[i] - task.mean(d.xs.row(i)) - d.eps[i]));
        mean += d.eps[i];
    }
    CHECK(worst < 1e-12);
    mean /= static_cast<double>(d.n());
    double var = 0.0;
    for (double e : d.eps) var += (e - mean) * (e - mean);
    var /= static_cast<double>(d.n() - 1);
    CHECK(var >= 0.94);
    CHECK(var <= 1.06);
    CHECK(std::abs(mean) <= 4.0 / std::sqrt(10000.0));
}

TEST_CASE("heteroscedastic profile scales with the squared norm") {
    TaskSpec s = spec_of(Family::linear, 2, 0.5);
    s.heteroscedastic = true;
    const RegressionTask task = make_task(s);
    CHECK(task.noise_sd_at(Vector{0.0, 0.0}) == doctest::Approx(0.5));
    CHECK(task.noise_sd_at(Vector{1.0, 1.0}) == doctest::Approx(1.0));
}

TEST_CASE("query sampling: single point, uniform support, Gaussian mean") {
    const RegressionTask gauss = make_task(Family::linear, 3, 1.0);
    const Matrix one = sample_queries(gauss, 1, 4);
    CHECK(one.rows() == 1);
    for (std::size_t k = 0; k < 3; ++k) CHECK(std::isfinite(one(0, k)));

    const RegressionTask unif = make_task(Family::linear, 3, 1.0, InputLaw::uniform);
    const Matrix u = sample_queries(unif, 5000, 4);
    double widest = 0.0;
    for (double v : u.data()) widest = std::max(widest, std::abs(v));
    CHECK(widest <= 1.0);

    const Matrix g = sample_queries(gauss, 100000, derive_seed(9, "query"));
    for (std::size_t k = 0; k < 3; ++k) {
        double m = 0.0;
        for (std::size_t i = 0; i < g.rows(); ++i) m += g(i, k);
        CHECK(std::abs(m / static_cast<double>(g.rows())) <= 0.02);
    }
    double r2_max = 0.0;
    for (std::size_t i = 0; i < g.rows(); ++i)
        r2_max = std::max(r2_max, g(i, 0) * g(i, 0) + g(i, 1) * g(i, 1) + g(i, 2) * g(i, 2));
    CHECK(r2_max <= gaussian_query_ball_sq(3));
}

TEST_CASE("seed domains separate datasets from queries") {
    CHECK(derive_seed(1, "data", 0) != derive_seed(1, "query"));
    CHECK(derive_seed(1, "data", 0) != derive_seed(1, "data", 1));
    CHECK(derive_seed(1, "data", 0) != derive_seed(2, "data", 0));
    static_assert(derive_seed(1, "data", 0) == derive_seed(1, "data", 0));
}
