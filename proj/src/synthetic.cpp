#include "mhalab/synthetic.hpp"

#include "mhalab/csv.hpp"
#include "mhalab/error.hpp"
#include "mhalab/seeding.hpp"

#include <boost/math/special_functions/gamma.hpp>

#include <algorithm>
#include <cmath>
#include <ostream>
#include <random>

namespace mhalab {

Family parse_family(std::string_view name) {
    if (name == "linear") return Family::linear;
    if (name == "quadratic") return Family::quadratic;
    if (name == "sine_mixture") return Family::sine_mixture;
    if (name == "radial") return Family::radial;
    throw UnsupportedFamily(std::string(name));
}

InputLaw parse_input_law(std::string_view name) {
    if (name == "gaussian") return InputLaw::gaussian;
    if (name == "uniform") return InputLaw::uniform;
    throw InvalidArgument("unknown input law '" + std::string(name) + "'");
}

std::string_view to_string(Family f) noexcept {
    switch (f) {
    case Family::linear: return "linear";
    case Family::quadratic: return "quadratic";
    case Family::sine_mixture: return "sine_mixture";
    case Family::radial: return "radial";
    }
    return "?";
}

std::string_view to_string(InputLaw law) noexcept {
    return law == InputLaw::gaussian ? "gaussian" : "uniform";
}

namespace {

void draw_point(InputLaw law, Rng& rng, std::span<double> out) {
    if (law == InputLaw::gaussian) {
        std::normal_distribution<double> normal(0.0, 1.0);
        for (double& v : out) v = normal(rng);
    } else {
        std::uniform_real_distribution<double> unif(-1.0, 1.0);
        for (double& v : out) v = unif(rng);
    }
}

double spectral_norm(const Matrix& a) {
    const Vector sv = singular_values(a);
    return sv.empty() ? 0.0 : sv.front();
}

} // namespace

RegressionTask::RegressionTask(TaskSpec spec) : spec_(spec) {
    if (spec_.p < 1) throw InvalidArgument("task needs p >= 1");
    if (!(spec_.noise_sd >= 0.0)) throw InvalidArgument("noise_sd must be nonnegative");
    if (!std::isfinite(spec_.amplitude)) throw InvalidArgument("amplitude must be finite");

    const std::size_t p = spec_.p;
    const double root_p = std::sqrt(static_cast<double>(p));
    Rng rng(derive_seed(spec_.param_seed, "task/" + std::string(to_string(spec_.family)), p));
    std::normal_distribution<double> normal(0.0, 1.0);

    switch (spec_.family) {
    case Family::linear: {
        beta_.resize(p);
        for (double& b : beta_) b = spec_.amplitude * normal(rng) / root_p;
        lipschitz_ = norm2(beta_);
        break;
    }
    case Family::quadratic: {
        Matrix g(p, p);
        for (std::size_t i = 0; i < p; ++i)
            for (std::size_t j = 0; j < p; ++j) g(i, j) = normal(rng);
        quad_ = Matrix(p, p);
        for (std::size_t i = 0; i < p; ++i)
            for (std::size_t j = 0; j < p; ++j)
                quad_(i, j) = spec_.amplitude * (g(i, j) + g(j, i)) / (2.0 * root_p);
        lipschitz_ = 2.0 * spectral_norm(quad_) * support_radius();
        break;
    }
    case Family::sine_mixture: {
        if (spec_.components < 1) throw InvalidArgument("sine_mixture needs components >= 1");
        omega_ = Matrix(spec_.components, p);
        for (std::size_t j = 0; j < spec_.components; ++j)
            for (std::size_t k = 0; k < p; ++k)
                omega_(j, k) = spec_.frequency * normal(rng) / root_p;
        double sum = 0.0;
        for (std::size_t j = 0; j < spec_.components; ++j) sum += norm2(omega_.row(j));
        lipschitz_ = std::abs(spec_.amplitude) * sum;
        break;
    }
    case Family::radial: {
        length_ = root_p;
        lipschitz_ = std::abs(spec_.amplitude) * std::exp(-0.5) / length_;
        break;
    }
    }

    // Certify the bound over 1e4 draws from the law, clipped to the support box.
    Rng check(derive_seed(spec_.param_seed, "lipschitz-check", p));
    Vector x(p);
    const double clip = spec_.law == InputLaw::gaussian ? 6.0 : 1.0;
    for (int s = 0; s < 10000; ++s) {
        draw_point(spec_.law, check, x);
        for (double& v : x) v = std::clamp(v, -clip, clip);
        lipschitz_observed_ = std::max(lipschitz_observed_, norm2(gradient(x)));
    }
    if (lipschitz_observed_ > lipschitz_ * (1.0 + 1e-9) + 1e-300) {
        throw NumericalFailure("Lipschitz bound violated by sampled gradient",
                               lipschitz_observed_ - lipschitz_);
    }
}

std::string RegressionTask::id() const {
    return std::string(to_string(spec_.family)) + "/p=" + std::to_string(spec_.p) + "/" +
           std::string(to_string(spec_.law)) + "/seed=" + std::to_string(spec_.param_seed);
}

double RegressionTask::support_radius() const noexcept {
    const double root_p = std::sqrt(static_cast<double>(spec_.p));
    return spec_.law == InputLaw::gaussian ? 6.0 * root_p : root_p;
}

void RegressionTask::check_dimension(std::span<const double> x) const {
    if (x.size() != spec_.p) {
        throw ShapeError("point of dimension " + std::to_string(x.size()) +
                         " passed to task with p = " + std::to_string(spec_.p));
    }
}

double RegressionTask::mean(std::span<const double> x) const {
    check_dimension(x);
    switch (spec_.family) {
    case Family::linear: return dot(beta_, x);
    case Family::quadratic: {
        double s = 0.0;
        for (std::size_t i = 0; i < spec_.p; ++i) s += x[i] * dot(quad_.row(i), x);
        return s;
    }
    case Family::sine_mixture: {
        double s = 0.0;
        for (std::size_t j = 0; j < omega_.rows(); ++j) s += std::sin(dot(omega_.row(j), x));
        return spec_.amplitude * s;
    }
    case Family::radial: {
        const double r2 = dot(x, x);
        return spec_.amplitude * std::exp(-r2 / (2.0 * length_ * length_));
    }
    }
    return 0.0;
}

Vector RegressionTask::gradient(std::span<const double> x) const {
    check_dimension(x);
    const std::size_t p = spec_.p;
    Vector g(p, 0.0);
    switch (spec_.family) {
    case Family::linear: g = beta_; break;
    case Family::quadratic: {
        for (std::size_t i = 0; i < p; ++i) g[i] = 2.0 * dot(quad_.row(i), x);
        break;
    }
    case Family::sine_mixture: {
        for (std::size_t j = 0; j < omega_.rows(); ++j) {
            const double c = spec_.amplitude * std::cos(dot(omega_.row(j), x));
            for (std::size_t k = 0; k < p; ++k) g[k] += c * omega_(j, k);
        }
        break;
    }
    case Family::radial: {
        const double l2 = length_ * length_;
        const double m = mean(x);
        for (std::size_t k = 0; k < p; ++k) g[k] = -x[k] / l2 * m;
        break;
    }
    }
    return g;
}

Matrix RegressionTask::hessian(std::span<const double> x) const {
    check_dimension(x);
    const std::size_t p = spec_.p;
    Matrix h(p, p);
    switch (spec_.family) {
    case Family::linear: break;
    case Family::quadratic: h = 2.0 * quad_; break;
    case Family::sine_mixture: {
        for (std::size_t j = 0; j < omega_.rows(); ++j) {
            const double s = -spec_.amplitude * std::sin(dot(omega_.row(j), x));
            for (std::size_t a = 0; a < p; ++a)
                for (std::size_t b = 0; b < p; ++b) h(a, b) += s * omega_(j, a) * omega_(j, b);
        }
        break;
    }
    case Family::radial: {
        const double l2 = length_ * length_;
        const double m = mean(x);
        for (std::size_t a = 0; a < p; ++a)
            for (std::size_t b = 0; b < p; ++b)
                h(a, b) = m * (x[a] * x[b] / (l2 * l2) - (a == b ? 1.0 / l2 : 0.0));
        break;
    }
    }
    return h;
}

double RegressionTask::laplacian(std::span<const double> x) const {
    const Matrix h = hessian(x);
    double t = 0.0;
    for (std::size_t i = 0; i < h.rows(); ++i) t += h(i, i);
    return t;
}

double RegressionTask::noise_sd_at(std::span<const double> x) const {
    if (!spec_.heteroscedastic) return spec_.noise_sd;
    return spec_.noise_sd * (1.0 + dot(x, x) / static_cast<double>(spec_.p));
}

RegressionTask make_task(const TaskSpec& spec) { return RegressionTask(spec); }

RegressionTask make_task(Family family, std::size_t p, double noise_sd, InputLaw law) {
    TaskSpec spec;
    spec.family = family;
    spec.p = p;
    spec.noise_sd = noise_sd;
    spec.law = law;
    return RegressionTask(spec);
}

RegressionTask make_task(std::string_view family, std::size_t p, double noise_sd, InputLaw law) {
    return make_task(parse_family(family), p, noise_sd, law);
}

Dataset sample_dataset(const RegressionTask& task, std::size_t n, std::uint64_t seed) {
    if (n < 1) throw InvalidArgument("sample_dataset needs n >= 1");
    const std::size_t p = task.p();
    Dataset d;
    d.xs = Matrix(n, p);
    d.ys.resize(n);
    d.eps.resize(n);
    d.seed = seed;
    d.task_id = task.id();
    Rng rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (std::size_t i = 0; i < n; ++i) {
        auto x = d.xs.row(i);
        draw_point(task.law(), rng, x);
        const double z = normal(rng);
        const double sd = task.noise_sd_at(x);
        d.eps[i] = sd == 0.0 ? 0.0 : sd * z;
        d.ys[i] = task.mean(x) + d.eps[i];
    }
    return d;
}

double gaussian_query_ball_sq(std::size_t p) {
    const double mass = std::erf(3.0 / std::sqrt(2.0));
    return 2.0 * boost::math::gamma_p_inv(0.5 * static_cast<double>(p), mass);
}

Matrix sample_queries(const RegressionTask& task, std::size_t q, std::uint64_t seed) {
    if (q < 1) throw InvalidArgument("sample_queries needs q >= 1");
    const std::size_t p = task.p();
    Matrix out(q, p);
    Rng rng(seed);
    const double ball = task.law() == InputLaw::gaussian ? gaussian_query_ball_sq(p) : 0.0;
    for (std::size_t i = 0; i < q; ++i) {
        auto x = out.row(i);
        do {
            draw_point(task.law(), rng, x);
        } while (task.law() == InputLaw::gaussian && dot(x, x) > ball);
    }
    return out;
}

void write_dataset_csv(const Dataset& data, std::ostream& out) {
    CsvWriter csv(out);
    std::vector<std::string> header;
    for (std::size_t j = 0; j < data.xs.cols(); ++j) header.push_back("x_" + std::to_string(j + 1));
    header.push_back("y");
    header.push_back("epsilon");
    csv.row(header);
    for (std::size_t i = 0; i < data.n(); ++i) {
        std::vector<std::string> fields;
        for (double v : data.xs.row(i)) fields.push_back(format_double(v));
        fields.push_back(format_double(data.ys[i]));
        fields.push_back(format_double(data.eps[i]));
        csv.row(fields);
    }
}

} // namespace mhalab
