#pragma once

#include "mhalab/tensor.hpp"

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>

namespace mhalab {

enum class Family { linear, quadratic, sine_mixture, radial };
enum class InputLaw { gaussian, uniform };

Family parse_family(std::string_view name);
InputLaw parse_input_law(std::string_view name);
std::string_view to_string(Family f) noexcept;
std::string_view to_string(InputLaw law) noexcept;

struct TaskSpec {
    Family family = Family::quadratic;
    std::size_t p = 1;
    double noise_sd = 1.0;
    InputLaw law = InputLaw::gaussian;
    /// sigma(x) = noise_sd * (1 + |x|^2 / p) when set.
    bool heteroscedastic = false;
    double amplitude = 1.0;
    /// Sine mixture: expected |omega_j|. Ignored by the other families.
    double frequency = 2.0;
    std::size_t components = 3;
    std::uint64_t param_seed = 0;
};

/// Synthetic regression problem with closed-form m, grad m and Hessian.
class RegressionTask {
public:
    explicit RegressionTask(TaskSpec spec);

    const TaskSpec& spec() const noexcept { return spec_; }
    std::size_t p() const noexcept { return spec_.p; }
    Family family() const noexcept { return spec_.family; }
    InputLaw law() const noexcept { return spec_.law; }
    double lipschitz() const noexcept { return lipschitz_; }
    /// Largest |grad m| seen over the 1e4-point construction check.
    double lipschitz_observed() const noexcept { return lipschitz_observed_; }
    std::string id() const;

    double mean(std::span<const double> x) const;
    Vector gradient(std::span<const double> x) const;
    Matrix hessian(std::span<const double> x) const;
    double laplacian(std::span<const double> x) const;
    double noise_sd_at(std::span<const double> x) const;

    const Vector& beta() const noexcept { return beta_; }
    const Matrix& quadratic_form() const noexcept { return quad_; }
    /// components x p, one frequency vector per row.
    const Matrix& frequencies() const noexcept { return omega_; }
    double length_scale() const noexcept { return length_; }

    /// Radius of the region over which the Lipschitz bound is certified:
    /// sqrt(p) for the unit cube, 6 sqrt(p) for the 6-sigma Gaussian box.
    double support_radius() const noexcept;

private:
    void check_dimension(std::span<const double> x) const;

    TaskSpec spec_;
    Vector beta_;
    Matrix quad_;
    Matrix omega_;
    double length_ = 1.0;
    double lipschitz_ = 0.0;
    double lipschitz_observed_ = 0.0;
};

RegressionTask make_task(const TaskSpec& spec);
RegressionTask make_task(Family family, std::size_t p, double noise_sd,
                         InputLaw law = InputLaw::gaussian);
/// Name-based factory; throws UnsupportedFamily for unknown names.
RegressionTask make_task(std::string_view family, std::size_t p, double noise_sd,
                         InputLaw law = InputLaw::gaussian);

struct Dataset {
    Matrix xs; ///< n x p
    Vector ys;
    Vector eps; ///< ys - m(xs), kept for inspection
    std::uint64_t seed = 0;
    std::string task_id;

    std::size_t n() const noexcept { return ys.size(); }
};

Dataset sample_dataset(const RegressionTask& task, std::size_t n, std::uint64_t seed);

/// Quadrature nodes for integrated quantities. Gaussian draws are restricted
/// to the ball holding erf(3/sqrt 2) of the mass.
Matrix sample_queries(const RegressionTask& task, std::size_t q, std::uint64_t seed);

/// Squared radius of the Gaussian query ball in dimension p.
double gaussian_query_ball_sq(std::size_t p);

/// Header x_1..x_p,y,epsilon.
void write_dataset_csv(const Dataset& data, std::ostream& out);

} // namespace mhalab
