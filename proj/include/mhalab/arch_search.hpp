#pragma once

#include "mhalab/synthetic.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace mhalab {

struct Allocation {
    std::size_t H = 0;
    std::size_t d_k = 0;
    friend bool operator==(const Allocation&, const Allocation&) = default;
};

/// Every (H, d_k) with H * d_k = D, ascending in d_k.
std::vector<Allocation> enumerate_allocations(std::size_t D);

struct ArchSweepConfig {
    std::size_t D = 0;
    std::size_t n = 0, R = 0, Q = 0;
    std::uint64_t seed = 0;
    double key_scale = 1.0;
    /// Also run identical heads (mix = 0) on the same data for comparison.
    bool identical_control = false;
};

struct ArchRow {
    std::size_t H = 0, d_k = 0;
    double mse = 0.0;
    double se = 0.0;
    double bias_sq = 0.0;
    double var_term = 0.0;
    double cov_term = 0.0;
    double identity_residual = 0.0;
    double identity_stderr = 0.0;
    std::optional<double> control_mse;    ///< identical heads
    std::optional<double> control_diff;   ///< orthogonal minus identical, paired
    std::optional<double> control_diff_se;
};

struct ArchSweepResult {
    std::size_t D = 0;
    std::size_t n = 0;
    std::vector<ArchRow> rows;
    std::vector<std::string> skipped; ///< reasons for infeasible allocations
    std::size_t argmin_H = 0, argmin_d_k = 0;
    /// Nonnegative fit of mse ~ c1 d_k^-2 + c2 d_k^(d_k/2+1) / (n D).
    double c1 = 0.0, c2 = 0.0;
    double fit_residual = 0.0; ///< root mean squared residual
    /// Smoothness exponent of the scaling law; never estimated.
    std::optional<double> smoothness_d;

    bool interior_argmin() const;
    double model(double d_k) const;
};

/// Orthogonal heads (block basis, key scale applied), uniform weights, common
/// random numbers across allocations. Ties go to the larger H.
ArchSweepResult sweep_architectures(const RegressionTask& task, const ArchSweepConfig& cfg);

enum class TrendVerdict { flat, non_decreasing, violated };
std::string_view to_string(TrendVerdict v) noexcept;

struct ScalingTrend {
    std::vector<ArchSweepResult> sweeps; ///< one per n, ascending
    TrendVerdict verdict = TrendVerdict::flat;
    /// d_k* grew by a smaller factor than n over the grid.
    bool sublinear = true;
};

/// Needs at least three ascending n values; cfg.n is ignored.
ScalingTrend scaling_trend(const RegressionTask& task, const ArchSweepConfig& cfg,
                           const std::vector<std::size_t>& n_grid);

} // namespace mhalab
