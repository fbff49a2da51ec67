#pragma once

#include "mhalab/mha.hpp"
#include "mhalab/synthetic.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace mhalab {

struct ExperimentPlan {
    RegressionTask task;
    ProjectionSet proj;
    WeightScheme weights;
    std::size_t n = 0;
    std::size_t R = 0; ///< replicates, >= 2
    std::size_t Q = 0; ///< quadrature queries, >= 1
    std::uint64_t master_seed = 0;
};

/// Head outputs minus the truth, m_hat_h(x_q; D_r) - m(x_q), for every
/// replicate r, query q and head h. Datasets depend only on (master_seed, r)
/// and queries only on master_seed, so two projection sets evaluated with the
/// same seed see common random numbers.
struct HeadEstimates {
    std::size_t R = 0, Q = 0, H = 0, n = 0;
    std::uint64_t master_seed = 0;
    Matrix queries; ///< Q x p
    Vector truth;   ///< m at the queries
    std::vector<double> dev;
    std::size_t degenerate = 0; ///< (replicate, head, query) triples with weight entropy < 1e-6

    double operator()(std::size_t r, std::size_t q, std::size_t h) const {
        return dev[(r * Q + q) * H + h];
    }
};

HeadEstimates compute_head_estimates(const RegressionTask& task, const ProjectionSet& proj,
                                     std::size_t n, std::size_t R, std::size_t Q,
                                     std::uint64_t master_seed);

/// Keeps the listed replicates (repeats allowed), in the given order.
HeadEstimates select_replicates(const HeadEstimates& est, const std::vector<std::size_t>& rows);

struct Estimate {
    double value = 0.0;
    double se = 0.0;
};

struct DecompositionReport {
    std::size_t H = 0, R = 0, Q = 0, n = 0;
    std::uint64_t master_seed = 0;
    WeightScheme weights;
    Matrix queries;
    Vector truth;

    Matrix bias_per_query; ///< Q x H, B_h(x_q)
    Matrix var_per_query;  ///< Q x H, V_h(x_q)

    Vector head_bias;           ///< mean over queries of B_h
    Vector head_bias_sq;        ///< integrated squared bias, debiased
    Vector head_var;            ///< integrated V_h
    Vector head_var_stderr;
    Vector head_mse;            ///< integrated single-head MSE
    Vector head_mse_stderr;
    Matrix cov;                 ///< integrated C, diagonal = head_var
    Matrix cov_stderr;

    Estimate ensemble_bias_sq;
    Estimate variance_term;
    Estimate covariance_term;
    Estimate mse_direct;
    Estimate identity_residual;

    double cov_min_eigenvalue = 0.0;
    bool cov_psd = true; ///< min eigenvalue >= -4 * max cov stderr

    std::size_t degenerate = 0;
    /// Per-replicate integrated squared error of the ensemble; mse_direct is its mean.
    Vector replicate_sq_error;

    bool identity_holds(double k = 4.0) const {
        return identity_residual.value <= k * identity_residual.se;
    }
};

/// Bias-variance-covariance decomposition from precomputed head outputs.
/// All sample moments use R - 1 denominators; squared biases are debiased by
/// subtracting the variance of the mean, so that
/// mse_direct = ensemble_bias_sq + variance_term + covariance_term holds on
/// the sample up to rounding.
DecompositionReport decompose(const HeadEstimates& est, const WeightScheme& weights);

DecompositionReport mc_decompose(const ExperimentPlan& plan);

struct BootstrapStderr {
    double ensemble_bias_sq = 0.0;
    double variance_term = 0.0;
    double covariance_term = 0.0;
    double mse_direct = 0.0;
};

/// Resamples replicates with replacement and recomputes the decomposition.
BootstrapStderr bootstrap_stderr(const HeadEstimates& est, const WeightScheme& weights,
                                 std::size_t resamples, std::uint64_t seed);

/// Density of the projected key W^T x under the task's input law and its
/// gradient. Gaussian: closed form. Uniform: Gaussian-kernel density estimate
/// from 1e4 draws, flagged approximate.
struct ProjectedDensity {
    double value = 0.0;
    Vector gradient;
    bool approximate = false;
};

ProjectedDensity projected_density(const RegressionTask& task, const Matrix& wk,
                                   std::span<const double> key);

struct TheoryValues {
    double bias = 0.0;     ///< B_1(x)
    double variance = 0.0; ///< V_1(x)
    double density = 0.0;  ///< p_K(W^T x)
    bool approximate = false;
};

/// Leading-order bias and variance of one head at x with bandwidth 1/sqrt(d_k).
/// These are asymptotic orders for trend checks, not finite-n truth. Throws
/// DensityTooSmall when p_K(W^T x) < 1e-8.
TheoryValues theoretical_bias_variance(const RegressionTask& task, const HeadConfig& head,
                                       std::span<const double> query_x, std::size_t n);

struct CovBoundRow {
    std::size_t h = 0, h2 = 0;
    double abs_cov = 0.0;
    double cov_stderr = 0.0;
    double gram_frobsq = 0.0; ///< on orthonormalized bases
    double min_density = 0.0;
    double bound = 0.0;
    bool satisfied = false; ///< |C| <= bound + 4 * stderr
};

/// |C_hh'| <= L^2 |G_hh'|^2 / (n h^{d_k} p_K) per pair, with the minimum
/// projected density of head h over the report's queries.
std::vector<CovBoundRow> check_cov_bound(const DecompositionReport& report,
                                         const ProjectionSet& proj, const RegressionTask& task);

/// Spearman rank correlation with average ranks for ties.
double spearman(const Vector& a, const Vector& b);

struct HdiSweepBase {
    RegressionTask task;
    std::size_t d_k = 2;
    std::size_t H = 4;
    double key_scale = 1.0;
    std::uint64_t projection_seed = 0;
    std::size_t n = 0, R = 0, Q = 0;
    std::uint64_t master_seed = 0;
};

struct HdiSweepRow {
    double mix = 0.0;
    double hdi = 0.0;
    double hdi_normalized = 0.0;
    double mse = 0.0;
    double se = 0.0;
    double identity_residual = 0.0;
    double identity_stderr = 0.0;
};

struct HdiSweepResult {
    std::vector<HdiSweepRow> rows;
    double spearman = 0.0; ///< between hdi_normalized and MSE
    /// MSE at the smallest mix minus MSE at the largest, paired over replicates.
    double endpoint_diff = 0.0;
    double endpoint_diff_stderr = 0.0;
};

/// One mc_decompose per mix with uniform weights and shared replicate seeds.
HdiSweepResult hdi_sweep(const HdiSweepBase& base, const std::vector<double>& mix_grid);

struct WeightingRow {
    std::string scheme;
    double rho = 0.0; ///< 0 for non-geometric schemes
    double mse = 0.0;
    double se = 0.0;
    double diff_vs_uniform = 0.0; ///< paired, negative means better than uniform
    double diff_stderr = 0.0;
};

struct WeightingResult {
    std::vector<std::size_t> head_order; ///< pilot ranking, best first
    Vector head_mse;                     ///< pilot integrated MSE, original head order
    Vector head_var;                     ///< main-run V_h in ranked order
    double delta_v = 0.0;                ///< max V_h - min V_h
    std::vector<WeightingRow> rows;      ///< uniform, fibonacci, geometric(rho)...
    std::string argmin;
    /// Some geometric rho has diff_vs_uniform < -k * diff_stderr, ignoring
    /// differences below 1e-12 of the uniform MSE.
    bool geometric_beats_uniform = false;
};

/// Ranks heads with a pilot run (seed domain "pilot"), then compares schemes on
/// one shared set of head outputs. `k` is the significance multiple.
WeightingResult weighting_compare(const ExperimentPlan& plan, const std::vector<double>& rho_grid,
                                  double k = 2.0);

} // namespace mhalab
