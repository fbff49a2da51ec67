#pragma once

#include "mhalab/error.hpp"
#include "mhalab/mha.hpp"

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

namespace mhalab {

/// G = (W^K_h)^T W^K_{h2} / d_k.
Matrix cross_gram(const ProjectionSet& proj, std::size_t h, std::size_t h2);

/// Principal angles between Range(W^K_h) and Range(W^K_{h2}), ascending, in
/// [0, pi/2]. Computed from the singular values of U_h^T U_{h2} on
/// QR-orthonormalized bases.
Vector principal_angles(const ProjectionSet& proj, std::size_t h, std::size_t h2);

struct HdiValue {
    /// 1 - 2/(H(H-1)) sum_{h<h'} |G_hh'|_F^2, on the matrices as given.
    double hdi = 0.0;
    /// 1 - mean_{h<h'} |U_h^T U_h'|_F^2 / d_k on orthonormalized bases:
    /// 0 for identical subspaces, 1 for mutually orthogonal ones.
    double hdi_normalized = 0.0;
};

/// Throws NeedsTwoHeads when H < 2.
HdiValue hdi(const ProjectionSet& proj);
HdiValue hdi(const std::vector<Matrix>& keys);

struct DiversityReport {
    Matrix gram_frobsq;            ///< H x H, |G_hh'|_F^2, diagonal left at 0
    Matrix gram_frobsq_normalized; ///< H x H, sum_j cos^2 theta_j
    std::map<std::pair<std::size_t, std::size_t>, Vector> principal_angles; ///< h < h'
    double hdi = 0.0;
    double hdi_normalized = 0.0;
};

DiversityReport diversity_report(const ProjectionSet& proj);

/// Orthonormal heads interpolating between one shared random frame (mix = 0)
/// and mutually orthogonal frames (mix = 1). Head h is the orthonormalized
/// blend (1 - mix) Q_0 + mix Q_h of column blocks of one random orthogonal
/// basis, so head 0 is the same frame for every mix. Throws Infeasible when
/// mix = 1 and H d_k > p.
ProjectionSet make_projection_family(std::size_t p, std::size_t d_k, std::size_t H, double mix,
                                     std::uint64_t seed);

/// W^K (and a tied W^Q) multiplied by key_scale * d_k^{1/4}, so that the
/// logit spread q^T k / sqrt(d_k) grows like sqrt(d_k) on unit-variance inputs.
ProjectionSet with_key_scale(const ProjectionSet& proj, double key_scale);

/// J = sum_{h<h'} |G_hh'|_F^2.
double gram_objective(const std::vector<Matrix>& keys);
/// Euclidean gradient of J: dJ/dW_h = (2/d_k) sum_{h' != h} W_h' G_hh'^T.
std::vector<Matrix> gram_objective_gradient(const std::vector<Matrix>& keys);

struct OptimizeResult {
    ProjectionSet projections; ///< unit-Frobenius heads
    std::vector<double> trace;  ///< objective at start and after every accepted step
    std::size_t iterations = 0;
};

/// Projected gradient descent on the product of unit Frobenius spheres.
/// Requires H d_k <= p.
OptimizeResult optimize_projections(std::size_t p, std::size_t d_k, std::size_t H,
                                    std::uint64_t seed, std::size_t steps, double step_size);
OptimizeResult optimize_projections_from(std::vector<Matrix> start, std::size_t steps,
                                         double step_size);

// Weight-file import/export.
//
//   {"version": 1, "heads": [{"p": 8, "d_k": 2, "data": [row-major p*d_k numbers]}, ...]}

class WeightFileError : public Error {
public:
    WeightFileError(const std::string& what, std::size_t byte_offset, long head = -1)
        : Error(what), byte_offset_(byte_offset), head_(head) {}
    std::size_t byte_offset() const noexcept { return byte_offset_; }
    /// Offending head index, or -1 when the error is not tied to a head.
    long head() const noexcept { return head_; }

private:
    std::size_t byte_offset_;
    long head_;
};

std::vector<Matrix> parse_weight_document(const std::string& text);
std::vector<Matrix> read_weight_file(const std::string& path);
std::string write_weight_document(const std::vector<Matrix>& keys);

} // namespace mhalab
