#pragma once

#include "mhalab/attention.hpp"

#include <optional>
#include <string_view>
#include <vector>

namespace mhalab {

/// H heads sharing (p, d_k). With `unit_frobenius` set every W^K has unit
/// Frobenius norm.
class ProjectionSet {
public:
    explicit ProjectionSet(std::vector<HeadConfig> heads, bool unit_frobenius = false);

    std::size_t H() const noexcept { return heads_.size(); }
    std::size_t p() const noexcept { return heads_.front().p(); }
    std::size_t d_k() const noexcept { return heads_.front().d_k(); }
    /// Total key dimension D = H * d_k.
    std::size_t budget() const noexcept { return H() * d_k(); }
    bool unit_frobenius() const noexcept { return unit_frobenius_; }

    const HeadConfig& head(std::size_t h) const;
    const std::vector<HeadConfig>& heads() const noexcept { return heads_; }

    /// Heads reordered so that result.head(i) == head(order[i]).
    ProjectionSet permuted(const std::vector<std::size_t>& order) const;

private:
    std::vector<HeadConfig> heads_;
    bool unit_frobenius_;
};

/// Regression heads (W^Q = W^K, values y) from a list of key matrices.
ProjectionSet projection_set_from_keys(const std::vector<Matrix>& wk);

enum class WeightKind { uniform, geometric, fibonacci, custom };

WeightKind parse_weight_kind(std::string_view name);
std::string_view to_string(WeightKind kind) noexcept;

struct WeightScheme {
    WeightKind kind = WeightKind::uniform;
    double rho = 1.0; ///< geometric decay, meaningful for kind == geometric
    Vector alpha;     ///< positive, sums to 1

    std::size_t H() const noexcept { return alpha.size(); }
    std::string label() const;
};

/// uniform / fibonacci / geometric(rho), rho in (0, 1].
WeightScheme make_weights(WeightKind kind, std::size_t H, double rho = 1.0);
/// Custom weights must be positive and sum to 1 within 1e-9.
WeightScheme make_custom_weights(Vector alpha);

/// sum_h alpha_h * attend(head_h, x, data).
double mha_estimate(const ProjectionSet& proj, const WeightScheme& weights,
                    std::span<const double> query_x, const Dataset& data);

/// Orthonormal basis (p x r) of the complement of every head's Range(W^K).
Matrix key_complement(const ProjectionSet& proj);

/// Adds a value component scales[h] * u_h, where u_h is a direction orthogonal
/// to every key subspace. Head h then averages extra zero-mean noise of
/// variance scales[h]^2 per token without changing its bias.
ProjectionSet contaminate_values(const ProjectionSet& proj, const Vector& scales);

} // namespace mhalab
