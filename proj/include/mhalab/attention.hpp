#pragma once

#include "mhalab/synthetic.hpp"
#include "mhalab/tensor.hpp"

#include <span>

namespace mhalab {

/// One attention head: query/key projections (p x d_k) and a value read-out.
///
/// Values are read from the augmented token (x_i, y_i):
///     v_i = wv . x_i + wy * y_i
/// With wy = 0 this is the scalar value projection v_i = (W^V)^T x_i; with
/// wv = 0, wy = 1 the head is a Nadaraya-Watson regressor of y on x.
class HeadConfig {
public:
    HeadConfig(Matrix wq, Matrix wk, Vector wv, double wy);

    /// W^Q = W^K, values y_i.
    static HeadConfig regression(Matrix wk);

    const Matrix& wq() const noexcept { return wq_; }
    const Matrix& wk() const noexcept { return wk_; }
    const Vector& wv() const noexcept { return wv_; }
    double wy() const noexcept { return wy_; }
    std::size_t p() const noexcept { return wk_.rows(); }
    std::size_t d_k() const noexcept { return wk_.cols(); }
    /// h = 1 / sqrt(d_k).
    double bandwidth() const noexcept;

    HeadConfig with_wk(Matrix wk) const;
    HeadConfig with_values(Vector wv, double wy) const;

private:
    Matrix wq_;
    Matrix wk_;
    Vector wv_;
    double wy_;
};

struct AttentionOutput {
    double estimate = 0.0;
    Vector weights;

    /// Shannon entropy of the weights in nats.
    double entropy() const;
};

/// Softmax of q^T k_i / sqrt(d_k) with q = W^Q^T x, k_i = W^K^T x_i, applied to v_i.
AttentionOutput attend(const HeadConfig& head, std::span<const double> query_x,
                       const Dataset& data);

/// Raw logits q^T k_i / sqrt(d_k).
Vector attention_logits(const HeadConfig& head, std::span<const double> query_x,
                        const Dataset& data);
Vector attention_values(const HeadConfig& head, const Dataset& data);

/// Kernel-weighted average sum K_i v_i / sum K_i with K_i = exp(logit_i),
/// evaluated without stabilization. Used as the independent route for attend.
double nw_reference(std::span<const double> kernel_logits, std::span<const double> values);

/// Entropy (nats) below which a weight vector counts as degenerate.
inline constexpr double kDegenerateEntropy = 1e-6;

/// Head evaluated at every query against one dataset, keys computed once.
struct BatchAttention {
    Vector estimates;
    std::size_t degenerate = 0;
};
BatchAttention attend_batch(const HeadConfig& head, const Matrix& queries, const Dataset& data);

} // namespace mhalab
