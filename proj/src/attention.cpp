#include "mhalab/attention.hpp"

#include "mhalab/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace mhalab {

HeadConfig::HeadConfig(Matrix wq, Matrix wk, Vector wv, double wy)
    : wq_(std::move(wq)), wk_(std::move(wk)), wv_(std::move(wv)), wy_(wy) {
    if (wk_.cols() == 0 || wk_.rows() == 0) throw ShapeError("head needs a nonempty W^K");
    if (wq_.rows() != wk_.rows() || wq_.cols() != wk_.cols()) {
        throw ShapeError("W^Q is " + wq_.shape_string() + " but W^K is " + wk_.shape_string());
    }
    if (wv_.size() != wk_.rows()) {
        throw ShapeError("value vector has length " + std::to_string(wv_.size()) +
                         ", expected p = " + std::to_string(wk_.rows()));
    }
    if (!std::isfinite(wy_)) throw InvalidArgument("response weight must be finite");
    for (double v : wv_)
        if (!std::isfinite(v)) throw InvalidArgument("value vector must be finite");
}

HeadConfig HeadConfig::regression(Matrix wk) {
    Matrix wq = wk;
    const std::size_t p = wk.rows();
    return HeadConfig(std::move(wq), std::move(wk), Vector(p, 0.0), 1.0);
}

double HeadConfig::bandwidth() const noexcept {
    return 1.0 / std::sqrt(static_cast<double>(d_k()));
}

HeadConfig HeadConfig::with_wk(Matrix wk) const {
    const bool tied = wq_ == wk_;
    Matrix wq = tied ? wk : wq_;
    return HeadConfig(std::move(wq), std::move(wk), wv_, wy_);
}

HeadConfig HeadConfig::with_values(Vector wv, double wy) const {
    return HeadConfig(wq_, wk_, std::move(wv), wy);
}

double AttentionOutput::entropy() const {
    double h = 0.0;
    for (double w : weights)
        if (w > 0.0) h -= w * std::log(w);
    return h;
}

namespace {

void check_data(const HeadConfig& head, const Dataset& data) {
    if (data.n() == 0) throw EmptyData();
    if (data.xs.cols() != head.p()) {
        throw ShapeError("dataset has dimension " + std::to_string(data.xs.cols()) +
                         " but head expects p = " + std::to_string(head.p()));
    }
}

Vector project_query(const HeadConfig& head, std::span<const double> x) {
    if (x.size() != head.p()) {
        throw ShapeError("query has dimension " + std::to_string(x.size()) +
                         " but head expects p = " + std::to_string(head.p()));
    }
    return matvec_t(head.wq(), x);
}

// Stable softmax in place; returns entropy.
double softmax_inplace(Vector& logits) {
    const double mx = *std::max_element(logits.begin(), logits.end());
    double total = 0.0;
    double tilt = 0.0;
    for (double& l : logits) {
        const double shifted = l - mx;
        l = std::exp(shifted);
        total += l;
        tilt += l * shifted;
    }
    for (double& l : logits) l /= total;
    // -sum w log w with log w = shifted - log(total)
    return std::max(0.0, std::log(total) - tilt / total);
}

} // namespace

Vector attention_values(const HeadConfig& head, const Dataset& data) {
    check_data(head, data);
    Vector v(data.n());
    for (std::size_t i = 0; i < data.n(); ++i)
        v[i] = dot(head.wv(), data.xs.row(i)) + head.wy() * data.ys[i];
    return v;
}

Vector attention_logits(const HeadConfig& head, std::span<const double> query_x,
                        const Dataset& data) {
    check_data(head, data);
    const Vector q = project_query(head, query_x);
    const double scale = 1.0 / std::sqrt(static_cast<double>(head.d_k()));
    Vector logits(data.n());
    for (std::size_t i = 0; i < data.n(); ++i) {
        const Vector k = matvec_t(head.wk(), data.xs.row(i));
        logits[i] = dot(q, k) * scale;
    }
    return logits;
}

AttentionOutput attend(const HeadConfig& head, std::span<const double> query_x,
                       const Dataset& data) {
    Vector w = attention_logits(head, query_x, data);
    const Vector v = attention_values(head, data);
    softmax_inplace(w);
    double est = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) est += w[i] * v[i];
    return {est, std::move(w)};
}

double nw_reference(std::span<const double> kernel_logits, std::span<const double> values) {
    if (kernel_logits.size() != values.size()) {
        throw ShapeError("nw_reference: " + std::to_string(kernel_logits.size()) + " logits but " +
                         std::to_string(values.size()) + " values");
    }
    if (kernel_logits.empty()) throw EmptyData();
    double num = 0.0;
    double den = 0.0;
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (!std::isfinite(kernel_logits[i]) || !std::isfinite(values[i]))
            throw InvalidArgument("nw_reference: non-finite input");
        const double k = std::exp(kernel_logits[i]);
        num += k * values[i];
        den += k;
    }
    if (den == 0.0 || !std::isfinite(den) || !std::isfinite(num)) {
        throw DegenerateKernel("kernel sum " + std::to_string(den) + " is not usable");
    }
    return num / den;
}

BatchAttention attend_batch(const HeadConfig& head, const Matrix& queries, const Dataset& data) {
    check_data(head, data);
    if (queries.cols() != head.p()) {
        throw ShapeError("queries are " + queries.shape_string() + " but head expects p = " +
                         std::to_string(head.p()));
    }
    const std::size_t n = data.n();
    const std::size_t dk = head.d_k();
    const Matrix keys = matmul(data.xs, head.wk());        // n x d_k
    const Matrix projected = matmul(queries, head.wq());   // Q x d_k
    const Vector values = attention_values(head, data);
    const double scale = 1.0 / std::sqrt(static_cast<double>(dk));

    BatchAttention out;
    out.estimates.resize(queries.rows());
    Vector w(n);
    for (std::size_t q = 0; q < queries.rows(); ++q) {
        const auto qv = projected.row(q);
        for (std::size_t i = 0; i < n; ++i) {
            const auto kv = keys.row(i);
            double s = 0.0;
            for (std::size_t j = 0; j < dk; ++j) s += qv[j] * kv[j];
            w[i] = s * scale;
        }
        const double entropy = softmax_inplace(w);
        if (entropy < kDegenerateEntropy) ++out.degenerate;
        double est = 0.0;
        for (std::size_t i = 0; i < n; ++i) est += w[i] * values[i];
        out.estimates[q] = est;
    }
    return out;
}

} // namespace mhalab
