#pragma once

// Shared helpers and independent oracles for the unit tests.

#include "mhalab/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

namespace testing {

inline mhalab::Matrix random_matrix(std::size_t rows, std::size_t cols, std::mt19937_64& rng) {
    std::normal_distribution<double> normal(0.0, 1.0);
    mhalab::Matrix m(rows, cols);
    for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < cols; ++j) m(i, j) = normal(rng);
    return m;
}

inline std::vector<double> random_vector(std::size_t n, std::mt19937_64& rng) {
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<double> v(n);
    for (double& x : v) x = normal(rng);
    return v;
}

inline mhalab::Matrix naive_product(const mhalab::Matrix& a, const mhalab::Matrix& b) {
    mhalab::Matrix c(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < b.cols(); ++j) {
            double s = 0.0;
            for (std::size_t k = 0; k < a.cols(); ++k) s += a(i, k) * b(k, j);
            c(i, j) = s;
        }
    return c;
}

inline mhalab::Matrix naive_transpose(const mhalab::Matrix& a) {
    mhalab::Matrix t(a.cols(), a.rows());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
    return t;
}

/// Eigenvalues of a small symmetric matrix by classical Jacobi rotations
/// (largest off-diagonal pivot), descending.
inline std::vector<double> jacobi_eigenvalues(mhalab::Matrix a) {
    const std::size_t n = a.rows();
    for (int iter = 0; iter < 10000; ++iter) {
        std::size_t p = 0, q = 1;
        double best = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = i + 1; j < n; ++j)
                if (std::abs(a(i, j)) > best) {
                    best = std::abs(a(i, j));
                    p = i;
                    q = j;
                }
        if (best < 1e-15) break;
        const double theta = 0.5 * std::atan2(2.0 * a(p, q), a(q, q) - a(p, p));
        const double c = std::cos(theta), s = std::sin(theta);
        for (std::size_t k = 0; k < n; ++k) {
            const double akp = a(k, p), akq = a(k, q);
            a(k, p) = c * akp - s * akq;
            a(k, q) = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
            const double apk = a(p, k), aqk = a(q, k);
            a(p, k) = c * apk - s * aqk;
            a(q, k) = s * apk + c * aqk;
        }
    }
    std::vector<double> ev(n);
    for (std::size_t i = 0; i < n; ++i) ev[i] = a(i, i);
    std::sort(ev.rbegin(), ev.rend());
    return ev;
}

/// Direct softmax-weighted average, written independently of the library.
inline double softmax_average(const std::vector<double>& logits, const std::vector<double>& values) {
    double mx = logits[0];
    for (double l : logits) mx = std::max(mx, l);
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        const double w = std::exp(logits[i] - mx);
        num += w * values[i];
        den += w;
    }
    return num / den;
}

inline double relative_error(double a, double b) {
    return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)});
}

} // namespace testing
