#include "mhalab/tensor.hpp"

#include "mhalab/error.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

namespace mhalab {

namespace {

void require_finite(const Matrix& m, const char* op) {
    for (double v : m.data()) {
        if (!std::isfinite(v)) {
            throw NumericalFailure(std::string(op) + " produced a non-finite entry", v);
        }
    }
}

void require_same_shape(const Matrix& a, const Matrix& b, const char* op) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw ShapeError(std::string(op) + ": shape mismatch " + a.shape_string() + " vs " +
                         b.shape_string());
    }
}

} // namespace

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows * cols) {
        throw ShapeError("matrix data length " + std::to_string(data_.size()) +
                         " does not match shape " + shape_string());
    }
    require_finite(*this, "matrix construction");
}

Matrix::Matrix(std::initializer_list<std::initializer_list<double>> rows) {
    rows_ = rows.size();
    cols_ = rows_ == 0 ? 0 : rows.begin()->size();
    data_.reserve(rows_ * cols_);
    for (const auto& r : rows) {
        if (r.size() != cols_) throw ShapeError("ragged matrix initializer");
        data_.insert(data_.end(), r.begin(), r.end());
    }
    require_finite(*this, "matrix construction");
}

Matrix Matrix::identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
}

Vector Matrix::column(std::size_t c) const {
    Vector out(rows_);
    for (std::size_t r = 0; r < rows_; ++r) out[r] = (*this)(r, c);
    return out;
}

void Matrix::set_column(std::size_t c, std::span<const double> values) {
    if (values.size() != rows_) throw ShapeError("set_column: length mismatch");
    for (std::size_t r = 0; r < rows_; ++r) (*this)(r, c) = values[r];
}

std::string Matrix::shape_string() const {
    return std::to_string(rows_) + "x" + std::to_string(cols_);
}

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows()) {
        throw ShapeError("matmul: inner dimensions differ, " + a.shape_string() + " times " +
                         b.shape_string());
    }
    Matrix out(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t k = 0; k < a.cols(); ++k) {
            const double aik = a(i, k);
            if (aik == 0.0) continue;
            for (std::size_t j = 0; j < b.cols(); ++j) out(i, j) += aik * b(k, j);
        }
    }
    require_finite(out, "matmul");
    return out;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows()) {
        throw ShapeError("matmul_tn: row counts differ, " + a.shape_string() + " vs " +
                         b.shape_string());
    }
    Matrix out(a.cols(), b.cols());
    for (std::size_t k = 0; k < a.rows(); ++k) {
        for (std::size_t i = 0; i < a.cols(); ++i) {
            const double aki = a(k, i);
            if (aki == 0.0) continue;
            for (std::size_t j = 0; j < b.cols(); ++j) out(i, j) += aki * b(k, j);
        }
    }
    require_finite(out, "matmul_tn");
    return out;
}

Matrix transpose(const Matrix& a) {
    Matrix out(a.cols(), a.rows());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j) out(j, i) = a(i, j);
    return out;
}

Vector matvec(const Matrix& a, std::span<const double> x) {
    if (a.cols() != x.size()) {
        throw ShapeError("matvec: " + a.shape_string() + " times vector of length " +
                         std::to_string(x.size()));
    }
    Vector out(a.rows(), 0.0);
    for (std::size_t i = 0; i < a.rows(); ++i) out[i] = dot(a.row(i), x);
    return out;
}

Vector matvec_t(const Matrix& a, std::span<const double> x) {
    if (a.rows() != x.size()) {
        throw ShapeError("matvec_t: transpose of " + a.shape_string() +
                         " times vector of length " + std::to_string(x.size()));
    }
    Vector out(a.cols(), 0.0);
    for (std::size_t i = 0; i < a.rows(); ++i) {
        const double xi = x[i];
        for (std::size_t j = 0; j < a.cols(); ++j) out[j] += a(i, j) * xi;
    }
    return out;
}

Matrix operator+(const Matrix& a, const Matrix& b) {
    require_same_shape(a, b, "add");
    Matrix out = a;
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j) out(i, j) += b(i, j);
    require_finite(out, "add");
    return out;
}

Matrix operator-(const Matrix& a, const Matrix& b) {
    require_same_shape(a, b, "subtract");
    Matrix out = a;
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j) out(i, j) -= b(i, j);
    require_finite(out, "subtract");
    return out;
}

Matrix operator*(double s, const Matrix& a) {
    Matrix out = a;
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j) out(i, j) *= s;
    require_finite(out, "scale");
    return out;
}

double dot(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw ShapeError("dot: length mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

double norm2(std::span<const double> a) { return std::sqrt(dot(a, a)); }

double frobenius_sq(const Matrix& a) {
    double s = 0.0;
    for (double v : a.data()) s += v * v;
    return s;
}

double frobenius_norm(const Matrix& a) { return std::sqrt(frobenius_sq(a)); }

double max_abs(const Matrix& a) {
    double m = 0.0;
    for (double v : a.data()) m = std::max(m, std::abs(v));
    return m;
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
    require_same_shape(a, b, "max_abs_diff");
    double m = 0.0;
    for (std::size_t i = 0; i < a.data().size(); ++i)
        m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
    return m;
}

Matrix column_block(const Matrix& a, std::size_t first, std::size_t count) {
    if (first + count > a.cols()) {
        throw ShapeError("column_block: columns [" + std::to_string(first) + ", " +
                         std::to_string(first + count) + ") out of range for " + a.shape_string());
    }
    Matrix out(a.rows(), count);
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < count; ++j) out(i, j) = a(i, first + j);
    return out;
}

Matrix hcat(const std::vector<Matrix>& blocks) {
    if (blocks.empty()) return {};
    std::size_t rows = blocks.front().rows();
    std::size_t cols = 0;
    for (const auto& b : blocks) {
        if (b.rows() != rows) throw ShapeError("hcat: row counts differ");
        cols += b.cols();
    }
    Matrix out(rows, cols);
    std::size_t offset = 0;
    for (const auto& b : blocks) {
        for (std::size_t i = 0; i < rows; ++i)
            for (std::size_t j = 0; j < b.cols(); ++j) out(i, offset + j) = b(i, j);
        offset += b.cols();
    }
    return out;
}

QrResult qr_decompose(const Matrix& a) {
    const std::size_t m = a.rows();
    const std::size_t n = a.cols();
    if (m < n) {
        throw ShapeError("qr_decompose: need rows >= cols, got " + a.shape_string());
    }
    if (n == 0) throw ShapeError("qr_decompose: matrix has no columns");

    Matrix r = a;
    std::vector<Vector> reflectors(n);
    for (std::size_t k = 0; k < n; ++k) {
        Vector v(m - k);
        for (std::size_t i = k; i < m; ++i) v[i - k] = r(i, k);
        const double xnorm = norm2(v);
        if (xnorm == 0.0) continue;
        const double alpha = v[0] >= 0.0 ? -xnorm : xnorm;
        v[0] -= alpha;
        const double vnorm = norm2(v);
        if (vnorm == 0.0) continue;
        for (double& x : v) x /= vnorm;
        for (std::size_t j = k; j < n; ++j) {
            double s = 0.0;
            for (std::size_t i = k; i < m; ++i) s += v[i - k] * r(i, j);
            for (std::size_t i = k; i < m; ++i) r(i, j) -= 2.0 * v[i - k] * s;
        }
        reflectors[k] = std::move(v);
    }

    double max_diag = 0.0;
    for (std::size_t k = 0; k < n; ++k) max_diag = std::max(max_diag, std::abs(r(k, k)));
    std::size_t rank = 0;
    for (std::size_t k = 0; k < n; ++k)
        if (max_diag > 0.0 && std::abs(r(k, k)) >= 1e-12 * max_diag) ++rank;
    if (rank < n) throw RankDeficient(rank, n);

    // Q = H_0 H_1 ... H_{n-1} applied to the first n columns of I.
    Matrix q(m, n);
    for (std::size_t j = 0; j < n; ++j) q(j, j) = 1.0;
    for (std::size_t kk = n; kk-- > 0;) {
        const Vector& v = reflectors[kk];
        if (v.empty()) continue;
        for (std::size_t j = 0; j < n; ++j) {
            double s = 0.0;
            for (std::size_t i = kk; i < m; ++i) s += v[i - kk] * q(i, j);
            for (std::size_t i = kk; i < m; ++i) q(i, j) -= 2.0 * v[i - kk] * s;
        }
    }

    Matrix rr(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i; j < n; ++j) rr(i, j) = r(i, j);
    for (std::size_t k = 0; k < n; ++k) {
        if (rr(k, k) < 0.0) {
            for (std::size_t j = k; j < n; ++j) rr(k, j) = -rr(k, j);
            for (std::size_t i = 0; i < m; ++i) q(i, k) = -q(i, k);
        }
    }
    return {std::move(q), std::move(rr)};
}

Matrix qr_orthonormalize(const Matrix& a) { return qr_decompose(a).q; }

Vector singular_values(const Matrix& a) {
    if (a.empty()) throw ShapeError("singular_values: empty matrix");
    Matrix u = a.rows() >= a.cols() ? a : transpose(a);
    const std::size_t m = u.rows();
    const std::size_t n = u.cols();
    constexpr int kMaxSweeps = 100;
    constexpr double kTol = 1e-12;

    double worst = 0.0;
    bool converged = false;
    for (int sweep = 0; sweep < kMaxSweeps && !converged; ++sweep) {
        converged = true;
        worst = 0.0;
        for (std::size_t i = 0; i + 1 < n; ++i) {
            for (std::size_t j = i + 1; j < n; ++j) {
                double alpha = 0.0, beta = 0.0, gamma = 0.0;
                for (std::size_t k = 0; k < m; ++k) {
                    alpha += u(k, i) * u(k, i);
                    beta += u(k, j) * u(k, j);
                    gamma += u(k, i) * u(k, j);
                }
                if (gamma == 0.0 || alpha == 0.0 || beta == 0.0) continue;
                const double off = std::abs(gamma) / std::sqrt(alpha * beta);
                worst = std::max(worst, off);
                if (off <= kTol) continue;
                converged = false;
                const double zeta = (beta - alpha) / (2.0 * gamma);
                const double t =
                    std::copysign(1.0, zeta) / (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = c * t;
                for (std::size_t k = 0; k < m; ++k) {
                    const double ui = u(k, i);
                    const double uj = u(k, j);
                    u(k, i) = c * ui - s * uj;
                    u(k, j) = s * ui + c * uj;
                }
            }
        }
    }
    if (!converged) throw NumericalFailure("one-sided Jacobi did not converge", worst);

    Vector sv(n);
    for (std::size_t j = 0; j < n; ++j) {
        double s = 0.0;
        for (std::size_t k = 0; k < m; ++k) s += u(k, j) * u(k, j);
        sv[j] = std::sqrt(s);
    }
    std::sort(sv.begin(), sv.end(), std::greater<>());
    return sv;
}

Vector symmetric_eigenvalues(const Matrix& a) {
    if (a.rows() != a.cols()) {
        throw ShapeError("symmetric_eigenvalues: matrix is " + a.shape_string());
    }
    const std::size_t n = a.rows();
    Matrix w = a;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) {
            const double avg = 0.5 * (w(i, j) + w(j, i));
            w(i, j) = w(j, i) = avg;
        }

    double offsq = 0.0;
    for (int sweep = 0; sweep < 100; ++sweep) {
        offsq = 0.0;
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) {
                total += w(i, j) * w(i, j);
                if (i != j) offsq += w(i, j) * w(i, j);
            }
        if (offsq <= 1e-26 * total || offsq == 0.0) {
            Vector ev(n);
            for (std::size_t i = 0; i < n; ++i) ev[i] = w(i, i);
            std::sort(ev.begin(), ev.end());
            return ev;
        }
        for (std::size_t p = 0; p + 1 < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                const double apq = w(p, q);
                if (apq == 0.0) continue;
                const double theta = (w(q, q) - w(p, p)) / (2.0 * apq);
                const double t = std::copysign(1.0, theta) /
                                 (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (std::size_t k = 0; k < n; ++k) {
                    const double wkp = w(k, p);
                    const double wkq = w(k, q);
                    w(k, p) = c * wkp - s * wkq;
                    w(k, q) = s * wkp + c * wkq;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double wpk = w(p, k);
                    const double wqk = w(q, k);
                    w(p, k) = c * wpk - s * wqk;
                    w(q, k) = s * wpk + c * wqk;
                }
            }
        }
    }
    throw NumericalFailure("symmetric Jacobi did not converge", std::sqrt(offsq));
}

} // namespace mhalab
