#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace mhalab {

using Vector = std::vector<double>;

/// Dense row-major matrix of doubles.
///
/// Every public operation checks shapes explicitly and rejects non-finite
/// results, so a Matrix never carries NaN or Inf.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
    Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);
    Matrix(std::initializer_list<std::initializer_list<double>> rows);

    static Matrix identity(std::size_t n);

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    double& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }

    std::span<double> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const noexcept {
        return {data_.data() + r * cols_, cols_};
    }
    Vector column(std::size_t c) const;
    void set_column(std::size_t c, std::span<const double> values);

    const std::vector<double>& data() const noexcept { return data_; }

    /// "RxC" for error messages.
    std::string shape_string() const;

    friend bool operator==(const Matrix&, const Matrix&) = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

Matrix matmul(const Matrix& a, const Matrix& b);
Matrix transpose(const Matrix& a);
/// aᵀ b without materializing the transpose.
Matrix matmul_tn(const Matrix& a, const Matrix& b);
Vector matvec(const Matrix& a, std::span<const double> x);
/// aᵀ x.
Vector matvec_t(const Matrix& a, std::span<const double> x);

Matrix operator+(const Matrix& a, const Matrix& b);
Matrix operator-(const Matrix& a, const Matrix& b);
Matrix operator*(double s, const Matrix& a);

double dot(std::span<const double> a, std::span<const double> b);
double norm2(std::span<const double> a);
double frobenius_norm(const Matrix& a);
double frobenius_sq(const Matrix& a);
double max_abs(const Matrix& a);
double max_abs_diff(const Matrix& a, const Matrix& b);
/// Columns [first, first + count).
Matrix column_block(const Matrix& a, std::size_t first, std::size_t count);
/// Horizontal concatenation.
Matrix hcat(const std::vector<Matrix>& blocks);

struct QrResult {
    Matrix q; ///< rows × cols, orthonormal columns
    Matrix r; ///< cols × cols, upper triangular with nonnegative diagonal
};

/// Householder QR of a tall matrix. Throws RankDeficient when a diagonal of R
/// falls below 1e-12 times the largest one.
QrResult qr_decompose(const Matrix& a);

/// Orthonormal basis of Range(a), with the sign convention diag(R) >= 0.
Matrix qr_orthonormalize(const Matrix& a);

/// Singular values in descending order via one-sided Jacobi.
/// Count is min(rows, cols). Throws NumericalFailure after 100 sweeps.
Vector singular_values(const Matrix& a);

/// Eigenvalues of a symmetric matrix in ascending order (cyclic Jacobi).
Vector symmetric_eigenvalues(const Matrix& a);

} // namespace mhalab
