#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

namespace natsr {

using Vector = std::vector<double>;

/// Dense row-major matrix of doubles. Shapes are checked at every operation
/// entry; a mismatch raises ShapeError.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
    Matrix(std::initializer_list<std::initializer_list<double>> rows);

    static Matrix identity(std::size_t n);
    static Matrix column(std::span<const double> v);
    static Matrix from_data(std::size_t rows, std::size_t cols, std::vector<double> data);

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    std::span<double> data() { return data_; }
    std::span<const double> data() const { return data_; }
    std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

    Matrix transposed() const;
    double frobenius_norm() const;
    bool all_finite() const;

    Matrix& operator+=(const Matrix& other);
    Matrix& operator-=(const Matrix& other);
    Matrix& operator*=(double s);

    friend Matrix operator+(Matrix a, const Matrix& b) { return a += b; }
    friend Matrix operator-(Matrix a, const Matrix& b) { return a -= b; }
    friend Matrix operator*(Matrix a, double s) { return a *= s; }
    friend Matrix operator*(double s, Matrix a) { return a *= s; }
    friend bool operator==(const Matrix&, const Matrix&) = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

Matrix matmul(const Matrix& a, const Matrix& b);
Vector matvec(const Matrix& a, std::span<const double> x);
/// aᵀ·x without forming the transpose.
Vector matvec_transposed(const Matrix& a, std::span<const double> x);

/// m += weight · u vᵀ
void add_outer(Matrix& m, std::span<const double> u, std::span<const double> v, double weight = 1.0);

double dot(std::span<const double> a, std::span<const double> b);
double norm2(std::span<const double> a);
bool all_finite(std::span<const double> a);

/// Applies the Kronecker product (a ⊗ g) to v without materializing it.
///
/// `v` is either a g.cols × a.cols matrix X, in which case the result is the
/// matrix g·X·aᵀ, or a column vector holding vec(X) stacked column by column,
/// in which case the result is the column vector vec(g·X·aᵀ).
Matrix kron_apply(const Matrix& a, const Matrix& g, const Matrix& v);

/// Cholesky factorization of (source + damping·I).
class SpdFactor {
public:
    /// Throws CurvatureError if `source` is not symmetric or the damped
    /// matrix is not positive definite.
    SpdFactor(Matrix source, double damping);

    const Matrix& source() const { return source_; }
    double damping() const { return damping_; }
    const Matrix& lower() const { return lower_; }
    std::size_t dim() const { return source_.rows(); }

    Matrix solve(const Matrix& rhs) const;
    Vector solve(std::span<const double> rhs) const;

private:
    Matrix source_;
    double damping_ = 0.0;
    Matrix lower_;
};

/// Solves (source + damping·I)·x = rhs for every column of rhs.
Matrix spd_solve(const SpdFactor& f, const Matrix& rhs);

/// Eigendecomposition of a symmetric matrix: s = vectors · diag(values) · vectorsᵀ,
/// eigenvectors stored as columns.
struct SymmetricEigen {
    Vector values;
    Matrix vectors;
};

/// Cyclic Jacobi rotations; intended for the small Kronecker factors only.
SymmetricEigen symmetric_eigen(const Matrix& s);

} // namespace natsr
