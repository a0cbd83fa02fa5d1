#include "natsr/linalg.hpp"

#include "natsr/error.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace natsr {

namespace {

std::string shape_str(const Matrix& m) {
    return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

void require_same_shape(const Matrix& a, const Matrix& b, const char* op) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw ShapeError(std::string(op) + ": shapes " + shape_str(a) + " and " + shape_str(b) + " differ");
    }
}

} // namespace

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Matrix::Matrix(std::initializer_list<std::initializer_list<double>> rows) {
    rows_ = rows.size();
    cols_ = rows_ == 0 ? 0 : rows.begin()->size();
    data_.reserve(rows_ * cols_);
    for (const auto& r : rows) {
        if (r.size() != cols_) {
            throw ShapeError("Matrix: ragged initializer list");
        }
        data_.insert(data_.end(), r.begin(), r.end());
    }
}

Matrix Matrix::identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        m(i, i) = 1.0;
    }
    return m;
}

Matrix Matrix::column(std::span<const double> v) {
    return from_data(v.size(), 1, {v.begin(), v.end()});
}

Matrix Matrix::from_data(std::size_t rows, std::size_t cols, std::vector<double> data) {
    if (data.size() != rows * cols) {
        throw ShapeError("Matrix::from_data: " + std::to_string(data.size()) + " values for " +
                         std::to_string(rows) + "x" + std::to_string(cols));
    }
    Matrix m;
    m.rows_ = rows;
    m.cols_ = cols;
    m.data_ = std::move(data);
    return m;
}

Matrix Matrix::transposed() const {
    Matrix t(cols_, rows_);
    for (std::size_t r = 0; r < rows_; ++r) {
        for (std::size_t c = 0; c < cols_; ++c) {
            t(c, r) = (*this)(r, c);
        }
    }
    return t;
}

double Matrix::frobenius_norm() const { return norm2(data_); }

bool Matrix::all_finite() const { return natsr::all_finite(data_); }

Matrix& Matrix::operator+=(const Matrix& other) {
    require_same_shape(*this, other, "operator+=");
    for (std::size_t i = 0; i < data_.size(); ++i) {
        data_[i] += other.data_[i];
    }
    return *this;
}

Matrix& Matrix::operator-=(const Matrix& other) {
    require_same_shape(*this, other, "operator-=");
    for (std::size_t i = 0; i < data_.size(); ++i) {
        data_[i] -= other.data_[i];
    }
    return *this;
}

Matrix& Matrix::operator*=(double s) {
    for (double& v : data_) {
        v *= s;
    }
    return *this;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows()) {
        throw ShapeError("matmul: " + shape_str(a) + " times " + shape_str(b));
    }
    Matrix out(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        auto out_row = out.row(i);
        for (std::size_t k = 0; k < a.cols(); ++k) {
            const double aik = a(i, k);
            if (aik == 0.0) {
                continue;
            }
            auto b_row = b.row(k);
            for (std::size_t j = 0; j < b.cols(); ++j) {
                out_row[j] += aik * b_row[j];
            }
        }
    }
    return out;
}

Vector matvec(const Matrix& a, std::span<const double> x) {
    if (a.cols() != x.size()) {
        throw ShapeError("matvec: " + shape_str(a) + " times vector of length " + std::to_string(x.size()));
    }
    Vector out(a.rows(), 0.0);
    for (std::size_t i = 0; i < a.rows(); ++i) {
        out[i] = dot(a.row(i), x);
    }
    return out;
}

Vector matvec_transposed(const Matrix& a, std::span<const double> x) {
    if (a.rows() != x.size()) {
        throw ShapeError("matvec_transposed: " + shape_str(a) + "ᵀ times vector of length " +
                         std::to_string(x.size()));
    }
    Vector out(a.cols(), 0.0);
    for (std::size_t i = 0; i < a.rows(); ++i) {
        const double xi = x[i];
        auto r = a.row(i);
        for (std::size_t j = 0; j < a.cols(); ++j) {
            out[j] += r[j] * xi;
        }
    }
    return out;
}

void add_outer(Matrix& m, std::span<const double> u, std::span<const double> v, double weight) {
    if (m.rows() != u.size() || m.cols() != v.size()) {
        throw ShapeError("add_outer: target " + shape_str(m) + " for outer product " + std::to_string(u.size()) +
                         "x" + std::to_string(v.size()));
    }
    for (std::size_t i = 0; i < u.size(); ++i) {
        const double wu = weight * u[i];
        auto r = m.row(i);
        for (std::size_t j = 0; j < v.size(); ++j) {
            r[j] += wu * v[j];
        }
    }
}

double dot(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) {
        throw ShapeError("dot: lengths " + std::to_string(a.size()) + " and " + std::to_string(b.size()));
    }
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        s += a[i] * b[i];
    }
    return s;
}

double norm2(std::span<const double> a) {
    double s = 0.0;
    for (double v : a) {
        s += v * v;
    }
    return std::sqrt(s);
}

bool all_finite(std::span<const double> a) {
    return std::all_of(a.begin(), a.end(), [](double v) { return std::isfinite(v); });
}

Matrix kron_apply(const Matrix& a, const Matrix& g, const Matrix& v) {
    const std::size_t xr = g.cols();
    const std::size_t xc = a.cols();
    if (v.rows() == xr && v.cols() == xc) {
        return matmul(matmul(g, v), a.transposed());
    }
    if (v.cols() == 1 && v.rows() == xr * xc) {
        // Unstack vec(X) column by column.
        Matrix x(xr, xc);
        for (std::size_t c = 0; c < xc; ++c) {
            for (std::size_t r = 0; r < xr; ++r) {
                x(r, c) = v(c * xr + r, 0);
            }
        }
        const Matrix y = matmul(matmul(g, x), a.transposed());
        Matrix out(y.rows() * y.cols(), 1);
        for (std::size_t c = 0; c < y.cols(); ++c) {
            for (std::size_t r = 0; r < y.rows(); ++r) {
                out(c * y.rows() + r, 0) = y(r, c);
            }
        }
        return out;
    }
    throw ShapeError("kron_apply: operand " + shape_str(v) + " does not match factors " + shape_str(a) + " ⊗ " +
                     shape_str(g));
}

SpdFactor::SpdFactor(Matrix source, double damping) : source_(std::move(source)), damping_(damping) {
    const std::size_t n = source_.rows();
    if (source_.cols() != n) {
        throw ShapeError("SpdFactor: source " + shape_str(source_) + " is not square");
    }
    if (!(damping_ >= 0.0) || !std::isfinite(damping_)) {
        throw NumericError("SpdFactor: damping must be finite and nonnegative");
    }
    if (!source_.all_finite()) {
        throw NumericError("SpdFactor: source has non-finite entries");
    }
    double scale = 1.0;
    for (double v : source_.data()) {
        scale = std::max(scale, std::abs(v));
    }
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            if (std::abs(source_(i, j) - source_(j, i)) > 1e-10 * scale) {
                throw CurvatureError("SpdFactor: source is not symmetric at (" + std::to_string(i) + "," +
                                     std::to_string(j) + ")");
            }
        }
    }

    lower_ = Matrix(n, n);
    for (std::size_t j = 0; j < n; ++j) {
        double diag = source_(j, j) + damping_;
        for (std::size_t k = 0; k < j; ++k) {
            diag -= lower_(j, k) * lower_(j, k);
        }
        if (!(diag > 0.0) || !std::isfinite(diag)) {
            throw CurvatureError("SpdFactor: matrix not positive definite after damping (pivot " + std::to_string(j) +
                                 ")");
        }
        const double ljj = std::sqrt(diag);
        lower_(j, j) = ljj;
        for (std::size_t i = j + 1; i < n; ++i) {
            // Symmetrize on the fly: use the lower triangle only.
            double s = 0.5 * (source_(i, j) + source_(j, i));
            for (std::size_t k = 0; k < j; ++k) {
                s -= lower_(i, k) * lower_(j, k);
            }
            lower_(i, j) = s / ljj;
        }
    }
}

Vector SpdFactor::solve(std::span<const double> rhs) const {
    const std::size_t n = dim();
    if (rhs.size() != n) {
        throw ShapeError("SpdFactor::solve: rhs length " + std::to_string(rhs.size()) + " for system of size " +
                         std::to_string(n));
    }
    if (!all_finite(rhs)) {
        throw NumericError("SpdFactor::solve: non-finite right-hand side");
    }
    Vector y(rhs.begin(), rhs.end());
    for (std::size_t i = 0; i < n; ++i) {
        double s = y[i];
        for (std::size_t k = 0; k < i; ++k) {
            s -= lower_(i, k) * y[k];
        }
        y[i] = s / lower_(i, i);
    }
    for (std::size_t ii = n; ii-- > 0;) {
        double s = y[ii];
        for (std::size_t k = ii + 1; k < n; ++k) {
            s -= lower_(k, ii) * y[k];
        }
        y[ii] = s / lower_(ii, ii);
    }
    return y;
}

Matrix SpdFactor::solve(const Matrix& rhs) const {
    if (rhs.rows() != dim()) {
        throw ShapeError("SpdFactor::solve: rhs " + shape_str(rhs) + " for system of size " + std::to_string(dim()));
    }
    Matrix out(rhs.rows(), rhs.cols());
    Vector col(rhs.rows());
    for (std::size_t c = 0; c < rhs.cols(); ++c) {
        for (std::size_t r = 0; r < rhs.rows(); ++r) {
            col[r] = rhs(r, c);
        }
        const Vector x = solve(std::span<const double>(col));
        for (std::size_t r = 0; r < rhs.rows(); ++r) {
            out(r, c) = x[r];
        }
    }
    return out;
}

Matrix spd_solve(const SpdFactor& f, const Matrix& rhs) { return f.solve(rhs); }

SymmetricEigen symmetric_eigen(const Matrix& s) {
    const std::size_t n = s.rows();
    if (s.cols() != n) {
        throw ShapeError("symmetric_eigen: " + shape_str(s) + " is not square");
    }
    if (!s.all_finite()) {
        throw NumericError("symmetric_eigen: non-finite entries");
    }
    Matrix a = s;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            const double m = 0.5 * (a(i, j) + a(j, i));
            a(i, j) = m;
            a(j, i) = m;
        }
    }
    Matrix v = Matrix::identity(n);

    const double total = std::max(a.frobenius_norm(), 1e-300);
    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = i + 1; j < n; ++j) {
                off += a(i, j) * a(i, j);
            }
        }
        if (std::sqrt(off) <= 1e-15 * total) {
            break;
        }
        for (std::size_t p = 0; p < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                const double apq = a(p, q);
                if (std::abs(apq) < 1e-300) {
                    continue;
                }
                const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
                const double t = (theta >= 0.0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double sn = t * c;
                for (std::size_t k = 0; k < n; ++k) {
                    const double akp = a(k, p);
                    const double akq = a(k, q);
                    a(k, p) = c * akp - sn * akq;
                    a(k, q) = sn * akp + c * akq;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double apk = a(p, k);
                    const double aqk = a(q, k);
                    a(p, k) = c * apk - sn * aqk;
                    a(q, k) = sn * apk + c * aqk;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double vkp = v(k, p);
                    const double vkq = v(k, q);
                    v(k, p) = c * vkp - sn * vkq;
                    v(k, q) = sn * vkp + c * vkq;
                }
            }
        }
    }

    SymmetricEigen out;
    out.values.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        out.values[i] = a(i, i);
    }
    out.vectors = std::move(v);
    return out;
}

} // namespace natsr
