#pragma once

// Straight-line reference implementations the production code is checked
// against. Nothing here shares code paths with src/ beyond the Matrix type.

#include "natsr/linalg.hpp"
#include "natsr/network.hpp"

#include <filesystem>
#include <functional>
#include <span>
#include <string>

namespace oracle {

using natsr::Matrix;
using natsr::Vector;

/// Gaussian elimination with partial pivoting; solves A·X = B.
Matrix gauss_solve(Matrix a, Matrix b);
Vector gauss_solve(const Matrix& a, std::span<const double> b);

/// Textbook Kronecker product, kron(A, G)[i·p + k, j·q + l] = A[i,j]·G[k,l].
Matrix kron(const Matrix& a, const Matrix& g);

/// Column-stacking vectorization and its inverse.
Vector vec_cols(const Matrix& x);
Matrix unvec_cols(std::span<const double> v, std::size_t rows, std::size_t cols);

/// Central differences of a scalar function.
Vector fd_gradient(const std::function<double(std::span<const double>)>& f, Vector x, double h = 1e-6);
/// Central differences of a vector function; rows index outputs.
Matrix fd_jacobian(const std::function<Vector(std::span<const double>)>& f, Vector x, double h = 1e-6);

/// Singular values by one-sided Jacobi, descending.
Vector singular_values(const Matrix& a);

/// Σ_i w_i · κ · J_iᵀJ_i, with J_i the output Jacobian at inputs[i], built by
/// finite differences of the forward pass.
Matrix fd_weighted_gauss_newton(const natsr::Network& net, const std::vector<Vector>& inputs,
                                const std::vector<double>& weights, double kappa);

/// Relative difference ‖a − b‖ / max(‖b‖, 1e-300).
double rel_diff(std::span<const double> a, std::span<const double> b);

/// Fresh empty directory under the system temp dir.
std::filesystem::path fresh_dir(const std::string& name);

std::string read_text(const std::filesystem::path& p);

} // namespace oracle
