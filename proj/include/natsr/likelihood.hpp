#pragma once

#include "natsr/linalg.hpp"

#include <cstdint>
#include <random>
#include <span>
#include <vector>

namespace natsr {

/// Student's-t with ν degrees of freedom and squared scale s², shared by
/// every output.
struct StudentTSpec {
    double nu = 50.0;
    double s2 = 1.0;

    void validate() const;
};

struct LossValue {
    double total = 0.0;
    Vector errors; ///< e_i = y_i − pred_i
};

/// Training loss: mean over outputs of ((ν+1)/2)·log(1 + e²/(νs²)).
/// Normalizing constants are dropped.
LossValue t_nll(std::span<const double> y, std::span<const double> pred, const StudentTSpec& spec);

/// Complete negative log-likelihood per output (with the Γ terms and ½·log s²),
/// averaged over outputs. Reporting only.
double t_full_nll(std::span<const double> y, std::span<const double> pred, const StudentTSpec& spec);

/// ∂/∂pred of the summed per-output NLL: −(ν+1)e_i/(νs² + e_i²).
/// Each component is bounded by (ν+1)/(2s√ν).
Vector t_score_output(std::span<const double> errors, const StudentTSpec& spec);

/// Variance of the output score under the model: (ν+1)/((ν+3)s²).
double t_output_fisher_kappa(const StudentTSpec& spec);

/// Sup-norm bound of t_score_output.
double t_score_bound(const StudentTSpec& spec);

/// k independent target draws y_i = pred_i + s·T_ν.
std::vector<Vector> sample_predictive(std::span<const double> pred, const StudentTSpec& spec, std::size_t k,
                                      std::mt19937_64& rng);
std::vector<Vector> sample_predictive(std::span<const double> pred, const StudentTSpec& spec, std::size_t k,
                                      std::uint64_t seed);

/// Mean over outputs of e²/(2s²).
LossValue gaussian_nll(std::span<const double> y, std::span<const double> pred, double s2 = 1.0);
/// ∂/∂pred of the summed Gaussian NLL: −e_i/s².
Vector gaussian_score(std::span<const double> errors, double s2 = 1.0);

} // namespace natsr
