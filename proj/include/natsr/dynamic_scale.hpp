#pragma once

#include <span>
#include <string>

namespace natsr {

/// Which Tikhonov-from-scale rule to use.
///  - smooth: τ = 0.9β/(1+s²) + 0.1β/s², so that s²τ ∈ [0.1β, β]
///  - inverse_sum: τ = 1/(β + s²)
enum class TauVariant { smooth, inverse_sum };

std::string to_string(TauVariant v);
TauVariant parse_tau_variant(const std::string& s);

/// Score-driven filter for the Student's-t squared scale.
struct ScaleState {
    double s2 = 1.0;
    double alpha_s = 0.1;
    double scale_floor = 1e-4;
    double beta = 1.0;
    TauVariant tau_variant = TauVariant::smooth;
};

/// Increment contributed by one error before the learning rate:
/// s²ν(e² − s²)/(s²ν + e²).
double scale_increment(double s2, double error, double nu);

/// s² ← max(floor, s² + α_s · mean_i increment(e_i)). Throws InputError on an
/// empty error list.
ScaleState scale_step(ScaleState state, std::span<const double> errors, double nu);

double tau_from_scale(const ScaleState& state);

} // namespace natsr
