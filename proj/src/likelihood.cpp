#include "natsr/likelihood.hpp"

#include "natsr/error.hpp"

#include <cmath>
#include <numbers>
#include <string>

namespace natsr {

namespace {

Vector errors_of(std::span<const double> y, std::span<const double> pred) {
    if (y.size() != pred.size()) {
        throw ShapeError("likelihood: target length " + std::to_string(y.size()) + " vs prediction length " +
                         std::to_string(pred.size()));
    }
    if (y.empty()) {
        throw ShapeError("likelihood: empty target");
    }
    if (!all_finite(y) || !all_finite(pred)) {
        throw NumericError("likelihood: non-finite target or prediction");
    }
    Vector e(y.size());
    for (std::size_t i = 0; i < y.size(); ++i) {
        e[i] = y[i] - pred[i];
    }
    return e;
}

} // namespace

void StudentTSpec::validate() const {
    if (!(nu > 0.0) || !std::isfinite(nu)) {
        throw InputError("StudentTSpec: nu must be positive, got " + std::to_string(nu));
    }
    if (!(s2 > 0.0) || !std::isfinite(s2)) {
        throw InputError("StudentTSpec: s2 must be positive, got " + std::to_string(s2));
    }
}

LossValue t_nll(std::span<const double> y, std::span<const double> pred, const StudentTSpec& spec) {
    spec.validate();
    LossValue out;
    out.errors = errors_of(y, pred);
    const double half = 0.5 * (spec.nu + 1.0);
    const double denom = spec.nu * spec.s2;
    double sum = 0.0;
    for (double e : out.errors) {
        sum += half * std::log1p(e * e / denom);
    }
    out.total = sum / static_cast<double>(out.errors.size());
    return out;
}

double t_full_nll(std::span<const double> y, std::span<const double> pred, const StudentTSpec& spec) {
    const LossValue core = t_nll(y, pred, spec);
    const double nu = spec.nu;
    const double log_norm = std::lgamma(0.5 * (nu + 1.0)) - std::lgamma(0.5 * nu) - 0.5 * std::log(std::numbers::pi * nu);
    return -log_norm + 0.5 * std::log(spec.s2) + core.total;
}

Vector t_score_output(std::span<const double> errors, const StudentTSpec& spec) {
    spec.validate();
    if (!all_finite(errors)) {
        throw NumericError("t_score_output: non-finite error");
    }
    const double denom = spec.nu * spec.s2;
    Vector score(errors.size());
    for (std::size_t i = 0; i < errors.size(); ++i) {
        const double e = errors[i];
        score[i] = -(spec.nu + 1.0) * e / (denom + e * e);
    }
    return score;
}

double t_output_fisher_kappa(const StudentTSpec& spec) {
    spec.validate();
    return (spec.nu + 1.0) / ((spec.nu + 3.0) * spec.s2);
}

double t_score_bound(const StudentTSpec& spec) {
    spec.validate();
    return (spec.nu + 1.0) / (2.0 * std::sqrt(spec.s2 * spec.nu));
}

std::vector<Vector> sample_predictive(std::span<const double> pred, const StudentTSpec& spec, std::size_t k,
                                      std::mt19937_64& rng) {
    spec.validate();
    if (k == 0) {
        throw InputError("sample_predictive: k must be >= 1");
    }
    std::student_t_distribution<double> t(spec.nu);
    const double s = std::sqrt(spec.s2);
    std::vector<Vector> draws(k, Vector(pred.begin(), pred.end()));
    for (Vector& d : draws) {
        for (double& v : d) {
            v += s * t(rng);
        }
    }
    return draws;
}

std::vector<Vector> sample_predictive(std::span<const double> pred, const StudentTSpec& spec, std::size_t k,
                                      std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    return sample_predictive(pred, spec, k, rng);
}

LossValue gaussian_nll(std::span<const double> y, std::span<const double> pred, double s2) {
    if (!(s2 > 0.0)) {
        throw InputError("gaussian_nll: s2 must be positive");
    }
    LossValue out;
    out.errors = errors_of(y, pred);
    double sum = 0.0;
    for (double e : out.errors) {
        sum += e * e / (2.0 * s2);
    }
    out.total = sum / static_cast<double>(out.errors.size());
    return out;
}

Vector gaussian_score(std::span<const double> errors, double s2) {
    if (!(s2 > 0.0)) {
        throw InputError("gaussian_score: s2 must be positive");
    }
    Vector score(errors.size());
    for (std::size_t i = 0; i < errors.size(); ++i) {
        score[i] = -errors[i] / s2;
    }
    return score;
}

} // namespace natsr
