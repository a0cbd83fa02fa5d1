#include "natsr/dynamic_scale.hpp"

#include "natsr/error.hpp"

#include <algorithm>
#include <cmath>

namespace natsr {

std::string to_string(TauVariant v) { return v == TauVariant::smooth ? "smooth" : "inverse_sum"; }

TauVariant parse_tau_variant(const std::string& s) {
    if (s == "smooth") {
        return TauVariant::smooth;
    }
    if (s == "inverse_sum") {
        return TauVariant::inverse_sum;
    }
    throw ConfigError("unknown tau_variant '" + s + "' (expected smooth or inverse_sum)");
}

double scale_increment(double s2, double error, double nu) {
    const double e2 = error * error;
    return s2 * nu * (e2 - s2) / (s2 * nu + e2);
}

ScaleState scale_step(ScaleState state, std::span<const double> errors, double nu) {
    if (errors.empty()) {
        throw InputError("scale_step: no errors to filter");
    }
    double sum = 0.0;
    for (double e : errors) {
        if (!std::isfinite(e)) {
            throw NumericError("scale_step: non-finite error");
        }
        sum += scale_increment(state.s2, e, nu);
    }
    state.s2 += state.alpha_s * sum / static_cast<double>(errors.size());
    state.s2 = std::max(state.s2, state.scale_floor);
    return state;
}

double tau_from_scale(const ScaleState& state) {
    const double s2 = std::max(state.s2, state.scale_floor);
    switch (state.tau_variant) {
    case TauVariant::smooth:
        return 0.9 * state.beta / (1.0 + s2) + 0.1 * state.beta / s2;
    case TauVariant::inverse_sum:
        return 1.0 / (state.beta + s2);
    }
    return 0.0;
}

} // namespace natsr
