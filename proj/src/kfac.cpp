#include "natsr/kfac.hpp"

#include "natsr/error.hpp"

#include <algorithm>
#include <cmath>

namespace natsr {

namespace {

struct WeightedInput {
    const Vector* x;
    double weight;
};

std::vector<WeightedInput> weighted_inputs(const CurvatureBatch& batch) {
    if (batch.new_inputs.empty()) {
        throw InputError("curvature: no new observations in the batch");
    }
    if (!(batch.lambda >= 0.0)) {
        throw InputError("curvature: lambda must be nonnegative");
    }
    std::vector<WeightedInput> out;
    const double c_new = 1.0 / static_cast<double>(batch.new_inputs.size());
    for (const Vector& x : batch.new_inputs) {
        out.push_back({&x, c_new});
    }
    if (!batch.replay_inputs.empty()) {
        const double c_rep = batch.lambda / static_cast<double>(batch.replay_inputs.size());
        for (const Vector& x : batch.replay_inputs) {
            out.push_back({&x, c_rep});
        }
    }
    return out;
}

std::vector<KronFactors> empty_factors(const Network& net) {
    std::vector<KronFactors> f;
    for (const LayerShape& l : net.layers()) {
        f.push_back({Matrix(l.in + 1, l.in + 1), Matrix(l.out, l.out)});
    }
    return f;
}

void accumulate_inputs(std::vector<KronFactors>& f, const Network& net, const LayerCache& cache, double weight) {
    for (std::size_t li = 0; li < f.size(); ++li) {
        const Matrix& in = cache.inputs[li];
        const double w = weight / static_cast<double>(net.layers()[li].positions);
        for (std::size_t p = 0; p < in.rows(); ++p) {
            add_outer(f[li].a, in.row(p), in.row(p), w);
        }
    }
}

void accumulate_grads(std::vector<KronFactors>& f, const LayerCache& cache, double weight) {
    for (std::size_t li = 0; li < f.size(); ++li) {
        const Matrix& g = cache.preact_grads[li];
        for (std::size_t p = 0; p < g.rows(); ++p) {
            add_outer(f[li].g, g.row(p), g.row(p), weight);
        }
    }
}

double total_weight(const std::vector<WeightedInput>& inputs) {
    double c = 0.0;
    for (const auto& wi : inputs) {
        c += wi.weight;
    }
    return c;
}

void symmetrize(Matrix& m) {
    for (std::size_t i = 0; i < m.rows(); ++i) {
        for (std::size_t j = i + 1; j < m.cols(); ++j) {
            const double v = 0.5 * (m(i, j) + m(j, i));
            m(i, j) = v;
            m(j, i) = v;
        }
    }
}

} // namespace

std::string to_string(FisherMode m) {
    switch (m) {
    case FisherMode::kfac_mc:
        return "kfac_mc";
    case FisherMode::kfac_analytic:
        return "kfac_analytic";
    case FisherMode::dense:
        return "dense";
    }
    return "?";
}

FisherMode parse_fisher_mode(const std::string& s) {
    if (s == "kfac_mc") {
        return FisherMode::kfac_mc;
    }
    if (s == "kfac_analytic") {
        return FisherMode::kfac_analytic;
    }
    if (s == "dense") {
        return FisherMode::dense;
    }
    throw ConfigError("unknown fisher_mode '" + s + "' (expected kfac_mc, kfac_analytic or dense)");
}

std::string to_string(KfacDamping d) { return d == KfacDamping::exact ? "exact" : "factored"; }

KfacDamping parse_kfac_damping(const std::string& s) {
    if (s == "exact") {
        return KfacDamping::exact;
    }
    if (s == "factored") {
        return KfacDamping::factored;
    }
    throw ConfigError("unknown kfac_damping '" + s + "' (expected exact or factored)");
}

std::vector<KronFactors> mc_fisher_factors(const Network& net, const CurvatureBatch& batch, const StudentTSpec& spec,
                                           std::size_t k, std::mt19937_64& rng) {
    if (k == 0) {
        throw InputError("mc_fisher_factors: k must be >= 1");
    }
    const auto inputs = weighted_inputs(batch);
    auto f = empty_factors(net);
    Vector err(net.spec().output_dim);
    for (const auto& wi : inputs) {
        ForwardPass pass = net.forward(*wi.x);
        accumulate_inputs(f, net, pass.cache, wi.weight);
        if (wi.weight == 0.0) {
            continue;
        }
        const auto draws = sample_predictive(pass.output, spec, k, rng);
        for (const Vector& y : draws) {
            for (std::size_t i = 0; i < err.size(); ++i) {
                err[i] = y[i] - pass.output[i];
            }
            net.backpropagate(pass.cache, t_score_output(err, spec));
            accumulate_grads(f, pass.cache, wi.weight / static_cast<double>(k));
        }
    }
    const double c = total_weight(inputs);
    for (auto& kf : f) {
        kf.a *= 1.0 / c;
        symmetrize(kf.a);
        symmetrize(kf.g);
    }
    return f;
}

std::vector<KronFactors> analytic_fisher_factors(const Network& net, const CurvatureBatch& batch,
                                                 const StudentTSpec& spec) {
    const auto inputs = weighted_inputs(batch);
    const double kappa = t_output_fisher_kappa(spec);
    auto f = empty_factors(net);
    Vector unit(net.spec().output_dim, 0.0);
    for (const auto& wi : inputs) {
        ForwardPass pass = net.forward(*wi.x);
        accumulate_inputs(f, net, pass.cache, wi.weight);
        if (wi.weight == 0.0) {
            continue;
        }
        for (std::size_t i = 0; i < unit.size(); ++i) {
            unit[i] = 1.0;
            net.backpropagate(pass.cache, unit);
            accumulate_grads(f, pass.cache, wi.weight * kappa);
            unit[i] = 0.0;
        }
    }
    const double c = total_weight(inputs);
    for (auto& kf : f) {
        kf.a *= 1.0 / c;
        symmetrize(kf.a);
        symmetrize(kf.g);
    }
    return f;
}

Matrix dense_fisher(const Network& net, const CurvatureBatch& batch, const StudentTSpec& spec) {
    const auto inputs = weighted_inputs(batch);
    const double kappa = t_output_fisher_kappa(spec);
    const std::size_t p = net.param_count();
    Matrix fisher(p, p);
    for (const auto& wi : inputs) {
        if (wi.weight == 0.0) {
            continue;
        }
        const Matrix j = net.jacobian(*wi.x);
        for (std::size_t r = 0; r < j.rows(); ++r) {
            add_outer(fisher, j.row(r), j.row(r), wi.weight * kappa);
        }
    }
    symmetrize(fisher);
    return fisher;
}

void update_factor_emas(std::vector<KfacLayerState>& layers, const std::vector<KronFactors>& fresh, double alpha) {
    if (!(alpha >= 0.0 && alpha <= 1.0)) {
        throw InputError("update_factor_emas: alpha must lie in [0, 1]");
    }
    if (layers.empty()) {
        layers.resize(fresh.size());
        for (std::size_t i = 0; i < fresh.size(); ++i) {
            layers[i].a_ema = fresh[i].a;
            layers[i].g_ema = fresh[i].g;
        }
        return;
    }
    if (layers.size() != fresh.size()) {
        throw ShapeError("update_factor_emas: layer count mismatch");
    }
    for (std::size_t i = 0; i < fresh.size(); ++i) {
        KfacLayerState& s = layers[i];
        s.a_ema = (1.0 - alpha) * s.a_ema + alpha * fresh[i].a;
        s.g_ema = (1.0 - alpha) * s.g_ema + alpha * fresh[i].g;
    }
}

void LossStats::observe(double loss) {
    if (count < burn_in) {
        // Welford with population variance.
        ++count;
        const double delta = loss - mean;
        mean += delta / static_cast<double>(count);
        var += (delta * (loss - mean) - var) / static_cast<double>(count);
        return;
    }
    const double diff = loss - mean;
    mean += ema_weight * diff;
    var = (1.0 - ema_weight) * (var + ema_weight * diff * diff);
    ++count;
}

bool refresh_decision(double current_loss, const LossStats& stats, std::size_t steps_since_refresh,
                      std::size_t max_stale, double z_threshold) {
    if (stats.count < stats.burn_in) {
        return true;
    }
    if (steps_since_refresh >= max_stale) {
        return true;
    }
    const double z = (current_loss - stats.mean) / std::sqrt(std::max(stats.var, 1e-12));
    return z > z_threshold;
}

double bound_value(const StudentTSpec& spec, std::size_t m, double tau) {
    spec.validate();
    if (!(tau > 0.0)) {
        throw InputError("bound_value: tau must be positive");
    }
    const double nu = spec.nu;
    return 0.25 * std::sqrt((nu + 1.0) * (nu + 3.0) * static_cast<double>(m) / (tau * nu));
}

CurvatureEngine::CurvatureEngine(FisherMode mode, KfacDamping damping, double alpha_ema)
    : mode_(mode), damping_(damping), alpha_ema_(alpha_ema) {}

void CurvatureEngine::refresh(const Network& net, const CurvatureBatch& batch, const StudentTSpec& spec,
                              std::size_t mc_samples, double tau, std::mt19937_64& rng, std::size_t step) {
    switch (mode_) {
    case FisherMode::dense: {
        Matrix fresh = dense_fisher(net, batch, spec);
        if (dense_ema_.empty()) {
            dense_ema_ = std::move(fresh);
        } else {
            dense_ema_ = (1.0 - alpha_ema_) * dense_ema_ + alpha_ema_ * fresh;
        }
        break;
    }
    case FisherMode::kfac_mc:
        update_factor_emas(layers_, mc_fisher_factors(net, batch, spec, mc_samples, rng), alpha_ema_);
        break;
    case FisherMode::kfac_analytic:
        update_factor_emas(layers_, analytic_fisher_factors(net, batch, spec), alpha_ema_);
        break;
    }
    for (auto& l : layers_) {
        l.refreshed_at = step;
        l.a_eigen.reset();
        l.g_eigen.reset();
    }
    refactor(tau);
}

void CurvatureEngine::set_factors(const std::vector<KronFactors>& factors, double tau) {
    layers_.clear();
    update_factor_emas(layers_, factors, 1.0);
    refactor(tau);
}

void CurvatureEngine::set_dense(const Matrix& fisher, double tau) {
    dense_ema_ = fisher;
    refactor(tau);
}

void CurvatureEngine::refactor(double tau) {
    if (!(tau >= 0.0) || !std::isfinite(tau)) {
        throw NumericError("curvature: tau must be finite and nonnegative");
    }
    ready_ = false;
    tau_ = tau;
    if (mode_ == FisherMode::dense) {
        dense_factor_.emplace(dense_ema_, tau);
        ready_ = true;
        return;
    }
    for (auto& l : layers_) {
        if (damping_ == KfacDamping::exact) {
            if (!l.a_eigen) {
                l.a_eigen = symmetric_eigen(l.a_ema);
                l.g_eigen = symmetric_eigen(l.g_ema);
            }
        } else {
            const double root = std::sqrt(tau);
            l.a_factor.emplace(l.a_ema, root);
            l.g_factor.emplace(l.g_ema, root);
        }
    }
    ready_ = true;
}

Vector CurvatureEngine::natural_direction(const Network& net, std::span<const double> grad, double tau) {
    if (!ready_ || std::abs(tau - tau_) > 1e-12) {
        refactor(tau);
    }
    return natural_direction(net, grad);
}

Vector CurvatureEngine::natural_direction(const Network& net, std::span<const double> grad) const {
    if (!ready_) {
        throw StateError("natural_direction: curvature has not been estimated yet");
    }
    if (grad.size() != net.param_count()) {
        throw ShapeError("natural_direction: gradient length " + std::to_string(grad.size()) + ", expected " +
                         std::to_string(net.param_count()));
    }
    if (mode_ == FisherMode::dense) {
        return dense_factor_->solve(grad);
    }
    if (layers_.size() != net.layers().size()) {
        throw ShapeError("natural_direction: curvature has " + std::to_string(layers_.size()) +
                         " layers, network has " + std::to_string(net.layers().size()));
    }
    Vector out(grad.size(), 0.0);
    for (std::size_t li = 0; li < layers_.size(); ++li) {
        const KfacLayerState& s = layers_[li];
        const Matrix block = net.layer_block(grad, li);
        Matrix dir;
        if (damping_ == KfacDamping::exact) {
            const SymmetricEigen& ea = *s.a_eigen;
            const SymmetricEigen& eg = *s.g_eigen;
            Matrix rot = matmul(matmul(eg.vectors.transposed(), block), ea.vectors);
            for (std::size_t i = 0; i < rot.rows(); ++i) {
                const double lg = std::max(eg.values[i], 0.0);
                for (std::size_t j = 0; j < rot.cols(); ++j) {
                    const double denom = lg * std::max(ea.values[j], 0.0) + tau_;
                    if (!(denom > 0.0)) {
                        throw CurvatureError("natural_direction: singular Kronecker block in layer " +
                                             std::to_string(li));
                    }
                    rot(i, j) /= denom;
                }
            }
            dir = matmul(matmul(eg.vectors, rot), ea.vectors.transposed());
        } else {
            const Matrix left = s.g_factor->solve(block);
            dir = s.a_factor->solve(left.transposed()).transposed();
        }
        if (!dir.all_finite()) {
            throw CurvatureError("natural_direction: non-finite direction in layer " + std::to_string(li));
        }
        net.scatter_block(dir, li, out);
    }
    return out;
}

} // namespace natsr
