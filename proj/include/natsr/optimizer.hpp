#pragma once

#include "natsr/dynamic_scale.hpp"
#include "natsr/kfac.hpp"
#include "natsr/metrics.hpp"
#include "natsr/network.hpp"
#include "natsr/replay_buffer.hpp"
#include "natsr/sample.hpp"

#include <cstdint>
#include <optional>
#include <random>
#include <string>

namespace natsr {

/// natsr_stable: damped natural step, Student's-t with ν = 50, plain descent.
/// natsr_fast:   same direction, ν = 500, then AdamW on the smoothed step.
/// ogd:          gradient descent on the Gaussian loss.
/// er:           ogd plus λ-weighted replay gradients.
enum class Variant { natsr_stable, natsr_fast, ogd, er };

std::string to_string(Variant v);
Variant parse_variant(const std::string& s);
bool uses_curvature(Variant v);

struct OptimizerConfig {
    Variant variant = Variant::natsr_stable;
    double eta = 1e-3;
    double lambda = 1.0;
    double alpha_ema_step = 0.5;
    double alpha_ema_factors = 0.5;
    std::optional<double> nu; ///< unset: 50 for natsr_stable, 500 for natsr_fast
    std::size_t replay_batch = 8;
    std::size_t mc_samples = 100;
    std::size_t buffer_capacity = 500;

    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    double weight_decay = 0.01; ///< decoupled, natsr_fast only

    bool dynamic_scale = true;
    double initial_s2 = 1.0;
    double alpha_s = 0.1;
    double beta = 1.0;
    double scale_floor = 1e-4;
    TauVariant tau_variant = TauVariant::smooth;

    FisherMode fisher_mode = FisherMode::kfac_mc;
    KfacDamping kfac_damping = KfacDamping::exact;
    std::size_t max_stale = 100;
    double refresh_z = kWorstOnePercentZ;
    double loss_ema_weight = 0.01;
    std::size_t burn_in = 10;

    double effective_nu() const;
    /// Throws ConfigError naming the offending field.
    void validate() const;
};

/// Optimizer memory carried between steps.
struct UpdateState {
    Vector delta_ema;
    Vector adam_m;
    Vector adam_v;
    std::size_t step = 0;

    explicit UpdateState(std::size_t params = 0)
        : delta_ema(params, 0.0), adam_m(params, 0.0), adam_v(params, 0.0) {}
};

/// One online learner: the network plus every piece of state the chosen
/// variant updates. Each call to step() predicts on the new sample first and
/// then updates, so the logged forecast never sees the target.
class OnlineLearner {
public:
    OnlineLearner(Network net, OptimizerConfig cfg, std::uint64_t seed);

    StepRecord step(const WindowedSample& sample);

    StepRecord natsr_step(const WindowedSample& sample);
    StepRecord ogd_step(const WindowedSample& sample);
    StepRecord er_step(const WindowedSample& sample);

    Vector predict(std::span<const double> x) const { return net_.forward(x).output; }

    const Network& network() const { return net_; }
    Network& network() { return net_; }
    const OptimizerConfig& config() const { return cfg_; }
    const ScaleState& scale() const { return scale_; }
    void set_scale(const ScaleState& s) { scale_ = s; }
    const UpdateState& update_state() const { return update_; }
    const ReservoirBuffer& buffer() const { return buffer_; }
    ReservoirBuffer& buffer() { return buffer_; }
    const CurvatureEngine& curvature() const { return curvature_; }
    const LossStats& loss_stats() const { return loss_stats_; }
    /// Steps whose update was skipped after a curvature or numeric failure.
    std::size_t skipped_steps() const { return skipped_; }

private:
    std::vector<WindowedSample> draw_replay();
    /// λ-weighted mean replay gradient and loss. `score` maps errors to ∂loss/∂pred.
    template <class Loss, class Score>
    double replay_gradient(const std::vector<WindowedSample>& batch, Vector& grad, Loss loss, Score score) const;

    Network net_;
    OptimizerConfig cfg_;
    StudentTSpec tspec_;
    ScaleState scale_;
    UpdateState update_;
    CurvatureEngine curvature_;
    ReservoirBuffer buffer_;
    LossStats loss_stats_;
    std::size_t steps_since_refresh_ = 0;
    std::size_t skipped_ = 0;
    std::mt19937_64 rng_;
};

} // namespace natsr
