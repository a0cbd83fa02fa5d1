#include "natsr/optimizer.hpp"

#include "natsr/error.hpp"
#include "natsr/likelihood.hpp"

#include <cmath>

namespace natsr {

namespace {

constexpr std::uint64_t kBufferStream = 0x5bd1e9955bd1e995ULL;

void require(bool ok, const char* field, const char* what) {
    if (!ok) {
        throw ConfigError(std::string(field) + ": " + what);
    }
}

} // namespace

std::string to_string(Variant v) {
    switch (v) {
    case Variant::natsr_stable: return "natsr_stable";
    case Variant::natsr_fast: return "natsr_fast";
    case Variant::ogd: return "ogd";
    case Variant::er: return "er";
    }
    return "unknown";
}

Variant parse_variant(const std::string& s) {
    if (s == "natsr_stable" || s == "natsr") {
        return Variant::natsr_stable;
    }
    if (s == "natsr_fast") {
        return Variant::natsr_fast;
    }
    if (s == "ogd") {
        return Variant::ogd;
    }
    if (s == "er") {
        return Variant::er;
    }
    throw ConfigError("variant: unknown value '" + s + "' (expected natsr_stable, natsr_fast, ogd or er)");
}

bool uses_curvature(Variant v) { return v == Variant::natsr_stable || v == Variant::natsr_fast; }

double OptimizerConfig::effective_nu() const {
    if (nu) {
        return *nu;
    }
    return variant == Variant::natsr_fast ? 500.0 : 50.0;
}

void OptimizerConfig::validate() const {
    require(std::isfinite(eta) && eta > 0.0, "eta", "must be > 0");
    require(std::isfinite(lambda) && lambda >= 0.0, "lambda", "must be >= 0");
    require(alpha_ema_step > 0.0 && alpha_ema_step <= 1.0, "alpha_ema_step", "must lie in (0, 1]");
    require(alpha_ema_factors > 0.0 && alpha_ema_factors <= 1.0, "alpha_ema_factors", "must lie in (0, 1]");
    require(!nu || (std::isfinite(*nu) && *nu > 0.0), "nu", "must be > 0");
    require(fisher_mode != FisherMode::kfac_mc || mc_samples >= 1, "mc_samples", "must be >= 1");
    require(adam_beta1 >= 0.0 && adam_beta1 < 1.0, "adam_beta1", "must lie in [0, 1)");
    require(adam_beta2 >= 0.0 && adam_beta2 < 1.0, "adam_beta2", "must lie in [0, 1)");
    require(adam_eps > 0.0, "adam_eps", "must be > 0");
    require(weight_decay >= 0.0, "weight_decay", "must be >= 0");
    require(std::isfinite(initial_s2) && initial_s2 > 0.0, "initial_s2", "must be > 0");
    require(alpha_s >= 0.0, "alpha_s", "must be >= 0");
    require(beta > 0.0, "beta", "must be > 0");
    require(scale_floor > 0.0, "scale_floor", "must be > 0");
    require(max_stale >= 1, "max_stale", "must be >= 1");
    require(refresh_z > 0.0, "refresh_z", "must be > 0");
    require(loss_ema_weight > 0.0 && loss_ema_weight <= 1.0, "loss_ema_weight", "must lie in (0, 1]");
}

OnlineLearner::OnlineLearner(Network net, OptimizerConfig cfg, std::uint64_t seed)
    : net_(std::move(net)),
      cfg_(std::move(cfg)),
      update_(net_.param_count()),
      curvature_(cfg_.fisher_mode, cfg_.kfac_damping, cfg_.alpha_ema_factors),
      buffer_(cfg_.buffer_capacity, seed ^ kBufferStream),
      rng_(seed) {
    cfg_.validate();
    tspec_.nu = cfg_.effective_nu();
    tspec_.s2 = cfg_.initial_s2;
    scale_.s2 = cfg_.initial_s2;
    scale_.alpha_s = cfg_.alpha_s;
    scale_.scale_floor = cfg_.scale_floor;
    scale_.beta = cfg_.beta;
    scale_.tau_variant = cfg_.tau_variant;
    loss_stats_.ema_weight = cfg_.loss_ema_weight;
    loss_stats_.burn_in = cfg_.burn_in;
}

StepRecord OnlineLearner::step(const WindowedSample& sample) {
    switch (cfg_.variant) {
    case Variant::natsr_stable:
    case Variant::natsr_fast: return natsr_step(sample);
    case Variant::ogd: return ogd_step(sample);
    case Variant::er: return er_step(sample);
    }
    throw ConfigError("variant: unhandled");
}

std::vector<WindowedSample> OnlineLearner::draw_replay() {
    if (cfg_.lambda == 0.0 || cfg_.replay_batch == 0 || buffer_.empty()) {
        return {};
    }
    return buffer_.sample_batch(cfg_.replay_batch, rng_);
}

template <class Loss, class Score>
double OnlineLearner::replay_gradient(const std::vector<WindowedSample>& batch, Vector& grad, Loss loss,
                                      Score score) const {
    if (batch.empty()) {
        return 0.0;
    }
    const double w = cfg_.lambda / static_cast<double>(batch.size());
    double total = 0.0;
    for (const auto& b : batch) {
        ForwardPass pass = net_.forward(b.x);
        const LossValue lv = loss(b.y, pass.output);
        const Vector g = net_.backward(pass.cache, score(lv.errors));
        for (std::size_t i = 0; i < grad.size(); ++i) {
            grad[i] += w * g[i];
        }
        total += w * lv.total;
    }
    return total;
}

StepRecord OnlineLearner::natsr_step(const WindowedSample& sample) {
    StepRecord rec;
    rec.t = sample.t;
    rec.variant = to_string(cfg_.variant);
    rec.target = sample.y;
    tspec_.s2 = scale_.s2;
    rec.s2 = scale_.s2;

    const std::vector<WindowedSample> replay = draw_replay();

    ForwardPass pass = net_.forward(sample.x);
    rec.forecast = pass.output;
    const LossValue lv = t_nll(sample.y, pass.output, tspec_);
    rec.loss = lv.total;
    Vector grad = net_.backward(pass.cache, t_score_output(lv.errors, tspec_));
    const double combined_loss =
        lv.total + replay_gradient(
                       replay, grad,
                       [this](std::span<const double> y, std::span<const double> p) { return t_nll(y, p, tspec_); },
                       [this](std::span<const double> e) { return t_score_output(e, tspec_); });

    const double tau = tau_from_scale(scale_);
    rec.tau = tau;
    rec.bound = bound_value(tspec_, net_.spec().output_dim, tau);

    if (curvature_.ready()) {
        ++steps_since_refresh_;
    }
    const bool refresh = !curvature_.ready() || refresh_decision(combined_loss, loss_stats_, steps_since_refresh_,
                                                                 cfg_.max_stale, cfg_.refresh_z);
    loss_stats_.observe(combined_loss);

    try {
        if (refresh) {
            const std::vector<Vector> new_x{sample.x};
            std::vector<Vector> replay_x;
            replay_x.reserve(replay.size());
            for (const auto& r : replay) {
                replay_x.push_back(r.x);
            }
            const CurvatureBatch batch{new_x, replay_x, cfg_.lambda};
            curvature_.refresh(net_, batch, tspec_, cfg_.mc_samples, tau, rng_, update_.step);
            steps_since_refresh_ = 0;
            rec.fim_refreshed = true;
        }

        const Vector direction = curvature_.natural_direction(net_, grad, tau);
        if (!all_finite(direction)) {
            throw NumericError("natural direction is not finite");
        }
        rec.direction_norm = norm2(direction);

        const ScaleState next_scale = cfg_.dynamic_scale ? scale_step(scale_, lv.errors, tspec_.nu) : scale_;

        const std::size_t P = direction.size();
        const double a = cfg_.alpha_ema_step;
        Vector ema(P);
        for (std::size_t i = 0; i < P; ++i) {
            ema[i] = a * direction[i] + (1.0 - a) * update_.delta_ema[i];
        }

        Vector stepv = ema;
        Vector m;
        Vector v;
        if (cfg_.variant == Variant::natsr_fast) {
            m.resize(P);
            v.resize(P);
            const auto t = static_cast<double>(update_.step + 1);
            const double c1 = 1.0 - std::pow(cfg_.adam_beta1, t);
            const double c2 = 1.0 - std::pow(cfg_.adam_beta2, t);
            const auto w = net_.params();
            for (std::size_t i = 0; i < P; ++i) {
                m[i] = cfg_.adam_beta1 * update_.adam_m[i] + (1.0 - cfg_.adam_beta1) * ema[i];
                v[i] = cfg_.adam_beta2 * update_.adam_v[i] + (1.0 - cfg_.adam_beta2) * ema[i] * ema[i];
                stepv[i] = (m[i] / c1) / (std::sqrt(v[i] / c2) + cfg_.adam_eps) + cfg_.weight_decay * w[i];
            }
        }
        if (!all_finite(stepv)) {
            throw NumericError("update is not finite");
        }

        net_.apply_delta(stepv, cfg_.eta);
        scale_ = next_scale;
        update_.delta_ema = std::move(ema);
        if (cfg_.variant == Variant::natsr_fast) {
            update_.adam_m = std::move(m);
            update_.adam_v = std::move(v);
        }
        ++update_.step;
        rec.update_norm = cfg_.eta * norm2(stepv);
    } catch (const CurvatureError&) {
        rec.skipped = true;
    } catch (const NumericError&) {
        rec.skipped = true;
    }
    if (rec.skipped) {
        ++skipped_;
    }

    buffer_.reservoir_update(sample);
    return rec;
}

StepRecord OnlineLearner::ogd_step(const WindowedSample& sample) {
    StepRecord rec;
    rec.t = sample.t;
    rec.variant = to_string(cfg_.variant);
    rec.target = sample.y;
    rec.s2 = 1.0;

    const std::vector<WindowedSample> replay =
        cfg_.variant == Variant::er ? draw_replay() : std::vector<WindowedSample>{};

    ForwardPass pass = net_.forward(sample.x);
    rec.forecast = pass.output;
    const LossValue lv = gaussian_nll(sample.y, pass.output);
    rec.loss = lv.total;
    Vector grad = net_.backward(pass.cache, gaussian_score(lv.errors));
    replay_gradient(
        replay, grad, [](std::span<const double> y, std::span<const double> p) { return gaussian_nll(y, p); },
        [](std::span<const double> e) { return gaussian_score(e); });

    try {
        net_.apply_delta(grad, cfg_.eta);
        rec.update_norm = cfg_.eta * norm2(grad);
        ++update_.step;
    } catch (const NumericError&) {
        rec.skipped = true;
        ++skipped_;
    }
    if (cfg_.variant == Variant::er) {
        buffer_.reservoir_update(sample);
    }
    return rec;
}

StepRecord OnlineLearner::er_step(const WindowedSample& sample) {
    if (cfg_.variant != Variant::er) {
        throw StateError("er_step called on a learner configured as " + to_string(cfg_.variant));
    }
    return ogd_step(sample);
}

} // namespace natsr
