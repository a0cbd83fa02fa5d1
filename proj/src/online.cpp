#include "natsr/online.hpp"

#include "natsr/error.hpp"
#include "natsr/likelihood.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <random>

namespace natsr {

namespace {

constexpr std::uint64_t kShuffleStream = 0xd6e8feb86659fd93ULL;
constexpr std::uint64_t kLearnerStream = 0xa0761d6478bd642fULL;

struct SampleLoss {
    bool student;
    StudentTSpec spec;

    LossValue value(std::span<const double> y, std::span<const double> pred) const {
        return student ? t_nll(y, pred, spec) : gaussian_nll(y, pred);
    }
    Vector score(std::span<const double> errors) const {
        return student ? t_score_output(errors, spec) : gaussian_score(errors);
    }
};

SampleLoss loss_for(const OptimizerConfig& opt) {
    SampleLoss l{uses_curvature(opt.variant), {}};
    l.spec.nu = opt.effective_nu();
    l.spec.s2 = opt.initial_s2;
    return l;
}

double mean_loss(const Network& net, const std::vector<WindowedSample>& samples, const SampleLoss& loss) {
    double total = 0.0;
    for (const auto& s : samples) {
        total += loss.value(s.y, net.forward(s.x).output).total;
    }
    return samples.empty() ? 0.0 : total / static_cast<double>(samples.size());
}

} // namespace

NetworkSpec make_network_spec(const ExperimentConfig& cfg, std::size_t features) {
    NetworkSpec spec;
    spec.input_dim = cfg.lookback * features;
    spec.input_features = features;
    spec.hidden_dims = cfg.hidden_dims;
    spec.output_dim = cfg.horizon * features;
    spec.activation = cfg.activation;
    spec.conv_front = cfg.conv_front;
    return spec;
}

WarmupResult warm_up(Network& net, const WindowSplit& split, const ExperimentConfig& cfg, std::uint64_t seed) {
    const WarmupConfig& wc = cfg.warmup;
    const SampleLoss loss = loss_for(cfg.optimizer);
    const std::vector<WindowedSample>& monitor = split.validation.empty() ? split.warmup : split.validation;

    WarmupResult result;
    result.calibrated_s2 = cfg.optimizer.initial_s2;
    const std::size_t P = net.param_count();
    Vector m(P, 0.0);
    Vector v(P, 0.0);
    std::size_t adam_t = 0;
    constexpr double b1 = 0.9;
    constexpr double b2 = 0.999;
    constexpr double eps = 1e-8;

    std::vector<double> best(net.params().begin(), net.params().end());
    result.best_validation_loss = mean_loss(net, monitor, loss);
    std::size_t since_best = 0;
    std::mt19937_64 rng(seed ^ kShuffleStream);
    std::vector<std::size_t> order(split.warmup.size());
    std::iota(order.begin(), order.end(), 0);
    const std::size_t batch = std::max<std::size_t>(wc.batch_size, 1);

    for (std::size_t epoch = 0; epoch < wc.epochs && !split.warmup.empty(); ++epoch) {
        const double lr = 0.5 * wc.lr *
                          (1.0 + std::cos(std::numbers::pi * static_cast<double>(epoch) /
                                          static_cast<double>(wc.epochs)));
        std::shuffle(order.begin(), order.end(), rng);
        for (std::size_t start = 0; start < order.size(); start += batch) {
            const std::size_t end = std::min(order.size(), start + batch);
            Vector grad(P, 0.0);
            for (std::size_t k = start; k < end; ++k) {
                const WindowedSample& s = split.warmup[order[k]];
                ForwardPass pass = net.forward(s.x);
                const LossValue lv = loss.value(s.y, pass.output);
                const Vector g = net.backward(pass.cache, loss.score(lv.errors));
                for (std::size_t i = 0; i < P; ++i) {
                    grad[i] += g[i];
                }
            }
            const double inv = 1.0 / static_cast<double>(end - start);
            ++adam_t;
            const double c1 = 1.0 - std::pow(b1, static_cast<double>(adam_t));
            const double c2 = 1.0 - std::pow(b2, static_cast<double>(adam_t));
            Vector stepv(P);
            for (std::size_t i = 0; i < P; ++i) {
                const double g = grad[i] * inv;
                m[i] = b1 * m[i] + (1.0 - b1) * g;
                v[i] = b2 * v[i] + (1.0 - b2) * g * g;
                stepv[i] = (m[i] / c1) / (std::sqrt(v[i] / c2) + eps);
            }
            net.apply_delta(stepv, lr);
        }
        ++result.epochs_run;
        const double val = mean_loss(net, monitor, loss);
        if (val < result.best_validation_loss) {
            result.best_validation_loss = val;
            result.best_epoch = epoch + 1;
            best.assign(net.params().begin(), net.params().end());
            since_best = 0;
        } else if (++since_best >= wc.patience) {
            break;
        }
    }
    net.set_params(best);

    if (uses_curvature(cfg.optimizer.variant) && wc.calibrate_scale) {
        ScaleState s;
        s.s2 = cfg.optimizer.initial_s2;
        s.alpha_s = cfg.optimizer.alpha_s;
        s.scale_floor = cfg.optimizer.scale_floor;
        for (const auto& sample : monitor) {
            const Vector pred = net.forward(sample.x).output;
            Vector errors(pred.size());
            for (std::size_t i = 0; i < pred.size(); ++i) {
                errors[i] = sample.y[i] - pred[i];
            }
            s = scale_step(s, errors, loss.spec.nu);
        }
        result.calibrated_s2 = s.s2;
    }
    return result;
}

RunArtifacts run_online(const TimeSeriesFrame& frame, const ExperimentConfig& cfg, std::uint64_t seed) {
    cfg.optimizer.validate();
    const WindowSplit split = split_and_window(frame, cfg.lookback, cfg.horizon, cfg.splits);
    const Vector naive = naive_abs_errors(split.normalized, split.validation_end);
    if (std::all_of(naive.begin(), naive.end(), [](double x) { return x == 0.0; })) {
        throw DegenerateSeriesError("online segment is constant; the naive forecaster is perfect and MASE is undefined");
    }

    Network net(make_network_spec(cfg, frame.features()), seed);
    RunArtifacts out;
    out.warmup = warm_up(net, split, cfg, seed);

    // The online optimizer starts from scratch; only the weights and the
    // calibrated scale carry over.
    OptimizerConfig online_cfg = cfg.optimizer;
    online_cfg.initial_s2 = out.warmup.calibrated_s2;
    OnlineLearner learner(std::move(net), online_cfg, seed ^ kLearnerStream);

    out.records.reserve(split.online.size());
    for (const WindowedSample& s : split.online) {
        out.records.push_back(learner.step(s));
    }
    out.summary = summarize(out.records, naive, frame.features());
    out.summary.seed = seed;
    out.final_scale = learner.scale();
    out.net = learner.network();
    return out;
}

} // namespace natsr
