#include "natsr/dynamic_scale.hpp"
#include "natsr/error.hpp"
#include "natsr/likelihood.hpp"
#include "natsr/optimizer.hpp"
#include "support/oracles.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace natsr;

namespace {

NetworkSpec linear_spec(std::size_t in, std::size_t out) {
    NetworkSpec s;
    s.input_dim = in;
    s.hidden_dims = {};
    s.output_dim = out;
    return s;
}

NetworkSpec small_mlp() {
    NetworkSpec s;
    s.input_dim = 4;
    s.hidden_dims = {6};
    s.output_dim = 1;
    s.activation = Activation::tanh;
    return s;
}

// y = W x + b + noise for a fixed W, b.
std::vector<WindowedSample> linear_stream(std::size_t n, std::size_t in, std::size_t out, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> z(0.0, 1.0);
    Matrix w(out, in + 1);
    for (double& v : w.data()) {
        v = z(rng);
    }
    std::vector<WindowedSample> stream;
    for (std::size_t t = 0; t < n; ++t) {
        WindowedSample s;
        s.t = t;
        s.x.resize(in);
        for (double& v : s.x) {
            v = z(rng);
        }
        s.y.resize(out);
        for (std::size_t i = 0; i < out; ++i) {
            double acc = w(i, in);
            for (std::size_t j = 0; j < in; ++j) {
                acc += w(i, j) * s.x[j];
            }
            s.y[i] = acc + 0.3 * z(rng);
        }
        stream.push_back(std::move(s));
    }
    return stream;
}

Vector params_of(const OnlineLearner& l) {
    const auto p = l.network().params();
    return {p.begin(), p.end()};
}

} // namespace

TEST_CASE("variant names and config validation") {
    CHECK(parse_variant("natsr") == Variant::natsr_stable);
    CHECK(parse_variant("natsr_fast") == Variant::natsr_fast);
    CHECK(to_string(Variant::er) == "er");
    CHECK(uses_curvature(Variant::natsr_fast));
    CHECK_FALSE(uses_curvature(Variant::ogd));
    CHECK_THROWS_AS(parse_variant("sgd"), ConfigError);

    OptimizerConfig cfg;
    CHECK(cfg.effective_nu() == 50.0);
    cfg.variant = Variant::natsr_fast;
    CHECK(cfg.effective_nu() == 500.0);
    cfg.nu = 7.0;
    CHECK(cfg.effective_nu() == 7.0);
    CHECK_NOTHROW(cfg.validate());

    auto bad = [](auto mutate) {
        OptimizerConfig c;
        mutate(c);
        return c;
    };
    CHECK_THROWS_AS(bad([](OptimizerConfig& c) { c.eta = 0.0; }).validate(), ConfigError);
    CHECK_THROWS_AS(bad([](OptimizerConfig& c) { c.lambda = -1.0; }).validate(), ConfigError);
    CHECK_THROWS_AS(bad([](OptimizerConfig& c) { c.alpha_ema_step = 0.0; }).validate(), ConfigError);
    CHECK_THROWS_AS(bad([](OptimizerConfig& c) { c.nu = -2.0; }).validate(), ConfigError);
    CHECK_THROWS_AS(bad([](OptimizerConfig& c) { c.mc_samples = 0; }).validate(), ConfigError);
    CHECK_THROWS_AS(bad([](OptimizerConfig& c) { c.max_stale = 0; }).validate(), ConfigError);
    try {
        bad([](OptimizerConfig& c) { c.initial_s2 = 0.0; }).validate();
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).rfind("initial_s2", 0) == 0);
    }
    CHECK_THROWS_AS(OnlineLearner(Network(small_mlp(), 1), bad([](OptimizerConfig& c) { c.eta = -1.0; }), 1),
                    ConfigError);
}

TEST_CASE("linear network follows the reference recursion") {
    constexpr std::size_t in = 3;
    constexpr std::size_t out = 2;
    OptimizerConfig cfg;
    cfg.fisher_mode = FisherMode::kfac_analytic;
    cfg.kfac_damping = KfacDamping::exact;
    cfg.alpha_ema_factors = 1.0;
    cfg.max_stale = 1;
    cfg.buffer_capacity = 0;
    cfg.eta = 0.1;
    cfg.alpha_ema_step = 0.7;
    cfg.initial_s2 = 0.5;

    Network net(linear_spec(in, out), 11);
    Vector w(net.params().begin(), net.params().end());
    OnlineLearner learner(net, cfg, 5);

    const double nu = cfg.effective_nu();
    double s2 = cfg.initial_s2;
    Vector ema(w.size(), 0.0);
    const auto stream = linear_stream(50, in, out, 3);
    for (const auto& s : stream) {
        // The output Jacobian of a linear net does not depend on the weights.
        const Matrix j = net.jacobian(s.x);
        const Vector pred = matvec(j, w);
        Vector score(out);
        Vector err(out);
        for (std::size_t i = 0; i < out; ++i) {
            err[i] = s.y[i] - pred[i];
            score[i] = -(nu + 1.0) * err[i] / (nu * s2 + err[i] * err[i]);
        }
        const Vector grad = matvec_transposed(j, score);
        const double kappa = (nu + 1.0) / ((nu + 3.0) * s2);
        const double tau = 0.9 / (1.0 + s2) + 0.1 / s2;
        Matrix f = matmul(j.transposed(), j) * kappa;
        for (std::size_t i = 0; i < f.rows(); ++i) {
            f(i, i) += tau;
        }
        const Vector delta = oracle::gauss_solve(f, grad);
        double inc = 0.0;
        for (double e : err) {
            inc += s2 * nu * (e * e - s2) / (s2 * nu + e * e);
        }
        s2 = std::max(1e-4, s2 + 0.1 * inc / out);
        for (std::size_t i = 0; i < w.size(); ++i) {
            ema[i] = 0.7 * delta[i] + 0.3 * ema[i];
            w[i] -= 0.1 * ema[i];
        }

        const StepRecord rec = learner.step(s);
        CHECK_FALSE(rec.skipped);
        CHECK(rec.fim_refreshed);
        CHECK(oracle::rel_diff(rec.forecast, pred) <= 1e-9);
    }
    CHECK(oracle::rel_diff(params_of(learner), w) <= 1e-5);
    CHECK(learner.scale().s2 == doctest::Approx(s2).epsilon(1e-9));
}

TEST_CASE("step size with no smoothing is eta times the direction") {
    OptimizerConfig cfg;
    cfg.alpha_ema_step = 1.0;
    cfg.eta = 0.05;
    OnlineLearner learner(Network(small_mlp(), 2), cfg, 3);
    for (const auto& s : linear_stream(30, 4, 1, 4)) {
        const StepRecord rec = learner.step(s);
        REQUIRE_FALSE(rec.skipped);
        CHECK(rec.update_norm == doctest::Approx(cfg.eta * rec.direction_norm).epsilon(1e-12));
    }
}

TEST_CASE("replay weight zero ignores the buffer contents") {
    for (Variant v : {Variant::natsr_stable, Variant::er}) {
        CAPTURE(to_string(v));
        OptimizerConfig cfg;
        cfg.variant = v;
        cfg.lambda = 0.0;
        cfg.mc_samples = 20;
        cfg.eta = 0.01;
        OnlineLearner plain(Network(small_mlp(), 7), cfg, 8);
        OnlineLearner filled(Network(small_mlp(), 7), cfg, 8);
        for (const auto& s : linear_stream(100, 4, 1, 99)) {
            filled.buffer().reservoir_update(s);
        }
        for (const auto& s : linear_stream(40, 4, 1, 9)) {
            plain.step(s);
            filled.step(s);
        }
        CHECK(params_of(plain) == params_of(filled));
    }
}

TEST_CASE("replay changes the update once the buffer has samples") {
    OptimizerConfig cfg;
    cfg.variant = Variant::er;
    cfg.eta = 0.01;
    OptimizerConfig off = cfg;
    off.lambda = 0.0;
    OnlineLearner with(Network(small_mlp(), 7), cfg, 8);
    OnlineLearner without(Network(small_mlp(), 7), off, 8);
    const auto stream = linear_stream(5, 4, 1, 10);
    with.step(stream[0]);
    without.step(stream[0]);
    CHECK(params_of(with) == params_of(without)); // buffer empty on the first step
    with.step(stream[1]);
    without.step(stream[1]);
    CHECK(params_of(with) != params_of(without));
}

TEST_CASE("er without replay is ogd") {
    OptimizerConfig er;
    er.variant = Variant::er;
    er.lambda = 0.0;
    er.eta = 0.02;
    OptimizerConfig ogd = er;
    ogd.variant = Variant::ogd;
    OnlineLearner a(Network(small_mlp(), 4), er, 1);
    OnlineLearner b(Network(small_mlp(), 4), ogd, 1);
    for (const auto& s : linear_stream(30, 4, 1, 12)) {
        const StepRecord ra = a.step(s);
        const StepRecord rb = b.step(s);
        CHECK(ra.loss == rb.loss);
    }
    CHECK(params_of(a) == params_of(b));
    CHECK_THROWS_AS(b.er_step(linear_stream(1, 4, 1, 1)[0]), StateError);
}

TEST_CASE("a perfect forecast leaves the weights alone") {
    for (Variant v : {Variant::natsr_stable, Variant::ogd}) {
        OptimizerConfig cfg;
        cfg.variant = v;
        cfg.buffer_capacity = 0;
        OnlineLearner learner(Network(small_mlp(), 5), cfg, 2);
        const Vector before = params_of(learner);
        WindowedSample s{0, {0.1, -0.2, 0.3, 0.4}, {}};
        s.y = learner.predict(s.x);
        const StepRecord rec = learner.step(s);
        CHECK(rec.loss == 0.0);
        CHECK(rec.update_norm == 0.0);
        CHECK(params_of(learner) == before);
    }
}

TEST_CASE("the forecast is made before the target is seen") {
    OptimizerConfig cfg;
    OnlineLearner a(Network(small_mlp(), 6), cfg, 2);
    OnlineLearner b(Network(small_mlp(), 6), cfg, 2);
    const auto stream = linear_stream(10, 4, 1, 20);
    for (const auto& s : stream) {
        WindowedSample sentinel = s;
        sentinel.y[0] = 1e6;
        const StepRecord ra = a.step(s);
        const StepRecord rb = b.step(sentinel);
        CHECK(ra.forecast == rb.forecast);
        CHECK(rb.target[0] == 1e6);
        // Keep the two learners in lockstep.
        b.network().set_params(a.network().params());
        b.set_scale(a.scale());
    }
}

TEST_CASE("an overflowing update is skipped and leaves the weights unchanged") {
    SUBCASE("ogd") {
        OptimizerConfig cfg;
        cfg.variant = Variant::ogd;
        cfg.eta = 1e308;
        OnlineLearner learner(Network(small_mlp(), 5), cfg, 2);
        const Vector before = params_of(learner);
        const StepRecord rec = learner.step({0, {1.0, 1.0, 1.0, 1.0}, {1e3}});
        CHECK(rec.skipped);
        CHECK(learner.skipped_steps() == 1);
        CHECK(params_of(learner) == before);
    }
    SUBCASE("natsr") {
        OptimizerConfig cfg;
        cfg.eta = 1e308;
        cfg.initial_s2 = 1e6;
        cfg.fisher_mode = FisherMode::kfac_analytic;
        OnlineLearner learner(Network(linear_spec(2, 1), 5), cfg, 2);
        const Vector before = params_of(learner);
        const double s2_before = learner.scale().s2;
        const StepRecord rec = learner.step({0, {0.5, -0.5}, {1e3}});
        CHECK(rec.skipped);
        CHECK(learner.skipped_steps() == 1);
        CHECK(params_of(learner) == before);
        CHECK(learner.scale().s2 == s2_before);
        CHECK(learner.update_state().step == 0);
        // the sample still enters the buffer
        CHECK(learner.buffer().size() == 1);
    }
}

TEST_CASE("fast variant takes an AdamW step on the smoothed direction") {
    OptimizerConfig cfg;
    cfg.variant = Variant::natsr_fast;
    cfg.eta = 1e-3;
    cfg.alpha_ema_step = 1.0;
    cfg.buffer_capacity = 0;
    OnlineLearner learner(Network(small_mlp(), 8), cfg, 4);
    const Vector before = params_of(learner);
    const auto stream = linear_stream(2, 4, 1, 30);

    const StepRecord rec = learner.step(stream[0]);
    REQUIRE_FALSE(rec.skipped);
    const Vector after = params_of(learner);
    const Vector& ema = learner.update_state().delta_ema;
    // First bias-corrected Adam step is ema/(|ema| + eps), i.e. about ±1.
    for (std::size_t i = 0; i < before.size(); ++i) {
        const double expect = ema[i] / (std::abs(ema[i]) + cfg.adam_eps) + cfg.weight_decay * before[i];
        CHECK(after[i] == doctest::Approx(before[i] - cfg.eta * expect).epsilon(1e-9));
    }
    for (std::size_t i = 0; i < ema.size(); ++i) {
        CHECK(learner.update_state().adam_m[i] == doctest::Approx(0.1 * ema[i]));
    }
}

TEST_CASE("stable variant refreshes during burn-in then when stale") {
    OptimizerConfig cfg;
    cfg.max_stale = 5;
    cfg.refresh_z = 1e9;
    cfg.mc_samples = 10;
    OnlineLearner learner(Network(small_mlp(), 8), cfg, 4);
    std::vector<bool> refreshed;
    for (const auto& s : linear_stream(30, 4, 1, 31)) {
        refreshed.push_back(learner.step(s).fim_refreshed);
    }
    for (std::size_t i = 0; i < cfg.burn_in; ++i) {
        CHECK(refreshed[i]);
    }
    // after burn-in: exactly every max_stale-th step
    for (std::size_t i = cfg.burn_in; i < refreshed.size(); ++i) {
        CAPTURE(i);
        CHECK(refreshed[i] == ((i - (cfg.burn_in - 1)) % cfg.max_stale == 0));
    }
}
