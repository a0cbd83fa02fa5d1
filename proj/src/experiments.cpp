#include "natsr/experiments.hpp"

#include "natsr/error.hpp"
#include "natsr/io.hpp"
#include "natsr/kfac.hpp"
#include "natsr/likelihood.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <mutex>
#include <random>
#include <sstream>
#include <thread>

namespace natsr {

int exit_code_for(const std::exception& e) {
    if (dynamic_cast<const ConfigError*>(&e)) {
        return kExitConfig;
    }
    if (dynamic_cast<const IngestionError*>(&e)) {
        return kExitIngestion;
    }
    if (dynamic_cast<const DegenerateSeriesError*>(&e)) {
        return kExitDegenerate;
    }
    if (dynamic_cast<const NumericError*>(&e) || dynamic_cast<const CurvatureError*>(&e)) {
        return kExitNumeric;
    }
    return kExitOther;
}

std::size_t worker_count(std::size_t jobs) {
    std::size_t n = std::max<std::size_t>(std::thread::hardware_concurrency(), 1);
    if (const char* env = std::getenv("NATSR_THREADS")) {
        const long v = std::strtol(env, nullptr, 10);
        if (v > 0) {
            n = static_cast<std::size_t>(v);
        }
    }
    return std::max<std::size_t>(std::min(n, jobs), 1);
}

void parallel_for(std::size_t jobs, std::size_t threads, const std::function<void(std::size_t)>& fn) {
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    auto worker = [&] {
        for (std::size_t i = next++; i < jobs; i = next++) {
            try {
                fn(i);
            } catch (...) {
                std::lock_guard lock(failure_mutex);
                if (!failure) {
                    failure = std::current_exception();
                }
                next = jobs;
            }
        }
    };
    threads = std::max<std::size_t>(std::min(threads, jobs), 1);
    std::vector<std::thread> pool;
    for (std::size_t t = 1; t < threads; ++t) {
        pool.emplace_back(worker);
    }
    worker();
    for (auto& t : pool) {
        t.join();
    }
    if (failure) {
        std::rethrow_exception(failure);
    }
}

TimeSeriesFrame synthesize(const SynthOptions& opt) {
    if (opt.kind == "outlier_sine") {
        OutlierSineParams p;
        p.length = opt.length;
        p.period = opt.period;
        p.amplitude = opt.amplitude;
        p.noise_sd = opt.noise_sd;
        p.outlier_prob = opt.outlier_prob;
        p.outlier_magnitude = opt.outlier_magnitude;
        p.seed = opt.seed;
        return gen_outlier_sinusoid(p);
    }
    const RegimeSegment a{opt.amplitude, 1.0 / opt.period, 0};
    const RegimeSegment b{opt.amplitude_b, opt.frequency_b, 0};
    if (opt.kind == "regime") {
        return gen_regime_switch(opt.length, {a, b}, opt.noise_sd, opt.seed);
    }
    if (opt.kind == "recurring") {
        std::vector<RegimeSegment> segs;
        for (std::size_t c = 0; c < std::max<std::size_t>(opt.cycles, 1); ++c) {
            segs.push_back(a);
            segs.push_back(b);
        }
        segs.push_back(a);
        return gen_regime_switch(opt.length, segs, opt.noise_sd, opt.seed);
    }
    throw ConfigError("kind: unknown synthetic stream '" + opt.kind + "' (expected outlier_sine, regime or recurring)");
}

void cmd_synth(const SynthOptions& opt, const std::filesystem::path& out_path) {
    if (out_path.has_parent_path()) {
        std::filesystem::create_directories(out_path.parent_path());
    }
    write_csv(synthesize(opt), out_path);
}

TimeSeriesFrame load_frame(const std::filesystem::path& data, const ExperimentConfig& cfg) {
    return ingest_csv(data, cfg.csv_header, cfg.timestamp_col);
}

namespace {

std::string run_tag(const RunSummary& s) { return s.variant + "_seed" + std::to_string(s.seed); }

void check_skip_rate(const std::vector<RunSummary>& summaries) {
    for (const auto& s : summaries) {
        if (s.skipped_steps * 100 > s.steps) {
            throw NumericError("run " + run_tag(s) + " skipped " + std::to_string(s.skipped_steps) + " of " +
                               std::to_string(s.steps) + " steps");
        }
    }
}

} // namespace

std::vector<RunSummary> cmd_run(const RunOptions& opt) {
    ExperimentConfig cfg = load_config(opt.config);
    if (opt.variant) {
        cfg.optimizer.variant = *opt.variant;
    }
    const TimeSeriesFrame frame = load_frame(opt.data, cfg);
    const std::string config_hash = hex64(hash_file(opt.config));
    const std::string data_hash = hex64(hash_file(opt.data));
    if (opt.seeds.empty()) {
        throw ConfigError("seeds: at least one seed is required");
    }

    std::vector<RunArtifacts> runs(opt.seeds.size());
    parallel_for(runs.size(), worker_count(runs.size()),
                 [&](std::size_t i) { runs[i] = run_online(frame, cfg, opt.seeds[i]); });

    std::filesystem::create_directories(opt.out_dir);
    std::vector<RunSummary> summaries;
    std::ofstream summary(opt.out_dir / "summary.csv");
    summary << summary_csv_header() << "\n";
    for (auto& run : runs) {
        run.summary.config_hash = config_hash;
        run.summary.data_hash = data_hash;
        const std::string tag = run_tag(run.summary);
        std::ofstream jsonl(opt.out_dir / ("records_" + tag + ".jsonl"));
        write_records_jsonl(jsonl, run.records);
        save_checkpoint(run.net, opt.out_dir / ("checkpoint_" + tag + ".txt"));
        summary << summary_csv_row(run.summary) << "\n";
        summaries.push_back(run.summary);
    }
    summary.flush();
    check_skip_rate(summaries);
    return summaries;
}

namespace {

struct BoundTrial {
    double exact_ratio = 0.0;
    double kfac_ratio = 0.0;
};

/// ‖(κJᵀJ + τI)⁻¹Jᵀg‖ through the m×m system (κJJᵀ + τI)z = g, d = Jᵀz.
double exact_step_norm(const Matrix& J, std::span<const double> g, double kappa, double tau) {
    Matrix M = matmul(J, J.transposed());
    M *= kappa;
    const SpdFactor f(std::move(M), tau);
    return norm2(matvec_transposed(J, f.solve(g)));
}

BoundTrial bound_trial(const Network& net, std::span<const double> x, std::span<const double> y,
                       const StudentTSpec& spec, double tau, bool with_kfac) {
    ForwardPass pass = net.forward(x);
    const LossValue lv = t_nll(y, pass.output, spec);
    const Vector g = t_score_output(lv.errors, spec);
    const Matrix J = net.jacobian(x);
    const double kappa = t_output_fisher_kappa(spec);
    const double bound = bound_value(spec, g.size(), tau);

    BoundTrial out;
    out.exact_ratio = exact_step_norm(J, g, kappa, tau) / bound;
    if (with_kfac) {
        CurvatureEngine engine(FisherMode::kfac_analytic, KfacDamping::exact, 1.0);
        const std::vector<Vector> inputs{Vector(x.begin(), x.end())};
        std::mt19937_64 unused(0);
        engine.refresh(net, CurvatureBatch{inputs, {}, 0.0}, spec, 0, tau, unused, 0);
        const Vector grad = matvec_transposed(J, g);
        out.kfac_ratio = norm2(engine.natural_direction(net, grad)) / bound;
    }
    return out;
}

double log_uniform(std::mt19937_64& rng, double lo, double hi) {
    std::uniform_real_distribution<double> u(std::log(lo), std::log(hi));
    return std::exp(u(rng));
}

} // namespace

BoundCheckReport cmd_bound_check(const BoundCheckOptions& opt) {
    if (opt.max_layers == 0 || opt.max_width == 0) {
        throw ConfigError("bound-check: max_layers and max_width must be >= 1");
    }
    BoundCheckReport rep;
    rep.trials = opt.trials;
    std::mt19937_64 rng(opt.seed);
    std::uniform_int_distribution<std::size_t> layers_dist(1, opt.max_layers);
    std::uniform_int_distribution<std::size_t> width_dist(1, opt.max_width);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::normal_distribution<double> normal(0.0, 1.0);

    for (std::size_t trial = 0; trial < opt.trials; ++trial) {
        NetworkSpec ns;
        ns.input_dim = width_dist(rng);
        ns.output_dim = width_dist(rng);
        ns.hidden_dims.clear();
        const std::size_t layers = layers_dist(rng);
        for (std::size_t l = 1; l < layers; ++l) {
            ns.hidden_dims.push_back(width_dist(rng));
        }
        ns.activation = unit(rng) < 0.5 ? Activation::relu : Activation::tanh;
        const Network net(ns, rng());

        StudentTSpec spec;
        spec.nu = log_uniform(rng, 2.0, 500.0);
        spec.s2 = log_uniform(rng, 1e-3, 1e3);
        const double tau = log_uniform(rng, 1e-2, 10.0);

        const double x_scale = log_uniform(rng, 0.1, 10.0);
        Vector x(ns.input_dim);
        for (double& v : x) {
            v = x_scale * normal(rng);
        }
        const Vector pred = net.forward(x).output;
        // Errors around the score's peak |e| = s√ν, spread over four decades.
        const double peak = std::sqrt(spec.s2 * spec.nu);
        Vector y(pred.size());
        for (std::size_t i = 0; i < y.size(); ++i) {
            y[i] = pred[i] + peak * normal(rng) * log_uniform(rng, 1e-2, 1e2);
        }
        const BoundTrial t = bound_trial(net, x, y, spec, tau, true);
        rep.max_ratio_exact = std::max(rep.max_ratio_exact, t.exact_ratio);
        rep.max_ratio_kfac = std::max(rep.max_ratio_kfac, t.kfac_ratio);
        rep.violations += t.exact_ratio > 1.0 ? 1 : 0;
    }

    // Tight case: one linear output, |e| = s√ν, and τ = κ‖J‖² so the single
    // singular value sits where σ/(κσ² + τ) peaks.
    {
        NetworkSpec ns;
        ns.input_dim = 3;
        ns.output_dim = 1;
        ns.hidden_dims.clear();
        const Network net(ns, opt.seed);
        StudentTSpec spec;
        spec.nu = 5.0;
        spec.s2 = 0.7;
        const Vector x{0.3, -1.2, 0.8};
        const Matrix J = net.jacobian(x);
        const double tau = t_output_fisher_kappa(spec) * std::pow(J.frobenius_norm(), 2);
        const Vector pred = net.forward(x).output;
        const Vector y{pred[0] + std::sqrt(spec.s2 * spec.nu)};
        rep.extremal_ratio = bound_trial(net, x, y, spec, tau, false).exact_ratio;
    }

    StudentTSpec lo{50.0, 1.0};
    StudentTSpec hi{500.0, 1.0};
    rep.bound_nu50 = bound_value(lo, 1, 1.0);
    rep.bound_nu500 = bound_value(hi, 1, 1.0);
    return rep;
}

std::string format_bound_report(const BoundCheckReport& r) {
    std::ostringstream os;
    os << "trials " << r.trials << "\n"
       << "violations " << r.violations << "\n"
       << "max_ratio_exact " << format_double(r.max_ratio_exact) << "\n"
       << "max_ratio_kfac " << format_double(r.max_ratio_kfac) << "\n"
       << "extremal_ratio " << format_double(r.extremal_ratio) << "\n"
       << "bound_nu50_tau1_m1 " << format_double(r.bound_nu50) << "\n"
       << "bound_nu500_tau1_m1 " << format_double(r.bound_nu500) << "\n";
    return os.str();
}

std::vector<AblationRow> run_ablation(const TimeSeriesFrame& frame, const ExperimentConfig& cfg,
                                      const std::vector<std::uint64_t>& seeds) {
    if (!uses_curvature(cfg.optimizer.variant)) {
        throw ConfigError("variant: ablation needs natsr_stable or natsr_fast");
    }
    struct Arm {
        const char* name;
        bool scale;
        bool replay;
    };
    static constexpr Arm arms[] = {
        {"full", true, true},
        {"no_scale", false, true},
        {"no_replay", true, false},
        {"no_scale_no_replay", false, false},
    };
    constexpr std::size_t n_arms = std::size(arms);
    std::vector<AblationRow> rows(seeds.size() * n_arms);
    parallel_for(rows.size(), worker_count(rows.size()), [&](std::size_t i) {
        const Arm& arm = arms[i % n_arms];
        ExperimentConfig c = cfg;
        c.optimizer.dynamic_scale = arm.scale;
        if (!arm.replay) {
            c.optimizer.buffer_capacity = 0;
        }
        AblationRow row;
        row.name = arm.name;
        row.dynamic_scale = arm.scale;
        row.replay = arm.replay;
        row.seed = seeds[i / n_arms];
        row.mase = run_online(frame, c, row.seed).summary.mase;
        rows[i] = row;
    });
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const double full = rows[i - i % n_arms].mase;
        rows[i].relative_delta = (rows[i].mase - full) / full;
    }
    return rows;
}

void write_ablation_csv(const std::vector<AblationRow>& rows, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) {
        throw InputError("cannot write " + path.string());
    }
    out << "variant,dynamic_scale,replay,seed,mase,relative_delta\n";
    for (const auto& r : rows) {
        out << r.name << ',' << (r.dynamic_scale ? "on" : "off") << ',' << (r.replay ? "on" : "off") << ','
            << r.seed << ',' << format_double(r.mase) << ',' << format_double(r.relative_delta) << "\n";
    }
}

std::vector<AblationRow> cmd_ablate(const RunOptions& opt) {
    ExperimentConfig cfg = load_config(opt.config);
    if (opt.variant) {
        cfg.optimizer.variant = *opt.variant;
    }
    const TimeSeriesFrame frame = load_frame(opt.data, cfg);
    auto rows = run_ablation(frame, cfg, opt.seeds);
    std::filesystem::create_directories(opt.out_dir);
    write_ablation_csv(rows, opt.out_dir / "ablation.csv");
    return rows;
}

} // namespace natsr
