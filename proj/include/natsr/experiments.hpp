#pragma once

#include "natsr/config.hpp"
#include "natsr/metrics.hpp"
#include "natsr/online.hpp"
#include "natsr/streams.hpp"

#include <cstdint>
#include <exception>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace natsr {

// Process exit codes of the command-line tool.
inline constexpr int kExitOk = 0;
inline constexpr int kExitOther = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitIngestion = 3;
inline constexpr int kExitDegenerate = 4;
inline constexpr int kExitNumeric = 5;

/// Maps a caught exception to the exit code contract above.
int exit_code_for(const std::exception& e);

/// Worker count: NATSR_THREADS when set and positive, otherwise the hardware
/// concurrency, never more than `jobs`.
std::size_t worker_count(std::size_t jobs);

/// Runs fn(0..jobs-1) on up to `threads` workers. Exceptions are rethrown on
/// the calling thread after every worker has stopped.
void parallel_for(std::size_t jobs, std::size_t threads, const std::function<void(std::size_t)>& fn);

struct SynthOptions {
    std::string kind = "outlier_sine"; ///< outlier_sine | regime | recurring
    std::size_t length = 2000;
    double period = 50.0;
    double amplitude = 1.0;
    double noise_sd = 0.1;
    double outlier_prob = 0.01;
    double outlier_magnitude = 5.0;
    /// regime: two segments (amplitude, frequency) → (amplitude_b, frequency_b).
    /// recurring: A-B-A-B-... with `cycles` A/B pairs and a closing A.
    double amplitude_b = 3.0;
    double frequency_b = 0.1;
    std::size_t cycles = 2;
    std::uint64_t seed = 0;
};

TimeSeriesFrame synthesize(const SynthOptions& opt);
void cmd_synth(const SynthOptions& opt, const std::filesystem::path& out_path);

TimeSeriesFrame load_frame(const std::filesystem::path& data, const ExperimentConfig& cfg);

struct RunOptions {
    std::filesystem::path config;
    std::filesystem::path data;
    std::filesystem::path out_dir;
    std::vector<std::uint64_t> seeds{0};
    std::optional<Variant> variant; ///< overrides the config's variant
};

/// Writes records_<variant>_seed<k>.jsonl, checkpoint_<variant>_seed<k>.txt
/// and summary.csv under out_dir. Throws NumericError, after writing, if
/// any run skipped more than 1% of its steps.
std::vector<RunSummary> cmd_run(const RunOptions& opt);

struct BoundCheckOptions {
    std::size_t trials = 10000;
    std::size_t max_layers = 3;
    std::size_t max_width = 16;
    std::uint64_t seed = 0;
};

struct BoundCheckReport {
    std::size_t trials = 0;
    std::size_t violations = 0;
    double max_ratio_exact = 0.0;
    double max_ratio_kfac = 0.0;
    double extremal_ratio = 0.0;
    double bound_nu50 = 0.0;
    double bound_nu500 = 0.0;
};

/// Randomized check of ‖(κJᵀJ + τI)⁻¹Jᵀg‖ ≤ bound_value over networks,
/// inputs, targets, ν, s² and τ. The K-FAC ratio is reported, not enforced.
BoundCheckReport cmd_bound_check(const BoundCheckOptions& opt);
std::string format_bound_report(const BoundCheckReport& r);

struct AblationRow {
    std::string name;
    bool dynamic_scale = true;
    bool replay = true;
    std::uint64_t seed = 0;
    double mase = 0.0;
    double relative_delta = 0.0; ///< (mase − full mase) / full mase, same seed
};

/// The four on/off combinations of dynamic scale and replay, per seed.
std::vector<AblationRow> run_ablation(const TimeSeriesFrame& frame, const ExperimentConfig& cfg,
                                      const std::vector<std::uint64_t>& seeds);
void write_ablation_csv(const std::vector<AblationRow>& rows, const std::filesystem::path& path);
std::vector<AblationRow> cmd_ablate(const RunOptions& opt);

} // namespace natsr
