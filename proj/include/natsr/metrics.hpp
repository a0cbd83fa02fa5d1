#pragma once

#include "natsr/linalg.hpp"

#include <cstdint>
#include <ostream>
#include <span>
#include <string>
#include <vector>

namespace natsr {

/// Telemetry of one online step. `forecast` is produced before the update.
struct StepRecord {
    std::size_t t = 0;
    double loss = 0.0;
    Vector forecast;
    Vector target;
    double update_norm = 0.0;    ///< ‖Δw‖ actually applied
    double direction_norm = 0.0; ///< ‖δ*‖ before smoothing; 0 for first-order variants
    double bound = 0.0;          ///< step-norm bound at this step's ν, τ, m (0 when not applicable)
    double s2 = 1.0;
    double tau = 0.0;
    bool fim_refreshed = false;
    bool skipped = false;
    std::string variant;
};

struct RunSummary {
    std::string variant;
    std::uint64_t seed = 0;
    std::size_t steps = 0;
    double mase = 0.0;
    double mse = 0.0;
    double mae = 0.0;
    double mean_loss = 0.0;
    double mean_update_norm = 0.0;
    double max_update_norm = 0.0;
    double refresh_rate = 0.0;
    std::size_t skipped_steps = 0;
    double final_s2 = 0.0;
    Vector per_feature_mase;
    std::string naive_window = "online";
    std::string config_hash;
    std::string data_hash;
};

/// mean(forecast_abs_errors) / mean(naive_abs_errors). Throws
/// DegenerateSeriesError when the naive errors are all zero.
double mase(std::span<const double> forecast_abs_errors, std::span<const double> naive_abs_errors);

double mse(std::span<const double> errors);
double mae(std::span<const double> errors);

/// |y_t − y_{t−1}| for every row t ≥ first_row and every feature, row-major.
Vector naive_abs_errors(const Matrix& values, std::size_t first_row);

/// Aggregates the records of one run. `naive` is the output of
/// naive_abs_errors over the online segment, `features` the series width.
RunSummary summarize(std::span<const StepRecord> records, std::span<const double> naive, std::size_t features);

/// One JSON object per line, keys equal to the StepRecord fields.
void write_records_jsonl(std::ostream& os, std::span<const StepRecord> records);
std::string record_to_json(const StepRecord& r);

std::string summary_csv_header();
/// Values are printed with 17 significant digits so identical runs give
/// byte-identical rows.
std::string summary_csv_row(const RunSummary& s);

} // namespace natsr
