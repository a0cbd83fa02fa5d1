#pragma once

#include "natsr/linalg.hpp"
#include "natsr/sample.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace natsr {

enum class FrameOrigin { synthetic, csv };

/// T×d observations, one row per time step.
struct TimeSeriesFrame {
    Matrix values;
    std::vector<std::string> feature_names;
    FrameOrigin origin = FrameOrigin::synthetic;

    std::size_t length() const { return values.rows(); }
    std::size_t features() const { return values.cols(); }
};

struct OutlierSineParams {
    std::size_t length = 2000;
    double period = 50.0;
    double amplitude = 1.0;
    double noise_sd = 0.1;
    double outlier_prob = 0.0;
    double outlier_magnitude = 5.0;
    /// Rows displaced by +outlier_magnitude regardless of outlier_prob.
    std::vector<std::size_t> forced_outliers;
    std::uint64_t seed = 0;
};

/// amplitude·sin(2π t/period) + N(0, noise_sd²); each row is displaced by
/// ±outlier_magnitude with probability outlier_prob.
TimeSeriesFrame gen_outlier_sinusoid(const OutlierSineParams& p);

struct RegimeSegment {
    double amplitude = 1.0;
    double frequency = 0.02; ///< cycles per time step
    std::size_t length = 0;  ///< 0: share the remaining rows equally
};

/// Piecewise sinusoid, phase-continuous across segment boundaries.
TimeSeriesFrame gen_regime_switch(std::size_t length, const std::vector<RegimeSegment>& segments, double noise_sd,
                                  std::uint64_t seed);

/// Row index where each segment starts, after resolving automatic lengths.
std::vector<std::size_t> segment_starts(std::size_t length, const std::vector<RegimeSegment>& segments);

/// Reads a comma-separated numeric file. A timestamp column, when given, is
/// dropped after checking that parseable ISO-8601 stamps strictly increase.
TimeSeriesFrame ingest_csv(const std::filesystem::path& path, bool has_header,
                           std::optional<std::size_t> timestamp_col = std::nullopt);

/// Writes the frame with a header row and 17 significant digits per value.
void write_csv(const TimeSeriesFrame& frame, const std::filesystem::path& path);

/// Per-feature standardization estimated on the warm-up rows.
struct NormalizationStats {
    Vector mean;
    Vector sd;

    static NormalizationStats fit(const Matrix& values, std::size_t rows);
    Matrix apply(const Matrix& values) const;
};

struct SplitFractions {
    double warmup = 0.20;
    double validation = 0.05;
};

struct WindowSplit {
    std::vector<WindowedSample> warmup;
    std::vector<WindowedSample> validation;
    std::vector<WindowedSample> online;
    NormalizationStats stats;
    Matrix normalized;              ///< the whole frame after standardization
    std::size_t warmup_end = 0;     ///< first validation row
    std::size_t validation_end = 0; ///< first online row
};

/// Builds every window whose targets fit in the frame and files it under the
/// segment holding its first target row. Online windows step by one row.
WindowSplit split_and_window(const TimeSeriesFrame& frame, std::size_t lookback, std::size_t horizon,
                             SplitFractions splits = {});

/// Window whose first target row is t, cut from an already normalized matrix.
WindowedSample make_window(const Matrix& values, std::size_t t, std::size_t lookback, std::size_t horizon);

} // namespace natsr
