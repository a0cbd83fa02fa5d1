#pragma once

#include "natsr/metrics.hpp"
#include "natsr/network.hpp"
#include "natsr/optimizer.hpp"
#include "natsr/streams.hpp"

#include <cstdint>
#include <optional>
#include <vector>

namespace natsr {

/// Offline pre-training before the online phase.
struct WarmupConfig {
    std::size_t epochs = 50;
    double lr = 1e-3; ///< peak learning rate, cosine-decayed to 0 over `epochs`
    std::size_t batch_size = 32;
    std::size_t patience = 5;
    /// Run the scale recursion over held-out residuals to pick the online s².
    bool calibrate_scale = true;
};

struct ExperimentConfig {
    std::size_t lookback = 60;
    std::size_t horizon = 1;
    SplitFractions splits;
    std::vector<std::size_t> hidden_dims{64, 64};
    Activation activation = Activation::relu;
    std::optional<ConvFront> conv_front;
    OptimizerConfig optimizer;
    WarmupConfig warmup;
    bool csv_header = true;
    std::optional<std::size_t> timestamp_col;
};

NetworkSpec make_network_spec(const ExperimentConfig& cfg, std::size_t features);

struct WarmupResult {
    std::size_t epochs_run = 0;
    std::size_t best_epoch = 0;
    double best_validation_loss = 0.0;
    double calibrated_s2 = 1.0;
};

/// Adam with cosine decay on the warm-up windows, early-stopped on the
/// validation windows; the best weights are restored. The loss is the one the
/// online variant optimizes.
WarmupResult warm_up(Network& net, const WindowSplit& split, const ExperimentConfig& cfg, std::uint64_t seed);

struct RunArtifacts {
    std::vector<StepRecord> records;
    Network net;
    RunSummary summary;
    WarmupResult warmup;
    ScaleState final_scale;
};

/// Split, normalize, warm up, then predict-then-update over every online
/// window. Throws DegenerateSeriesError when the online segment is constant.
RunArtifacts run_online(const TimeSeriesFrame& frame, const ExperimentConfig& cfg, std::uint64_t seed);

} // namespace natsr
