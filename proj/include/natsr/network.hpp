#pragma once

#include "natsr/linalg.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace natsr {

enum class Activation { relu, tanh };

std::string to_string(Activation a);
Activation parse_activation(const std::string& s);

/// Single dilated causal convolution applied to the lookback window before the
/// dense stack. Input channels are the series features.
struct ConvFront {
    std::size_t kernel = 3;
    std::size_t dilation = 1;
    std::size_t channels = 1;
};

struct NetworkSpec {
    std::size_t input_dim = 0;      ///< lookback × input features, flattened time-major
    std::size_t input_features = 1; ///< features per time step; used only by the conv front
    std::vector<std::size_t> hidden_dims{64, 64};
    std::size_t output_dim = 0; ///< horizon × target features
    Activation activation = Activation::relu;
    std::optional<ConvFront> conv_front;

    /// Throws ShapeError when a dimension is zero or inconsistent.
    void validate() const;
    /// Canonical one-line text form; its hash tags checkpoints.
    std::string describe() const;
};

/// Geometry of one parametrized layer. Dense layers see one input position per
/// sample; the conv front sees one position per lookback step.
struct LayerShape {
    std::size_t in = 0;  ///< fan-in without the homogeneous coordinate
    std::size_t out = 0;
    std::size_t positions = 1;
    std::size_t offset = 0; ///< first weight in the flat view; bias follows the out×in block
    bool hidden_activation = true;

    std::size_t weight_count() const { return out * in; }
    std::size_t param_count() const { return out * (in + 1); }
};

/// Per-sample activations kept by forward() and completed by backward().
struct LayerCache {
    std::vector<Matrix> inputs;       ///< positions × (in+1), last column ≡ 1
    std::vector<Matrix> preacts;      ///< positions × out
    std::vector<Matrix> preact_grads; ///< positions × out; valid iff has_backward
    std::uint64_t generation = 0;
    bool has_backward = false;
};

struct ForwardPass {
    Vector output;
    LayerCache cache;
};

/// Feedforward forecaster with a flat parameter vector. Per-layer weight and
/// bias spans alias the flat storage.
class Network {
public:
    Network() = default;
    Network(NetworkSpec spec, std::uint64_t seed);

    const NetworkSpec& spec() const { return spec_; }
    const std::vector<LayerShape>& layers() const { return layers_; }
    std::size_t param_count() const { return params_.size(); }
    std::span<const double> params() const { return params_; }
    void set_params(std::span<const double> values);

    std::span<const double> weights(std::size_t layer) const;
    std::span<const double> bias(std::size_t layer) const;

    ForwardPass forward(std::span<const double> x) const;

    /// Back-propagates `output_grad` = ∂loss/∂output through the cached pass.
    /// Fills cache.preact_grads and returns Jᵀ·output_grad over all parameters.
    Vector backward(LayerCache& cache, std::span<const double> output_grad) const;

    /// Same propagation as backward() but only fills cache.preact_grads.
    void backpropagate(LayerCache& cache, std::span<const double> output_grad) const;

    /// Dense output Jacobian (output_dim × P) at input x.
    Matrix jacobian(std::span<const double> x) const;

    /// w ← w − lr·delta. Leaves w untouched and throws NumericError if the
    /// result would not be finite.
    void apply_delta(std::span<const double> delta, double lr);

    /// Gradient block of one layer as the out×(in+1) matrix [∂W | ∂b].
    Matrix layer_block(std::span<const double> flat, std::size_t layer) const;
    /// Writes an out×(in+1) block back into its slot of a flat vector.
    void scatter_block(const Matrix& block, std::size_t layer, std::span<double> flat) const;

    std::uint64_t generation() const { return generation_; }

private:
    NetworkSpec spec_;
    std::vector<LayerShape> layers_;
    std::vector<double> params_;
    std::uint64_t generation_ = 1;
};

/// Writes the flat parameters with a (spec hash, P) header, bit-exact.
void save_checkpoint(const Network& net, const std::filesystem::path& path);
/// Loads parameters saved by save_checkpoint into a network of the same spec.
void load_checkpoint(Network& net, const std::filesystem::path& path);

} // namespace natsr
