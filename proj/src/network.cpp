#include "natsr/network.hpp"

#include "natsr/error.hpp"
#include "natsr/io.hpp"

#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

namespace natsr {

namespace {

double activate(Activation a, double z) {
    switch (a) {
    case Activation::relu:
        return z > 0.0 ? z : 0.0;
    case Activation::tanh:
        return std::tanh(z);
    }
    return z;
}

double activate_derivative(Activation a, double z) {
    switch (a) {
    case Activation::relu:
        return z > 0.0 ? 1.0 : 0.0;
    case Activation::tanh: {
        const double t = std::tanh(z);
        return 1.0 - t * t;
    }
    }
    return 1.0;
}

std::size_t lookback_of(const NetworkSpec& spec) { return spec.input_dim / spec.input_features; }

} // namespace

std::string to_string(Activation a) { return a == Activation::relu ? "relu" : "tanh"; }

Activation parse_activation(const std::string& s) {
    if (s == "relu") {
        return Activation::relu;
    }
    if (s == "tanh") {
        return Activation::tanh;
    }
    throw InputError("unknown activation '" + s + "'");
}

void NetworkSpec::validate() const {
    if (input_dim == 0 || output_dim == 0 || input_features == 0) {
        throw ShapeError("NetworkSpec: input_dim, input_features and output_dim must be >= 1");
    }
    for (std::size_t h : hidden_dims) {
        if (h == 0) {
            throw ShapeError("NetworkSpec: hidden dims must be >= 1");
        }
    }
    if (conv_front) {
        if (input_dim % input_features != 0) {
            throw ShapeError("NetworkSpec: input_dim must be a multiple of input_features for the conv front");
        }
        if (conv_front->kernel == 0 || conv_front->dilation == 0 || conv_front->channels == 0) {
            throw ShapeError("NetworkSpec: conv kernel, dilation and channels must be >= 1");
        }
    }
}

std::string NetworkSpec::describe() const {
    std::ostringstream os;
    os << "in=" << input_dim << ";features=" << input_features << ";hidden=";
    for (std::size_t i = 0; i < hidden_dims.size(); ++i) {
        os << (i ? "," : "") << hidden_dims[i];
    }
    os << ";out=" << output_dim << ";act=" << to_string(activation);
    if (conv_front) {
        os << ";conv=" << conv_front->kernel << "/" << conv_front->dilation << "/" << conv_front->channels;
    }
    return os.str();
}

Network::Network(NetworkSpec spec, std::uint64_t seed) : spec_(std::move(spec)) {
    spec_.validate();
    std::size_t offset = 0;
    std::size_t dense_in = spec_.input_dim;
    if (spec_.conv_front) {
        LayerShape conv;
        conv.in = spec_.input_features * spec_.conv_front->kernel;
        conv.out = spec_.conv_front->channels;
        conv.positions = lookback_of(spec_);
        conv.offset = offset;
        offset += conv.param_count();
        layers_.push_back(conv);
        dense_in = conv.positions * conv.out;
    }
    for (std::size_t h : spec_.hidden_dims) {
        LayerShape l;
        l.in = dense_in;
        l.out = h;
        l.offset = offset;
        offset += l.param_count();
        layers_.push_back(l);
        dense_in = h;
    }
    LayerShape head;
    head.in = dense_in;
    head.out = spec_.output_dim;
    head.offset = offset;
    head.hidden_activation = false;
    offset += head.param_count();
    layers_.push_back(head);

    params_.assign(offset, 0.0);
    std::mt19937_64 rng(seed);
    for (const LayerShape& l : layers_) {
        const double limit = std::sqrt(6.0 / static_cast<double>(l.in + l.out));
        std::uniform_real_distribution<double> dist(-limit, limit);
        for (std::size_t i = 0; i < l.weight_count(); ++i) {
            params_[l.offset + i] = dist(rng);
        }
    }
}

void Network::set_params(std::span<const double> values) {
    if (values.size() != params_.size()) {
        throw ShapeError("Network::set_params: got " + std::to_string(values.size()) + " values, expected " +
                         std::to_string(params_.size()));
    }
    params_.assign(values.begin(), values.end());
    ++generation_;
}

std::span<const double> Network::weights(std::size_t layer) const {
    const LayerShape& l = layers_.at(layer);
    return std::span<const double>(params_).subspan(l.offset, l.weight_count());
}

std::span<const double> Network::bias(std::size_t layer) const {
    const LayerShape& l = layers_.at(layer);
    return std::span<const double>(params_).subspan(l.offset + l.weight_count(), l.out);
}

ForwardPass Network::forward(std::span<const double> x) const {
    if (x.size() != spec_.input_dim) {
        throw ShapeError("Network::forward: input length " + std::to_string(x.size()) + ", expected " +
                         std::to_string(spec_.input_dim));
    }
    if (!all_finite(x)) {
        throw NumericError("Network::forward: non-finite input");
    }

    ForwardPass pass;
    LayerCache& cache = pass.cache;
    cache.generation = generation_;
    cache.inputs.reserve(layers_.size());
    cache.preacts.reserve(layers_.size());

    Vector h(x.begin(), x.end());
    std::size_t li = 0;
    if (spec_.conv_front) {
        const LayerShape& l = layers_[0];
        const std::size_t s = spec_.input_features;
        const std::size_t k = spec_.conv_front->kernel;
        const std::size_t dil = spec_.conv_front->dilation;
        Matrix in(l.positions, l.in + 1);
        for (std::size_t t = 0; t < l.positions; ++t) {
            for (std::size_t j = 0; j < k; ++j) {
                const std::size_t back = (k - 1 - j) * dil;
                if (back > t) {
                    continue; // causal zero padding
                }
                const std::size_t src = t - back;
                for (std::size_t f = 0; f < s; ++f) {
                    in(t, j * s + f) = x[src * s + f];
                }
            }
            in(t, l.in) = 1.0;
        }
        Matrix z(l.positions, l.out);
        const auto w = weights(0);
        const auto b = bias(0);
        h.assign(l.positions * l.out, 0.0);
        for (std::size_t t = 0; t < l.positions; ++t) {
            const auto patch = in.row(t).first(l.in);
            for (std::size_t o = 0; o < l.out; ++o) {
                const double zo = dot(w.subspan(o * l.in, l.in), patch) + b[o];
                z(t, o) = zo;
                h[t * l.out + o] = activate(spec_.activation, zo);
            }
        }
        cache.inputs.push_back(std::move(in));
        cache.preacts.push_back(std::move(z));
        li = 1;
    }

    for (; li < layers_.size(); ++li) {
        const LayerShape& l = layers_[li];
        Matrix in(1, l.in + 1);
        std::copy(h.begin(), h.end(), in.data().begin());
        in(0, l.in) = 1.0;
        const auto w = weights(li);
        const auto b = bias(li);
        Matrix z(1, l.out);
        Vector next(l.out);
        for (std::size_t o = 0; o < l.out; ++o) {
            const double zo = dot(w.subspan(o * l.in, l.in), h) + b[o];
            z(0, o) = zo;
            next[o] = l.hidden_activation ? activate(spec_.activation, zo) : zo;
        }
        cache.inputs.push_back(std::move(in));
        cache.preacts.push_back(std::move(z));
        h = std::move(next);
    }
    pass.output = std::move(h);
    return pass;
}

void Network::backpropagate(LayerCache& cache, std::span<const double> output_grad) const {
    if (cache.generation != generation_ || cache.inputs.size() != layers_.size()) {
        throw StateError("Network::backward: cache does not belong to the current parameters");
    }
    if (output_grad.size() != spec_.output_dim) {
        throw ShapeError("Network::backward: output gradient length " + std::to_string(output_grad.size()) +
                         ", expected " + std::to_string(spec_.output_dim));
    }
    cache.preact_grads.assign(layers_.size(), Matrix());

    // Gradient w.r.t. the current layer's pre-activations.
    Vector dz(output_grad.begin(), output_grad.end());
    for (std::size_t li = layers_.size(); li-- > 0;) {
        const LayerShape& l = layers_[li];
        const bool is_conv = spec_.conv_front && li == 0;
        if (is_conv) {
            Matrix g(l.positions, l.out);
            for (std::size_t t = 0; t < l.positions; ++t) {
                for (std::size_t o = 0; o < l.out; ++o) {
                    g(t, o) = dz[t * l.out + o];
                }
            }
            cache.preact_grads[li] = std::move(g);
            break;
        }
        cache.preact_grads[li] = Matrix::from_data(1, l.out, dz);
        if (li == 0) {
            break;
        }
        // dh = Wᵀ dz, then through the previous layer's activation.
        const auto w = weights(li);
        Vector dh(l.in, 0.0);
        for (std::size_t o = 0; o < l.out; ++o) {
            const double g = dz[o];
            if (g == 0.0) {
                continue;
            }
            const auto wr = w.subspan(o * l.in, l.in);
            for (std::size_t i = 0; i < l.in; ++i) {
                dh[i] += wr[i] * g;
            }
        }
        const Matrix& prev_z = cache.preacts[li - 1];
        for (std::size_t i = 0; i < dh.size(); ++i) {
            dh[i] *= activate_derivative(spec_.activation, prev_z.data()[i]);
        }
        dz = std::move(dh);
    }
    cache.has_backward = true;
}

Vector Network::backward(LayerCache& cache, std::span<const double> output_grad) const {
    backpropagate(cache, output_grad);
    Vector grad(params_.size(), 0.0);
    for (std::size_t li = 0; li < layers_.size(); ++li) {
        const LayerShape& l = layers_[li];
        const Matrix& in = cache.inputs[li];
        const Matrix& g = cache.preact_grads[li];
        for (std::size_t p = 0; p < l.positions; ++p) {
            const auto a = in.row(p);
            const auto gp = g.row(p);
            for (std::size_t o = 0; o < l.out; ++o) {
                const double go = gp[o];
                if (go == 0.0) {
                    continue;
                }
                double* wrow = grad.data() + l.offset + o * l.in;
                for (std::size_t i = 0; i < l.in; ++i) {
                    wrow[i] += go * a[i];
                }
                grad[l.offset + l.weight_count() + o] += go;
            }
        }
    }
    return grad;
}

Matrix Network::jacobian(std::span<const double> x) const {
    ForwardPass pass = forward(x);
    Matrix j(spec_.output_dim, params_.size());
    Vector unit(spec_.output_dim, 0.0);
    for (std::size_t i = 0; i < spec_.output_dim; ++i) {
        unit[i] = 1.0;
        const Vector row = backward(pass.cache, unit);
        std::copy(row.begin(), row.end(), j.row(i).begin());
        unit[i] = 0.0;
    }
    return j;
}

void Network::apply_delta(std::span<const double> delta, double lr) {
    if (delta.size() != params_.size()) {
        throw ShapeError("Network::apply_delta: delta length " + std::to_string(delta.size()) + ", expected " +
                         std::to_string(params_.size()));
    }
    if (!all_finite(delta) || !std::isfinite(lr)) {
        throw NumericError("Network::apply_delta: non-finite update");
    }
    std::vector<double> next(params_.size());
    for (std::size_t i = 0; i < params_.size(); ++i) {
        next[i] = params_[i] - lr * delta[i];
    }
    if (!all_finite(next)) {
        throw NumericError("Network::apply_delta: update overflows the parameters");
    }
    params_ = std::move(next);
    ++generation_;
}

Matrix Network::layer_block(std::span<const double> flat, std::size_t layer) const {
    const LayerShape& l = layers_.at(layer);
    if (flat.size() != params_.size()) {
        throw ShapeError("Network::layer_block: flat length mismatch");
    }
    Matrix block(l.out, l.in + 1);
    for (std::size_t o = 0; o < l.out; ++o) {
        for (std::size_t i = 0; i < l.in; ++i) {
            block(o, i) = flat[l.offset + o * l.in + i];
        }
        block(o, l.in) = flat[l.offset + l.weight_count() + o];
    }
    return block;
}

void Network::scatter_block(const Matrix& block, std::size_t layer, std::span<double> flat) const {
    const LayerShape& l = layers_.at(layer);
    if (flat.size() != params_.size() || block.rows() != l.out || block.cols() != l.in + 1) {
        throw ShapeError("Network::scatter_block: shape mismatch");
    }
    for (std::size_t o = 0; o < l.out; ++o) {
        for (std::size_t i = 0; i < l.in; ++i) {
            flat[l.offset + o * l.in + i] = block(o, i);
        }
        flat[l.offset + l.weight_count() + o] = block(o, l.in);
    }
}

void save_checkpoint(const Network& net, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) {
        throw InputError("cannot write checkpoint " + path.string());
    }
    write_value_block(out, "natsr-checkpoint", fnv1a64(net.spec().describe()), net.params());
}

void load_checkpoint(Network& net, const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw InputError("cannot read checkpoint " + path.string());
    }
    const auto values = read_value_block(in, "natsr-checkpoint", fnv1a64(net.spec().describe()));
    net.set_params(values);
}

} // namespace natsr
