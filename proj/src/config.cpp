#include "natsr/config.hpp"

#include "natsr/error.hpp"
#include "natsr/io.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

namespace natsr {

namespace {

std::string strip(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) {
        return {};
    }
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

double to_real(const std::string& key, const std::string& v) {
    double out = 0.0;
    const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || ptr != v.data() + v.size()) {
        throw ConfigError(key + ": expected a number, got '" + v + "'");
    }
    return out;
}

std::size_t to_count(const std::string& key, const std::string& v) {
    std::size_t out = 0;
    const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || ptr != v.data() + v.size()) {
        throw ConfigError(key + ": expected a non-negative integer, got '" + v + "'");
    }
    return out;
}

bool to_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "on" || v == "1" || v == "yes") {
        return true;
    }
    if (v == "false" || v == "off" || v == "0" || v == "no") {
        return false;
    }
    throw ConfigError(key + ": expected true or false, got '" + v + "'");
}

std::vector<std::size_t> to_dims(const std::string& key, const std::string& v) {
    std::vector<std::size_t> out;
    if (v == "none" || v.empty()) {
        return out;
    }
    std::stringstream ss(v);
    std::string part;
    while (std::getline(ss, part, ',')) {
        out.push_back(to_count(key, strip(part)));
    }
    return out;
}

template <class F>
auto wrap(const std::string& key, F&& f) {
    try {
        return f();
    } catch (const ConfigError&) {
        throw;
    } catch (const Error& e) {
        throw ConfigError(key + ": " + e.what());
    }
}

using Setter = std::function<void(ExperimentConfig&, const std::string& key, const std::string& value)>;

ConvFront& conv(ExperimentConfig& c) {
    if (!c.conv_front) {
        c.conv_front = ConvFront{};
    }
    return *c.conv_front;
}

const std::map<std::string, Setter>& setters() {
    static const std::map<std::string, Setter> table = {
        {"lookback", [](auto& c, auto& k, auto& v) { c.lookback = to_count(k, v); }},
        {"horizon", [](auto& c, auto& k, auto& v) { c.horizon = to_count(k, v); }},
        {"warmup_fraction", [](auto& c, auto& k, auto& v) { c.splits.warmup = to_real(k, v); }},
        {"validation_fraction", [](auto& c, auto& k, auto& v) { c.splits.validation = to_real(k, v); }},
        {"hidden_dims", [](auto& c, auto& k, auto& v) { c.hidden_dims = to_dims(k, v); }},
        {"activation",
         [](auto& c, auto& k, auto& v) { c.activation = wrap(k, [&] { return parse_activation(v); }); }},
        {"conv_front",
         [](auto& c, auto& k, auto& v) {
             if (to_bool(k, v)) {
                 conv(c);
             } else {
                 c.conv_front.reset();
             }
         }},
        {"conv_kernel", [](auto& c, auto& k, auto& v) { conv(c).kernel = to_count(k, v); }},
        {"conv_dilation", [](auto& c, auto& k, auto& v) { conv(c).dilation = to_count(k, v); }},
        {"conv_channels", [](auto& c, auto& k, auto& v) { conv(c).channels = to_count(k, v); }},
        {"csv_header", [](auto& c, auto& k, auto& v) { c.csv_header = to_bool(k, v); }},
        {"timestamp_col",
         [](auto& c, auto& k, auto& v) {
             if (v == "none") {
                 c.timestamp_col.reset();
             } else {
                 c.timestamp_col = to_count(k, v);
             }
         }},
        {"variant", [](auto& c, auto&, auto& v) { c.optimizer.variant = parse_variant(v); }},
        {"eta", [](auto& c, auto& k, auto& v) { c.optimizer.eta = to_real(k, v); }},
        {"lambda", [](auto& c, auto& k, auto& v) { c.optimizer.lambda = to_real(k, v); }},
        {"alpha_ema_step", [](auto& c, auto& k, auto& v) { c.optimizer.alpha_ema_step = to_real(k, v); }},
        {"alpha_ema_factors", [](auto& c, auto& k, auto& v) { c.optimizer.alpha_ema_factors = to_real(k, v); }},
        {"nu",
         [](auto& c, auto& k, auto& v) {
             if (v == "auto") {
                 c.optimizer.nu.reset();
             } else {
                 c.optimizer.nu = to_real(k, v);
             }
         }},
        {"replay_batch", [](auto& c, auto& k, auto& v) { c.optimizer.replay_batch = to_count(k, v); }},
        {"mc_samples", [](auto& c, auto& k, auto& v) { c.optimizer.mc_samples = to_count(k, v); }},
        {"buffer_capacity", [](auto& c, auto& k, auto& v) { c.optimizer.buffer_capacity = to_count(k, v); }},
        {"adam_beta1", [](auto& c, auto& k, auto& v) { c.optimizer.adam_beta1 = to_real(k, v); }},
        {"adam_beta2", [](auto& c, auto& k, auto& v) { c.optimizer.adam_beta2 = to_real(k, v); }},
        {"adam_eps", [](auto& c, auto& k, auto& v) { c.optimizer.adam_eps = to_real(k, v); }},
        {"weight_decay", [](auto& c, auto& k, auto& v) { c.optimizer.weight_decay = to_real(k, v); }},
        {"dynamic_scale", [](auto& c, auto& k, auto& v) { c.optimizer.dynamic_scale = to_bool(k, v); }},
        {"initial_s2", [](auto& c, auto& k, auto& v) { c.optimizer.initial_s2 = to_real(k, v); }},
        {"alpha_s", [](auto& c, auto& k, auto& v) { c.optimizer.alpha_s = to_real(k, v); }},
        {"beta", [](auto& c, auto& k, auto& v) { c.optimizer.beta = to_real(k, v); }},
        {"scale_floor", [](auto& c, auto& k, auto& v) { c.optimizer.scale_floor = to_real(k, v); }},
        {"tau_variant",
         [](auto& c, auto&, auto& v) { c.optimizer.tau_variant = parse_tau_variant(v); }},
        {"fisher_mode", [](auto& c, auto&, auto& v) { c.optimizer.fisher_mode = parse_fisher_mode(v); }},
        {"kfac_damping", [](auto& c, auto&, auto& v) { c.optimizer.kfac_damping = parse_kfac_damping(v); }},
        {"max_stale", [](auto& c, auto& k, auto& v) { c.optimizer.max_stale = to_count(k, v); }},
        {"refresh_z", [](auto& c, auto& k, auto& v) { c.optimizer.refresh_z = to_real(k, v); }},
        {"loss_ema_weight", [](auto& c, auto& k, auto& v) { c.optimizer.loss_ema_weight = to_real(k, v); }},
        {"burn_in", [](auto& c, auto& k, auto& v) { c.optimizer.burn_in = to_count(k, v); }},
        {"warmup_epochs", [](auto& c, auto& k, auto& v) { c.warmup.epochs = to_count(k, v); }},
        {"warmup_lr", [](auto& c, auto& k, auto& v) { c.warmup.lr = to_real(k, v); }},
        {"warmup_batch", [](auto& c, auto& k, auto& v) { c.warmup.batch_size = to_count(k, v); }},
        {"warmup_patience", [](auto& c, auto& k, auto& v) { c.warmup.patience = to_count(k, v); }},
        {"calibrate_scale", [](auto& c, auto& k, auto& v) { c.warmup.calibrate_scale = to_bool(k, v); }},
    };
    return table;
}

} // namespace

std::vector<std::string> config_keys() {
    std::vector<std::string> keys;
    for (const auto& [k, _] : setters()) {
        keys.push_back(k);
    }
    return keys;
}

ExperimentConfig parse_config(const std::string& text) {
    ExperimentConfig cfg;
    std::set<std::string> seen;
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (const auto hash = line.find('#'); hash != std::string::npos) {
            line.erase(hash);
        }
        line = strip(line);
        if (line.empty()) {
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("line " + std::to_string(line_no) + ": expected key = value");
        }
        const std::string key = strip(line.substr(0, eq));
        const std::string value = strip(line.substr(eq + 1));
        const auto it = setters().find(key);
        if (it == setters().end()) {
            throw ConfigError(key + ": unknown key (line " + std::to_string(line_no) + ")");
        }
        if (!seen.insert(key).second) {
            throw ConfigError(key + ": duplicate key (line " + std::to_string(line_no) + ")");
        }
        it->second(cfg, key, value);
    }
    if (!seen.count("eta")) {
        throw ConfigError("eta: missing required key");
    }
    if (cfg.lookback == 0) {
        throw ConfigError("lookback: must be >= 1");
    }
    if (cfg.horizon == 0) {
        throw ConfigError("horizon: must be >= 1");
    }
    cfg.optimizer.validate();
    return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigError(path.string() + ": cannot open config file");
    }
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

std::string format_config(const ExperimentConfig& c) {
    const OptimizerConfig& o = c.optimizer;
    std::ostringstream os;
    auto b = [](bool x) { return x ? "true" : "false"; };
    auto r = [](double x) { return format_double(x); };
    os << "lookback = " << c.lookback << "\n"
       << "horizon = " << c.horizon << "\n"
       << "warmup_fraction = " << r(c.splits.warmup) << "\n"
       << "validation_fraction = " << r(c.splits.validation) << "\n"
       << "hidden_dims = ";
    if (c.hidden_dims.empty()) {
        os << "none";
    }
    for (std::size_t i = 0; i < c.hidden_dims.size(); ++i) {
        os << (i ? "," : "") << c.hidden_dims[i];
    }
    os << "\nactivation = " << to_string(c.activation) << "\n"
       << "conv_front = " << b(c.conv_front.has_value()) << "\n";
    if (c.conv_front) {
        os << "conv_kernel = " << c.conv_front->kernel << "\n"
           << "conv_dilation = " << c.conv_front->dilation << "\n"
           << "conv_channels = " << c.conv_front->channels << "\n";
    }
    os << "csv_header = " << b(c.csv_header) << "\n"
       << "timestamp_col = " << (c.timestamp_col ? std::to_string(*c.timestamp_col) : "none") << "\n"
       << "variant = " << to_string(o.variant) << "\n"
       << "eta = " << r(o.eta) << "\n"
       << "lambda = " << r(o.lambda) << "\n"
       << "alpha_ema_step = " << r(o.alpha_ema_step) << "\n"
       << "alpha_ema_factors = " << r(o.alpha_ema_factors) << "\n"
       << "nu = " << (o.nu ? r(*o.nu) : "auto") << "\n"
       << "replay_batch = " << o.replay_batch << "\n"
       << "mc_samples = " << o.mc_samples << "\n"
       << "buffer_capacity = " << o.buffer_capacity << "\n"
       << "adam_beta1 = " << r(o.adam_beta1) << "\n"
       << "adam_beta2 = " << r(o.adam_beta2) << "\n"
       << "adam_eps = " << r(o.adam_eps) << "\n"
       << "weight_decay = " << r(o.weight_decay) << "\n"
       << "dynamic_scale = " << b(o.dynamic_scale) << "\n"
       << "initial_s2 = " << r(o.initial_s2) << "\n"
       << "alpha_s = " << r(o.alpha_s) << "\n"
       << "beta = " << r(o.beta) << "\n"
       << "scale_floor = " << r(o.scale_floor) << "\n"
       << "tau_variant = " << to_string(o.tau_variant) << "\n"
       << "fisher_mode = " << to_string(o.fisher_mode) << "\n"
       << "kfac_damping = " << to_string(o.kfac_damping) << "\n"
       << "max_stale = " << o.max_stale << "\n"
       << "refresh_z = " << r(o.refresh_z) << "\n"
       << "loss_ema_weight = " << r(o.loss_ema_weight) << "\n"
       << "burn_in = " << o.burn_in << "\n"
       << "warmup_epochs = " << c.warmup.epochs << "\n"
       << "warmup_lr = " << r(c.warmup.lr) << "\n"
       << "warmup_batch = " << c.warmup.batch_size << "\n"
       << "warmup_patience = " << c.warmup.patience << "\n"
       << "calibrate_scale = " << b(c.warmup.calibrate_scale) << "\n";
    return os.str();
}

} // namespace natsr
