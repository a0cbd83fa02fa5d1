#include "natsr/metrics.hpp"

#include "natsr/error.hpp"
#include "natsr/io.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace natsr {

namespace {

double mean_of(std::span<const double> v) {
    double sum = 0.0;
    for (double x : v) {
        sum += x;
    }
    return v.empty() ? 0.0 : sum / static_cast<double>(v.size());
}

} // namespace

double mase(std::span<const double> forecast_abs_errors, std::span<const double> naive_abs_errors) {
    if (forecast_abs_errors.empty() || naive_abs_errors.empty()) {
        throw InputError("mase: empty error list");
    }
    const double denom = mean_of(naive_abs_errors);
    if (!(denom > 0.0)) {
        throw DegenerateSeriesError("mase: naive forecaster has zero error on the evaluation window");
    }
    return mean_of(forecast_abs_errors) / denom;
}

double mse(std::span<const double> errors) {
    double sum = 0.0;
    for (double e : errors) {
        sum += e * e;
    }
    return errors.empty() ? 0.0 : sum / static_cast<double>(errors.size());
}

double mae(std::span<const double> errors) {
    double sum = 0.0;
    for (double e : errors) {
        sum += std::abs(e);
    }
    return errors.empty() ? 0.0 : sum / static_cast<double>(errors.size());
}

Vector naive_abs_errors(const Matrix& values, std::size_t first_row) {
    const std::size_t start = std::max<std::size_t>(first_row, 1);
    Vector out;
    if (start >= values.rows()) {
        return out;
    }
    out.reserve((values.rows() - start) * values.cols());
    for (std::size_t r = start; r < values.rows(); ++r) {
        for (std::size_t c = 0; c < values.cols(); ++c) {
            out.push_back(std::abs(values(r, c) - values(r - 1, c)));
        }
    }
    return out;
}

RunSummary summarize(std::span<const StepRecord> records, std::span<const double> naive, std::size_t features) {
    if (records.empty()) {
        throw InputError("summarize: no records");
    }
    if (features == 0) {
        throw InputError("summarize: feature count must be positive");
    }
    RunSummary s;
    s.variant = records.front().variant;
    s.steps = records.size();

    Vector abs_err;
    Vector err;
    std::vector<double> feat_num(features, 0.0);
    std::vector<std::size_t> feat_cnt(features, 0);
    double loss_sum = 0.0;
    double norm_sum = 0.0;
    std::size_t refreshed = 0;
    for (const auto& r : records) {
        if (r.forecast.size() != r.target.size()) {
            throw ShapeError("summarize: forecast and target lengths differ");
        }
        for (std::size_t i = 0; i < r.target.size(); ++i) {
            const double e = r.target[i] - r.forecast[i];
            err.push_back(e);
            abs_err.push_back(std::abs(e));
            feat_num[i % features] += std::abs(e);
            ++feat_cnt[i % features];
        }
        loss_sum += r.loss;
        norm_sum += r.update_norm;
        s.max_update_norm = std::max(s.max_update_norm, r.update_norm);
        refreshed += r.fim_refreshed ? 1 : 0;
        s.skipped_steps += r.skipped ? 1 : 0;
    }
    const auto n = static_cast<double>(records.size());
    s.mse = mse(err);
    s.mae = mae(err);
    s.mase = mase(abs_err, naive);
    s.mean_loss = loss_sum / n;
    s.mean_update_norm = norm_sum / n;
    s.refresh_rate = static_cast<double>(refreshed) / n;
    s.final_s2 = records.back().s2;

    std::vector<double> naive_num(features, 0.0);
    std::vector<std::size_t> naive_cnt(features, 0);
    for (std::size_t i = 0; i < naive.size(); ++i) {
        naive_num[i % features] += naive[i];
        ++naive_cnt[i % features];
    }
    for (std::size_t f = 0; f < features; ++f) {
        const double denom = naive_cnt[f] ? naive_num[f] / static_cast<double>(naive_cnt[f]) : 0.0;
        const double num = feat_cnt[f] ? feat_num[f] / static_cast<double>(feat_cnt[f]) : 0.0;
        s.per_feature_mase.push_back(denom > 0.0 ? num / denom : std::numeric_limits<double>::quiet_NaN());
    }
    return s;
}

std::string record_to_json(const StepRecord& r) {
    nlohmann::ordered_json j;
    j["t"] = r.t;
    j["loss"] = r.loss;
    j["forecast"] = r.forecast;
    j["target"] = r.target;
    j["update_norm"] = r.update_norm;
    j["direction_norm"] = r.direction_norm;
    j["bound"] = r.bound;
    j["s2"] = r.s2;
    j["tau"] = r.tau;
    j["fim_refreshed"] = r.fim_refreshed;
    j["skipped"] = r.skipped;
    j["variant"] = r.variant;
    return j.dump();
}

void write_records_jsonl(std::ostream& os, std::span<const StepRecord> records) {
    for (const auto& r : records) {
        os << record_to_json(r) << '\n';
    }
}

std::string summary_csv_header() {
    return "variant,seed,steps,mase,mse,mae,mean_loss,mean_update_norm,max_update_norm,refresh_rate,"
           "skipped_steps,final_s2,per_feature_mase,naive_window,config_hash,data_hash";
}

std::string summary_csv_row(const RunSummary& s) {
    std::ostringstream os;
    os << s.variant << ',' << s.seed << ',' << s.steps << ',' << format_double(s.mase) << ','
       << format_double(s.mse) << ',' << format_double(s.mae) << ',' << format_double(s.mean_loss) << ','
       << format_double(s.mean_update_norm) << ',' << format_double(s.max_update_norm) << ','
       << format_double(s.refresh_rate) << ',' << s.skipped_steps << ',' << format_double(s.final_s2) << ',';
    // Per-feature values share one cell, separated by ';', to keep the CSV rectangular.
    for (std::size_t i = 0; i < s.per_feature_mase.size(); ++i) {
        os << (i ? ";" : "") << format_double(s.per_feature_mase[i]);
    }
    os << ',' << s.naive_window << ',' << s.config_hash << ',' << s.data_hash;
    return os.str();
}

} // namespace natsr
