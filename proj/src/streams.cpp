#include "natsr/streams.hpp"

#include "natsr/error.hpp"
#include "natsr/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>
#include <tuple>

namespace natsr {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr std::uint64_t kOutlierStream = 0x9e3779b97f4a7c15ULL;

std::string trim(std::string_view s) {
    std::size_t b = 0;
    std::size_t e = s.size();
    while (b < e && (s[b] == ' ' || s[b] == '\t')) {
        ++b;
    }
    while (e > b && (s[e - 1] == ' ' || s[e - 1] == '\t')) {
        --e;
    }
    if (e - b >= 2 && s[b] == '"' && s[e - 1] == '"') {
        ++b;
        --e;
    }
    return std::string(s.substr(b, e - b));
}

std::vector<std::string> split_fields(const std::string& line) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const std::size_t comma = line.find(',', start);
        out.push_back(trim(std::string_view(line).substr(start, comma - start)));
        if (comma == std::string::npos) {
            break;
        }
        start = comma + 1;
    }
    return out;
}

std::optional<double> parse_number(const std::string& s) {
    double v = 0.0;
    const char* first = s.data();
    const char* last = s.data() + s.size();
    if (first != last && *first == '+') {
        ++first;
    }
    const auto [ptr, ec] = std::from_chars(first, last, v);
    if (ec != std::errc() || ptr != last || !std::isfinite(v)) {
        return std::nullopt;
    }
    return v;
}

using Stamp = std::tuple<int, int, int, int, int, int>;

/// YYYY-MM-DD with an optional [T| ]HH:MM[:SS] suffix.
std::optional<Stamp> parse_iso8601(const std::string& s) {
    int y = 0, mo = 0, d = 0, h = 0, mi = 0, sec = 0;
    char sep1 = 0, sep2 = 0;
    std::istringstream is(s);
    if (!(is >> y >> sep1 >> mo >> sep2 >> d) || sep1 != '-' || sep2 != '-') {
        return std::nullopt;
    }
    if (mo < 1 || mo > 12 || d < 1 || d > 31) {
        return std::nullopt;
    }
    const int next = is.peek();
    if (next == 'T' || next == ' ') {
        is.get();
        char c1 = 0;
        if (!(is >> h >> c1 >> mi) || c1 != ':') {
            return std::nullopt;
        }
        if (is.peek() == ':') {
            is.get();
            if (!(is >> sec)) {
                return std::nullopt;
            }
        }
    }
    std::string rest;
    std::getline(is, rest);
    if (!trim(rest).empty()) {
        return std::nullopt;
    }
    return Stamp{y, mo, d, h, mi, sec};
}

} // namespace

TimeSeriesFrame gen_outlier_sinusoid(const OutlierSineParams& p) {
    if (!(p.outlier_prob >= 0.0 && p.outlier_prob <= 1.0)) {
        throw InputError("gen_outlier_sinusoid: outlier_prob must lie in [0, 1]");
    }
    if (!(p.period > 0.0) || p.length == 0) {
        throw InputError("gen_outlier_sinusoid: period and length must be positive");
    }
    TimeSeriesFrame frame;
    frame.values = Matrix(p.length, 1);
    frame.feature_names = {"value"};
    frame.origin = FrameOrigin::synthetic;

    std::mt19937_64 noise_rng(p.seed);
    std::mt19937_64 outlier_rng(p.seed ^ kOutlierStream);
    std::normal_distribution<double> noise(0.0, p.noise_sd > 0.0 ? p.noise_sd : 1.0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const double frequency = 1.0 / p.period;
    for (std::size_t t = 0; t < p.length; ++t) {
        double v = p.amplitude * std::sin(kTwoPi * frequency * static_cast<double>(t));
        if (p.noise_sd > 0.0) {
            v += noise(noise_rng);
        }
        if (p.outlier_prob > 0.0 && unit(outlier_rng) < p.outlier_prob) {
            v += unit(outlier_rng) < 0.5 ? -p.outlier_magnitude : p.outlier_magnitude;
        }
        frame.values(t, 0) = v;
    }
    for (std::size_t t : p.forced_outliers) {
        if (t >= p.length) {
            throw InputError("gen_outlier_sinusoid: forced outlier row out of range");
        }
        frame.values(t, 0) += p.outlier_magnitude;
    }
    return frame;
}

std::vector<std::size_t> segment_starts(std::size_t length, const std::vector<RegimeSegment>& segments) {
    if (segments.empty()) {
        throw InputError("gen_regime_switch: at least one segment is required");
    }
    std::size_t fixed = 0;
    std::size_t automatic = 0;
    for (const auto& s : segments) {
        fixed += s.length;
        automatic += s.length == 0 ? 1 : 0;
    }
    if (fixed > length || (automatic == 0 && fixed != length)) {
        throw InputError("gen_regime_switch: segment lengths do not add up to the series length");
    }
    const std::size_t remaining = length - fixed;
    std::vector<std::size_t> starts;
    std::size_t at = 0;
    std::size_t auto_seen = 0;
    for (const auto& s : segments) {
        starts.push_back(at);
        if (s.length != 0) {
            at += s.length;
        } else {
            ++auto_seen;
            // Spread the remainder so the automatic segments differ by at most one row.
            const std::size_t end_share = remaining * auto_seen / automatic;
            const std::size_t begin_share = remaining * (auto_seen - 1) / automatic;
            at += end_share - begin_share;
        }
    }
    return starts;
}

TimeSeriesFrame gen_regime_switch(std::size_t length, const std::vector<RegimeSegment>& segments, double noise_sd,
                                  std::uint64_t seed) {
    const auto starts = segment_starts(length, segments);
    TimeSeriesFrame frame;
    frame.values = Matrix(length, 1);
    frame.feature_names = {"value"};
    frame.origin = FrameOrigin::synthetic;

    std::mt19937_64 noise_rng(seed);
    std::normal_distribution<double> noise(0.0, noise_sd > 0.0 ? noise_sd : 1.0);
    double phase0 = 0.0;
    for (std::size_t si = 0; si < segments.size(); ++si) {
        const std::size_t begin = starts[si];
        const std::size_t end = si + 1 < starts.size() ? starts[si + 1] : length;
        const RegimeSegment& seg = segments[si];
        for (std::size_t t = begin; t < end; ++t) {
            double v = seg.amplitude * std::sin(phase0 + kTwoPi * seg.frequency * static_cast<double>(t - begin));
            if (noise_sd > 0.0) {
                v += noise(noise_rng);
            }
            frame.values(t, 0) = v;
        }
        phase0 += kTwoPi * seg.frequency * static_cast<double>(end - begin);
    }
    return frame;
}

TimeSeriesFrame ingest_csv(const std::filesystem::path& path, bool has_header,
                           std::optional<std::size_t> timestamp_col) {
    std::ifstream in(path);
    if (!in) {
        throw IngestionError(path.string() + ": cannot open file");
    }
    const std::string where = path.string();

    std::vector<std::pair<std::size_t, std::string>> lines;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        if (line_no == 1 && line.rfind("\xEF\xBB\xBF", 0) == 0) {
            line.erase(0, 3);
        }
        if (trim(line).empty()) {
            continue;
        }
        lines.emplace_back(line_no, line);
    }
    if (lines.empty()) {
        throw IngestionError(where + ": empty file");
    }

    std::size_t first_data = 0;
    std::vector<std::string> header;
    if (has_header) {
        header = split_fields(lines[0].second);
        first_data = 1;
    }
    const std::size_t width = has_header ? header.size() : split_fields(lines[0].second).size();
    if (timestamp_col && *timestamp_col >= width) {
        throw IngestionError(where + ": timestamp column " + std::to_string(*timestamp_col) + " out of range");
    }
    const std::size_t d = width - (timestamp_col ? 1 : 0);
    if (d == 0) {
        throw IngestionError(where + ": no value columns");
    }
    if (lines.size() <= first_data) {
        throw IngestionError(where + ": no data rows");
    }

    std::vector<double> values;
    values.reserve((lines.size() - first_data) * d);
    std::vector<std::optional<Stamp>> stamps;
    bool all_stamps = true;
    for (std::size_t li = first_data; li < lines.size(); ++li) {
        const auto& [no, text] = lines[li];
        const auto fields = split_fields(text);
        if (fields.size() != width) {
            throw IngestionError(where + ":" + std::to_string(no) + ": expected " + std::to_string(width) +
                                 " fields, found " + std::to_string(fields.size()));
        }
        for (std::size_t c = 0; c < width; ++c) {
            if (timestamp_col && c == *timestamp_col) {
                auto st = parse_iso8601(fields[c]);
                all_stamps = all_stamps && st.has_value();
                stamps.push_back(st);
                continue;
            }
            const auto v = parse_number(fields[c]);
            if (!v) {
                throw IngestionError(where + ":" + std::to_string(no) + ": column " + std::to_string(c + 1) +
                                     ": non-numeric cell '" + fields[c] + "'");
            }
            values.push_back(*v);
        }
    }
    if (timestamp_col && all_stamps) {
        for (std::size_t i = 1; i < stamps.size(); ++i) {
            if (!(*stamps[i - 1] < *stamps[i])) {
                throw IngestionError(where + ":" + std::to_string(lines[first_data + i].first) +
                                     ": timestamps are not strictly increasing");
            }
        }
    }

    TimeSeriesFrame frame;
    frame.origin = FrameOrigin::csv;
    const std::size_t rows = values.size() / d;
    frame.values = Matrix::from_data(rows, d, std::move(values));
    for (std::size_t c = 0, f = 0; c < width; ++c) {
        if (timestamp_col && c == *timestamp_col) {
            continue;
        }
        frame.feature_names.push_back(has_header ? header[c] : "f" + std::to_string(f));
        ++f;
    }
    return frame;
}

void write_csv(const TimeSeriesFrame& frame, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) {
        throw InputError("cannot write " + path.string());
    }
    for (std::size_t c = 0; c < frame.features(); ++c) {
        out << (c ? "," : "")
            << (c < frame.feature_names.size() ? frame.feature_names[c] : "f" + std::to_string(c));
    }
    out << "\n";
    for (std::size_t r = 0; r < frame.length(); ++r) {
        for (std::size_t c = 0; c < frame.features(); ++c) {
            out << (c ? "," : "") << format_double(frame.values(r, c));
        }
        out << "\n";
    }
}

NormalizationStats NormalizationStats::fit(const Matrix& values, std::size_t rows) {
    if (rows == 0 || rows > values.rows()) {
        throw InputError("NormalizationStats::fit: invalid row count");
    }
    NormalizationStats s;
    s.mean.assign(values.cols(), 0.0);
    s.sd.assign(values.cols(), 0.0);
    for (std::size_t c = 0; c < values.cols(); ++c) {
        double sum = 0.0;
        for (std::size_t r = 0; r < rows; ++r) {
            sum += values(r, c);
        }
        const double mean = sum / static_cast<double>(rows);
        double ss = 0.0;
        for (std::size_t r = 0; r < rows; ++r) {
            const double d = values(r, c) - mean;
            ss += d * d;
        }
        s.mean[c] = mean;
        s.sd[c] = std::max(std::sqrt(ss / static_cast<double>(rows)), 1e-8);
    }
    return s;
}

Matrix NormalizationStats::apply(const Matrix& values) const {
    if (values.cols() != mean.size()) {
        throw ShapeError("NormalizationStats::apply: feature count mismatch");
    }
    Matrix out = values;
    for (std::size_t r = 0; r < out.rows(); ++r) {
        for (std::size_t c = 0; c < out.cols(); ++c) {
            out(r, c) = (out(r, c) - mean[c]) / sd[c];
        }
    }
    return out;
}

WindowedSample make_window(const Matrix& values, std::size_t t, std::size_t lookback, std::size_t horizon) {
    if (t < lookback || t + horizon > values.rows()) {
        throw InputError("make_window: window at row " + std::to_string(t) + " does not fit");
    }
    const std::size_t d = values.cols();
    WindowedSample s;
    s.t = t;
    const auto data = values.data();
    s.x.assign(data.begin() + static_cast<std::ptrdiff_t>((t - lookback) * d),
               data.begin() + static_cast<std::ptrdiff_t>(t * d));
    s.y.assign(data.begin() + static_cast<std::ptrdiff_t>(t * d),
               data.begin() + static_cast<std::ptrdiff_t>((t + horizon) * d));
    return s;
}

WindowSplit split_and_window(const TimeSeriesFrame& frame, std::size_t lookback, std::size_t horizon,
                             SplitFractions splits) {
    const std::size_t T = frame.length();
    if (lookback == 0 || horizon == 0) {
        throw InputError("split_and_window: lookback and horizon must be >= 1");
    }
    if (T < lookback + horizon + 10) {
        throw InputError("split_and_window: series of length " + std::to_string(T) + " is too short for lookback " +
                         std::to_string(lookback) + " and horizon " + std::to_string(horizon));
    }
    if (!(splits.warmup > 0.0) || !(splits.validation >= 0.0) || splits.warmup + splits.validation >= 1.0) {
        throw InputError("split_and_window: invalid split fractions");
    }
    WindowSplit out;
    out.warmup_end = static_cast<std::size_t>(std::floor(splits.warmup * static_cast<double>(T) + 1e-9));
    out.validation_end =
        static_cast<std::size_t>(std::floor((splits.warmup + splits.validation) * static_cast<double>(T) + 1e-9));
    if (out.warmup_end <= lookback) {
        throw InputError("split_and_window: warm-up segment (" + std::to_string(out.warmup_end) +
                         " rows) is not longer than the lookback (" + std::to_string(lookback) + ")");
    }
    out.stats = NormalizationStats::fit(frame.values, out.warmup_end);
    out.normalized = out.stats.apply(frame.values);

    for (std::size_t t = lookback; t + horizon <= T; ++t) {
        WindowedSample s = make_window(out.normalized, t, lookback, horizon);
        if (t < out.warmup_end) {
            out.warmup.push_back(std::move(s));
        } else if (t < out.validation_end) {
            out.validation.push_back(std::move(s));
        } else {
            out.online.push_back(std::move(s));
        }
    }
    if (out.online.empty()) {
        throw InputError("split_and_window: no online windows");
    }
    return out;
}

} // namespace natsr
