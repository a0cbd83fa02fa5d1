#include "natsr/replay_buffer.hpp"

#include "natsr/error.hpp"
#include "natsr/io.hpp"

#include <fstream>
#include <numeric>

namespace natsr {

ReservoirBuffer::ReservoirBuffer(std::size_t capacity, std::uint64_t seed) : capacity_(capacity), rng_(seed) {
    items_.reserve(capacity_);
}

void ReservoirBuffer::reservoir_update(const WindowedSample& sample) {
    if (capacity_ == 0) {
        ++seen_;
        return;
    }
    if (items_.size() < capacity_) {
        items_.push_back(sample);
    } else {
        std::uniform_int_distribution<std::uint64_t> pick(0, seen_);
        const std::uint64_t j = pick(rng_);
        if (j < capacity_) {
            items_[j] = sample;
        }
    }
    ++seen_;
}

std::vector<std::size_t> ReservoirBuffer::sample_indices(std::size_t batch, std::mt19937_64& rng) const {
    std::vector<std::size_t> idx(items_.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    const std::size_t n = std::min(batch, idx.size());
    // Partial Fisher-Yates.
    for (std::size_t i = 0; i < n; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, idx.size() - 1);
        std::swap(idx[i], idx[pick(rng)]);
    }
    idx.resize(n);
    return idx;
}

std::vector<WindowedSample> ReservoirBuffer::sample_batch(std::size_t batch, std::mt19937_64& rng) const {
    std::vector<WindowedSample> out;
    for (std::size_t i : sample_indices(batch, rng)) {
        out.push_back(items_[i]);
    }
    return out;
}

void ReservoirBuffer::save(const std::filesystem::path& path) const {
    std::ofstream out(path);
    if (!out) {
        throw InputError("cannot write buffer snapshot " + path.string());
    }
    std::vector<double> header{static_cast<double>(capacity_), static_cast<double>(seen_),
                               static_cast<double>(items_.size())};
    write_value_block(out, "natsr-buffer", 0, header);
    for (const WindowedSample& s : items_) {
        std::vector<double> row{static_cast<double>(s.t), static_cast<double>(s.x.size()),
                                static_cast<double>(s.y.size())};
        row.insert(row.end(), s.x.begin(), s.x.end());
        row.insert(row.end(), s.y.begin(), s.y.end());
        write_value_block(out, "sample", 0, row);
    }
}

ReservoirBuffer ReservoirBuffer::load(const std::filesystem::path& path, std::uint64_t seed) {
    std::ifstream in(path);
    if (!in) {
        throw InputError("cannot read buffer snapshot " + path.string());
    }
    const auto header = read_value_block(in, "natsr-buffer", 0);
    if (header.size() != 3) {
        throw InputError("buffer snapshot: malformed header");
    }
    ReservoirBuffer buf(static_cast<std::size_t>(header[0]), seed);
    buf.seen_ = static_cast<std::uint64_t>(header[1]);
    const auto count = static_cast<std::size_t>(header[2]);
    for (std::size_t i = 0; i < count; ++i) {
        const auto row = read_value_block(in, "sample", 0);
        if (row.size() < 3) {
            throw InputError("buffer snapshot: malformed sample");
        }
        const auto nx = static_cast<std::size_t>(row[1]);
        const auto ny = static_cast<std::size_t>(row[2]);
        if (row.size() != 3 + nx + ny) {
            throw InputError("buffer snapshot: sample length mismatch");
        }
        WindowedSample s;
        s.t = static_cast<std::size_t>(row[0]);
        s.x.assign(row.begin() + 3, row.begin() + 3 + static_cast<std::ptrdiff_t>(nx));
        s.y.assign(row.begin() + 3 + static_cast<std::ptrdiff_t>(nx), row.end());
        buf.items_.push_back(std::move(s));
    }
    return buf;
}

} // namespace natsr
