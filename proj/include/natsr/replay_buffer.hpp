#pragma once

#include "natsr/sample.hpp"

#include <cstdint>
#include <filesystem>
#include <random>
#include <vector>

namespace natsr {

/// Reservoir-sampled memory: after n insertions every inserted sample is held
/// with probability capacity/n.
class ReservoirBuffer {
public:
    explicit ReservoirBuffer(std::size_t capacity = 500, std::uint64_t seed = 0);

    void reservoir_update(const WindowedSample& sample);

    /// min(batch, size) distinct items drawn uniformly, in random order.
    std::vector<WindowedSample> sample_batch(std::size_t batch, std::mt19937_64& rng) const;
    std::vector<std::size_t> sample_indices(std::size_t batch, std::mt19937_64& rng) const;

    std::size_t capacity() const { return capacity_; }
    std::size_t size() const { return items_.size(); }
    bool empty() const { return items_.empty(); }
    std::uint64_t seen_count() const { return seen_; }
    const std::vector<WindowedSample>& items() const { return items_; }

    /// Text snapshot (hexfloat, bit-exact) of capacity, counters and items.
    /// The replacement RNG state is not part of the snapshot.
    void save(const std::filesystem::path& path) const;
    static ReservoirBuffer load(const std::filesystem::path& path, std::uint64_t seed = 0);

private:
    std::size_t capacity_;
    std::vector<WindowedSample> items_;
    std::uint64_t seen_ = 0;
    std::mt19937_64 rng_;
};

} // namespace natsr
