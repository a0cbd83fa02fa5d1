#pragma once

#include "natsr/linalg.hpp"

#include <cstddef>

namespace natsr {

/// One (lookback window, horizon) pair. `t` is the frame row of the first
/// target; x covers rows [t−L, t) and y covers rows [t, t+H), both flattened
/// row by row (all features of a time step are contiguous).
struct WindowedSample {
    std::size_t t = 0;
    Vector x;
    Vector y;

    friend bool operator==(const WindowedSample&, const WindowedSample&) = default;
};

} // namespace natsr
