#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace natsr {

/// 64-bit FNV-1a; stable across platforms, used to tag files and configs.
std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t seed = 0xcbf29ce484222325ULL);
std::uint64_t hash_file(const std::filesystem::path& path);
std::string hex64(std::uint64_t v);

/// Shortest round-trip decimal form ("%.17g").
std::string format_double(double v);

/// Plain-text block of doubles in hexfloat, prefixed by a tag line, a hash
/// line and a count line. Reading back is bit-exact.
void write_value_block(std::ostream& os, std::string_view tag, std::uint64_t hash, std::span<const double> values);
std::vector<double> read_value_block(std::istream& is, std::string_view tag, std::uint64_t expected_hash);

} // namespace natsr
