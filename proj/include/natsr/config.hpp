#pragma once

#include "natsr/online.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace natsr {

/// Parses a flat `key = value` file (one pair per line, `#` starts a comment).
/// Every ExperimentConfig field has a key; unknown, duplicate or malformed
/// entries and a missing `eta` raise ConfigError naming the key.
ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::filesystem::path& path);

/// All accepted keys, sorted.
std::vector<std::string> config_keys();

/// Canonical text form that parse_config reads back to an equal config.
std::string format_config(const ExperimentConfig& cfg);

} // namespace natsr
