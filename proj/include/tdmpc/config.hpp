#ifndef TDMPC_CONFIG_HPP_
#define TDMPC_CONFIG_HPP_

// YAML experiment files. Every key is optional and falls back to the
// defaults of ExperimentConfig; unknown keys are rejected. Angles use keys
// ending in _deg, everything else is SI.

#include <filesystem>
#include <string>

#include "tdmpc/simulation.hpp"

namespace tdmpc {

/// Parses and validates. Throws ConfigError with the offending key path.
ExperimentConfig load_experiment_config(const std::filesystem::path& path);
ExperimentConfig parse_experiment_config(const std::string& yaml_text);

}  // namespace tdmpc

#endif  // TDMPC_CONFIG_HPP_
