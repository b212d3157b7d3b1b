#pragma once

#include <string>

#include "seqsense/harness.hpp"

namespace seqsense {

/// Parses and validates an experiment config from JSON text. Unknown
/// top-level keys, missing required keys, wrong types, and out-of-range
/// values all raise ConfigError naming the offending key.
ExperimentConfig parse_experiment_config(const std::string& json_text);

/// Reads the config file at `path`; ConfigError names the path when it is
/// missing or invalid.
ExperimentConfig load_experiment_config(const std::string& path);

}  // namespace seqsense
