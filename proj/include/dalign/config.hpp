#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "dalign/harness.hpp"

namespace dalign {

struct ConfigKey {
  std::string name;
  std::string description;
};

// Every key accepted in config files and command-line overrides.
const std::vector<ConfigKey>& config_keys();

// Sets one key. Unknown keys raise ConfigError naming every valid key; bad
// values raise ConfigError naming the key.
void apply_setting(ExperimentConfig& config, std::string_view key, std::string_view value);

// "key=value" as given on the command line.
void apply_override(ExperimentConfig& config, std::string_view assignment);

// Flat text, one `key = value` per line; blank lines and lines starting with
// '#' are ignored. Later lines win. Malformed lines raise ParseError.
ExperimentConfig parse_config(std::string_view text, ExperimentConfig base = {});
ExperimentConfig load_config(const std::string& path, ExperimentConfig base = {});

// Effective configuration in the same format; parse_config(dump_config(c))
// reproduces c.
std::string dump_config(const ExperimentConfig& config);

}  // namespace dalign
