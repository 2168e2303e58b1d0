#pragma once

#include <filesystem>
#include <string>

#include "scfcrc/pipeline.hpp"

namespace scfcrc {

// Built-in profiles: yelpchi, amazon, synthetic.
TrainConfig profile_config(const std::string& name);

// key = value file with [data], [fcf], [rcr], [train] sections and an optional
// top-level `profile` key applied first. Unknown keys are errors.
TrainConfig parse_config(const std::string& text, const std::string& origin = "<config>");
TrainConfig load_config(const std::filesystem::path& path);

std::string config_to_json(const TrainConfig& config);
TrainConfig config_from_json(const std::string& json);

// The config file form of `config`, parseable by parse_config.
std::string config_to_text(const TrainConfig& config);

}  // namespace scfcrc
