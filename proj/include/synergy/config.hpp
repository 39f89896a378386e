#pragma once

// TOML-subset config loader ([section] headers, key = value with strings,
// numbers and booleans) with SYNERGY_SECTION_KEY environment overrides.
// Keys mirror ModelConfig/TrainConfig field names.

#include <map>
#include <string>

#include "synergy/model.hpp"
#include "synergy/train.hpp"

namespace synergy::config {

using KvTable = std::map<std::string, std::map<std::string, std::string>>;

KvTable parse_toml_file(const std::string& path);
KvTable parse_toml_string(const std::string& text);

// Applies SYNERGY_<SECTION>_<KEY> environment variables on top.
void apply_env_overrides(KvTable& table);

model::ModelConfig model_config_from(const KvTable& table);
train::TrainConfig train_config_from(const KvTable& table);

// "paper" | "desk" | "tiny"
model::ModelConfig preset(const std::string& name);

}  // namespace synergy::config
