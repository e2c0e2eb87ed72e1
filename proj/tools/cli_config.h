#pragma once

#include <filesystem>
#include <string>

#include "topicmatch/evaluator.h"
#include "topicmatch/synth_data.h"
#include "topicmatch/trainer.h"

namespace topicmatch::cli {

inline constexpr int kConfigSchemaVersion = 1;

// Everything a config file can set. Defaults < file < command-line flags.
struct Settings {
  SceneParams scene;
  TrainConfig train;
  EvalConfig eval;
};

// Sections "model", "train", "data", "eval" plus "schema_version". Unknown
// keys and wrong value types raise ConfigError.
void apply_config_text(const std::string& text, Settings& s);
void apply_config_file(const std::filesystem::path& path, Settings& s);

// The full settings in the file schema (round-trips through apply_config_text).
std::string settings_to_json(const Settings& s);

}  // namespace topicmatch::cli
