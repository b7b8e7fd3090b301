#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "mvhgnn/trainer.hpp"

namespace mvhgnn {

// Declarative training run. Files are `key = value` lines; `#` starts a
// comment, strings may be quoted, lists are `[a, b, c]`. Unknown keys and
// malformed values throw kConfig.
struct RunConfig {
  std::filesystem::path data = "data";
  std::filesystem::path out = "run";
  std::filesystem::path init;  // stage-1 checkpoint, required for stage = 2
  std::vector<std::string> unseen;  // zero-shot hold-out; empty = last two classes
  TrainConfig train = desk_config();

  // Applies one `key = value` pair.
  void set(const std::string& key, const std::string& value);
  void validate() const;
  std::string to_text() const;  // parseable dump of every key
};

RunConfig parse_run_config(const std::string& text);
RunConfig load_run_config(const std::filesystem::path& path);
// Applies `key = value` lines on top of an existing config.
void apply_run_config(RunConfig& config, const std::string& text);

std::vector<std::string> run_config_keys();

}  // namespace mvhgnn
