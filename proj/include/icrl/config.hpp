#pragma once

#include <filesystem>
#include <string>

#include "icrl/curriculum.hpp"
#include "icrl/metrics.hpp"

namespace icrl {

struct RunConfig {
  std::filesystem::path output_dir = "runs/default";
  WorldConfig world;
  CurriculumConfig curriculum;
  EvalConfig eval;

  void validate() const;
};

// JSON config. Every key is optional; unknown keys and wrong types raise a
// ConfigError naming the field, e.g. "grpo.learning_rate".
RunConfig parse_run_config(const std::string& json_text);
RunConfig load_run_config(const std::filesystem::path& path);

// Flat key=value view of every setting.
Manifest to_manifest(const RunConfig& config);

}  // namespace icrl
