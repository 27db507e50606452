#pragma once

#include <filesystem>
#include <optional>

#include "icrl/config.hpp"

namespace icrl {

struct TrainingOutcome {
  TrainerState state;
  EvalReport report;
};

// Everything that can be rejected before any file is written: the config,
// the environment, the architecture and every prompt's token budget.
Environment prepare_environment(const RunConfig& config);

// Full training run into `out_dir`: manifest.txt, episodes.jsonl,
// metrics.csv, checkpoints/stage<i>.{ckpt,state}, final.ckpt, eval.csv and
// finish.csv. With `resume`, training continues from a saved trainer state
// and the logs cover only the steps run here.
TrainingOutcome run_training(const RunConfig& config, const std::filesystem::path& out_dir,
                             const std::optional<std::filesystem::path>& resume = std::nullopt);

void write_eval_report(const std::filesystem::path& dir, const EvalReport& report);
std::string format_eval_report(const EvalReport& report);

}  // namespace icrl
