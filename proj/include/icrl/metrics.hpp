#pragma once

// Run artifacts: JSON-lines episode log, per-step metrics CSV, flat manifest,
// and the audit that recomputes the CSV from the log.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "icrl/grpo.hpp"
#include "icrl/interaction.hpp"
#include "icrl/questions.hpp"

namespace icrl {

struct EpisodeRecord {
  std::uint64_t step = 0;
  std::size_t stage_index = 0;
  std::size_t stage_k = 0;
  std::size_t group = 0;
  std::size_t member = 0;
  std::uint64_t seed = 0;
  std::size_t question_id = 0;
  Termination termination = Termination::TokenBudget;
  std::size_t turn_count = 0;
  std::size_t prompt_tokens = 0;
  std::size_t model_tokens = 0;
  std::size_t tool_tokens = 0;
  std::size_t valid_searches = 0;
  std::optional<std::string> answer;
  int accuracy = 0;
  ViolationSet violations;
  double format_reward = 0.0;
  double composite = 0.0;
  double advantage = 0.0;
  double group_kl = 0.0;
  double group_loss = 0.0;
  bool group_skipped = false;
  bool operator==(const EpisodeRecord&) const = default;
};

EpisodeRecord make_record(const Trajectory& traj, const Vocabulary& vocab);

std::string to_json_line(const EpisodeRecord& r);
// Throws ConfigError on malformed input.
EpisodeRecord parse_json_line(const std::string& line);
std::vector<EpisodeRecord> read_episode_log(const std::filesystem::path& path);

EpisodeStats episode_stats(const EpisodeRecord& r);

struct FinishPoint {
  std::size_t turns = 0;
  double percent = 0.0;
  bool operator==(const FinishPoint&) const = default;
};

// entry n (n = 0..max_turns): percent of ALL episodes that ended Answered
// with turn_count <= n.
std::vector<FinishPoint> cumulative_finish(std::span<const EpisodeRecord> episodes,
                                           std::size_t max_turns);

inline constexpr const char* kMetricsHeader =
    "step,stage_k,mean_reward,mean_format_reward,mean_em,mean_model_tokens,valid_search_mean,"
    "kl_value,loss";

std::string format_double(double v);  // %.17g
std::string metrics_row(std::uint64_t step, std::size_t stage_k, const StepMetrics& m);

// Opens (truncating) the episode log and metrics CSV in `dir`, writes the CSV
// header, and appends rows as steps arrive.
class RunWriter {
 public:
  RunWriter(const std::filesystem::path& dir, const Vocabulary& vocab);
  void write_step(std::uint64_t step, std::size_t stage_index, std::size_t stage_k,
                  std::span<const Question> questions, std::span<const std::uint64_t> seeds,
                  const StepResult& result);
  void flush();

 private:
  const Vocabulary* vocab_;
  std::ofstream episodes_;
  std::ofstream metrics_;
};

using Manifest = std::map<std::string, std::string>;
void write_manifest(const std::filesystem::path& path, const Manifest& m);
Manifest read_manifest(const std::filesystem::path& path);

struct AuditResult {
  bool ok = false;
  std::size_t rows_checked = 0;
  std::vector<std::string> problems;
};

// Recomputes every metrics.csv row from episodes.jsonl and compares the
// formatted text exactly.
AuditResult audit_run(const std::filesystem::path& dir);

}  // namespace icrl
