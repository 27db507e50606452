#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "icrl/grpo.hpp"
#include "icrl/interaction.hpp"
#include "icrl/metrics.hpp"
#include "icrl/model.hpp"
#include "icrl/questions.hpp"
#include "icrl/vocab.hpp"
#include "icrl/world.hpp"

namespace icrl {

// Worked examples shown in few-shot prompts, in a fixed order.
struct DemoLibrary {
  std::vector<Question> questions;
  std::vector<std::string> solutions;  // oracle transcripts

  std::size_t max_count() const { return questions.size(); }
  std::uint64_t hash() const;
};

// Throws ContractError if an oracle transcript has any format violation.
DemoLibrary build_demo_library(const SyntheticWorld& world, std::span<const Question> questions);

struct StageSchedule {
  std::vector<std::size_t> stages{2, 1, 0};  // demo count per stage
  std::size_t steps_per_stage = 10;
  // Strictly decreasing, ends in 0, T > 0.
  void validate() const;
};

// slices[i] holds indices into the training question list for stage i.
struct DatasetPartition {
  std::vector<std::vector<std::size_t>> slices;
};

// Seeded shuffle, then equal contiguous slices; the remainder goes to the
// last stage.
DatasetPartition partition_dataset(std::size_t n_questions, const StageSchedule& schedule,
                                   std::uint64_t seed);

// Instruction header of every prompt.
const std::string& prompt_header();

std::string prompt_text(const DemoLibrary& library, std::size_t k, const Question& question);

// Token form of prompt_text. Throws ConfigError when it exceeds max_tokens or
// k exceeds the library.
std::vector<TokenId> build_prompt(const DemoLibrary& library, std::size_t k,
                                  const Question& question, const Vocabulary& vocab,
                                  std::size_t max_tokens);

struct WorldConfig {
  std::uint64_t seed = 1;
  std::size_t n_entities = 50;
  std::size_t n_relations = 80;
  int hops = 2;
  std::size_t n_train = 48;
  std::size_t n_demo = 3;
  std::size_t n_eval = 16;
  void validate() const;
};

struct Environment {
  SyntheticWorld world;
  Vocabulary vocab;
  DemoLibrary library;
  std::vector<Question> train;
  std::vector<Question> eval;
};

// All words of the prompt template, oracle transcripts, tool observations
// and the world, in a fixed order.
Vocabulary build_vocabulary(const SyntheticWorld& world);

// Questions are drawn once and split demo | eval | train, so demonstrations
// never appear in training or evaluation.
Environment build_environment(const WorldConfig& config);

struct CurriculumConfig {
  StageSchedule schedule;
  GrpoConfig grpo;
  RewardConfig reward;
  RolloutLimits limits;
  ArchSpec arch;  // vocab is filled from the environment
  double init_scale = 0.02;
  std::uint64_t master_seed = 0;
  bool refresh_reference_per_stage = false;
  // When set, a stage also ends once the mean reward over the last
  // `advance_window` steps reaches this value.
  std::optional<double> advance_threshold;
  std::size_t advance_window = 5;
  void validate() const;
};

struct TrainerState {
  PolicyParams params;
  PolicyParams ref;
  Adam adam;
  std::size_t stage_index = 0;  // next stage to run
  std::uint64_t global_step = 0;
  bool operator==(const TrainerState&) const = default;
};

void save_trainer_state(const std::filesystem::path& path, const TrainerState& state);
TrainerState load_trainer_state(const std::filesystem::path& path);

// Fresh state: params from the master seed, reference = params.
TrainerState initial_state(const CurriculumConfig& config, const Environment& env);

struct StepEvent {
  std::size_t stage_index = 0;
  std::size_t k = 0;
  std::uint64_t global_step = 0;
  std::size_t step_in_stage = 0;
  const std::vector<Question>* questions = nullptr;  // per group
  const std::vector<std::uint64_t>* member_seeds = nullptr;  // group-major
  const StepResult* result = nullptr;
};

class RunSink {
 public:
  virtual ~RunSink() = default;
  virtual void on_step(const StepEvent& event) = 0;
  // Called after each stage with the state that resumes the next one.
  virtual void on_stage_end(std::size_t stage_index, std::size_t k, const TrainerState& state) = 0;
};

// Seeds: step seed derive_seed(master, {1, stage, step}); member m of group g
// then uses derive_seed(step_seed, {g, m}).
std::uint64_t step_seed(std::uint64_t master, std::size_t stage_index, std::size_t step);

// Runs stages state.stage_index .. end. Returns the final state.
TrainerState run_curriculum(const CurriculumConfig& config, const Environment& env,
                            TrainerState state, RunSink* sink = nullptr);

struct EvalConfig {
  std::size_t shots = 0;
  double temperature = 0.0;  // <= 0 means greedy
  std::uint64_t seed = 0;
};

struct EvalRow {
  std::string split;
  std::size_t episodes = 0;
  double mean_em = 0.0;
  double mean_composite = 0.0;
  double mean_format = 0.0;
  double answered_pct = 0.0;
  double valid_search_mean = 0.0;
  double mean_model_tokens = 0.0;
};

struct EvalEpisode {
  std::string split;
  Question question;
  Trajectory traj;
};

struct EvalReport {
  std::vector<EvalRow> rows;  // one per split, then "all"
  std::vector<EvalEpisode> episodes;
  std::vector<FinishPoint> cumulative_finish;
};

EvalRow summarize(std::string split, std::span<const EvalEpisode> episodes);

EvalReport evaluate(TokenPolicy& policy, const Environment& env, const RolloutLimits& limits,
                    const RewardConfig& reward, const EvalConfig& config);
EvalReport evaluate(const PolicyParams& params, const Environment& env,
                    const RolloutLimits& limits, const RewardConfig& reward,
                    const EvalConfig& config);

}  // namespace icrl
