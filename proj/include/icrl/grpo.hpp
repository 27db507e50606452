#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "icrl/interaction.hpp"
#include "icrl/model.hpp"
#include "icrl/reward.hpp"

namespace icrl {

struct GrpoConfig {
  std::size_t group_size = 8;
  double clip_epsilon = 0.2;
  double kl_beta = 0.001;
  double advantage_std_floor = 1e-6;
  double learning_rate = 1e-3;
  std::size_t batch_size = 4;  // questions per step
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  double grad_clip = 0.0;      // global-norm clip; 0 disables
  std::size_t workers = 1;

  void validate() const;
};

struct GroupBatch {
  std::size_t question_id = 0;
  std::vector<Trajectory> trajectories;
  std::vector<double> rewards;
  std::vector<double> advantages;
  // log pi_old at each Model position, per trajectory. Filled from the
  // rollout record by train_step; recomputed from `old` when empty.
  std::vector<std::vector<double>> old_logprobs;
  // Written by grpo_loss_and_grad.
  std::vector<std::vector<double>> ratios;
};

// Population-std normalization; all zero when std < floor. Requires n >= 2.
std::vector<double> compute_advantages(std::span<const double> rewards, double floor);

// log pi(token_t | tokens before t) at every Model position of traj.
std::vector<double> sequence_logprobs(const PolicyParams& params, const Trajectory& traj);

// grad of sum_t weights[t] * log pi(token_t | prefix) over Model positions.
std::vector<double> grad_weighted_logprob(const PolicyParams& params, const Trajectory& traj,
                                          std::span<const double> weights);

std::vector<double> importance_ratios(const PolicyParams& next, const PolicyParams& old,
                                      const Trajectory& traj);

double clipped_surrogate(double r, double advantage, double epsilon);

// Mean over Model positions of the exact full-vocabulary KL(next || ref).
double kl_term(const PolicyParams& next, const PolicyParams& ref, const Trajectory& traj);

// KL(p || q) for log-probability vectors.
double kl_divergence(std::span<const double> logp, std::span<const double> logq);

struct GroupLoss {
  double loss = 0.0;
  double surrogate = 0.0;  // (1/M) sum of clipped terms
  double kl = 0.0;         // mean per-position KL
  std::size_t model_tokens = 0;
  bool skipped = false;    // no Model positions in the group
  std::vector<double> grad;
};

// loss = -[(1/M) sum_i sum_{t in Model(i)} CLIP(r_it, A_i, eps) - beta * KL],
// M = total Model positions in the group. All trajectories must share one
// prompt; its forward pass is shared.
GroupLoss grpo_loss_and_grad(GroupBatch& group, const PolicyParams& params,
                             const PolicyParams& old, const PolicyParams& ref,
                             const GrpoConfig& config);

class Adam {
 public:
  Adam() = default;
  explicit Adam(std::size_t n) : m_(n, 0.0), v_(n, 0.0) {}
  void step(std::span<double> theta, std::span<const double> grad, const GrpoConfig& config);

  std::uint64_t t() const { return t_; }
  const std::vector<double>& m() const { return m_; }
  const std::vector<double>& v() const { return v_; }
  void restore(std::uint64_t t, std::vector<double> m, std::vector<double> v);
  bool operator==(const Adam&) const = default;

 private:
  std::uint64_t t_ = 0;
  std::vector<double> m_, v_;
};

struct RolloutTask {
  std::size_t question_id = 0;
  std::vector<TokenId> prompt;
  std::string gold;
};

struct StepMetrics {
  double mean_reward = 0.0;
  double mean_format_reward = 0.0;
  double mean_em = 0.0;
  double mean_model_tokens = 0.0;
  double valid_search_mean = 0.0;
  double kl_value = 0.0;
  double loss = 0.0;
  std::size_t groups_used = 0;
};

struct StepResult {
  std::vector<GroupBatch> groups;
  std::vector<GroupLoss> losses;  // grad cleared
  StepMetrics metrics;
};

struct StepContext {
  const Vocabulary* vocab = nullptr;
  const Tool* tool = nullptr;
  RolloutLimits limits;
  RewardConfig reward;
  GrpoConfig grpo;
};

// Samples group_size rollouts per task from a snapshot of params, scores
// them, and applies one optimizer update. Member m of group g uses the seed
// derive_seed(seed, {g, m}).
StepResult train_step(std::span<const RolloutTask> tasks, PolicyParams& params,
                      const PolicyParams& ref, Adam& optimizer, const StepContext& ctx,
                      std::uint64_t seed);

struct EpisodeStats {
  double composite = 0.0;
  double format_reward = 0.0;
  double em = 0.0;
  double model_tokens = 0.0;
  double valid_searches = 0.0;
};

struct GroupStats {
  double kl = 0.0;
  double loss = 0.0;
  bool skipped = false;
};

EpisodeStats episode_stats(const Trajectory& traj);

// Metric aggregation shared by train_step and the log audit. Episodes are
// averaged in the order given; skipped groups do not enter kl_value or loss.
StepMetrics aggregate_metrics(std::span<const EpisodeStats> episodes,
                              std::span<const GroupStats> groups);

}  // namespace icrl
