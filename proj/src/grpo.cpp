#include "icrl/grpo.hpp"

#include <algorithm>
#include <cmath>

#include "icrl/errors.hpp"
#include "icrl/parallel.hpp"

namespace icrl {

void GrpoConfig::validate() const {
  if (group_size < 2) throw ConfigError("grpo.group_size must be >= 2");
  if (!(clip_epsilon > 0.0)) throw ConfigError("grpo.clip_epsilon must be positive");
  if (!(kl_beta >= 0.0)) throw ConfigError("grpo.kl_beta must be >= 0");
  if (!(advantage_std_floor >= 0.0)) throw ConfigError("grpo.advantage_std_floor must be >= 0");
  if (!(learning_rate >= 0.0)) throw ConfigError("grpo.learning_rate must be >= 0");
  if (batch_size == 0) throw ConfigError("grpo.batch_size must be positive");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0)) throw ConfigError("grpo.adam_beta1 must be in [0, 1)");
  if (!(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) throw ConfigError("grpo.adam_beta2 must be in [0, 1)");
  if (!(adam_eps > 0.0)) throw ConfigError("grpo.adam_eps must be positive");
  if (!(grad_clip >= 0.0)) throw ConfigError("grpo.grad_clip must be >= 0");
  if (workers == 0) throw ConfigError("grpo.workers must be positive");
}

std::vector<double> compute_advantages(std::span<const double> rewards, double floor) {
  const std::size_t n = rewards.size();
  if (n < 2) throw ContractError("advantages need at least two rewards");
  double mean = 0.0;
  for (double r : rewards) mean += r;
  mean /= static_cast<double>(n);
  double var = 0.0;
  for (double r : rewards) var += (r - mean) * (r - mean);
  const double sd = std::sqrt(var / static_cast<double>(n));
  std::vector<double> a(n, 0.0);
  if (sd < floor || sd == 0.0) return a;
  for (std::size_t i = 0; i < n; ++i) a[i] = (rewards[i] - mean) / sd;
  return a;
}

std::vector<double> sequence_logprobs(const PolicyParams& params, const Trajectory& traj) {
  const std::vector<std::size_t> idx = traj.model_positions();
  return context_logprobs(params, traj.tokens, idx);
}

std::vector<double> grad_weighted_logprob(const PolicyParams& params, const Trajectory& traj,
                                          std::span<const double> weights) {
  const std::vector<std::size_t> idx = traj.model_positions();
  if (weights.size() != idx.size()) {
    throw ContractError("weights length " + std::to_string(weights.size()) +
                        " does not match Model position count " + std::to_string(idx.size()));
  }
  return grad_weighted_context_logprob(params, traj.tokens, idx, weights);
}

namespace {

void require_same_arch(const PolicyParams& a, const PolicyParams& b) {
  if (!(a.arch() == b.arch())) throw ContractError("policy architectures differ");
}

}  // namespace

std::vector<double> importance_ratios(const PolicyParams& next, const PolicyParams& old,
                                      const Trajectory& traj) {
  require_same_arch(next, old);
  const auto a = sequence_logprobs(next, traj);
  const auto b = sequence_logprobs(old, traj);
  std::vector<double> r(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) r[i] = std::exp(a[i] - b[i]);
  return r;
}

double clipped_surrogate(double r, double advantage, double epsilon) {
  const double clipped = std::clamp(r, 1.0 - epsilon, 1.0 + epsilon);
  return std::min(r * advantage, clipped * advantage);
}

double kl_divergence(std::span<const double> logp, std::span<const double> logq) {
  double kl = 0.0;
  for (std::size_t v = 0; v < logp.size(); ++v) kl += std::exp(logp[v]) * (logp[v] - logq[v]);
  return std::max(kl, 0.0);
}

double kl_term(const PolicyParams& next, const PolicyParams& ref, const Trajectory& traj) {
  require_same_arch(next, ref);
  const std::vector<std::size_t> idx = traj.model_positions();
  if (idx.empty()) return 0.0;
  ForwardTape tp(next, traj.tokens), tq(ref, traj.tokens);
  double sum = 0.0;
  for (std::size_t t : idx) sum += kl_divergence(tp.next_logprobs(t), tq.next_logprobs(t));
  return sum / static_cast<double>(idx.size());
}

GroupLoss grpo_loss_and_grad(GroupBatch& group, const PolicyParams& params,
                             const PolicyParams& old, const PolicyParams& ref,
                             const GrpoConfig& config) {
  require_same_arch(params, old);
  require_same_arch(params, ref);
  const std::size_t n = group.trajectories.size();
  if (n < 2) throw ContractError("a group needs at least two trajectories");
  if (group.advantages.size() != n) {
    if (group.rewards.size() != n) throw ContractError("group rewards are missing");
    group.advantages = compute_advantages(group.rewards, config.advantage_std_floor);
  }

  GroupLoss out;
  out.grad.assign(params.size(), 0.0);
  const Trajectory& first = group.trajectories.front();
  const std::span<const TokenId> prompt(first.tokens.data(), first.prompt_len);
  std::size_t m_total = 0;
  for (const Trajectory& t : group.trajectories) {
    if (t.prompt_len != first.prompt_len ||
        !std::equal(prompt.begin(), prompt.end(), t.tokens.begin())) {
      throw ContractError("trajectories in a group must share the prompt");
    }
    m_total += t.count(Origin::Model);
  }
  out.model_tokens = m_total;
  group.ratios.assign(n, {});
  if (m_total == 0) {
    out.skipped = true;
    return out;
  }
  if (group.old_logprobs.size() != n) {
    group.old_logprobs.clear();
    for (const Trajectory& t : group.trajectories) group.old_logprobs.push_back(sequence_logprobs(old, t));
  }

  const double inv_m = 1.0 / static_cast<double>(m_total);
  const double beta = config.kl_beta;
  const double eps = config.clip_epsilon;
  ForwardTape root(params, prompt);
  ForwardTape root_ref(ref, prompt);
  std::vector<LogitSeed> root_seeds;
  ParentGrad from_children;
  double surrogate_sum = 0.0, kl_sum = 0.0;

  for (std::size_t i = 0; i < n; ++i) {
    const Trajectory& traj = group.trajectories[i];
    const std::span<const TokenId> rest(traj.tokens.begin() + static_cast<std::ptrdiff_t>(traj.prompt_len),
                                        traj.tokens.end());
    ForwardTape child(root, rest);
    ForwardTape child_ref(root_ref, rest);
    const std::vector<std::size_t> positions = traj.model_positions();
    const std::vector<double>& old_lp = group.old_logprobs[i];
    if (old_lp.size() != positions.size()) throw ContractError("old log-prob count mismatch");
    const double adv = group.advantages[i];
    std::vector<LogitSeed> seeds;

    for (std::size_t k = 0; k < positions.size(); ++k) {
      const std::size_t pos = positions[k];  // predicts tokens[pos] from sequence position pos
      const bool in_root = pos < child.begin();
      const std::span<const double> lp = in_root ? root.next_logprobs(pos) : child.next_logprobs(pos);
      const std::span<const double> lq =
          in_root ? root_ref.next_logprobs(pos) : child_ref.next_logprobs(pos);
      const auto target = static_cast<std::size_t>(traj.tokens[pos]);
      const double r = std::exp(lp[target] - old_lp[k]);
      group.ratios[i].push_back(r);
      surrogate_sum += clipped_surrogate(r, adv, eps);
      const double kl_t = kl_divergence(lp, lq);
      kl_sum += kl_t;

      const double clipped = std::clamp(r, 1.0 - eps, 1.0 + eps);
      const double w = (r * adv <= clipped * adv) ? adv * r : 0.0;
      LogitSeed seed{pos, std::vector<double>(lp.size())};
      for (std::size_t v = 0; v < lp.size(); ++v) {
        const double p = std::exp(lp[v]);
        seed.dlogits[v] = (w * p + beta * p * (lp[v] - lq[v] - kl_t)) * inv_m;
      }
      seed.dlogits[target] -= w * inv_m;
      (in_root ? root_seeds : seeds).push_back(std::move(seed));
    }
    ParentGrad up;
    backward(child, seeds, nullptr, out.grad, &up);
    from_children.add(up);
  }
  backward(root, root_seeds, &from_children, out.grad, nullptr);

  out.surrogate = surrogate_sum * inv_m;
  out.kl = kl_sum * inv_m;
  out.loss = -(out.surrogate - beta * out.kl);
  return out;
}

void Adam::restore(std::uint64_t t, std::vector<double> m, std::vector<double> v) {
  if (m.size() != v.size()) throw ContractError("optimizer moment sizes differ");
  t_ = t;
  m_ = std::move(m);
  v_ = std::move(v);
}

void Adam::step(std::span<double> theta, std::span<const double> grad, const GrpoConfig& config) {
  if (m_.size() != theta.size() || grad.size() != theta.size()) {
    throw ContractError("optimizer state does not match the parameter count");
  }
  double scale = 1.0;
  if (config.grad_clip > 0.0) {
    double sq = 0.0;
    for (double g : grad) sq += g * g;
    const double norm = std::sqrt(sq);
    if (norm > config.grad_clip) scale = config.grad_clip / norm;
  }
  ++t_;
  const double b1 = config.adam_beta1, b2 = config.adam_beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  for (std::size_t i = 0; i < theta.size(); ++i) {
    const double g = grad[i] * scale;
    m_[i] = b1 * m_[i] + (1.0 - b1) * g;
    v_[i] = b2 * v_[i] + (1.0 - b2) * g * g;
    theta[i] -= config.learning_rate * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + config.adam_eps);
  }
}

EpisodeStats episode_stats(const Trajectory& traj) {
  if (!traj.reward) throw ContractError("trajectory has not been scored");
  EpisodeStats s;
  s.composite = traj.reward->composite;
  s.format_reward = traj.reward->format_reward;
  s.em = traj.reward->accuracy;
  s.model_tokens = static_cast<double>(traj.count(Origin::Model));
  s.valid_searches = static_cast<double>(valid_search_count(traj));
  return s;
}

StepMetrics aggregate_metrics(std::span<const EpisodeStats> episodes,
                              std::span<const GroupStats> groups) {
  StepMetrics m;
  if (!episodes.empty()) {
    for (const EpisodeStats& e : episodes) {
      m.mean_reward += e.composite;
      m.mean_format_reward += e.format_reward;
      m.mean_em += e.em;
      m.mean_model_tokens += e.model_tokens;
      m.valid_search_mean += e.valid_searches;
    }
    const auto n = static_cast<double>(episodes.size());
    m.mean_reward /= n;
    m.mean_format_reward /= n;
    m.mean_em /= n;
    m.mean_model_tokens /= n;
    m.valid_search_mean /= n;
  }
  for (const GroupStats& g : groups) {
    if (g.skipped) continue;
    m.kl_value += g.kl;
    m.loss += g.loss;
    ++m.groups_used;
  }
  if (m.groups_used > 0) {
    m.kl_value /= static_cast<double>(m.groups_used);
    m.loss /= static_cast<double>(m.groups_used);
  }
  return m;
}

StepResult train_step(std::span<const RolloutTask> tasks, PolicyParams& params,
                      const PolicyParams& ref, Adam& optimizer, const StepContext& ctx,
                      std::uint64_t seed) {
  if (!ctx.vocab || !ctx.tool) throw ContractError("step context is incomplete");
  const GrpoConfig& cfg = ctx.grpo;
  const std::size_t n_groups = tasks.size();
  const std::size_t members = cfg.group_size;
  const PolicyParams old = params;

  StepResult result;
  result.groups.resize(n_groups);
  std::vector<std::unique_ptr<ModelPolicy>> policies;
  for (std::size_t g = 0; g < n_groups; ++g) {
    policies.push_back(std::make_unique<ModelPolicy>(old));
    result.groups[g].question_id = tasks[g].question_id;
    result.groups[g].trajectories.resize(members);
  }

  parallel_for(n_groups * members, cfg.workers, [&](std::size_t idx) {
    const std::size_t g = idx / members, m = idx % members;
    Trajectory traj = run_rollout(*policies[g], *ctx.vocab, tasks[g].prompt, *ctx.tool,
                                  ctx.limits, derive_seed(seed, {g, m}));
    traj.reward = composite_reward(traj, *ctx.vocab, tasks[g].gold, ctx.reward);
    result.groups[g].trajectories[m] = std::move(traj);
  });
  policies.clear();

  for (GroupBatch& gb : result.groups) {
    gb.rewards.clear();
    gb.old_logprobs.clear();
    for (const Trajectory& t : gb.trajectories) {
      gb.rewards.push_back(t.reward->composite);
      gb.old_logprobs.push_back(t.policy_logprobs);
    }
    gb.advantages = compute_advantages(gb.rewards, cfg.advantage_std_floor);
  }

  result.losses.resize(n_groups);
  parallel_for(n_groups, cfg.workers, [&](std::size_t g) {
    result.losses[g] = grpo_loss_and_grad(result.groups[g], params, old, ref, cfg);
  });

  std::vector<double> grad(params.size(), 0.0);
  std::size_t used = 0;
  for (GroupLoss& gl : result.losses) {
    if (!gl.skipped) {
      for (std::size_t i = 0; i < grad.size(); ++i) grad[i] += gl.grad[i];
      ++used;
    }
    gl.grad = {};
  }
  if (used > 0) {
    for (double& g : grad) g /= static_cast<double>(used);
    optimizer.step(params.values(), grad, cfg);
  }

  std::vector<EpisodeStats> episodes;
  std::vector<GroupStats> stats;
  for (std::size_t g = 0; g < n_groups; ++g) {
    for (const Trajectory& t : result.groups[g].trajectories) episodes.push_back(episode_stats(t));
    stats.push_back({result.losses[g].kl, result.losses[g].loss, result.losses[g].skipped});
  }
  result.metrics = aggregate_metrics(episodes, stats);
  return result;
}

}  // namespace icrl
