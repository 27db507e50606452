#pragma once

// Independent reference computations shared by the unit and acceptance tests.
// These deliberately avoid the library's shortcuts (prefix sharing, Model
// position lists) so that agreement means something.

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "icrl/grpo.hpp"
#include "icrl/interaction.hpp"
#include "icrl/model.hpp"
#include "icrl/rng.hpp"

namespace icrl::testing {

inline ArchSpec tiny_arch(std::size_t vocab = 16, std::size_t layers = 1) {
  ArchSpec a;
  a.vocab = vocab;
  a.d_model = 8;
  a.n_heads = 2;
  a.n_layers = layers;
  a.d_ff = 8;
  a.window = 96;
  a.rel_buckets = 6;
  a.copy_dim = 4;
  return a;
}

// Welford mean / variance, population std.
inline std::vector<double> oracle_advantages(const std::vector<double>& r, double floor) {
  double mean = 0.0, m2 = 0.0;
  for (std::size_t i = 0; i < r.size(); ++i) {
    const double d = r[i] - mean;
    mean += d / static_cast<double>(i + 1);
    m2 += d * (r[i] - mean);
  }
  const double sd = std::sqrt(std::max(0.0, m2 / static_cast<double>(r.size())));
  std::vector<double> a(r.size(), 0.0);
  if (sd < floor || sd == 0.0) return a;
  for (std::size_t i = 0; i < r.size(); ++i) a[i] = (r[i] - mean) / sd;
  return a;
}

// Shared prompt followed by a random mix of generated tokens and injected
// tool spans.
inline Trajectory random_trajectory(Rng& rng, const std::vector<TokenId>& prompt,
                                    std::size_t vocab, std::size_t body_len) {
  Trajectory t;
  t.tokens = prompt;
  t.origins.assign(prompt.size(), Origin::Prompt);
  t.prompt_len = prompt.size();
  while (t.tokens.size() < prompt.size() + body_len) {
    if (rng.below(4) == 0) {
      const std::size_t span = 2 + rng.below(3);
      const std::size_t begin = t.tokens.size();
      for (std::size_t j = 0; j < span; ++j) {
        t.tokens.push_back(static_cast<TokenId>(rng.below(vocab)));
        t.origins.push_back(Origin::Tool);
      }
      t.tool_calls.push_back({begin, t.tokens.size(), true});
    } else {
      t.tokens.push_back(static_cast<TokenId>(rng.below(vocab)));
      t.origins.push_back(Origin::Model);
    }
  }
  return t;
}

inline GroupBatch random_group(Rng& rng, std::size_t vocab, std::size_t n,
                               std::size_t prompt_len, std::size_t body_len) {
  std::vector<TokenId> prompt(prompt_len);
  for (auto& x : prompt) x = static_cast<TokenId>(rng.below(vocab));
  GroupBatch g;
  for (std::size_t i = 0; i < n; ++i) {
    g.trajectories.push_back(random_trajectory(rng, prompt, vocab, body_len));
    g.rewards.push_back(static_cast<double>(rng.below(5)) / 4.0);
  }
  return g;
}

struct LossParts {
  double loss = 0.0, surrogate = 0.0, kl = 0.0;
};

// Walks every position of every trajectory on a fresh full-sequence tape and
// weights each term by 1 for Model tokens and 0 otherwise.
inline LossParts enumerate_all_loss(const GroupBatch& g, const PolicyParams& params,
                                    const PolicyParams& old, const PolicyParams& ref,
                                    const std::vector<double>& adv, const GrpoConfig& cfg) {
  double m = 0.0;
  for (const auto& t : g.trajectories) {
    for (Origin o : t.origins) m += (o == Origin::Model) ? 1.0 : 0.0;
  }
  double sur = 0.0, kl = 0.0;
  for (std::size_t i = 0; i < g.trajectories.size(); ++i) {
    const Trajectory& t = g.trajectories[i];
    ForwardTape tp(params, t.tokens), to(old, t.tokens), tq(ref, t.tokens);
    for (std::size_t pos = 0; pos < t.tokens.size(); ++pos) {
      const double w = (t.origins[pos] == Origin::Model) ? 1.0 : 0.0;
      const auto lp = tp.next_logprobs(pos);
      const auto lo = to.next_logprobs(pos);
      const auto lq = tq.next_logprobs(pos);
      const auto y = static_cast<std::size_t>(t.tokens[pos]);
      const double r = std::exp(lp[y] - lo[y]);
      sur += w * std::min(r * adv[i], std::clamp(r, 1 - cfg.clip_epsilon, 1 + cfg.clip_epsilon) * adv[i]);
      double k = 0.0;
      for (std::size_t v = 0; v < lp.size(); ++v) k += std::exp(lp[v]) * (lp[v] - lq[v]);
      kl += w * std::max(k, 0.0);
    }
  }
  LossParts out;
  out.surrogate = sur * (1.0 / m);
  out.kl = kl * (1.0 / m);
  out.loss = -(out.surrogate - cfg.kl_beta * out.kl);
  return out;
}

// Worst |fd - g| / max(1e-3, |fd| + |g|) over all coordinates, central
// differences with step h.
inline double max_fd_rel_error(PolicyParams& p, const std::vector<double>& grad,
                               const std::function<double(const PolicyParams&)>& f,
                               double h = 1e-5) {
  double worst = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double keep = p.values()[i];
    p.values()[i] = keep + h;
    const double fp = f(p);
    p.values()[i] = keep - h;
    const double fm = f(p);
    p.values()[i] = keep;
    const double fd = (fp - fm) / (2 * h);
    worst = std::max(worst, std::abs(fd - grad[i]) / std::max(1e-3, std::abs(fd) + std::abs(grad[i])));
  }
  return worst;
}

// Same shape as params with every value nudged by N(0, scale).
inline PolicyParams perturbed(const PolicyParams& p, std::uint64_t seed, double scale) {
  PolicyParams q = p;
  Rng rng(seed);
  for (double& x : q.values()) x += scale * rng.normal();
  return q;
}

}  // namespace icrl::testing
