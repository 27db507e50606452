#include "doctest.h"

#include <cmath>
#include <cstring>

#include "../support/oracles.hpp"
#include "icrl/curriculum.hpp"
#include "icrl/errors.hpp"
#include "icrl/grpo.hpp"

using namespace icrl;
using namespace icrl::testing;

TEST_CASE("advantages match the Welford oracle") {
  Rng rng(1);
  for (int rep = 0; rep < 1000; ++rep) {
    const std::size_t n = 2 + rng.below(15);
    std::vector<double> r(n);
    for (double& x : r) x = rng.uniform() * 3.0 - 1.0;
    const auto a = compute_advantages(r, 1e-6);
    const auto o = oracle_advantages(r, 1e-6);
    for (std::size_t i = 0; i < n; ++i) CHECK(std::abs(a[i] - o[i]) <= 1e-12);
  }
}

TEST_CASE("advantage examples") {
  const auto a = compute_advantages(std::vector<double>{1.0, 0.0}, 1e-6);
  CHECK(a == std::vector<double>{1.0, -1.0});
  CHECK(compute_advantages(std::vector<double>{0.3, 0.3, 0.3}, 1e-6) ==
        std::vector<double>(3, 0.0));
  // Below the floor counts as zero variance.
  CHECK(compute_advantages(std::vector<double>{0.0, 1e-9}, 1e-6) == std::vector<double>(2, 0.0));
  CHECK_THROWS_AS(compute_advantages(std::vector<double>{1.0}, 1e-6), ContractError);
}

TEST_CASE("clipped surrogate examples") {
  CHECK(clipped_surrogate(1.5, 1.0, 0.2) == doctest::Approx(1.2));
  CHECK(clipped_surrogate(0.5, 1.0, 0.2) == 0.5);
  CHECK(clipped_surrogate(0.5, -1.0, 0.2) == doctest::Approx(-0.8));
  CHECK(clipped_surrogate(1.5, -1.0, 0.2) == -1.5);
  CHECK(clipped_surrogate(1.0, 2.0, 0.2) == 2.0);
}

TEST_CASE("exact KL against a direct sum") {
  const std::vector<double> p{std::log(0.5), std::log(0.25), std::log(0.25)};
  const std::vector<double> q{std::log(0.25), std::log(0.5), std::log(0.25)};
  const double expect = 0.5 * std::log(2.0) + 0.25 * std::log(0.5);
  CHECK(kl_divergence(p, q) == doctest::Approx(expect).epsilon(1e-14));
  CHECK(kl_divergence(p, p) == 0.0);
}

TEST_CASE("loss gradient matches central differences") {
  GrpoConfig cfg;
  cfg.kl_beta = 0.3;  // large enough that the KL path matters
  for (std::uint64_t seed = 0; seed < 4; ++seed) {
    Rng rng(seed);
    PolicyParams p = PolicyParams::initialize(tiny_arch(12, 1 + seed % 2), seed, 0.5);
    const PolicyParams old = perturbed(p, 100 + seed, 0.05);
    const PolicyParams ref = perturbed(p, 200 + seed, 0.2);
    GroupBatch g = random_group(rng, 12, 3, 4, 6);
    const GroupLoss gl = grpo_loss_and_grad(g, p, old, ref, cfg);
    auto f = [&](const PolicyParams& q) {
      GroupBatch copy = g;
      return grpo_loss_and_grad(copy, q, old, ref, cfg).loss;
    };
    CAPTURE(seed);
    CHECK(max_fd_rel_error(p, gl.grad, f) < 1e-4);
  }
}

TEST_CASE("masked loss equals the enumerate-all variant bit for bit") {
  GrpoConfig cfg;
  cfg.kl_beta = 0.05;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed);
    const PolicyParams p = PolicyParams::initialize(tiny_arch(), seed, 0.5);
    const PolicyParams old = perturbed(p, seed + 7, 0.1);
    const PolicyParams ref = perturbed(p, seed + 9, 0.1);
    GroupBatch g = random_group(rng, 16, 4, 5, 10);
    const auto adv = compute_advantages(g.rewards, cfg.advantage_std_floor);
    const GroupLoss gl = grpo_loss_and_grad(g, p, old, ref, cfg);
    const LossParts o = enumerate_all_loss(g, p, old, ref, adv, cfg);
    CHECK(std::memcmp(&gl.loss, &o.loss, sizeof(double)) == 0);
    CHECK(std::memcmp(&gl.kl, &o.kl, sizeof(double)) == 0);
  }
}

TEST_CASE("tool tokens do not move the loss") {
  // Changing tokens inside a tool span changes only the conditioning, so with
  // params == old == ref the loss is the advantage-weighted constant.
  GrpoConfig cfg;
  Rng rng(4);
  const PolicyParams p = PolicyParams::initialize(tiny_arch(), 3, 0.5);
  GroupBatch g = random_group(rng, 16, 4, 5, 12);
  const GroupLoss a = grpo_loss_and_grad(g, p, p, p, cfg);
  const auto adv = g.advantages;
  double mean = 0.0;
  std::size_t m = 0;
  for (std::size_t i = 0; i < adv.size(); ++i) {
    const std::size_t mi = g.trajectories[i].count(Origin::Model);
    mean += adv[i] * static_cast<double>(mi);
    m += mi;
  }
  CHECK(a.surrogate == doctest::Approx(mean / static_cast<double>(m)).epsilon(1e-12));
}

TEST_CASE("on-policy identity") {
  GrpoConfig cfg;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Rng rng(seed);
    const PolicyParams p = PolicyParams::initialize(tiny_arch(), seed, 0.5);
    GroupBatch g = random_group(rng, 16, 4, 3, 8);
    const GroupLoss gl = grpo_loss_and_grad(g, p, p, p, cfg);
    for (const auto& rs : g.ratios) {
      for (double r : rs) CHECK(r == 1.0);
    }
    CHECK(gl.kl <= 1e-12);
    for (const auto& t : g.trajectories) {
      for (double r : importance_ratios(p, p, t)) CHECK(r == 1.0);
      CHECK(kl_term(p, p, t) <= 1e-12);
    }
  }
}

TEST_CASE("groups without model tokens are skipped") {
  const PolicyParams p = PolicyParams::initialize(tiny_arch(), 1, 0.5);
  GroupBatch g;
  for (int i = 0; i < 2; ++i) {
    Trajectory t;
    t.tokens = {1, 2, 3};
    t.origins.assign(3, Origin::Prompt);
    t.prompt_len = 3;
    g.trajectories.push_back(t);
    g.rewards.push_back(i);
  }
  const GroupLoss gl = grpo_loss_and_grad(g, p, p, p, GrpoConfig{});
  CHECK(gl.skipped);
  CHECK(gl.loss == 0.0);
}

TEST_CASE("grad_weighted_logprob rejects a length mismatch") {
  Rng rng(2);
  const PolicyParams p = PolicyParams::initialize(tiny_arch(), 1, 0.5);
  const Trajectory t = random_trajectory(rng, {1, 2}, 16, 6);
  const std::vector<double> w(t.count(Origin::Model) + 1, 1.0);
  CHECK_THROWS_AS(grad_weighted_logprob(p, t, w), ContractError);
}

TEST_CASE("adam and clipping") {
  GrpoConfig cfg;
  cfg.learning_rate = 0.1;
  std::vector<double> theta{1.0, -1.0};
  Adam opt(2);
  opt.step(theta, std::vector<double>{2.0, -0.5}, cfg);
  // First bias-corrected step moves each coordinate by ~lr against the sign.
  CHECK(theta[0] == doctest::Approx(0.9).epsilon(1e-6));
  CHECK(theta[1] == doctest::Approx(-0.9).epsilon(1e-6));
  CHECK(opt.t() == 1);
  cfg.grad_clip = 1e-3;
  Adam clipped(2);
  std::vector<double> t2{0.0, 0.0};
  clipped.step(t2, std::vector<double>{3.0, 4.0}, cfg);
  CHECK(clipped.m()[0] == doctest::Approx(0.1 * 3.0 / 5.0 * 1e-3));
  CHECK_THROWS_AS(opt.step(theta, std::vector<double>{1.0}, cfg), ContractError);
}

TEST_CASE("train step is reproducible and logs on-policy ratios") {
  WorldConfig wc;
  const Environment env = build_environment(wc);
  ArchSpec a;
  a.vocab = env.vocab.size();
  a.window = 256;
  const PolicyParams init = PolicyParams::initialize(a, 2);
  const Tool tool = search_tool(env.world);
  StepContext ctx;
  ctx.vocab = &env.vocab;
  ctx.tool = &tool;
  ctx.limits.max_response_tokens = 12;
  ctx.limits.max_prompt_tokens = 200;
  ctx.grpo.group_size = 4;
  ctx.grpo.workers = 3;
  std::vector<RolloutTask> tasks;
  for (std::size_t i = 0; i < 2; ++i) {
    const auto& q = env.train[i];
    tasks.push_back({q.id, build_prompt(env.library, 0, q, env.vocab, 200), q.gold_answer});
  }
  PolicyParams p1 = init, p2 = init;
  Adam o1(init.size()), o2(init.size());
  const StepResult r1 = train_step(tasks, p1, init, o1, ctx, 77);
  ctx.grpo.workers = 1;
  const StepResult r2 = train_step(tasks, p2, init, o2, ctx, 77);
  CHECK(p1 == p2);
  CHECK(o1 == o2);
  CHECK_FALSE(p1 == init);
  for (std::size_t g = 0; g < r1.groups.size(); ++g) {
    CHECK(r1.groups[g].trajectories == r2.groups[g].trajectories);
    for (const auto& rs : r1.groups[g].ratios) {
      for (double r : rs) CHECK(r == 1.0);
    }
  }
  CHECK(r1.metrics.loss == r2.metrics.loss);
}
