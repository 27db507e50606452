#include "doctest.h"

#include <cmath>
#include <numeric>
#include <sstream>
#include <vector>

#include "icrl/errors.hpp"
#include "icrl/model.hpp"
#include "icrl/rng.hpp"

using namespace icrl;

namespace {

ArchSpec tiny_arch(std::size_t layers = 2) {
  ArchSpec a;
  a.vocab = 14;
  a.d_model = 8;
  a.n_heads = 2;
  a.n_layers = layers;
  a.d_ff = 6;
  a.window = 64;
  a.rel_buckets = 4;  // small so distances saturate
  a.copy_dim = 4;
  return a;
}

std::vector<TokenId> random_tokens(Rng& rng, std::size_t n, std::size_t vocab) {
  std::vector<TokenId> t(n);
  for (auto& x : t) x = static_cast<TokenId>(rng.below(vocab));
  return t;
}

double objective(const PolicyParams& p, const std::vector<TokenId>& ctx,
                 const std::vector<std::size_t>& idx, const std::vector<double>& w) {
  const auto lp = context_logprobs(p, ctx, idx);
  double s = 0.0;
  for (std::size_t k = 0; k < lp.size(); ++k) s += w[k] * lp[k];
  return s;
}

}  // namespace

TEST_CASE("distributions are normalized and deterministic") {
  const PolicyParams p = PolicyParams::initialize(tiny_arch(), 3, 0.3);
  Rng rng(1);
  for (int rep = 0; rep < 20; ++rep) {
    const auto ctx = random_tokens(rng, rng.below(20), 14);
    const auto lp = next_token_logprobs(p, ctx);
    double s = 0.0;
    for (double x : lp) s += std::exp(x);
    CHECK(std::abs(s - 1.0) < 1e-9);
    CHECK(lp == next_token_logprobs(p, ctx));
  }
}

TEST_CASE("default initialization is near uniform") {
  ArchSpec a = tiny_arch(1);
  a.vocab = 200;
  const PolicyParams p = PolicyParams::initialize(a, 11);
  const auto lp = next_token_logprobs(p, std::vector<TokenId>{12, 40, 7});
  for (double x : lp) CHECK(std::abs(std::exp(x) * 200.0 - 1.0) < 0.25);
}

TEST_CASE("analytic gradient matches central differences") {
  for (std::size_t layers : {1u, 2u}) {
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
      PolicyParams p = PolicyParams::initialize(tiny_arch(layers), seed, 0.4);
      Rng rng(100 + seed);
      const auto ctx = random_tokens(rng, 9, 14);
      std::vector<std::size_t> idx{1, 4, 5, 8};
      std::vector<double> w{0.7, -1.3, 0.4, 2.0};
      const auto g = grad_weighted_context_logprob(p, ctx, idx, w);
      double worst = 0.0;
      for (std::size_t i = 0; i < p.size(); ++i) {
        const double keep = p.values()[i];
        const double h = 1e-5;
        p.values()[i] = keep + h;
        const double fp = objective(p, ctx, idx, w);
        p.values()[i] = keep - h;
        const double fm = objective(p, ctx, idx, w);
        p.values()[i] = keep;
        const double fd = (fp - fm) / (2 * h);
        worst = std::max(worst, std::abs(fd - g[i]) / std::max(1e-3, std::abs(fd) + std::abs(g[i])));
      }
      CAPTURE(layers);
      CAPTURE(seed);
      CHECK(worst < 1e-4);
    }
  }
}

TEST_CASE("prefix-shared tapes give the same gradient as one tape") {
  const PolicyParams p = PolicyParams::initialize(tiny_arch(2), 5, 0.4);
  Rng rng(9);
  const auto prompt = random_tokens(rng, 6, 14);
  const auto cont_a = random_tokens(rng, 5, 14);
  const auto cont_b = random_tokens(rng, 3, 14);

  auto seeds_for = [&](ForwardTape& tape, double scale) {
    std::vector<LogitSeed> seeds;
    for (std::size_t pos = tape.begin(); pos + 1 < tape.size(); ++pos) {
      const auto lp = tape.next_logprobs(pos);
      LogitSeed s{pos, std::vector<double>(lp.size())};
      const auto target = static_cast<std::size_t>(tape.token(pos + 1));
      for (std::size_t v = 0; v < lp.size(); ++v) s.dlogits[v] = -scale * std::exp(lp[v]);
      s.dlogits[target] += scale;
      seeds.push_back(std::move(s));
    }
    return seeds;
  };

  // Shared: one prompt tape, two children scoring only their own tokens.
  std::vector<double> shared(p.size(), 0.0);
  {
    ForwardTape root(p, prompt);
    ForwardTape a(root, cont_a), b(root, cont_b);
    // The last prompt position predicts the first continuation token.
    auto seeds_a = seeds_for(a, 1.0);
    auto seeds_b = seeds_for(b, -0.5);
    ParentGrad up_a, up_b, total;
    backward(a, seeds_a, nullptr, shared, &up_a);
    backward(b, seeds_b, nullptr, shared, &up_b);
    total.add(up_a);
    total.add(up_b);
    backward(root, {}, &total, shared, nullptr);
  }

  std::vector<double> separate(p.size(), 0.0);
  for (auto [cont, scale] : {std::pair{&cont_a, 1.0}, std::pair{&cont_b, -0.5}}) {
    std::vector<TokenId> full = prompt;
    full.insert(full.end(), cont->begin(), cont->end());
    ForwardTape t(p, full);
    std::vector<LogitSeed> seeds;
    for (std::size_t pos = prompt.size() + 1; pos + 1 < t.size(); ++pos) {
      const auto lp = t.next_logprobs(pos);
      LogitSeed s{pos, std::vector<double>(lp.size())};
      for (std::size_t v = 0; v < lp.size(); ++v) s.dlogits[v] = -scale * std::exp(lp[v]);
      s.dlogits[static_cast<std::size_t>(t.token(pos + 1))] += scale;
      seeds.push_back(std::move(s));
    }
    backward(t, seeds, nullptr, separate, nullptr);
  }
  for (std::size_t i = 0; i < p.size(); ++i) CHECK(shared[i] == doctest::Approx(separate[i]).epsilon(1e-10));
}

TEST_CASE("gradient is linear in the weights and zero for zero weights") {
  const PolicyParams p = PolicyParams::initialize(tiny_arch(1), 2, 0.3);
  Rng rng(4);
  const auto ctx = random_tokens(rng, 7, 14);
  std::vector<std::size_t> idx{2, 3, 6};
  const auto g0 = grad_weighted_context_logprob(p, ctx, idx, std::vector<double>{0, 0, 0});
  for (double x : g0) CHECK(x == 0.0);
  const auto g1 = grad_weighted_context_logprob(p, ctx, idx, std::vector<double>{1, 0, -2});
  const auto g2 = grad_weighted_context_logprob(p, ctx, idx, std::vector<double>{0.5, 3, 1});
  const auto g12 = grad_weighted_context_logprob(p, ctx, idx, std::vector<double>{1.5, 3, -1});
  for (std::size_t i = 0; i < p.size(); ++i) CHECK(std::abs(g1[i] + g2[i] - g12[i]) < 1e-9);
  CHECK_THROWS_AS(grad_weighted_context_logprob(p, ctx, idx, std::vector<double>{1.0}),
                  ContractError);
}

TEST_CASE("sampling") {
  const std::vector<double> probs{0.1, 0.25, 0.05, 0.4, 0.2};
  std::vector<double> lp;
  for (double q : probs) lp.push_back(std::log(q));

  SUBCASE("greedy below the temperature threshold") {
    Rng rng(1);
    CHECK(sample_from_logprobs(lp, 1e-9, rng).token == 3);
  }
  SUBCASE("empirical frequencies within 3 sigma") {
    Rng rng(2024);
    const int n = 100000;
    std::vector<int> counts(probs.size());
    for (int i = 0; i < n; ++i) ++counts[static_cast<std::size_t>(sample_from_logprobs(lp, 1.0, rng).token)];
    for (std::size_t v = 0; v < probs.size(); ++v) {
      const double sigma = std::sqrt(n * probs[v] * (1 - probs[v]));
      CHECK(std::abs(counts[v] - n * probs[v]) <= 3 * sigma);
    }
  }
  SUBCASE("temperature one keeps the policy log-probability") {
    Rng rng(3);
    const SampledToken s = sample_from_logprobs(lp, 1.0, rng);
    CHECK(s.logprob == lp[static_cast<std::size_t>(s.token)]);
  }
  SUBCASE("fixed seed reproduces") {
    const PolicyParams p = PolicyParams::initialize(tiny_arch(1), 8, 0.5);
    const std::vector<TokenId> ctx{3, 4, 5};
    CHECK(sample(p, ctx, 1.0, 77) == sample(p, ctx, 1.0, 77));
  }
}

TEST_CASE("left truncation keeps pinned tokens") {
  ArchSpec a = tiny_arch(1);
  a.window = 8;
  const PolicyParams p = PolicyParams::initialize(a, 1, 0.5);
  const std::vector<TokenId> ctx{1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12};
  const std::vector<TokenId> kept{1, 2, 8, 9, 10, 11, 12};
  CHECK(next_token_logprobs(p, ctx, 2) == next_token_logprobs(p, kept));
  CHECK_THROWS_AS(ForwardTape(p, ctx), ContractError);
}

TEST_CASE("checkpoint round trip") {
  const PolicyParams p = PolicyParams::initialize(tiny_arch(2), 12, 0.1);
  std::stringstream ss;
  write_checkpoint(ss, p);
  const std::string bytes = ss.str();
  CHECK(bytes.substr(0, 8) == "ICRLCKPT");
  std::stringstream in(bytes);
  CHECK(read_checkpoint(in) == p);
  std::stringstream bad("NOTACKPT........");
  CHECK_THROWS_AS(read_checkpoint(bad), ConfigError);
}
