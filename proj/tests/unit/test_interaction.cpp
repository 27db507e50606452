#include "doctest.h"

#include <algorithm>

#include "icrl/curriculum.hpp"
#include "icrl/errors.hpp"
#include "icrl/interaction.hpp"
#include "icrl/questions.hpp"

using namespace icrl;

namespace {

struct Fixture {
  SyntheticWorld world = generate_world(1, 50, 80);
  Vocabulary vocab = build_vocabulary(world);
  Tool tool = search_tool(world);
};

const Fixture& fx() {
  static const Fixture f;
  return f;
}

std::vector<TokenId> encode(const std::string& s) { return fx().vocab.encode(s); }

}  // namespace

TEST_CASE("oracle replay answers in hop-count turns") {
  const auto& f = fx();
  RolloutLimits lim;
  for (int hops : {1, 2}) {
    for (const auto& q : generate_questions(f.world, hops, 10, 3)) {
      ReplayPolicy replay(encode(oracle_solve(f.world, q)));
      const auto prompt = encode(q.prompt_text);
      const Trajectory t = run_rollout(replay, f.vocab, prompt, f.tool, lim, 1);
      CHECK(t.termination == Termination::Answered);
      CHECK(t.turn_count == static_cast<std::size_t>(hops));
      CHECK(valid_search_count(t) == static_cast<std::size_t>(hops));
      CHECK(extract_answer(t, f.vocab) == q.gold_answer);
      // The loop's injected observations reproduce the oracle's text.
      CHECK(f.vocab.decode(t.tokens) == join_words(split_words(q.prompt_text + " " +
                                                               oracle_solve(f.world, q))));
      const auto r = composite_reward(t, f.vocab, q.gold_answer, RewardConfig{});
      CHECK(r.accuracy == 1);
      CHECK(r.violations.empty());
      CHECK(r.composite == 1.0);
    }
  }
}

TEST_CASE("no closing answer tag exhausts the token budget") {
  const auto& f = fx();
  RolloutLimits lim;
  lim.max_response_tokens = 17;
  ReplayPolicy replay(encode("<answer> bob"));
  const Trajectory t = run_rollout(replay, f.vocab, {}, f.tool, lim, 1);
  CHECK(t.termination == Termination::TokenBudget);
  CHECK(t.count(Origin::Model) == 17);
  CHECK(extract_answer(t, f.vocab) == std::nullopt);
}

TEST_CASE("seven searches stop after the sixth invocation") {
  const auto& f = fx();
  std::string script;
  for (int i = 0; i < 7; ++i) script += "<search> mother </search> ";
  script += "<answer> x </answer>";
  ReplayPolicy replay(encode(script));
  const Trajectory t = run_rollout(replay, f.vocab, {}, f.tool, RolloutLimits{}, 1);
  CHECK(t.termination == Termination::TurnBudget);
  CHECK(t.turn_count == 6);
  CHECK(t.tool_calls.size() == 6);
  CHECK(t.tokens.back() == tok::kSearchClose);
}

TEST_CASE("closing search without an open one is plain text") {
  const auto& f = fx();
  ReplayPolicy replay(encode("</search> <search> <search> mother </search> <answer> a </answer>"));
  const Trajectory t = run_rollout(replay, f.vocab, {}, f.tool, RolloutLimits{}, 1);
  CHECK(t.turn_count == 1);
  CHECK(t.termination == Termination::Answered);
  // The query starts after the first open tag, so it holds the second one.
  REQUIRE(t.tool_calls.size() == 1);
}

TEST_CASE("unknown queries inject the sentinel and are not valid") {
  const auto& f = fx();
  ReplayPolicy replay(encode("<search> </search> <answer> a </answer>"));
  const Trajectory t = run_rollout(replay, f.vocab, {}, f.tool, RolloutLimits{}, 1);
  REQUIRE(t.tool_calls.size() == 1);
  CHECK_FALSE(t.tool_calls[0].ok);
  CHECK(valid_search_count(t) == 0);
  const auto& c = t.tool_calls[0];
  const std::vector<TokenId> body(t.tokens.begin() + c.begin, t.tokens.begin() + c.end);
  CHECK(f.vocab.decode(body) == "<information> no results </information>");
}

TEST_CASE("calculator tool errors are observations") {
  const auto& f = fx();
  Vocabulary v = f.vocab;
  for (const char* w : {"1", "/", "0", "error:", "division", "by", "zero"}) v.add(w);
  ReplayPolicy replay(v.encode("<search> 1 / 0 </search> <answer> a </answer>"));
  const Trajectory t = run_rollout(replay, v, {}, calc_tool(), RolloutLimits{}, 1);
  REQUIRE(t.tool_calls.size() == 1);
  CHECK_FALSE(t.tool_calls[0].ok);
}

TEST_CASE("origins mask the right positions") {
  const auto& f = fx();
  const auto q = generate_questions(f.world, 2, 1, 8).front();
  ReplayPolicy replay(encode(oracle_solve(f.world, q)));
  const auto prompt = encode(q.prompt_text);
  const Trajectory t = run_rollout(replay, f.vocab, prompt, f.tool, RolloutLimits{}, 1);
  REQUIRE(t.origins.size() == t.tokens.size());
  for (std::size_t i = 0; i < t.prompt_len; ++i) CHECK(t.origins[i] == Origin::Prompt);
  for (const auto& c : t.tool_calls) {
    CHECK(t.tokens[c.begin] == tok::kInfoOpen);
    CHECK(t.tokens[c.end - 1] == tok::kInfoClose);
    CHECK(t.tokens[c.begin - 1] == tok::kSearchClose);
    for (std::size_t i = c.begin; i < c.end; ++i) CHECK(t.origins[i] == Origin::Tool);
  }
  const auto mp = t.model_positions();
  CHECK(mp.size() == t.count(Origin::Model));
  CHECK(mp.size() == t.sample_logprobs.size());
  CHECK(t.count(Origin::Prompt) + t.count(Origin::Model) + t.count(Origin::Tool) ==
        t.tokens.size());
}

TEST_CASE("model rollouts replay bit-identically and respect limits") {
  const auto& f = fx();
  ArchSpec a;
  a.vocab = f.vocab.size();
  a.window = 512;
  const auto params = PolicyParams::initialize(a, 5, 0.5);
  RolloutLimits lim;
  lim.max_response_tokens = 40;
  const auto prompt = encode("what is the mother of the mentor of bob ?");
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const Trajectory t1 = run_rollout(params, f.vocab, prompt, f.world, lim, seed);
    const Trajectory t2 = run_rollout(params, f.vocab, prompt, f.world, lim, seed);
    CHECK(t1 == t2);
    CHECK(t1.count(Origin::Model) <= lim.max_response_tokens);
    CHECK(t1.turn_count <= lim.max_turns);
    // Temperature 1: sampling and policy log-probs coincide.
    CHECK(t1.sample_logprobs == t1.policy_logprobs);
  }
}

TEST_CASE("prompt over the limit is a configuration error") {
  const auto& f = fx();
  RolloutLimits lim;
  lim.max_prompt_tokens = 3;
  ReplayPolicy replay({});
  CHECK_THROWS_AS(run_rollout(replay, f.vocab, encode("a b c d"), f.tool, lim, 1), ConfigError);
  lim = RolloutLimits{};
  lim.max_response_tokens = 0;
  CHECK_THROWS_AS(lim.validate(), ConfigError);
}

TEST_CASE("always-search policy never exceeds the protocol limits") {
  const auto& f = fx();
  AlwaysSearchPolicy adv(f.vocab.size());
  RolloutLimits lim;
  std::size_t max_turns_seen = 0;
  for (std::uint64_t seed = 0; seed < 2000; ++seed) {
    const Trajectory t = run_rollout(adv, f.vocab, {}, f.tool, lim, seed);
    CHECK(t.turn_count <= 6);
    CHECK(t.count(Origin::Model) <= lim.max_response_tokens);
    max_turns_seen = std::max(max_turns_seen, t.turn_count);
  }
  CHECK(max_turns_seen == 6);
}
