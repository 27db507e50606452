#include "icrl/interaction.hpp"

#include <algorithm>
#include <cctype>

#include "icrl/calc.hpp"
#include "icrl/errors.hpp"
#include "icrl/grammar.hpp"

namespace icrl {

std::string_view termination_name(Termination t) noexcept {
  switch (t) {
    case Termination::Answered: return "Answered";
    case Termination::TurnBudget: return "TurnBudget";
    case Termination::TokenBudget: return "TokenBudget";
  }
  return "?";
}

std::optional<Termination> termination_from_name(std::string_view name) noexcept {
  for (Termination t : {Termination::Answered, Termination::TurnBudget, Termination::TokenBudget}) {
    if (termination_name(t) == name) return t;
  }
  return std::nullopt;
}

std::vector<std::size_t> Trajectory::model_positions() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < origins.size(); ++i) {
    if (origins[i] == Origin::Model) out.push_back(i);
  }
  return out;
}

std::size_t Trajectory::count(Origin o) const {
  return static_cast<std::size_t>(std::count(origins.begin(), origins.end(), o));
}

void RolloutLimits::validate() const {
  if (max_turns == 0) throw ConfigError("limits.max_turns must be positive");
  if (max_response_tokens == 0) throw ConfigError("limits.max_response_tokens must be positive");
  if (max_prompt_tokens == 0) throw ConfigError("limits.max_prompt_tokens must be positive");
  if (!(temperature > 0.0)) throw ConfigError("limits.temperature must be positive");
}

Tool search_tool(const SyntheticWorld& world, std::size_t k) {
  auto index = std::make_shared<const SearchIndex>(world);
  return [index, k](std::string_view query) {
    const std::vector<Document> docs = index->search(query, k);
    return ToolOutput{render_search_results(docs), !docs.empty()};
  };
}

Tool calc_tool() {
  return [](std::string_view query) {
    const CalcResult r = evaluate_arithmetic(query);
    return ToolOutput{r.text, r.ok};
  };
}

// ---------------------------------------------------------------------------
// Policies

struct ModelPolicy::PromptState {
  PromptState(const PolicyParams& p, std::vector<TokenId> toks)
      : prompt(std::move(toks)), tape(p, prompt) {
    const auto lp = tape.next_logprobs(tape.size() - 1);
    first.assign(lp.begin(), lp.end());
  }
  std::vector<TokenId> prompt;
  ForwardTape tape;
  std::vector<double> first;
};

namespace {

class ModelDecoder : public Decoder {
 public:
  explicit ModelDecoder(std::shared_ptr<ModelPolicy::PromptState> state)
      : state_(std::move(state)), tape_(state_->tape, {}) {}

  Draw next(Rng& rng, double temperature) override {
    const std::span<const double> lp =
        tape_.size() == tape_.begin() ? std::span<const double>(state_->first)
                                      : tape_.next_logprobs(tape_.size() - 1);
    const SampledToken s = sample_from_logprobs(lp, temperature, rng);
    return {s.token, s.logprob, lp[static_cast<std::size_t>(s.token)]};
  }

  void push(TokenId token) override { tape_.append(token); }

 private:
  std::shared_ptr<ModelPolicy::PromptState> state_;
  ForwardTape tape_;
};

class ReplayDecoder : public Decoder {
 public:
  // Shares the script so the decoder may outlive the policy.
  ReplayDecoder(std::shared_ptr<const std::vector<TokenId>> script, TokenId filler)
      : keep_(std::move(script)), script_(*keep_), filler_(filler) {}

  Draw next(Rng&, double) override {
    while (pos_ < script_.size() && script_[pos_] == tok::kInfoOpen) {
      while (pos_ < script_.size() && script_[pos_] != tok::kInfoClose) ++pos_;
      if (pos_ < script_.size()) ++pos_;
    }
    return {pos_ < script_.size() ? script_[pos_++] : filler_, 0.0, 0.0};
  }

  void push(TokenId) override {}

 private:
  std::shared_ptr<const std::vector<TokenId>> keep_;
  const std::vector<TokenId>& script_;
  TokenId filler_;
  std::size_t pos_ = 0;
};

class AlwaysSearchDecoder : public Decoder {
 public:
  AlwaysSearchDecoder(std::size_t vocab, std::size_t max_words)
      : vocab_(vocab), max_words_(max_words) {}

  Draw next(Rng& rng, double) override {
    TokenId t;
    if (phase_ == 0) {
      t = tok::kSearchOpen;
      words_left_ = 1 + rng.below(max_words_);
      phase_ = 1;
    } else if (words_left_ > 0) {
      t = static_cast<TokenId>(tok::kNumReserved + rng.below(vocab_ - tok::kNumReserved));
      --words_left_;
    } else {
      t = tok::kSearchClose;
      phase_ = 0;
    }
    return {t, 0.0, 0.0};
  }

  void push(TokenId) override {}

 private:
  std::size_t vocab_, max_words_;
  int phase_ = 0;
  std::size_t words_left_ = 0;
};

}  // namespace

std::unique_ptr<Decoder> ModelPolicy::open(std::span<const TokenId> prompt) {
  std::shared_ptr<PromptState> state;
  {
    std::lock_guard lock(mu_);
    if (cached_ && std::equal(cached_->prompt.begin(), cached_->prompt.end(), prompt.begin(),
                              prompt.end())) {
      state = cached_;
    } else {
      state = std::make_shared<PromptState>(*params_,
                                            std::vector<TokenId>(prompt.begin(), prompt.end()));
      cached_ = state;
    }
  }
  return std::make_unique<ModelDecoder>(std::move(state));
}

std::unique_ptr<Decoder> ReplayPolicy::open(std::span<const TokenId>) {
  return std::make_unique<ReplayDecoder>(script_, filler_);
}

std::unique_ptr<Decoder> AlwaysSearchPolicy::open(std::span<const TokenId>) {
  if (vocab_ <= static_cast<std::size_t>(tok::kNumReserved)) {
    throw ContractError("vocabulary has no word tokens");
  }
  return std::make_unique<AlwaysSearchDecoder>(vocab_, std::max<std::size_t>(1, max_query_words_));
}

// ---------------------------------------------------------------------------
// Loop

Trajectory run_rollout(TokenPolicy& policy, const Vocabulary& vocab,
                       std::span<const TokenId> prompt, const Tool& tool,
                       const RolloutLimits& limits, std::uint64_t seed) {
  limits.validate();
  if (prompt.size() > limits.max_prompt_tokens) {
    throw ConfigError("prompt has " + std::to_string(prompt.size()) +
                      " tokens, limits.max_prompt_tokens is " +
                      std::to_string(limits.max_prompt_tokens));
  }
  Trajectory traj;
  traj.tokens.assign(prompt.begin(), prompt.end());
  traj.origins.assign(prompt.size(), Origin::Prompt);
  traj.prompt_len = prompt.size();

  std::unique_ptr<Decoder> dec = policy.open(prompt);
  Rng rng(seed);
  std::size_t generated = 0;
  std::optional<std::size_t> search_begin;  // first query token
  bool answer_open = false;

  for (;;) {
    if (generated >= limits.max_response_tokens) {
      traj.termination = Termination::TokenBudget;
      break;
    }
    const Draw d = dec->next(rng, limits.temperature);
    traj.tokens.push_back(d.token);
    traj.origins.push_back(Origin::Model);
    traj.sample_logprobs.push_back(d.sample_logprob);
    traj.policy_logprobs.push_back(d.policy_logprob);
    ++generated;

    if (d.token == tok::kAnswerOpen) {
      answer_open = true;
    } else if (d.token == tok::kAnswerClose && answer_open) {
      traj.termination = Termination::Answered;
      break;
    } else if (d.token == tok::kSearchOpen && !search_begin) {
      search_begin = traj.tokens.size();
    } else if (d.token == tok::kSearchClose && search_begin) {
      if (traj.turn_count >= limits.max_turns) {
        traj.termination = Termination::TurnBudget;
        break;
      }
      const std::span<const TokenId> query(traj.tokens.begin() + static_cast<std::ptrdiff_t>(*search_begin),
                                           traj.tokens.end() - 1);
      const ToolOutput out = tool(vocab.decode(query));
      std::vector<TokenId> injected{tok::kInfoOpen};
      for (TokenId t : vocab.encode(out.text)) injected.push_back(t);
      injected.push_back(tok::kInfoClose);

      dec->push(d.token);
      ToolCall call{traj.tokens.size(), traj.tokens.size() + injected.size(), out.ok};
      for (TokenId t : injected) {
        traj.tokens.push_back(t);
        traj.origins.push_back(Origin::Tool);
        dec->push(t);
      }
      traj.tool_calls.push_back(call);
      ++traj.turn_count;
      search_begin.reset();
      continue;
    }
    dec->push(d.token);
  }
  return traj;
}

Trajectory run_rollout(const PolicyParams& params, const Vocabulary& vocab,
                       std::span<const TokenId> prompt, const SyntheticWorld& world,
                       const RolloutLimits& limits, std::uint64_t seed) {
  ModelPolicy policy(params);
  return run_rollout(policy, vocab, prompt, search_tool(world), limits, seed);
}

std::string model_text(const Trajectory& traj, const Vocabulary& vocab) {
  std::vector<TokenId> ids;
  for (std::size_t i = 0; i < traj.tokens.size(); ++i) {
    if (traj.origins[i] == Origin::Model) ids.push_back(traj.tokens[i]);
  }
  return vocab.decode(ids);
}

std::optional<std::string> extract_answer(const Trajectory& traj, const Vocabulary& vocab) {
  std::optional<std::string> a = first_answer(model_text(traj, vocab));
  if (!a) return a;
  const auto not_space = [](unsigned char c) { return !std::isspace(c); };
  const auto b = std::find_if(a->begin(), a->end(), not_space);
  const auto e = std::find_if(a->rbegin(), a->rend(), not_space).base();
  return b < e ? std::string(b, e) : std::string();
}

std::size_t valid_search_count(const Trajectory& traj) {
  return static_cast<std::size_t>(std::count_if(traj.tool_calls.begin(), traj.tool_calls.end(),
                                                [](const ToolCall& c) { return c.ok; }));
}

}  // namespace icrl
