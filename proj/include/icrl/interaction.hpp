#pragma once

// Multi-turn rollout loop. The policy generates one token at a time; a
// </search> closing an open <search> hands the enclosed words to the tool and
// the observation is appended as an <information> block flagged Tool.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "icrl/model.hpp"
#include "icrl/reward.hpp"
#include "icrl/rng.hpp"
#include "icrl/search.hpp"
#include "icrl/vocab.hpp"
#include "icrl/world.hpp"

namespace icrl {

enum class Origin : std::uint8_t { Prompt, Model, Tool };
enum class Termination : std::uint8_t { Answered, TurnBudget, TokenBudget };

std::string_view termination_name(Termination t) noexcept;
std::optional<Termination> termination_from_name(std::string_view name) noexcept;

// Token range [begin, end) of one injected <information> block, tags included.
struct ToolCall {
  std::size_t begin = 0;
  std::size_t end = 0;
  bool ok = false;  // tool returned a real result (not the sentinel or an error)
  bool operator==(const ToolCall&) const = default;
};

struct Trajectory {
  std::vector<TokenId> tokens;
  std::vector<Origin> origins;
  std::size_t turn_count = 0;
  Termination termination = Termination::TokenBudget;
  std::size_t prompt_len = 0;
  std::vector<ToolCall> tool_calls;
  // One entry per Model token: log-prob under the sampling distribution and
  // under the untempered policy that generated it.
  std::vector<double> sample_logprobs;
  std::vector<double> policy_logprobs;
  std::optional<RewardBreakdown> reward;

  std::vector<std::size_t> model_positions() const;
  std::size_t count(Origin o) const;
  bool operator==(const Trajectory&) const = default;
};

struct RolloutLimits {
  std::size_t max_turns = 6;
  std::size_t max_response_tokens = 96;
  std::size_t max_prompt_tokens = 320;
  double temperature = 1.0;
  void validate() const;
};

struct ToolOutput {
  std::string text;
  bool ok = false;
};
using Tool = std::function<ToolOutput(std::string_view query)>;

// Top-k retrieval over the world; renders bodies, "no results" when empty.
Tool search_tool(const SyntheticWorld& world, std::size_t k = kDefaultTopK);
// Arithmetic evaluator; errors come back as observation text with ok=false.
Tool calc_tool();

struct Draw {
  TokenId token = 0;
  double sample_logprob = 0.0;
  double policy_logprob = 0.0;
};

// Incremental generator for one rollout. The loop alternates next() with
// push() of the chosen token, and pushes tool tokens as they are injected.
class Decoder {
 public:
  virtual ~Decoder() = default;
  virtual Draw next(Rng& rng, double temperature) = 0;
  virtual void push(TokenId token) = 0;
};

class TokenPolicy {
 public:
  virtual ~TokenPolicy() = default;
  // Must be safe to call concurrently.
  virtual std::unique_ptr<Decoder> open(std::span<const TokenId> prompt) = 0;
};

// Samples from a PolicyParams. Decoders opened on the same prompt share one
// prompt forward pass.
class ModelPolicy : public TokenPolicy {
 public:
  explicit ModelPolicy(const PolicyParams& params) : params_(&params) {}
  std::unique_ptr<Decoder> open(std::span<const TokenId> prompt) override;

  struct PromptState;

 private:
  const PolicyParams* params_;
  std::mutex mu_;
  std::shared_ptr<PromptState> cached_;
};

// Emits a fixed script, skipping any <information> blocks in it (the loop
// injects those), then repeats `filler`.
class ReplayPolicy : public TokenPolicy {
 public:
  explicit ReplayPolicy(std::vector<TokenId> script, TokenId filler = tok::kUnk)
      : script_(std::make_shared<const std::vector<TokenId>>(std::move(script))),
        filler_(filler) {}
  std::unique_ptr<Decoder> open(std::span<const TokenId> prompt) override;

 private:
  std::shared_ptr<const std::vector<TokenId>> script_;
  TokenId filler_;
};

// Adversarial: repeats "<search> w </search>" forever with random words w
// drawn from [first_word, vocab).
class AlwaysSearchPolicy : public TokenPolicy {
 public:
  AlwaysSearchPolicy(std::size_t vocab, std::size_t max_query_words = 3)
      : vocab_(vocab), max_query_words_(max_query_words) {}
  std::unique_ptr<Decoder> open(std::span<const TokenId> prompt) override;

 private:
  std::size_t vocab_;
  std::size_t max_query_words_;
};

// Throws ConfigError when the prompt exceeds limits.max_prompt_tokens.
Trajectory run_rollout(TokenPolicy& policy, const Vocabulary& vocab,
                       std::span<const TokenId> prompt, const Tool& tool,
                       const RolloutLimits& limits, std::uint64_t seed);

Trajectory run_rollout(const PolicyParams& params, const Vocabulary& vocab,
                       std::span<const TokenId> prompt, const SyntheticWorld& world,
                       const RolloutLimits& limits, std::uint64_t seed);

// Text of the Model-flagged tokens in order.
std::string model_text(const Trajectory& traj, const Vocabulary& vocab);

// Trimmed content of the first answer block in the model text; "" for an
// empty block, nullopt when there is none.
std::optional<std::string> extract_answer(const Trajectory& traj, const Vocabulary& vocab);

std::size_t valid_search_count(const Trajectory& traj);

}  // namespace icrl
