#pragma once

#include <array>
#include <cmath>
#include <string>
#include <string_view>

#include "icrl/grammar.hpp"

namespace icrl {

struct Trajectory;
class Vocabulary;

struct RewardConfig {
  double alpha = 0.8;
  // Indexed by Violation.
  std::array<double, 6> penalties{0.5, 0.2, 0.15, 0.1, 0.1, 0.2};

  double penalty(Violation v) const { return penalties[static_cast<std::size_t>(v)]; }
  // 1 - alpha snapped to 12 decimals, so alpha 0.8 gives the double 0.2
  // rather than 0.19999999999999996.
  double format_weight() const { return std::round((1.0 - alpha) * 1e12) / 1e12; }
  // Throws ConfigError for alpha outside [0, 1] or a negative weight.
  void validate() const;
};

struct RewardBreakdown {
  int accuracy = 0;
  ViolationSet violations;
  double format_reward = 0.0;
  double composite = 0.0;
  bool operator==(const RewardBreakdown&) const = default;
};

// Lowercase, drop ASCII punctuation, collapse whitespace runs, trim.
std::string normalize_answer(std::string_view text);
int exact_match(std::string_view pred, std::string_view gold);

// clamp(1 - sum of penalties, 0, 1)
double format_reward(const ViolationSet& violations, const RewardConfig& config);

RewardBreakdown score(int accuracy, const ViolationSet& violations, const RewardConfig& config);

// Scores the model-generated tokens of `traj` only: prompt and tool text are
// removed before violation detection and answer extraction.
RewardBreakdown composite_reward(const Trajectory& traj, const Vocabulary& vocab,
                                 std::string_view gold, const RewardConfig& config);

}  // namespace icrl
