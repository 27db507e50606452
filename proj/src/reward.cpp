#include "icrl/reward.hpp"

#include <algorithm>
#include <cctype>

#include "icrl/errors.hpp"
#include "icrl/interaction.hpp"

namespace icrl {

void RewardConfig::validate() const {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("reward.alpha must be in [0, 1]");
  for (Violation v : kAllViolations) {
    if (!(penalty(v) >= 0.0)) {
      throw ConfigError("reward.penalties." + std::string(violation_name(v)) +
                        " must be >= 0");
    }
  }
}

std::string normalize_answer(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  bool pending_space = false;
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::ispunct(c)) continue;
    if (std::isspace(c)) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out.push_back(' ');
    pending_space = false;
    out.push_back(static_cast<char>(std::tolower(c)));
  }
  return out;
}

int exact_match(std::string_view pred, std::string_view gold) {
  return normalize_answer(pred) == normalize_answer(gold) ? 1 : 0;
}

double format_reward(const ViolationSet& violations, const RewardConfig& config) {
  double total = 0.0;
  for (Violation v : kAllViolations) {
    if (violations.contains(v)) total += config.penalty(v);
  }
  return std::clamp(1.0 - total, 0.0, 1.0);
}

RewardBreakdown score(int accuracy, const ViolationSet& violations, const RewardConfig& config) {
  RewardBreakdown r;
  r.accuracy = accuracy;
  r.violations = violations;
  r.format_reward = format_reward(violations, config);
  r.composite = config.alpha * accuracy + config.format_weight() * r.format_reward;
  return r;
}

RewardBreakdown composite_reward(const Trajectory& traj, const Vocabulary& vocab,
                                 std::string_view gold, const RewardConfig& config) {
  const std::string text = model_text(traj, vocab);
  const std::optional<std::string> answer = extract_answer(traj, vocab);
  const int acc = answer ? exact_match(*answer, gold) : 0;
  return score(acc, detect_violations(text), config);
}

}  // namespace icrl
