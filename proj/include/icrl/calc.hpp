#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace icrl {

struct CalcResult {
  std::string text;  // value, or "error: ..." payload
  bool ok = false;
};

// Exact rational evaluation of + - * / and parentheses over integers
// (64-bit numerator and denominator). Integral results render as "14",
// others as "7/2". Parse errors, division by zero and overflow come back as
// an "error: ..." text rather than an exception, since the caller shows the
// text to the policy as the tool observation.
CalcResult evaluate_arithmetic(std::string_view expr);

inline std::string eval_expression(std::string_view expr) {
  return evaluate_arithmetic(expr).text;
}

}  // namespace icrl
