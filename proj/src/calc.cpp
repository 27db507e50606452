#include "icrl/calc.hpp"

#include <cctype>
#include <numeric>
#include <stdexcept>

namespace icrl {
namespace {

struct CalcFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Rational {
  std::int64_t num = 0;
  std::int64_t den = 1;
};

std::int64_t checked_mul(std::int64_t a, std::int64_t b) {
  std::int64_t r;
  if (__builtin_mul_overflow(a, b, &r)) throw CalcFailure("overflow");
  return r;
}

std::int64_t checked_add(std::int64_t a, std::int64_t b) {
  std::int64_t r;
  if (__builtin_add_overflow(a, b, &r)) throw CalcFailure("overflow");
  return r;
}

Rational normalized(std::int64_t num, std::int64_t den) {
  if (den == 0) throw CalcFailure("division by zero");
  if (den < 0) {
    num = checked_mul(num, -1);
    den = checked_mul(den, -1);
  }
  const std::int64_t g = std::gcd(num, den);
  return {num / g, den / g};
}

Rational add(Rational a, Rational b) {
  return normalized(checked_add(checked_mul(a.num, b.den), checked_mul(b.num, a.den)),
                    checked_mul(a.den, b.den));
}
Rational neg(Rational a) { return {checked_mul(a.num, -1), a.den}; }
Rational mul(Rational a, Rational b) {
  return normalized(checked_mul(a.num, b.num), checked_mul(a.den, b.den));
}
Rational div(Rational a, Rational b) {
  if (b.num == 0) throw CalcFailure("division by zero");
  return normalized(checked_mul(a.num, b.den), checked_mul(a.den, b.num));
}

class Parser {
 public:
  explicit Parser(std::string_view s) : s_(s) {}

  Rational parse() {
    Rational v = expr();
    skip();
    if (pos_ != s_.size()) fail();
    return v;
  }

 private:
  Rational expr() {
    Rational v = term();
    for (;;) {
      skip();
      if (eat('+')) {
        v = add(v, term());
      } else if (eat('-')) {
        v = add(v, neg(term()));
      } else {
        return v;
      }
    }
  }

  Rational term() {
    Rational v = factor();
    for (;;) {
      skip();
      if (eat('*')) {
        v = mul(v, factor());
      } else if (eat('/')) {
        v = div(v, factor());
      } else {
        return v;
      }
    }
  }

  Rational factor() {
    skip();
    if (eat('-')) return neg(factor());
    if (eat('+')) return factor();
    if (eat('(')) {
      Rational v = expr();
      skip();
      if (!eat(')')) fail();
      return v;
    }
    if (pos_ < s_.size() && std::isdigit(static_cast<unsigned char>(s_[pos_]))) {
      std::int64_t n = 0;
      while (pos_ < s_.size() && std::isdigit(static_cast<unsigned char>(s_[pos_]))) {
        n = checked_add(checked_mul(n, 10), s_[pos_] - '0');
        ++pos_;
      }
      return {n, 1};
    }
    fail();
  }

  void skip() {
    while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
  }

  bool eat(char c) {
    if (pos_ < s_.size() && s_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }

  [[noreturn]] void fail() const {
    throw CalcFailure("parse error at position " + std::to_string(pos_));
  }

  std::string_view s_;
  std::size_t pos_ = 0;
};

}  // namespace

CalcResult evaluate_arithmetic(std::string_view expr) {
  try {
    const Rational v = Parser(expr).parse();
    std::string text = std::to_string(v.num);
    if (v.den != 1) text += "/" + std::to_string(v.den);
    return {std::move(text), true};
  } catch (const CalcFailure& e) {
    return {std::string("error: ") + e.what(), false};
  }
}

}  // namespace icrl
