#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace icrl {

using TokenId = std::int32_t;

// Reserved ids. The eight tag literals are atomic tokens in this order.
namespace tok {
inline constexpr TokenId kThinkOpen = 0;
inline constexpr TokenId kThinkClose = 1;
inline constexpr TokenId kSearchOpen = 2;
inline constexpr TokenId kSearchClose = 3;
inline constexpr TokenId kInfoOpen = 4;
inline constexpr TokenId kInfoClose = 5;
inline constexpr TokenId kAnswerOpen = 6;
inline constexpr TokenId kAnswerClose = 7;
inline constexpr TokenId kBos = 8;
inline constexpr TokenId kUnk = 9;
inline constexpr TokenId kNumReserved = 10;
}  // namespace tok

inline constexpr std::size_t kMaxVocab = 1024;

// Word-level vocabulary. Words are whitespace-free strings; tag literals are
// split out of surrounding text before lookup.
class Vocabulary {
 public:
  Vocabulary();

  // Returns the existing id when the word is already present.
  TokenId add(std::string_view word);
  std::optional<TokenId> find(std::string_view word) const;
  const std::string& word(TokenId id) const;
  std::size_t size() const { return words_.size(); }

  std::vector<TokenId> encode(std::string_view text) const;
  std::string decode(std::span<const TokenId> ids) const;

 private:
  std::vector<std::string> words_;
  std::unordered_map<std::string, TokenId> index_;
};

// Whitespace split after isolating tag literals.
std::vector<std::string> split_words(std::string_view text);

// Words joined by single spaces; the canonical text form of a word list.
std::string join_words(std::span<const std::string> words);

std::uint64_t fnv1a64(std::string_view data, std::uint64_t h = 0xcbf29ce484222325ULL) noexcept;

}  // namespace icrl
