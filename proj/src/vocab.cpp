#include "icrl/vocab.hpp"

#include <stdexcept>

#include "icrl/grammar.hpp"

namespace icrl {

Vocabulary::Vocabulary() {
  for (std::string_view t : tags::kAll) add(t);
  add("<bos>");
  add("<unk>");
}

TokenId Vocabulary::add(std::string_view word) {
  if (word.empty() || word.find_first_of(" \t\n\r") != std::string_view::npos) {
    throw std::invalid_argument("vocabulary words must be non-empty and whitespace-free");
  }
  if (auto id = find(word)) return *id;
  if (words_.size() >= kMaxVocab) throw std::length_error("vocabulary exceeds 1024 entries");
  const auto id = static_cast<TokenId>(words_.size());
  words_.emplace_back(word);
  index_.emplace(words_.back(), id);
  return id;
}

std::optional<TokenId> Vocabulary::find(std::string_view word) const {
  const auto it = index_.find(std::string(word));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

const std::string& Vocabulary::word(TokenId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= words_.size()) {
    throw std::out_of_range("token id outside vocabulary");
  }
  return words_[static_cast<std::size_t>(id)];
}

std::vector<TokenId> Vocabulary::encode(std::string_view text) const {
  std::vector<TokenId> out;
  for (const std::string& w : split_words(text)) out.push_back(find(w).value_or(tok::kUnk));
  return out;
}

std::string Vocabulary::decode(std::span<const TokenId> ids) const {
  std::string out;
  for (TokenId id : ids) {
    if (!out.empty()) out += ' ';
    out += word(id);
  }
  return out;
}

std::vector<std::string> split_words(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty()) out.push_back(std::move(cur));
    cur.clear();
  };
  std::size_t i = 0;
  while (i < text.size()) {
    const char c = text[i];
    if (c == ' ' || c == '\t' || c == '\n' || c == '\r') {
      flush();
      ++i;
      continue;
    }
    if (c == '<') {
      bool matched = false;
      for (std::string_view t : tags::kAll) {
        if (text.substr(i, t.size()) == t) {
          flush();
          out.emplace_back(t);
          i += t.size();
          matched = true;
          break;
        }
      }
      if (matched) continue;
    }
    cur += c;
    ++i;
  }
  flush();
  return out;
}

std::string join_words(std::span<const std::string> words) {
  std::string out;
  for (const std::string& w : words) {
    if (!out.empty()) out += ' ';
    out += w;
  }
  return out;
}

std::uint64_t fnv1a64(std::string_view data, std::uint64_t h) noexcept {
  for (unsigned char c : data) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace icrl
