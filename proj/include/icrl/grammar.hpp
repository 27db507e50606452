#pragma once

// Tagged transcript format: <think>, <search>, <information>, <answer> blocks
// interleaved with free text. Parsing is a flat first-match scan; tags found
// inside another block's content are literal text.

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace icrl {

enum class SegmentKind : std::uint8_t { Think, Search, Information, Answer, Plain };

std::string_view segment_kind_name(SegmentKind kind) noexcept;

namespace tags {
inline constexpr std::string_view kThinkOpen = "<think>";
inline constexpr std::string_view kThinkClose = "</think>";
inline constexpr std::string_view kSearchOpen = "<search>";
inline constexpr std::string_view kSearchClose = "</search>";
inline constexpr std::string_view kInfoOpen = "<information>";
inline constexpr std::string_view kInfoClose = "</information>";
inline constexpr std::string_view kAnswerOpen = "<answer>";
inline constexpr std::string_view kAnswerClose = "</answer>";

// Order matches the reserved token ids 0..7.
inline constexpr std::array<std::string_view, 8> kAll{
    kThinkOpen, kThinkClose, kSearchOpen, kSearchClose,
    kInfoOpen,  kInfoClose,  kAnswerOpen, kAnswerClose};
}  // namespace tags

// Opening / closing literal for a tagged kind. Plain has none.
std::string_view open_tag(SegmentKind kind);
std::string_view close_tag(SegmentKind kind);

// Half-open character range into the transcript. Tagged segments cover their
// tags as well as the content.
struct Span {
  std::size_t begin = 0;
  std::size_t end = 0;
  bool operator==(const Span&) const = default;
};

struct Segment {
  SegmentKind kind = SegmentKind::Plain;
  std::string content;
  Span span;
  bool operator==(const Segment&) const = default;
};

enum class Violation : std::uint8_t {
  NoAnswerTag,
  UnbalancedAnswer,
  NoThinkTag,
  UnbalancedThink,
  NoSearchUsage,
  EmptyAnswer,
};

inline constexpr std::array<Violation, 6> kAllViolations{
    Violation::NoAnswerTag,     Violation::UnbalancedAnswer, Violation::NoThinkTag,
    Violation::UnbalancedThink, Violation::NoSearchUsage,    Violation::EmptyAnswer};

std::string_view violation_name(Violation v) noexcept;
std::optional<Violation> violation_from_name(std::string_view name) noexcept;

class ViolationSet {
 public:
  constexpr ViolationSet() = default;
  constexpr ViolationSet(std::initializer_list<Violation> vs) {
    for (Violation v : vs) insert(v);
  }
  static constexpr ViolationSet from_bits(std::uint8_t bits) {
    ViolationSet s;
    s.bits_ = static_cast<std::uint8_t>(bits & 0x3f);
    return s;
  }

  constexpr void insert(Violation v) { bits_ |= mask(v); }
  constexpr void erase(Violation v) { bits_ &= static_cast<std::uint8_t>(~mask(v)); }
  constexpr bool contains(Violation v) const { return (bits_ & mask(v)) != 0; }
  constexpr bool empty() const { return bits_ == 0; }
  constexpr std::uint8_t bits() const { return bits_; }
  std::size_t size() const;
  std::vector<Violation> members() const;
  std::vector<std::string> names() const;

  constexpr bool operator==(const ViolationSet&) const = default;

 private:
  static constexpr std::uint8_t mask(Violation v) {
    return static_cast<std::uint8_t>(1u << static_cast<unsigned>(v));
  }
  std::uint8_t bits_ = 0;
};

class GrammarError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Splits arbitrary text into segments. Text outside a matched tag pair is
// Plain; an opening tag without a later closing tag starts a Plain segment
// that runs to the next opening tag.
std::vector<Segment> parse_transcript(std::string_view text);

// Violation flags:
//   NoAnswerTag      no <answer> and no </answer>
//   UnbalancedAnswer <answer> count != </answer> count
//   NoThinkTag       no <think>
//   UnbalancedThink  <think> count != </think> count
//   NoSearchUsage    no complete <search>...</search> block
//   EmptyAnswer      answer tags balanced and the first answer block is blank
ViolationSet detect_violations(std::string_view text);

// Inverse of parse_transcript for segment lists without adjacent Plain
// segments. Throws GrammarError when a content string contains a tag literal.
std::string render_segments(std::span<const Segment> segments);

// Content of the first answer block, if any.
std::optional<std::string> first_answer(std::string_view text);

std::size_t count_occurrences(std::string_view text, std::string_view needle) noexcept;

}  // namespace icrl
