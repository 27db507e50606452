#include "icrl/grammar.hpp"

#include <algorithm>
#include <bit>

namespace icrl {
namespace {

constexpr std::array<SegmentKind, 4> kTagged{SegmentKind::Think, SegmentKind::Search,
                                             SegmentKind::Information, SegmentKind::Answer};

struct OpenHit {
  std::size_t pos = std::string_view::npos;
  SegmentKind kind = SegmentKind::Plain;
};

// Leftmost opening tag at or after `from`.
OpenHit find_open(std::string_view text, std::size_t from) {
  OpenHit best;
  for (SegmentKind k : kTagged) {
    const std::size_t p = text.find(open_tag(k), from);
    if (p < best.pos) best = {p, k};
  }
  return best;
}

bool is_space(char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

}  // namespace

std::string_view segment_kind_name(SegmentKind kind) noexcept {
  switch (kind) {
    case SegmentKind::Think: return "think";
    case SegmentKind::Search: return "search";
    case SegmentKind::Information: return "information";
    case SegmentKind::Answer: return "answer";
    case SegmentKind::Plain: return "plain";
  }
  return "plain";
}

std::string_view open_tag(SegmentKind kind) {
  switch (kind) {
    case SegmentKind::Think: return tags::kThinkOpen;
    case SegmentKind::Search: return tags::kSearchOpen;
    case SegmentKind::Information: return tags::kInfoOpen;
    case SegmentKind::Answer: return tags::kAnswerOpen;
    case SegmentKind::Plain: break;
  }
  throw GrammarError("plain segments have no tags");
}

std::string_view close_tag(SegmentKind kind) {
  switch (kind) {
    case SegmentKind::Think: return tags::kThinkClose;
    case SegmentKind::Search: return tags::kSearchClose;
    case SegmentKind::Information: return tags::kInfoClose;
    case SegmentKind::Answer: return tags::kAnswerClose;
    case SegmentKind::Plain: break;
  }
  throw GrammarError("plain segments have no tags");
}

std::string_view violation_name(Violation v) noexcept {
  switch (v) {
    case Violation::NoAnswerTag: return "NoAnswerTag";
    case Violation::UnbalancedAnswer: return "UnbalancedAnswer";
    case Violation::NoThinkTag: return "NoThinkTag";
    case Violation::UnbalancedThink: return "UnbalancedThink";
    case Violation::NoSearchUsage: return "NoSearchUsage";
    case Violation::EmptyAnswer: return "EmptyAnswer";
  }
  return "?";
}

std::optional<Violation> violation_from_name(std::string_view name) noexcept {
  for (Violation v : kAllViolations) {
    if (violation_name(v) == name) return v;
  }
  return std::nullopt;
}

std::size_t ViolationSet::size() const { return static_cast<std::size_t>(std::popcount(bits_)); }

std::vector<Violation> ViolationSet::members() const {
  std::vector<Violation> out;
  for (Violation v : kAllViolations) {
    if (contains(v)) out.push_back(v);
  }
  return out;
}

std::vector<std::string> ViolationSet::names() const {
  std::vector<std::string> out;
  for (Violation v : members()) out.emplace_back(violation_name(v));
  return out;
}

std::size_t count_occurrences(std::string_view text, std::string_view needle) noexcept {
  std::size_t n = 0;
  for (std::size_t p = text.find(needle); p != std::string_view::npos;
       p = text.find(needle, p + needle.size())) {
    ++n;
  }
  return n;
}

std::vector<Segment> parse_transcript(std::string_view text) {
  std::vector<Segment> out;
  std::size_t pos = 0;
  while (pos < text.size()) {
    const OpenHit hit = find_open(text, pos);
    if (hit.pos == std::string_view::npos) {
      out.push_back({SegmentKind::Plain, std::string(text.substr(pos)), {pos, text.size()}});
      break;
    }
    if (hit.pos > pos) {
      out.push_back({SegmentKind::Plain, std::string(text.substr(pos, hit.pos - pos)),
                     {pos, hit.pos}});
    }
    const std::size_t body = hit.pos + open_tag(hit.kind).size();
    const std::string_view closer = close_tag(hit.kind);
    const std::size_t close = text.find(closer, body);
    if (close != std::string_view::npos) {
      const std::size_t end = close + closer.size();
      out.push_back({hit.kind, std::string(text.substr(body, close - body)), {hit.pos, end}});
      pos = end;
      continue;
    }
    // Unmatched opener: literal text up to the next opening tag.
    const std::size_t next = std::min(find_open(text, body).pos, text.size());
    out.push_back({SegmentKind::Plain, std::string(text.substr(hit.pos, next - hit.pos)),
                   {hit.pos, next}});
    pos = next;
  }
  return out;
}

std::optional<std::string> first_answer(std::string_view text) {
  for (const Segment& s : parse_transcript(text)) {
    if (s.kind == SegmentKind::Answer) return s.content;
  }
  return std::nullopt;
}

ViolationSet detect_violations(std::string_view text) {
  ViolationSet v;
  const std::size_t answer_open = count_occurrences(text, tags::kAnswerOpen);
  const std::size_t answer_close = count_occurrences(text, tags::kAnswerClose);
  const std::size_t think_open = count_occurrences(text, tags::kThinkOpen);
  const std::size_t think_close = count_occurrences(text, tags::kThinkClose);

  const std::vector<Segment> segments = parse_transcript(text);
  const bool has_search = std::any_of(segments.begin(), segments.end(), [](const Segment& s) {
    return s.kind == SegmentKind::Search;
  });

  if (answer_open == 0 && answer_close == 0) {
    v.insert(Violation::NoAnswerTag);
  } else if (answer_open != answer_close) {
    v.insert(Violation::UnbalancedAnswer);
  } else {
    const auto first = std::find_if(segments.begin(), segments.end(), [](const Segment& s) {
      return s.kind == SegmentKind::Answer;
    });
    if (first != segments.end() &&
        std::all_of(first->content.begin(), first->content.end(), is_space)) {
      v.insert(Violation::EmptyAnswer);
    }
  }
  if (think_open == 0) v.insert(Violation::NoThinkTag);
  if (think_open != think_close) v.insert(Violation::UnbalancedThink);
  if (!has_search) v.insert(Violation::NoSearchUsage);
  return v;
}

std::string render_segments(std::span<const Segment> segments) {
  std::string out;
  for (const Segment& s : segments) {
    for (std::string_view lit : tags::kAll) {
      if (s.content.find(lit) != std::string::npos) {
        throw GrammarError("segment content contains reserved tag literal " + std::string(lit));
      }
    }
    if (s.kind == SegmentKind::Plain) {
      out += s.content;
    } else {
      out += open_tag(s.kind);
      out += s.content;
      out += close_tag(s.kind);
    }
  }
  return out;
}

}  // namespace icrl
