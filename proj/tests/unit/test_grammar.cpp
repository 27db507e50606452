#include "doctest.h"

#include <bit>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "icrl/grammar.hpp"
#include "icrl/rng.hpp"

using namespace icrl;

namespace {

std::vector<std::string> names_of(std::string_view text) {
  return detect_violations(text).names();
}

std::vector<std::string> split_csv(const std::string& s) {
  std::vector<std::string> out;
  if (s == "-") return out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(item);
  return out;
}

std::string unescape(const std::string& s) {
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '\\' && i + 1 < s.size() && s[i + 1] == 't') {
      out += '\t';
      ++i;
    } else {
      out += s[i];
    }
  }
  return out;
}

// Random well-formed list: no adjacent Plain segments, Plain never empty,
// and no content holds a tag literal.
std::vector<Segment> random_segments(Rng& rng) {
  static const std::vector<std::string> pieces{"a", "bob", " ", "  ", "x y", "<", ">", "/",
                                               "think", "search>", "<answ", "\n", "of"};
  std::vector<Segment> out;
  const std::size_t n = rng.below(8);
  std::size_t offset = 0;
  for (std::size_t i = 0; i < n; ++i) {
    auto kind = static_cast<SegmentKind>(rng.below(5));
    if (kind == SegmentKind::Plain && !out.empty() && out.back().kind == SegmentKind::Plain) {
      kind = SegmentKind::Think;
    }
    std::string content;
    const std::size_t words = rng.below(5) + (kind == SegmentKind::Plain ? 1 : 0);
    for (std::size_t w = 0; w < words; ++w) content += pieces[rng.below(pieces.size())];
    // Guard against pieces that happen to glue into a tag.
    bool clean = true;
    for (auto lit : tags::kAll) clean = clean && content.find(lit) == std::string::npos;
    if (!clean) continue;
    std::size_t len = content.size();
    if (kind != SegmentKind::Plain) len += open_tag(kind).size() + close_tag(kind).size();
    out.push_back({kind, content, {offset, offset + len}});
    offset += len;
  }
  return out;
}

}  // namespace

TEST_CASE("reference examples") {
  CHECK(names_of("<think>a</think>") == std::vector<std::string>{"NoAnswerTag", "NoSearchUsage"});
  CHECK(names_of("<search>q</search><answer></answer>") ==
        std::vector<std::string>{"NoThinkTag", "EmptyAnswer"});
  const auto segs = parse_transcript("hello <answer>z");
  REQUIRE(segs.size() == 2);
  CHECK(segs[0].kind == SegmentKind::Plain);
  CHECK(segs[0].content == "hello ");
  CHECK(segs[1].kind == SegmentKind::Plain);
  CHECK(segs[1].content == "<answer>z");
}

TEST_CASE("clean transcript has no violations") {
  CHECK(detect_violations("<think>t</think><search>q</search><answer>b</answer>").empty());
}

TEST_CASE("tags inside another block are literal") {
  const auto segs = parse_transcript("<think>a<answer>b</think>");
  REQUIRE(segs.size() == 1);
  CHECK(segs[0].kind == SegmentKind::Think);
  CHECK(segs[0].content == "a<answer>b");
  CHECK(first_answer("<think>a<answer>b</think>") == std::nullopt);
}

TEST_CASE("golden violation table") {
  std::ifstream in(std::string(ICRL_TEST_DATA) + "/violations_golden.tsv");
  REQUIRE(in.good());
  std::string line;
  int cases = 0;
  while (std::getline(in, line)) {
    if (line.starts_with("#")) continue;
    const auto tab = line.rfind('\t');
    REQUIRE(tab != std::string::npos);
    const std::string text = unescape(line.substr(0, tab));
    INFO("transcript: " << text);
    CHECK(names_of(text) == split_csv(line.substr(tab + 1)));
    ++cases;
  }
  CHECK(cases == 50);
}

TEST_CASE("parse of render is identity over random segment lists") {
  Rng rng(20240611);
  for (int i = 0; i < 10000; ++i) {
    const auto segs = random_segments(rng);
    const std::string text = render_segments(segs);
    const auto back = parse_transcript(text);
    REQUIRE(back == segs);
  }
}

TEST_CASE("render rejects tag literals in content") {
  const std::vector<Segment> segs{{SegmentKind::Think, "a</think>", {}}};
  CHECK_THROWS_AS(render_segments(segs), GrammarError);
  CHECK_THROWS_AS(open_tag(SegmentKind::Plain), GrammarError);
}

TEST_CASE("violation set bits and names") {
  for (unsigned bits = 0; bits < 64; ++bits) {
    const auto s = ViolationSet::from_bits(static_cast<std::uint8_t>(bits));
    CHECK(s.size() == static_cast<std::size_t>(std::popcount(bits)));
    for (const auto& n : s.names()) {
      const auto v = violation_from_name(n);
      REQUIRE(v.has_value());
      CHECK(s.contains(*v));
    }
  }
  CHECK_FALSE(violation_from_name("Bogus").has_value());
}

TEST_CASE("count_occurrences does not overlap") {
  CHECK(count_occurrences("aaaa", "aa") == 2);
  CHECK(count_occurrences("", "a") == 0);
}
