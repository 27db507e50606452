#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <sstream>

#include "icrl/calc.hpp"
#include "icrl/errors.hpp"
#include "icrl/grammar.hpp"
#include "icrl/questions.hpp"
#include "icrl/rng.hpp"
#include "icrl/search.hpp"
#include "icrl/vocab.hpp"
#include "icrl/world.hpp"

using namespace icrl;

namespace {

// Straight-line scorer: recount everything per query.
std::vector<std::size_t> brute_rank(const SyntheticWorld& w, const std::string& query,
                                    std::size_t k) {
  std::vector<std::map<std::string, int>> tf;
  std::map<std::string, int> df;
  for (const auto& d : w.corpus) {
    std::map<std::string, int> m;
    for (const auto& t : lowercase_terms(d.title + " " + d.body)) m[t] += 1;
    for (const auto& [t, n] : m) df[t] += 1;
    tf.push_back(m);
  }
  std::set<std::string> terms;
  for (const auto& t : lowercase_terms(query)) terms.insert(t);
  std::vector<std::pair<double, std::size_t>> scored;
  for (std::size_t i = 0; i < tf.size(); ++i) {
    double s = 0.0;
    for (const auto& t : terms) {
      if (!df.count(t)) continue;
      const double idf = std::log(1.0 + double(w.corpus.size()) / df[t]);
      if (tf[i].count(t)) s += tf[i][t] * idf;
    }
    if (s > 0) scored.push_back({s, i});
  }
  std::stable_sort(scored.begin(), scored.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < std::min(k, scored.size()); ++i) out.push_back(scored[i].second);
  return out;
}

}  // namespace

TEST_CASE("world generation is deterministic and well formed") {
  const auto a = generate_world(7, 50, 80);
  const auto b = generate_world(7, 50, 80);
  CHECK(a == b);
  CHECK(a.entities.size() == 50);
  CHECK(a.relations.size() == 80);
  CHECK(a.corpus.size() == 80);
  std::set<std::pair<std::string, std::string>> keys;
  std::set<std::string> ents(a.entities.begin(), a.entities.end());
  CHECK(ents.size() == 50);
  for (std::size_t i = 0; i < a.relations.size(); ++i) {
    const auto& t = a.relations[i];
    CHECK(keys.insert({t.subject, t.relation}).second);
    CHECK(ents.count(t.subject));
    CHECK(ents.count(t.object));
    CHECK(a.corpus[i] == document_for(t));
    CHECK(a.corpus[i].title == t.subject + " " + t.relation);
  }
  CHECK_FALSE(generate_world(8, 50, 80) == a);
}

TEST_CASE("world text round trip") {
  const auto w = generate_world(3, 20, 30);
  std::stringstream ss;
  write_world(ss, w);
  CHECK(read_world(ss) == w);
}

TEST_CASE("world bounds") {
  CHECK_THROWS_AS(generate_world(1, 1, 5), ConfigError);
  CHECK_THROWS_AS(generate_world(1, 5, 0), ConfigError);
  CHECK_THROWS_AS(generate_world(1, 3, 1000), ConfigError);
}

TEST_CASE("search agrees with a brute-force scorer") {
  const auto w = generate_world(11, 50, 80);
  const SearchIndex index(w);
  Rng rng(5);
  std::vector<std::string> words;
  for (const auto& e : w.entities) words.push_back(e);
  for (const auto& r : w.relation_labels()) words.push_back(r);
  words.push_back("zzz-unknown");
  for (int q = 0; q < 100; ++q) {
    std::string query;
    const std::size_t n = 1 + rng.below(4);
    for (std::size_t i = 0; i < n; ++i) query += words[rng.below(words.size())] + " ";
    std::vector<std::size_t> got;
    for (const auto& h : index.rank(query, 3)) got.push_back(h.index);
    INFO(query);
    CHECK(got == brute_rank(w, query, 3));
  }
}

TEST_CASE("search edge cases") {
  const auto w = generate_world(11, 50, 80);
  CHECK(search(w, "").empty());
  CHECK(search(w, "nothing-matches-this").empty());
  CHECK(render_search_results({}) == std::string(kNoResultsSentinel));
  const auto& t = w.relations[0];
  const auto hits = search(w, t.subject + " " + t.relation);
  REQUIRE_FALSE(hits.empty());
  CHECK(hits.size() <= kDefaultTopK);
  CHECK(render_search_results({document_for(t)}) == t.subject + " " + t.relation + " " + t.object);
}

TEST_CASE("calculator") {
  CHECK(eval_expression("2+3*4") == "14");
  CHECK(eval_expression("(2+3)*4") == "20");
  CHECK(eval_expression("7/2") == "7/2");
  CHECK(eval_expression("-3 - -3") == "0");
  CHECK(eval_expression("6/4*2") == "3");
  const auto div0 = evaluate_arithmetic("1/0");
  CHECK_FALSE(div0.ok);
  CHECK(div0.text.starts_with("error"));
  CHECK_FALSE(evaluate_arithmetic("2+").ok);
  CHECK_FALSE(evaluate_arithmetic("(1").ok);
  CHECK_FALSE(evaluate_arithmetic("").ok);
  CHECK_FALSE(evaluate_arithmetic("9223372036854775807*2").ok);
}

TEST_CASE("questions are deterministic and solvable") {
  const auto w = generate_world(1, 50, 80);
  for (int hops : {1, 2}) {
    const auto qs = generate_questions(w, hops, 20, 99);
    CHECK(qs == generate_questions(w, hops, 20, 99));
    std::set<std::string> texts;
    for (const auto& q : qs) {
      CHECK(q.hop_count == hops);
      CHECK(texts.insert(q.prompt_text).second);
      const std::string sol = oracle_solve(w, q);
      CHECK(static_cast<int>(count_occurrences(sol, "<search>")) == hops);
      CHECK(first_answer(sol).value() == " " + q.gold_answer + " ");
    }
  }
}

TEST_CASE("two-hop gold is not reachable from the raw question") {
  const auto w = generate_world(1, 50, 80);
  for (const auto& q : generate_questions(w, 2, 20, 4)) {
    for (const auto& d : search(w, q.prompt_text)) {
      const auto words = split_words(d.body);
      CHECK(std::find(words.begin(), words.end(), q.gold_answer) == words.end());
    }
  }
}

TEST_CASE("impossible question counts are configuration errors") {
  const auto w = generate_world(1, 6, 4);
  CHECK_THROWS_AS(generate_questions(w, 2, 1000, 1), ConfigError);
  CHECK_THROWS_AS(generate_questions(w, 0, 1, 1), ConfigError);
}
