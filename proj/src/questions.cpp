#include "icrl/questions.hpp"

#include <algorithm>
#include <functional>
#include <unordered_map>

#include "icrl/errors.hpp"
#include "icrl/rng.hpp"
#include "icrl/vocab.hpp"

namespace icrl {
namespace {

struct ParsedQuestion {
  std::string head;
  std::vector<std::string> relations;  // first hop first
};

ParsedQuestion parse_question(const std::string& text) {
  const std::vector<std::string> w = split_words(text);
  if (w.size() < 7 || w[0] != "what" || w[1] != "is" || w.back() != "?") {
    throw ContractError("not a generated question: " + text);
  }
  ParsedQuestion q;
  q.head = w[w.size() - 2];
  for (std::size_t i = 2; i + 2 < w.size(); ++i) {
    if (w[i] == "the") q.relations.push_back(w[i + 1]);
  }
  std::reverse(q.relations.begin(), q.relations.end());
  if (q.relations.empty()) throw ContractError("question names no relation: " + text);
  return q;
}

}  // namespace

std::vector<Chain> enumerate_chains(const SyntheticWorld& world, int hops) {
  std::vector<Chain> out;
  if (hops < 1) return out;
  std::unordered_map<std::string, std::vector<std::size_t>> outgoing;
  for (std::size_t i = 0; i < world.relations.size(); ++i) {
    outgoing[world.relations[i].subject].push_back(i);
  }
  Chain cur;
  std::vector<std::string> visited;
  std::function<void(const std::string&)> extend = [&](const std::string& node) {
    if (static_cast<int>(cur.size()) == hops) {
      out.push_back(cur);
      return;
    }
    const auto it = outgoing.find(node);
    if (it == outgoing.end()) return;
    for (std::size_t t : it->second) {
      const std::string& next = world.relations[t].object;
      if (std::find(visited.begin(), visited.end(), next) != visited.end()) continue;
      cur.push_back(t);
      visited.push_back(next);
      extend(next);
      visited.pop_back();
      cur.pop_back();
    }
  };
  for (const std::string& e : world.entities) {
    visited = {e};
    extend(e);
  }
  return out;
}

std::string question_text(const SyntheticWorld& world, const Chain& chain) {
  std::string text = "what is";
  for (auto it = chain.rbegin(); it != chain.rend(); ++it) {
    text += " the " + world.relations[*it].relation + " of";
  }
  text += " " + world.relations[chain.front()].subject + " ?";
  return text;
}

bool chain_is_answerable(const SyntheticWorld& world, const SearchIndex& index,
                         const Chain& chain) {
  for (std::size_t t : chain) {
    const Triple& tr = world.relations[t];
    const auto hits = index.rank(tr.subject + " " + tr.relation, kDefaultTopK);
    if (hits.empty() || hits.front().index != t) return false;
    if (hits.size() > 1 && hits[1].score == hits[0].score) return false;
  }
  if (chain.size() >= 2) {
    const std::string& gold = world.relations[chain.back()].object;
    for (const Document& d : index.search(question_text(world, chain), kDefaultTopK)) {
      const std::vector<std::string> words = split_words(d.body);
      if (std::find(words.begin(), words.end(), gold) != words.end()) return false;
    }
  }
  return true;
}

std::vector<Chain> answerable_chains(const SyntheticWorld& world, int hops) {
  const SearchIndex index(world);
  std::vector<Chain> out;
  for (Chain& c : enumerate_chains(world, hops)) {
    if (chain_is_answerable(world, index, c)) out.push_back(std::move(c));
  }
  return out;
}

Question generate_question(const SyntheticWorld& world, int hops, std::uint64_t seed) {
  return generate_questions(world, hops, 1, seed).front();
}

std::vector<Question> generate_questions(const SyntheticWorld& world, int hops,
                                         std::size_t count, std::uint64_t seed,
                                         std::size_t first_id) {
  if (hops < 1) throw ConfigError("question hops must be >= 1");
  std::vector<Chain> chains = answerable_chains(world, hops);
  if (chains.size() < count) {
    throw ConfigError("world has " + std::to_string(chains.size()) + " answerable " +
                      std::to_string(hops) + "-hop chains, " + std::to_string(count) +
                      " requested");
  }
  Rng rng(derive_seed(seed, {0x51, static_cast<std::uint64_t>(hops)}));
  rng.shuffle(std::span<Chain>(chains));
  std::vector<Question> out;
  for (std::size_t i = 0; i < count; ++i) {
    Question q;
    q.id = first_id + i;
    q.prompt_text = question_text(world, chains[i]);
    q.gold_answer = world.relations[chains[i].back()].object;
    q.hop_count = hops;
    q.world_seed = world.seed;
    out.push_back(std::move(q));
  }
  return out;
}

std::string oracle_solve(const SyntheticWorld& world, const Question& question) {
  const ParsedQuestion pq = parse_question(question.prompt_text);
  const SearchIndex index(world);
  std::string out;
  std::string subject = pq.head;
  for (const std::string& rel : pq.relations) {
    const std::string query = subject + " " + rel;
    const std::vector<Document> docs = index.search(query, kDefaultTopK);
    out += "<think> find the " + rel + " of " + subject + " </think> ";
    out += "<search> " + query + " </search> ";
    out += "<information> " + render_search_results(docs) + " </information> ";
    const std::string prefix = subject + " " + rel + " ";
    const auto hit = std::find_if(docs.begin(), docs.end(), [&](const Document& d) {
      return d.body.rfind(prefix, 0) == 0;
    });
    if (hit == docs.end()) {
      throw ContractError("oracle cannot resolve '" + query + "' for: " + question.prompt_text);
    }
    subject = hit->body.substr(prefix.size());
  }
  if (subject != question.gold_answer) {
    throw ContractError("oracle answer '" + subject + "' differs from gold '" +
                        question.gold_answer + "'");
  }
  out += "<think> the answer is " + subject + " </think> ";
  out += "<answer> " + subject + " </answer>";
  return out;
}

}  // namespace icrl
