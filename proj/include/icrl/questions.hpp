#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "icrl/search.hpp"
#include "icrl/world.hpp"

namespace icrl {

struct Question {
  std::size_t id = 0;
  std::string prompt_text;
  std::string gold_answer;
  int hop_count = 1;
  std::uint64_t world_seed = 0;
  bool operator==(const Question&) const = default;
};

// A path of triple indices where each object is the next subject; entities
// along the path are distinct.
using Chain = std::vector<std::size_t>;

// Every simple chain of exactly `hops` triples, in subject-index-major order.
std::vector<Chain> enumerate_chains(const SyntheticWorld& world, int hops);

// "what is the r2 of the r1 of E ?" for the chain E -r1-> X -r2-> Y.
std::string question_text(const SyntheticWorld& world, const Chain& chain);

// A chain is usable when searching "subject relation" ranks that hop's own
// document first at every hop, and (for hops >= 2) the gold answer is absent
// from the top-k results for the raw question text.
bool chain_is_answerable(const SyntheticWorld& world, const SearchIndex& index,
                         const Chain& chain);

std::vector<Chain> answerable_chains(const SyntheticWorld& world, int hops);

// Throws ConfigError when no answerable chain of the requested length exists.
Question generate_question(const SyntheticWorld& world, int hops, std::uint64_t seed);

// Distinct questions (distinct chains), ids first_id, first_id+1, ...
std::vector<Question> generate_questions(const SyntheticWorld& world, int hops,
                                         std::size_t count, std::uint64_t seed,
                                         std::size_t first_id = 0);

// Worked solution: one think/search/information round per hop, then a final
// think and the answer. Throws ContractError when the question cannot be
// solved from the world.
std::string oracle_solve(const SyntheticWorld& world, const Question& question);

}  // namespace icrl
