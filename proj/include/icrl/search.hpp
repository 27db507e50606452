#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "icrl/world.hpp"

namespace icrl {

inline constexpr std::size_t kDefaultTopK = 3;

// Observation text injected when a search returns nothing.
inline constexpr std::string_view kNoResultsSentinel = "no results";

struct ScoredDocument {
  std::size_t index = 0;
  double score = 0.0;
};

// TF-IDF over lowercased whitespace tokens of "title body". idf is
// ln(1 + N / df) so every matching term counts. Query terms are deduplicated.
class SearchIndex {
 public:
  explicit SearchIndex(const SyntheticWorld& world);

  // Documents with positive score, best first, ties to the lower index.
  // An empty or all-unknown query yields no results.
  std::vector<ScoredDocument> rank(std::string_view query, std::size_t k = kDefaultTopK) const;
  std::vector<Document> search(std::string_view query, std::size_t k = kDefaultTopK) const;

  double idf(const std::string& term) const;
  std::size_t size() const { return docs_.size(); }

 private:
  const SyntheticWorld* world_;
  std::vector<std::unordered_map<std::string, int>> docs_;
  std::unordered_map<std::string, int> df_;
};

std::vector<std::string> lowercase_terms(std::string_view text);

// One-shot search; builds a throwaway index.
std::vector<Document> search(const SyntheticWorld& world, std::string_view query,
                             std::size_t k = kDefaultTopK);

// Raw tool observation for a result list: document bodies joined by spaces, or
// the sentinel when empty.
std::string render_search_results(const std::vector<Document>& docs);

}  // namespace icrl
