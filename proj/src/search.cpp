#include "icrl/search.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <set>
#include <stdexcept>

namespace icrl {

std::vector<std::string> lowercase_terms(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : text) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      if (!cur.empty()) out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

SearchIndex::SearchIndex(const SyntheticWorld& world) : world_(&world) {
  docs_.reserve(world.corpus.size());
  for (const Document& d : world.corpus) {
    std::unordered_map<std::string, int> tf;
    for (std::string& t : lowercase_terms(d.title + " " + d.body)) ++tf[std::move(t)];
    for (const auto& [term, n] : tf) ++df_[term];
    docs_.push_back(std::move(tf));
  }
}

double SearchIndex::idf(const std::string& term) const {
  const auto it = df_.find(term);
  if (it == df_.end()) return 0.0;
  return std::log(1.0 + static_cast<double>(docs_.size()) / static_cast<double>(it->second));
}

std::vector<ScoredDocument> SearchIndex::rank(std::string_view query, std::size_t k) const {
  if (k == 0) throw std::invalid_argument("search k must be >= 1");
  // Sorted distinct terms fix the summation order.
  const std::vector<std::string> raw = lowercase_terms(query);
  const std::set<std::string> terms(raw.begin(), raw.end());
  std::vector<std::pair<std::string, double>> weighted;
  for (const std::string& t : terms) {
    if (df_.contains(t)) weighted.emplace_back(t, idf(t));
  }
  std::vector<ScoredDocument> hits;
  if (weighted.empty()) return hits;
  for (std::size_t i = 0; i < docs_.size(); ++i) {
    double score = 0.0;
    for (const auto& [term, w] : weighted) {
      const auto it = docs_[i].find(term);
      if (it != docs_[i].end()) score += it->second * w;
    }
    if (score > 0.0) hits.push_back({i, score});
  }
  std::stable_sort(hits.begin(), hits.end(), [](const ScoredDocument& a, const ScoredDocument& b) {
    return a.score > b.score;
  });
  if (hits.size() > k) hits.resize(k);
  return hits;
}

std::vector<Document> SearchIndex::search(std::string_view query, std::size_t k) const {
  std::vector<Document> out;
  for (const ScoredDocument& h : rank(query, k)) out.push_back(world_->corpus[h.index]);
  return out;
}

std::vector<Document> search(const SyntheticWorld& world, std::string_view query, std::size_t k) {
  return SearchIndex(world).search(query, k);
}

std::string render_search_results(const std::vector<Document>& docs) {
  if (docs.empty()) return std::string(kNoResultsSentinel);
  std::string out;
  for (const Document& d : docs) {
    if (!out.empty()) out += ' ';
    out += d.body;
  }
  return out;
}

}  // namespace icrl
