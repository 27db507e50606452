#include "icrl/world.hpp"

#include <algorithm>
#include <array>
#include <fstream>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>
#include <string_view>
#include <unordered_set>

#include "icrl/errors.hpp"
#include "icrl/rng.hpp"

namespace icrl {
namespace {

constexpr std::array<std::string_view, 12> kRelationPool{
    "mother", "mentor",   "rival",  "employer", "founder", "capital",
    "author", "sponsor",  "leader", "teacher",  "partner", "neighbor"};

constexpr std::string_view kConsonants = "bdfgklmnprstvz";
constexpr std::string_view kVowels = "aeiou";

std::string make_name(Rng& rng) {
  std::string name;
  for (int s = 0; s < 3; ++s) {
    name += kConsonants[rng.below(kConsonants.size())];
    name += kVowels[rng.below(kVowels.size())];
  }
  return name;
}

std::size_t label_count(std::size_t n_relations) {
  return std::clamp<std::size_t>(n_relations / 6, 1, kRelationPool.size());
}

}  // namespace

std::vector<std::string> SyntheticWorld::relation_labels() const {
  std::vector<std::string> out;
  std::unordered_set<std::string> seen;
  for (const Triple& t : relations) {
    if (seen.insert(t.relation).second) out.push_back(t.relation);
  }
  return out;
}

Document document_for(const Triple& t) {
  return {t.subject + " " + t.relation, t.subject + " " + t.relation + " " + t.object};
}

SyntheticWorld generate_world(std::uint64_t seed, std::size_t n_entities,
                              std::size_t n_relations) {
  if (n_entities < 2) throw ConfigError("world.n_entities must be >= 2");
  if (n_relations < 1) throw ConfigError("world.n_relations must be >= 1");
  const std::size_t n_labels = label_count(n_relations);
  if (n_relations > n_entities * n_labels) {
    throw ConfigError("world.n_relations exceeds the number of distinct (subject, relation) pairs");
  }

  Rng rng(derive_seed(seed, {0x77}));
  SyntheticWorld w;
  w.seed = seed;

  std::unordered_set<std::string> used;
  while (w.entities.size() < n_entities) {
    std::string name = make_name(rng);
    if (used.insert(name).second) w.entities.push_back(std::move(name));
  }

  std::set<std::pair<std::size_t, std::size_t>> taken;  // (subject, label)
  auto push = [&](std::size_t s, std::size_t l, std::size_t o) {
    taken.insert({s, l});
    w.relations.push_back({w.entities[s], std::string(kRelationPool[l]), w.entities[o]});
  };

  // Seed one two-hop chain so multi-hop questions always exist.
  if (n_entities >= 3 && n_relations >= 2) {
    std::vector<std::size_t> idx(n_entities);
    for (std::size_t i = 0; i < n_entities; ++i) idx[i] = i;
    rng.shuffle(std::span<std::size_t>(idx));
    push(idx[0], rng.below(n_labels), idx[1]);
    push(idx[1], rng.below(n_labels), idx[2]);
  }

  while (w.relations.size() < n_relations) {
    const std::size_t s = rng.below(n_entities);
    const std::size_t l = rng.below(n_labels);
    if (taken.contains({s, l})) continue;
    std::size_t o = rng.below(n_entities - 1);
    if (o >= s) ++o;
    push(s, l, o);
  }

  rng.shuffle(std::span<Triple>(w.relations));
  for (const Triple& t : w.relations) w.corpus.push_back(document_for(t));
  return w;
}

void write_world(std::ostream& os, const SyntheticWorld& world) {
  os << "# seed " << world.seed << '\n';
  os << "# entities";
  for (const std::string& e : world.entities) os << ' ' << e;
  os << '\n';
  for (const Triple& t : world.relations) {
    os << t.subject << '\t' << t.relation << '\t' << t.object << '\n';
  }
}

SyntheticWorld read_world(std::istream& is) {
  SyntheticWorld w;
  std::string line;
  bool have_seed = false;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    if (line.rfind("# seed ", 0) == 0) {
      w.seed = std::stoull(line.substr(7));
      have_seed = true;
      continue;
    }
    if (line.rfind("# entities", 0) == 0) {
      std::istringstream ss(line.substr(10));
      std::string e;
      while (ss >> e) w.entities.push_back(e);
      continue;
    }
    if (line[0] == '#') continue;
    std::array<std::string, 3> parts;
    std::size_t start = 0;
    for (int i = 0; i < 3; ++i) {
      const std::size_t tab = line.find('\t', start);
      if ((i < 2) == (tab == std::string::npos)) {
        throw ConfigError("malformed world line: " + line);
      }
      parts[i] = line.substr(start, i < 2 ? tab - start : std::string::npos);
      start = tab + 1;
    }
    w.relations.push_back({parts[0], parts[1], parts[2]});
  }
  if (!have_seed) throw ConfigError("world file lacks a '# seed' header");
  if (w.entities.empty()) {
    std::unordered_set<std::string> seen;
    for (const Triple& t : w.relations) {
      for (const std::string* e : {&t.subject, &t.object}) {
        if (seen.insert(*e).second) w.entities.push_back(*e);
      }
    }
  }
  for (const Triple& t : w.relations) w.corpus.push_back(document_for(t));
  return w;
}

void save_world(const std::filesystem::path& path, const SyntheticWorld& world) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  write_world(os, world);
  if (!os) throw std::runtime_error("write failed: " + path.string());
}

SyntheticWorld load_world(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open world file " + path.string());
  return read_world(is);
}

}  // namespace icrl
