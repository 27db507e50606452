#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace icrl {

struct Triple {
  std::string subject;
  std::string relation;
  std::string object;
  bool operator==(const Triple&) const = default;
};

struct Document {
  std::string title;
  std::string body;
  bool operator==(const Document&) const = default;
};

// Synthetic knowledge base. Each triple owns exactly one document: title
// "subject relation", body "subject relation object". (subject, relation)
// pairs are unique, so every lookup has one answer.
struct SyntheticWorld {
  std::uint64_t seed = 0;
  std::vector<std::string> entities;
  std::vector<Triple> relations;
  std::vector<Document> corpus;

  // Distinct relation labels in first-use order.
  std::vector<std::string> relation_labels() const;
  bool operator==(const SyntheticWorld&) const = default;
};

Document document_for(const Triple& t);

// Throws ConfigError when n_entities < 2, n_relations < 1, or the requested
// number of triples cannot have unique (subject, relation) pairs.
SyntheticWorld generate_world(std::uint64_t seed, std::size_t n_entities,
                              std::size_t n_relations);

// Text form: "# seed <n>", "# entities <name> ...", then one
// "subject<TAB>relation<TAB>object" line per triple. Documents are rebuilt on
// load.
void write_world(std::ostream& os, const SyntheticWorld& world);
SyntheticWorld read_world(std::istream& is);
void save_world(const std::filesystem::path& path, const SyntheticWorld& world);
SyntheticWorld load_world(const std::filesystem::path& path);

}  // namespace icrl
