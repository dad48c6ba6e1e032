#ifndef KAQA_KG_H_
#define KAQA_KG_H_

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <tuple>
#include <unordered_map>
#include <vector>

#include "kaqa/error.h"
#include "kaqa/text.h"

namespace kaqa {

using EntityId = std::int64_t;

enum class RelationKind {
  kHasOperation,
  kComponentOf,
  kSynonym,
  kHypernymHyponym,
};

inline constexpr std::array<RelationKind, 4> kAllRelations = {
    RelationKind::kHasOperation, RelationKind::kComponentOf,
    RelationKind::kSynonym, RelationKind::kHypernymHyponym};

std::string_view RelationName(RelationKind r);
std::optional<RelationKind> ParseRelation(std::string_view name);

struct Entity {
  EntityId id = 0;
  std::string canonical_name;
  std::vector<std::string> aliases;
  std::string type;

  bool operator==(const Entity&) const = default;
};

struct Triple {
  EntityId head = 0;
  RelationKind relation = RelationKind::kHasOperation;
  EntityId tail = 0;
  double confidence = 1.0;

  bool operator==(const Triple&) const = default;
};

// Load failure carrying the file and 1-based line it was detected on.
class KgLoadError : public DataError {
 public:
  KgLoadError(const std::string& file, std::size_t line,
              const std::string& message);
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

// Immutable domain knowledge graph with alias, synonym and component indices.
// Safe to share between threads once built.
class KnowledgeGraph {
 public:
  // Validates and indexes. Every alias list is extended with the canonical
  // name. `entity_lines` / `triple_lines` optionally give source line numbers
  // used in error messages.
  static KnowledgeGraph Build(std::vector<Entity> entities,
                              std::vector<Triple> triples,
                              const std::string& entities_source = "entities",
                              const std::string& triples_source = "triples",
                              std::vector<std::size_t> entity_lines = {},
                              std::vector<std::size_t> triple_lines = {});

  const std::map<EntityId, Entity>& entities() const { return entities_; }
  const std::vector<Triple>& triples() const { return triples_; }

  bool HasEntity(EntityId id) const { return entities_.contains(id); }
  const Entity& entity(EntityId id) const;

  // Exact, case-folded alias lookup.
  std::optional<EntityId> ResolveAlias(std::string_view surface) const;

  // Smallest id in the synonym closure of `id`.
  EntityId Normalize(EntityId id) const;

  // Normalized ids reachable from Normalize(id) over component_of edges,
  // excluding the start entity.
  std::set<EntityId> ComponentAncestors(EntityId id) const;

  // True iff some stored triple normalizes to (Normalize(head), relation,
  // Normalize(tail)).
  bool HasNormalizedTriple(EntityId head, RelationKind relation,
                           EntityId tail) const;

  // Number of distinct synonym representatives.
  std::size_t NormalizedEntityCount() const;

  // Longest alias measured in tokens under `mode`; bounds the FMM window.
  std::size_t MaxAliasTokens(TokenizerMode mode) const;

  const std::unordered_map<std::string, EntityId>& alias_index() const {
    return alias_index_;
  }

 private:
  KnowledgeGraph() = default;

  std::map<EntityId, Entity> entities_;
  std::vector<Triple> triples_;
  std::unordered_map<std::string, EntityId> alias_index_;
  std::map<EntityId, EntityId> synonym_rep_;
  std::map<EntityId, std::set<EntityId>> component_adjacency_;
  std::set<std::tuple<EntityId, RelationKind, EntityId>> normalized_triples_;
  std::size_t max_alias_words_ = 0;
  std::size_t max_alias_chars_ = 0;
};

bool operator==(const KnowledgeGraph& a, const KnowledgeGraph& b);

// Reads entities.jsonl / triples.jsonl. Throws KgLoadError naming the line.
KnowledgeGraph LoadKg(const std::filesystem::path& entities_path,
                      const std::filesystem::path& triples_path);

void SaveKg(const KnowledgeGraph& kg, const std::filesystem::path& entities_path,
            const std::filesystem::path& triples_path);

// Summary counts in the stats JSON layout used by build-kg.
struct KgStats {
  std::size_t entities = 0;
  std::size_t normalized_entities = 0;
  std::size_t triples = 0;
  std::map<std::string, std::size_t> per_relation;
};
KgStats ComputeStats(const KnowledgeGraph& kg);

// Two-slot extraction template such as "<OP> * <OBJ>". The infix is a
// sequence of literal tokens where "*" matches exactly one arbitrary token.
struct Pattern {
  std::string text;
  RelationKind relation = RelationKind::kHasOperation;
  std::string head_slot;  // slot name filled by the head; empty = first slot
  std::string tail_slot;  // slot name filled by the tail; empty = second slot
};

std::vector<Pattern> LoadPatterns(const std::filesystem::path& path);

struct BootstrappedTriple {
  Triple triple;
  std::size_t count = 0;
};

// Pattern-based bootstrapping: counts every pattern instantiation whose two
// slots are KG entity mentions. Sorted by descending count, then
// (head, tail, relation).
std::vector<BootstrappedTriple> BootstrapTriples(
    const std::vector<std::string>& corpus, const std::vector<Pattern>& patterns,
    const KnowledgeGraph& kg, TokenizerMode mode = TokenizerMode::kWhitespace);

}  // namespace kaqa

#endif  // KAQA_KG_H_
