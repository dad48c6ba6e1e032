#include "kaqa/kg.h"

#include <algorithm>
#include <deque>
#include <fstream>
#include <numeric>

#include "json.hpp"

namespace kaqa {
namespace {

using json = nlohmann::json;

class UnionFind {
 public:
  EntityId Find(EntityId x) {
    auto it = parent_.find(x);
    if (it == parent_.end()) {
      parent_[x] = x;
      return x;
    }
    if (it->second == x) return x;
    EntityId root = Find(it->second);
    parent_[x] = root;
    return root;
  }

  // Union by smallest id so every root is the minimum of its set.
  void Union(EntityId a, EntityId b) {
    EntityId ra = Find(a);
    EntityId rb = Find(b);
    if (ra == rb) return;
    if (ra < rb) {
      parent_[rb] = ra;
    } else {
      parent_[ra] = rb;
    }
  }

 private:
  std::map<EntityId, EntityId> parent_;
};

std::size_t LineOf(const std::vector<std::size_t>& lines, std::size_t index) {
  return index < lines.size() ? lines[index] : index + 1;
}

std::size_t CountWords(const std::string& alias) {
  return Tokenize(alias, TokenizerMode::kWhitespace).size();
}

std::size_t CountChars(const std::string& alias) {
  return Tokenize(alias, TokenizerMode::kChar).size();
}

void RejectUnknownFields(const json& obj, std::initializer_list<const char*> allowed,
                         const std::string& file, std::size_t line) {
  for (const auto& [key, value] : obj.items()) {
    bool known = false;
    for (const char* a : allowed) {
      if (key == a) known = true;
    }
    if (!known) throw KgLoadError(file, line, "unknown field '" + key + "'");
  }
}

const json& Require(const json& obj, const char* field, const std::string& file,
                    std::size_t line) {
  auto it = obj.find(field);
  if (it == obj.end()) {
    throw KgLoadError(file, line, std::string("missing field '") + field + "'");
  }
  return *it;
}

template <typename Fn>
void ForEachJsonLine(const std::filesystem::path& path, Fn&& fn) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    json obj;
    try {
      obj = json::parse(line);
    } catch (const json::parse_error& e) {
      throw KgLoadError(path.string(), lineno,
                        std::string("invalid JSON: ") + e.what());
    }
    if (!obj.is_object()) {
      throw KgLoadError(path.string(), lineno, "expected a JSON object");
    }
    fn(obj, lineno);
  }
}

}  // namespace

KgLoadError::KgLoadError(const std::string& file, std::size_t line,
                         const std::string& message)
    : DataError(file + ":" + std::to_string(line) + ": " + message),
      line_(line) {}

std::string_view RelationName(RelationKind r) {
  switch (r) {
    case RelationKind::kHasOperation:
      return "has_operation";
    case RelationKind::kComponentOf:
      return "component_of";
    case RelationKind::kSynonym:
      return "synonym";
    case RelationKind::kHypernymHyponym:
      return "hypernym_hyponym";
  }
  return "unknown";
}

std::optional<RelationKind> ParseRelation(std::string_view name) {
  for (RelationKind r : kAllRelations) {
    if (RelationName(r) == name) return r;
  }
  return std::nullopt;
}

KnowledgeGraph KnowledgeGraph::Build(std::vector<Entity> entities,
                                     std::vector<Triple> triples,
                                     const std::string& entities_source,
                                     const std::string& triples_source,
                                     std::vector<std::size_t> entity_lines,
                                     std::vector<std::size_t> triple_lines) {
  KnowledgeGraph kg;
  for (std::size_t i = 0; i < entities.size(); ++i) {
    Entity& e = entities[i];
    const std::size_t line = LineOf(entity_lines, i);
    if (e.canonical_name.empty()) {
      throw KgLoadError(entities_source, line,
                        "entity " + std::to_string(e.id) + " has an empty name");
    }
    if (kg.entities_.contains(e.id)) {
      throw KgLoadError(entities_source, line,
                        "duplicate entity id " + std::to_string(e.id));
    }
    if (std::find(e.aliases.begin(), e.aliases.end(), e.canonical_name) ==
        e.aliases.end()) {
      e.aliases.insert(e.aliases.begin(), e.canonical_name);
    }
    for (const std::string& alias : e.aliases) {
      if (alias.empty()) {
        throw KgLoadError(entities_source, line,
                          "entity " + std::to_string(e.id) + " has an empty alias");
      }
      const std::string key = CaseFold(alias);
      auto [it, inserted] = kg.alias_index_.emplace(key, e.id);
      if (!inserted && it->second != e.id) {
        throw KgLoadError(entities_source, line,
                          "alias '" + alias + "' maps to entities " +
                              std::to_string(it->second) + " and " +
                              std::to_string(e.id));
      }
      kg.max_alias_words_ = std::max(kg.max_alias_words_, CountWords(alias));
      kg.max_alias_chars_ = std::max(kg.max_alias_chars_, CountChars(alias));
    }
    kg.entities_.emplace(e.id, std::move(e));
  }

  std::set<std::tuple<EntityId, RelationKind, EntityId>> seen;
  UnionFind uf;
  for (const auto& [id, e] : kg.entities_) uf.Find(id);
  for (std::size_t i = 0; i < triples.size(); ++i) {
    const Triple& t = triples[i];
    const std::size_t line = LineOf(triple_lines, i);
    for (EntityId id : {t.head, t.tail}) {
      if (!kg.entities_.contains(id)) {
        throw KgLoadError(triples_source, line,
                          "unknown entity " + std::to_string(id));
      }
    }
    if (!(t.confidence >= 0.0 && t.confidence <= 1.0)) {
      throw KgLoadError(triples_source, line, "confidence outside [0, 1]");
    }
    if (!seen.emplace(t.head, t.relation, t.tail).second) {
      throw KgLoadError(triples_source, line,
                        "duplicate triple (" + std::to_string(t.head) + ", " +
                            std::string(RelationName(t.relation)) + ", " +
                            std::to_string(t.tail) + ")");
    }
    if (t.relation == RelationKind::kSynonym) uf.Union(t.head, t.tail);
  }
  for (const auto& [id, e] : kg.entities_) kg.synonym_rep_[id] = uf.Find(id);

  // component_of edges are added in file order so the edge that closes a
  // cycle is the one reported.
  for (std::size_t i = 0; i < triples.size(); ++i) {
    const Triple& t = triples[i];
    if (t.relation != RelationKind::kComponentOf) continue;
    const EntityId from = kg.synonym_rep_[t.head];
    const EntityId to = kg.synonym_rep_[t.tail];
    bool cycle = from == to;
    if (!cycle) {
      std::set<EntityId> visited;
      std::deque<EntityId> queue{to};
      while (!queue.empty() && !cycle) {
        EntityId cur = queue.front();
        queue.pop_front();
        if (cur == from) {
          cycle = true;
          break;
        }
        if (!visited.insert(cur).second) continue;
        auto it = kg.component_adjacency_.find(cur);
        if (it == kg.component_adjacency_.end()) continue;
        for (EntityId next : it->second) queue.push_back(next);
      }
    }
    if (cycle) {
      throw KgLoadError(triples_source, LineOf(triple_lines, i),
                        "component_of cycle through entities " +
                            std::to_string(t.head) + " and " +
                            std::to_string(t.tail));
    }
    kg.component_adjacency_[from].insert(to);
  }

  for (const Triple& t : triples) {
    kg.normalized_triples_.emplace(kg.synonym_rep_[t.head], t.relation,
                                   kg.synonym_rep_[t.tail]);
  }
  kg.triples_ = std::move(triples);
  return kg;
}

const Entity& KnowledgeGraph::entity(EntityId id) const {
  auto it = entities_.find(id);
  if (it == entities_.end()) {
    throw DataError("unknown entity " + std::to_string(id));
  }
  return it->second;
}

std::optional<EntityId> KnowledgeGraph::ResolveAlias(std::string_view surface) const {
  auto it = alias_index_.find(CaseFold(surface));
  if (it == alias_index_.end()) return std::nullopt;
  return it->second;
}

EntityId KnowledgeGraph::Normalize(EntityId id) const {
  auto it = synonym_rep_.find(id);
  if (it == synonym_rep_.end()) {
    throw DataError("unknown entity " + std::to_string(id));
  }
  return it->second;
}

std::set<EntityId> KnowledgeGraph::ComponentAncestors(EntityId id) const {
  const EntityId start = Normalize(id);
  std::set<EntityId> out;
  std::deque<EntityId> queue{start};
  while (!queue.empty()) {
    EntityId cur = queue.front();
    queue.pop_front();
    auto it = component_adjacency_.find(cur);
    if (it == component_adjacency_.end()) continue;
    for (EntityId next : it->second) {
      if (next != start && out.insert(next).second) queue.push_back(next);
    }
  }
  return out;
}

bool KnowledgeGraph::HasNormalizedTriple(EntityId head, RelationKind relation,
                                         EntityId tail) const {
  return normalized_triples_.contains({Normalize(head), relation, Normalize(tail)});
}

std::size_t KnowledgeGraph::NormalizedEntityCount() const {
  std::set<EntityId> reps;
  for (const auto& [id, rep] : synonym_rep_) reps.insert(rep);
  return reps.size();
}

std::size_t KnowledgeGraph::MaxAliasTokens(TokenizerMode mode) const {
  return mode == TokenizerMode::kChar ? max_alias_chars_ : max_alias_words_;
}

bool operator==(const KnowledgeGraph& a, const KnowledgeGraph& b) {
  return a.entities() == b.entities() && a.triples() == b.triples();
}

KnowledgeGraph LoadKg(const std::filesystem::path& entities_path,
                      const std::filesystem::path& triples_path) {
  const std::string efile = entities_path.string();
  const std::string tfile = triples_path.string();
  std::vector<Entity> entities;
  std::vector<std::size_t> entity_lines;
  ForEachJsonLine(entities_path, [&](const json& obj, std::size_t line) {
    RejectUnknownFields(obj, {"id", "name", "aliases", "type"}, efile, line);
    Entity e;
    try {
      e.id = Require(obj, "id", efile, line).get<EntityId>();
      e.canonical_name = Require(obj, "name", efile, line).get<std::string>();
      if (obj.contains("aliases")) {
        e.aliases = obj.at("aliases").get<std::vector<std::string>>();
      }
      if (obj.contains("type")) e.type = obj.at("type").get<std::string>();
    } catch (const json::type_error& err) {
      throw KgLoadError(efile, line, std::string("wrong field type: ") + err.what());
    }
    entities.push_back(std::move(e));
    entity_lines.push_back(line);
  });

  std::vector<Triple> triples;
  std::vector<std::size_t> triple_lines;
  ForEachJsonLine(triples_path, [&](const json& obj, std::size_t line) {
    RejectUnknownFields(obj, {"head", "relation", "tail", "confidence"}, tfile,
                        line);
    Triple t;
    try {
      t.head = Require(obj, "head", tfile, line).get<EntityId>();
      t.tail = Require(obj, "tail", tfile, line).get<EntityId>();
      const auto rel =
          Require(obj, "relation", tfile, line).get<std::string>();
      auto parsed = ParseRelation(rel);
      if (!parsed) throw KgLoadError(tfile, line, "unknown relation '" + rel + "'");
      t.relation = *parsed;
      if (obj.contains("confidence")) t.confidence = obj.at("confidence").get<double>();
    } catch (const json::type_error& err) {
      throw KgLoadError(tfile, line, std::string("wrong field type: ") + err.what());
    }
    triples.push_back(t);
    triple_lines.push_back(line);
  });

  return KnowledgeGraph::Build(std::move(entities), std::move(triples), efile,
                               tfile, std::move(entity_lines),
                               std::move(triple_lines));
}

void SaveKg(const KnowledgeGraph& kg, const std::filesystem::path& entities_path,
            const std::filesystem::path& triples_path) {
  std::ofstream eout(entities_path);
  if (!eout) throw DataError("cannot write " + entities_path.string());
  for (const auto& [id, e] : kg.entities()) {
    json obj = {{"id", e.id},
                {"name", e.canonical_name},
                {"aliases", e.aliases},
                {"type", e.type}};
    eout << obj.dump() << '\n';
  }
  std::ofstream tout(triples_path);
  if (!tout) throw DataError("cannot write " + triples_path.string());
  for (const Triple& t : kg.triples()) {
    json obj = {{"head", t.head},
                {"relation", std::string(RelationName(t.relation))},
                {"tail", t.tail},
                {"confidence", t.confidence}};
    tout << obj.dump() << '\n';
  }
}

KgStats ComputeStats(const KnowledgeGraph& kg) {
  KgStats stats;
  stats.entities = kg.entities().size();
  stats.normalized_entities = kg.NormalizedEntityCount();
  stats.triples = kg.triples().size();
  for (RelationKind r : kAllRelations) stats.per_relation[std::string(RelationName(r))] = 0;
  for (const Triple& t : kg.triples()) ++stats.per_relation[std::string(RelationName(t.relation))];
  return stats;
}

}  // namespace kaqa
