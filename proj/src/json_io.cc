#include "kaqa/json_io.h"

#include <fstream>

namespace kaqa {

using nlohmann::json;

json AnchorSetToJson(const AnchorSet& anchors) {
  json entities = json::array();
  for (const EntityMention& m : anchors.entities) {
    entities.push_back(
        {{"id", m.entity}, {"surface", m.surface}, {"start", m.start}, {"end", m.end}});
  }
  json triples = json::array();
  for (const TripleCandidate& c : anchors.triples) {
    triples.push_back({{"head", c.head.entity},
                       {"relation", RelationName(c.relation)},
                       {"tail", c.tail.entity},
                       {"score", c.final_score}});
  }
  return {{"entities", std::move(entities)}, {"triples", std::move(triples)}};
}

AnchorSet AnchorSetFromJson(const json& j) {
  AnchorSet a;
  try {
    for (const json& e : j.at("entities")) {
      EntityMention m;
      m.entity = e.at("id").get<EntityId>();
      m.surface = e.at("surface").get<std::string>();
      m.start = e.at("start").get<std::size_t>();
      m.end = e.at("end").get<std::size_t>();
      a.entities.push_back(std::move(m));
    }
    for (const json& t : j.at("triples")) {
      TripleCandidate c;
      c.head.entity = t.at("head").get<EntityId>();
      c.tail.entity = t.at("tail").get<EntityId>();
      auto rel = ParseRelation(t.at("relation").get<std::string>());
      if (!rel) throw DataError("unknown relation in anchor JSON");
      c.relation = *rel;
      c.final_score = t.at("score").get<double>();
      a.triples.push_back(std::move(c));
    }
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed anchor JSON: ") + e.what());
  }
  return a;
}

json ExplainJson(const AnchorTrace& trace, double threshold) {
  json out = AnchorSetToJson(trace.anchors);
  json cands = json::array();
  for (const TripleCandidate& c : trace.candidates) {
    cands.push_back({{"head", c.head.entity},
                     {"head_surface", c.head.surface},
                     {"relation", RelationName(c.relation)},
                     {"tail", c.tail.entity},
                     {"tail_surface", c.tail.surface},
                     {"rb", c.rb_score},
                     {"ntd", c.ntd_score},
                     {"kr_pass", c.kr_pass},
                     {"final", c.final_score},
                     {"accepted", c.final_score >= threshold}});
  }
  out["candidates"] = std::move(cands);
  return out;
}

AnchorCache LoadAnchorCache(const std::filesystem::path& path,
                            const std::string& fingerprint) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open anchor cache " + path.string());
  AnchorCache cache;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      json j = json::parse(line);
      if (lineno == 1) {
        if (j.value("fingerprint", "") != fingerprint) return {};
        continue;
      }
      cache[j.at("text").get<std::string>()] = AnchorSetFromJson(j.at("anchors"));
    } catch (const std::exception& e) {
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return cache;
}

void SaveAnchorCache(const std::filesystem::path& path, const AnchorCache& cache,
                     const std::string& fingerprint) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write anchor cache " + path.string());
  out << json{{"fingerprint", fingerprint}}.dump() << '\n';
  for (const auto& [text, anchors] : cache) {
    out << json{{"text", text}, {"anchors", AnchorSetToJson(anchors)}}.dump() << '\n';
  }
}

}  // namespace kaqa
