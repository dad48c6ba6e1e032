#include <algorithm>
#include <fstream>
#include <map>
#include <tuple>

#include "json.hpp"
#include "kaqa/anchoring.h"
#include "kaqa/kg.h"

namespace kaqa {
namespace {

using json = nlohmann::json;

bool IsSlot(const std::string& token) {
  return token.size() > 2 && token.front() == '<' && token.back() == '>';
}

// A parsed template: slot names at both ends, literal infix in between.
struct CompiledPattern {
  std::string first_slot;
  std::string second_slot;
  std::vector<std::string> infix;  // case-folded; "*" is a wildcard
  RelationKind relation;
  bool head_first = true;
};

CompiledPattern Compile(const Pattern& p) {
  std::vector<std::string> parts;
  std::size_t pos = 0;
  const std::string& s = p.text;
  while (pos < s.size()) {
    while (pos < s.size() && s[pos] == ' ') ++pos;
    std::size_t end = s.find(' ', pos);
    if (end == std::string::npos) end = s.size();
    if (end > pos) parts.push_back(s.substr(pos, end - pos));
    pos = end;
  }
  if (parts.size() < 2 || !IsSlot(parts.front()) || !IsSlot(parts.back())) {
    throw DataError("pattern '" + p.text + "' must start and end with a <SLOT>");
  }
  CompiledPattern c;
  c.relation = p.relation;
  c.first_slot = parts.front().substr(1, parts.front().size() - 2);
  c.second_slot = parts.back().substr(1, parts.back().size() - 2);
  if (c.first_slot == c.second_slot) {
    throw DataError("pattern '" + p.text + "' repeats slot <" + c.first_slot + ">");
  }
  for (std::size_t i = 1; i + 1 < parts.size(); ++i) {
    if (IsSlot(parts[i])) {
      throw DataError("pattern '" + p.text + "' has more than two slots");
    }
    c.infix.push_back(parts[i] == "*" ? parts[i] : CaseFold(parts[i]));
  }
  const std::string head = p.head_slot.empty() ? c.first_slot : p.head_slot;
  const std::string tail = p.tail_slot.empty() ? c.second_slot : p.tail_slot;
  if (head == c.first_slot && tail == c.second_slot) {
    c.head_first = true;
  } else if (head == c.second_slot && tail == c.first_slot) {
    c.head_first = false;
  } else {
    throw DataError("pattern '" + p.text + "': head/tail slots must name its two slots");
  }
  return c;
}

}  // namespace

std::vector<Pattern> LoadPatterns(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::vector<Pattern> patterns;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      json obj = json::parse(line);
      if (!obj.is_object()) throw KgLoadError(path.string(), lineno, "expected a JSON object");
      for (const auto& [key, value] : obj.items()) {
        if (key != "pattern" && key != "relation" && key != "head" && key != "tail") {
          throw KgLoadError(path.string(), lineno, "unknown field '" + key + "'");
        }
      }
      if (!obj.contains("pattern") || !obj.contains("relation")) {
        throw KgLoadError(path.string(), lineno, "pattern and relation are required");
      }
      Pattern p;
      p.text = obj["pattern"].get<std::string>();
      auto rel = ParseRelation(obj["relation"].get<std::string>());
      if (!rel) {
        throw KgLoadError(path.string(), lineno,
                          "unknown relation '" + obj["relation"].get<std::string>() + "'");
      }
      p.relation = *rel;
      p.head_slot = obj.value("head", "");
      p.tail_slot = obj.value("tail", "");
      Compile(p);
      patterns.push_back(std::move(p));
    } catch (const json::exception& e) {
      throw KgLoadError(path.string(), lineno, e.what());
    } catch (const KgLoadError&) {
      throw;
    } catch (const DataError& e) {
      throw KgLoadError(path.string(), lineno, e.what());
    }
  }
  return patterns;
}

std::vector<BootstrappedTriple> BootstrapTriples(const std::vector<std::string>& corpus,
                                                 const std::vector<Pattern>& patterns,
                                                 const KnowledgeGraph& kg,
                                                 TokenizerMode mode) {
  std::vector<CompiledPattern> compiled;
  for (const Pattern& p : patterns) compiled.push_back(Compile(p));

  std::map<std::tuple<EntityId, EntityId, RelationKind>, std::size_t> counts;
  for (const std::string& line : corpus) {
    const auto tokens = Tokenize(line, mode);
    const auto mentions = ExtractEntitiesFmm(tokens, kg, line, mode);
    for (const CompiledPattern& c : compiled) {
      for (const EntityMention& a : mentions) {
        for (const EntityMention& b : mentions) {
          if (b.first_token != a.end_token + c.infix.size()) continue;
          bool ok = true;
          for (std::size_t k = 0; ok && k < c.infix.size(); ++k) {
            const std::string& lit = c.infix[k];
            ok = lit == "*" || CaseFold(tokens[a.end_token + k].text) == lit;
          }
          if (!ok) continue;
          const EntityId head = c.head_first ? a.entity : b.entity;
          const EntityId tail = c.head_first ? b.entity : a.entity;
          if (head == tail) continue;
          ++counts[{head, tail, c.relation}];
        }
      }
    }
  }

  std::vector<BootstrappedTriple> out;
  for (const auto& [key, count] : counts) {
    const auto& [head, tail, relation] = key;
    BootstrappedTriple bt;
    bt.triple.head = head;
    bt.triple.tail = tail;
    bt.triple.relation = relation;
    bt.count = count;
    out.push_back(bt);
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const BootstrappedTriple& x, const BootstrappedTriple& y) {
                     return x.count > y.count;
                   });
  return out;
}

}  // namespace kaqa
