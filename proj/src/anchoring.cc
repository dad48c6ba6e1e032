#include "kaqa/anchoring.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#include "json.hpp"
#include "kaqa/ntd.h"

namespace kaqa {
namespace {

using json = nlohmann::json;

double Logistic(double z) { return 1.0 / (1.0 + std::exp(-z)); }

int Bucket(std::size_t d) {
  if (d <= 2) return static_cast<int>(d);
  if (d <= 5) return 3;
  return 6;
}

}  // namespace

AnchorConfig LoadAnchorConfig(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw DataError(path.string() + ": " + e.what());
  }
  AnchorConfig c;
  std::vector<std::string> problems;
  for (const auto& [key, value] : j.items()) {
    if (key != "tokenizer" && key != "rb_weight" && key != "ntd_weight" &&
        key != "threshold" && key != "rule_based" && key != "negation_tokens") {
      problems.push_back("unknown field '" + key + "'");
    }
  }
  try {
    if (j.contains("tokenizer")) {
      c.tokenizer = ParseTokenizerMode(j["tokenizer"].get<std::string>());
    }
    c.rb_weight = j.value("rb_weight", c.rb_weight);
    c.ntd_weight = j.value("ntd_weight", c.ntd_weight);
    c.threshold = j.value("threshold", c.threshold);
    if (c.threshold < 0.0 || c.threshold > 1.0) {
      problems.push_back("threshold must lie in [0, 1]");
    }
    if (j.contains("negation_tokens")) {
      for (const auto& t : j["negation_tokens"]) {
        c.negation_tokens.push_back(CaseFold(t.get<std::string>()));
      }
    }
    if (j.contains("rule_based")) {
      const json& rb = j["rule_based"];
      const std::pair<const char*, double*> fields[] = {
          {"bias", &c.rb.bias},
          {"distance_le2", &c.rb.distance_le2},
          {"distance_le5", &c.rb.distance_le5},
          {"distance_gt5", &c.rb.distance_gt5},
          {"has_operation", &c.rb.has_operation},
          {"component_of", &c.rb.component_of},
          {"head_precedes_tail", &c.rb.head_precedes_tail},
          {"negation_adjacent_tail", &c.rb.negation_adjacent_tail},
          {"mention_length", &c.rb.mention_length},
      };
      for (const auto& [key, value] : rb.items()) {
        bool known = false;
        for (const auto& [name, target] : fields) {
          if (key == name) {
            *target = value.get<double>();
            known = true;
          }
        }
        if (!known) problems.push_back("unknown field 'rule_based." + key + "'");
      }
    }
  } catch (const json::exception& e) {
    problems.push_back(e.what());
  } catch (const UsageError& e) {
    problems.push_back(e.what());
  }
  if (!problems.empty()) {
    std::string msg = path.string() + ": invalid anchoring config";
    for (const auto& p : problems) msg += "\n  " + p;
    throw DataError(msg);
  }
  return c;
}

std::vector<EntityMention> ExtractEntitiesFmm(const std::vector<TokenSpan>& tokens,
                                              const KnowledgeGraph& kg,
                                              std::string_view text,
                                              TokenizerMode mode) {
  std::vector<EntityMention> mentions;
  const std::size_t window = std::max<std::size_t>(1, kg.MaxAliasTokens(mode));
  std::size_t i = 0;
  while (i < tokens.size()) {
    const std::size_t longest = std::min(window, tokens.size() - i);
    bool matched = false;
    for (std::size_t len = longest; len >= 1; --len) {
      auto id = kg.ResolveAlias(JoinTokens(tokens, i, i + len, mode));
      if (!id) continue;
      EntityMention m;
      m.entity = kg.Normalize(*id);
      m.first_token = i;
      m.end_token = i + len;
      m.start = tokens[i].start;
      m.end = tokens[i + len - 1].end;
      m.surface = text.empty() ? JoinTokens(tokens, i, i + len, mode)
                               : SubstringByCodePoints(text, m.start, m.end);
      mentions.push_back(std::move(m));
      i += len;
      matched = true;
      break;
    }
    if (!matched) ++i;
  }
  return mentions;
}

std::vector<TripleCandidate> GenerateTripleCandidates(
    const std::vector<EntityMention>& mentions, const KnowledgeGraph& kg) {
  std::vector<TripleCandidate> out;
  for (std::size_t i = 0; i < mentions.size(); ++i) {
    for (std::size_t j = 0; j < mentions.size(); ++j) {
      if (i == j) continue;
      for (RelationKind r : {RelationKind::kHasOperation, RelationKind::kComponentOf}) {
        if (!kg.HasNormalizedTriple(mentions[i].entity, r, mentions[j].entity)) {
          continue;
        }
        TripleCandidate c;
        c.head = mentions[i];
        c.tail = mentions[j];
        c.relation = r;
        out.push_back(std::move(c));
      }
    }
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const TripleCandidate& a, const TripleCandidate& b) {
                     return std::pair(a.head.start, a.tail.start) <
                            std::pair(b.head.start, b.tail.start);
                   });
  return out;
}

std::size_t MentionDistance(const EntityMention& a, const EntityMention& b) {
  if (a.end_token <= b.first_token) return b.first_token - a.end_token + 1;
  if (b.end_token <= a.first_token) return a.first_token - b.end_token + 1;
  return 0;
}

double ScoreRuleBased(const TripleCandidate& cand,
                      const std::vector<TokenSpan>& tokens,
                      const AnchorConfig& config) {
  const RbWeights& w = config.rb;
  double z = w.bias;
  const std::size_t d = MentionDistance(cand.head, cand.tail);
  if (d <= 2) {
    z += w.distance_le2;
  } else if (d <= 5) {
    z += w.distance_le5;
  } else {
    z += w.distance_gt5;
  }
  if (cand.relation == RelationKind::kHasOperation) z += w.has_operation;
  if (cand.relation == RelationKind::kComponentOf) z += w.component_of;
  if (cand.head.first_token < cand.tail.first_token) z += w.head_precedes_tail;

  auto is_negation = [&](std::size_t idx) {
    if (idx >= tokens.size()) return false;
    const std::string folded = CaseFold(tokens[idx].text);
    return std::find(config.negation_tokens.begin(), config.negation_tokens.end(),
                     folded) != config.negation_tokens.end();
  };
  const bool negated = (cand.tail.first_token > 0 && is_negation(cand.tail.first_token - 1)) ||
                       is_negation(cand.tail.end_token);
  if (negated) z += w.negation_adjacent_tail;

  const double length = static_cast<double>(
      (cand.head.end_token - cand.head.first_token) +
      (cand.tail.end_token - cand.tail.first_token));
  z += w.mention_length * length;
  return Logistic(z);
}

std::vector<TripleCandidate> FilterKnowledgeReasoning(
    std::vector<TripleCandidate> cands, const KnowledgeGraph& kg) {
  std::vector<bool> fail(cands.size(), false);
  for (std::size_t x = 0; x < cands.size(); ++x) {
    const std::set<EntityId> ancestors = kg.ComponentAncestors(cands[x].head.entity);
    if (ancestors.empty()) continue;
    for (std::size_t y = 0; y < cands.size(); ++y) {
      if (x == y) continue;
      const TripleCandidate& cx = cands[x];
      const TripleCandidate& cy = cands[y];
      if (cx.relation != cy.relation) continue;
      if (cx.tail.first_token != cy.tail.first_token) continue;
      if (cx.head.first_token == cy.head.first_token) continue;
      if (ancestors.contains(kg.Normalize(cy.head.entity))) fail[y] = true;
    }
  }
  for (std::size_t i = 0; i < cands.size(); ++i) {
    if (fail[i]) cands[i].kr_pass = false;
  }
  return cands;
}

double CombineScores(const TripleCandidate& cand, const AnchorConfig& config,
                     bool use_ntd) {
  if (!cand.kr_pass) return 0.0;
  if (!use_ntd) return cand.rb_score;
  return config.rb_weight * cand.rb_score + config.ntd_weight * cand.ntd_score;
}

int PositionBucket(std::size_t token, const EntityMention& mention) {
  if (token >= mention.first_token && token < mention.end_token) return 0;
  if (token < mention.first_token) return -Bucket(mention.first_token - token);
  return Bucket(token - mention.end_token + 1);
}

std::string TripleKey(EntityId head, RelationKind relation, EntityId tail) {
  return std::to_string(head) + "|" + std::string(RelationName(relation)) + "|" +
         std::to_string(tail);
}

NtdFeatureBag NtdFeatures(const TripleCandidate& cand,
                          const std::vector<TokenSpan>& tokens,
                          const std::vector<TripleCandidate>& all_cands) {
  NtdFeatureBag bag;
  bag.target = TripleKey(cand.head.entity, cand.relation, cand.tail.entity);
  bag.target_relation = std::string(RelationName(cand.relation));
  bag.tokens.reserve(tokens.size());
  bag.positions.reserve(tokens.size());
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    bag.tokens.push_back(CaseFold(tokens[i].text));
    bag.positions.emplace_back(PositionBucket(i, cand.head),
                               PositionBucket(i, cand.tail));
  }
  for (const TripleCandidate& other : all_cands) {
    if (other.head == cand.head && other.tail == cand.tail &&
        other.relation == cand.relation) {
      continue;
    }
    if (other.relation == cand.relation && other.tail.entity == cand.tail.entity &&
        other.head.entity != cand.head.entity) {
      bag.conflict_entities.emplace_back(other.head.entity, cand.head.entity);
    }
    const bool shares = other.head.entity == cand.head.entity ||
                        other.head.entity == cand.tail.entity ||
                        other.tail.entity == cand.head.entity ||
                        other.tail.entity == cand.tail.entity;
    if (shares) {
      bag.conflict_triples.push_back(
          TripleKey(other.head.entity, other.relation, other.tail.entity));
    }
  }
  return bag;
}

std::vector<std::string> NtdFeatureStrings(const NtdFeatureBag& bag) {
  std::vector<std::string> out;
  out.reserve(4 * bag.tokens.size() + 2 + bag.conflict_entities.size() +
              bag.conflict_triples.size());
  out.push_back("t=" + bag.target);
  out.push_back("r=" + bag.target_relation);
  for (std::size_t i = 0; i < bag.tokens.size(); ++i) {
    const auto [hb, tb] = bag.positions[i];
    out.push_back("w=" + bag.tokens[i]);
    out.push_back("ph=" + bag.tokens[i] + "@" + std::to_string(hb));
    out.push_back("pt=" + bag.tokens[i] + "@" + std::to_string(tb));
    out.push_back("pp=" + std::to_string(hb) + "," + std::to_string(tb));
  }
  for (const auto& [a, c] : bag.conflict_entities) {
    out.push_back("ce=" + std::to_string(a) + "," + std::to_string(c));
  }
  for (const std::string& key : bag.conflict_triples) out.push_back("ct=" + key);
  return out;
}

AnchorTrace AnchorDetailed(std::string_view text, const KnowledgeGraph& kg,
                           const NtdModel* ntd, const AnchorConfig& config) {
  AnchorTrace trace;
  trace.tokens = Tokenize(text, config.tokenizer);
  trace.mentions = ExtractEntitiesFmm(trace.tokens, kg, text, config.tokenizer);
  trace.candidates = FilterKnowledgeReasoning(
      GenerateTripleCandidates(trace.mentions, kg), kg);
  for (TripleCandidate& c : trace.candidates) {
    c.rb_score = ScoreRuleBased(c, trace.tokens, config);
    if (ntd != nullptr) {
      c.ntd_score = ntd->Score(NtdFeatures(c, trace.tokens, trace.candidates));
    }
  }
  for (TripleCandidate& c : trace.candidates) {
    c.final_score = CombineScores(c, config, ntd != nullptr);
  }
  trace.anchors.entities = trace.mentions;
  for (const TripleCandidate& c : trace.candidates) {
    if (c.final_score >= config.threshold) trace.anchors.triples.push_back(c);
  }
  return trace;
}

AnchorSet Anchor(std::string_view text, const KnowledgeGraph& kg,
                 const NtdModel* ntd, const AnchorConfig& config) {
  return AnchorDetailed(text, kg, ntd, config).anchors;
}

}  // namespace kaqa
