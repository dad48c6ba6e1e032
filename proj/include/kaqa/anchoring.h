#ifndef KAQA_ANCHORING_H_
#define KAQA_ANCHORING_H_

#include <cstddef>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "kaqa/kg.h"
#include "kaqa/text.h"

namespace kaqa {

class NtdModel;

// An entity located in a text. Token indices are [first_token, end_token);
// start/end are code-point offsets of the covered text.
struct EntityMention {
  EntityId entity = 0;  // normalized
  std::size_t first_token = 0;
  std::size_t end_token = 0;
  std::size_t start = 0;
  std::size_t end = 0;
  std::string surface;

  bool operator==(const EntityMention&) const = default;
};

struct TripleCandidate {
  EntityMention head;
  EntityMention tail;
  RelationKind relation = RelationKind::kHasOperation;
  double rb_score = 0.0;
  double ntd_score = 0.0;
  bool kr_pass = true;
  double final_score = 0.0;

  bool operator==(const TripleCandidate&) const = default;
};

// Knowledge anchors of one text, both lists in position order.
struct AnchorSet {
  std::vector<EntityMention> entities;
  std::vector<TripleCandidate> triples;

  bool operator==(const AnchorSet&) const = default;
};

// Weights of the rule-based scorer's logistic model.
struct RbWeights {
  double bias = 0.0;
  double distance_le2 = 0.0;
  double distance_le5 = 0.0;
  double distance_gt5 = 0.0;
  double has_operation = 0.0;
  double component_of = 0.0;
  double head_precedes_tail = 0.0;
  double negation_adjacent_tail = 0.0;
  double mention_length = 0.0;
};

struct AnchorConfig {
  TokenizerMode tokenizer = TokenizerMode::kWhitespace;
  double rb_weight = 0.3;
  double ntd_weight = 0.7;
  double threshold = 0.5;
  RbWeights rb;
  std::vector<std::string> negation_tokens;
};

// Reads the anchoring JSON config (tokenizer, ensemble weights, threshold,
// rule-based weights, negation lexicon).
AnchorConfig LoadAnchorConfig(const std::filesystem::path& path);

// Forward maximum matching over tokens: at each position the longest token
// span whose joined surface is a KG alias wins; matched spans are consumed.
std::vector<EntityMention> ExtractEntitiesFmm(const std::vector<TokenSpan>& tokens,
                                              const KnowledgeGraph& kg,
                                              std::string_view text = {},
                                              TokenizerMode mode = TokenizerMode::kWhitespace);

// One candidate per ordered mention pair and relation whose normalized triple
// is in the KG. synonym and hypernym_hyponym are never candidates.
std::vector<TripleCandidate> GenerateTripleCandidates(
    const std::vector<EntityMention>& mentions, const KnowledgeGraph& kg);

// Token gap between two mentions; adjacent mentions are at distance 1.
std::size_t MentionDistance(const EntityMention& a, const EntityMention& b);

double ScoreRuleBased(const TripleCandidate& cand,
                      const std::vector<TokenSpan>& tokens,
                      const AnchorConfig& config);

// Component-of reasoning: among candidates with the same relation and tail
// mention, a candidate whose head is a component_of ancestor of another
// candidate's head fails. Only kr_pass flags change.
std::vector<TripleCandidate> FilterKnowledgeReasoning(
    std::vector<TripleCandidate> cands, const KnowledgeGraph& kg);

// rb_weight * rb + ntd_weight * ntd for candidates that pass KR, else 0.
// Without a neural model the rule-based score stands alone.
double CombineScores(const TripleCandidate& cand, const AnchorConfig& config,
                     bool use_ntd = true);

// Signed, bucketed token offset: 0 inside the span, else one of
// +-1, +-2, +-3 (3-5), +-6 (6 and beyond).
int PositionBucket(std::size_t token, const EntityMention& mention);

struct NtdFeatureBag {
  std::vector<std::string> tokens;
  std::string target;  // "head|relation|tail" over normalized ids
  std::string target_relation;
  std::vector<std::pair<int, int>> positions;  // (head bucket, tail bucket)
  std::vector<std::pair<EntityId, EntityId>> conflict_entities;
  std::vector<std::string> conflict_triples;
};

std::string TripleKey(EntityId head, RelationKind relation, EntityId tail);

NtdFeatureBag NtdFeatures(const TripleCandidate& cand,
                          const std::vector<TokenSpan>& tokens,
                          const std::vector<TripleCandidate>& all_cands);

// Flattens a bag into the hashed feature strings consumed by the NTD model.
std::vector<std::string> NtdFeatureStrings(const NtdFeatureBag& bag);

// Every intermediate stage of the anchoring pipeline.
struct AnchorTrace {
  std::vector<TokenSpan> tokens;
  std::vector<EntityMention> mentions;
  std::vector<TripleCandidate> candidates;  // scored, KR-flagged
  AnchorSet anchors;
};

// tokenize -> FMM -> candidates -> KR -> RB (+ NTD) -> threshold.
// With `ntd == nullptr` the neural score is dropped and the final score is
// the rule-based score gated by KR.
AnchorTrace AnchorDetailed(std::string_view text, const KnowledgeGraph& kg,
                           const NtdModel* ntd, const AnchorConfig& config);

AnchorSet Anchor(std::string_view text, const KnowledgeGraph& kg,
                 const NtdModel* ntd, const AnchorConfig& config);

}  // namespace kaqa

#endif  // KAQA_ANCHORING_H_
