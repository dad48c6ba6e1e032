#ifndef KAQA_MATCHERS_H_
#define KAQA_MATCHERS_H_

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"
#include "kaqa/anchoring.h"
#include "kaqa/checkpoint.h"
#include "kaqa/kg.h"
#include "kaqa/optim.h"

namespace kaqa {

enum class Architecture { kArc1, kMatchPyramid, kIwan };

Architecture ParseArchitecture(std::string_view name);  // throws UsageError
std::string_view ArchitectureName(Architecture a);

enum class Channel { kToken = 0, kEntity = 1, kTriple = 2 };
inline constexpr std::array<Channel, 3> kAllChannels = {
    Channel::kToken, Channel::kEntity, Channel::kTriple};
std::string_view ChannelName(Channel c);
Channel ParseChannel(std::string_view name);  // throws UsageError

struct ChannelSet {
  bool token = true;
  bool entity = true;
  bool triple = true;

  bool Has(Channel c) const;
  std::vector<std::string> Names() const;
  static ChannelSet FromNames(const std::vector<std::string>& names);
  bool operator==(const ChannelSet&) const = default;
};

struct MatcherDims {
  std::size_t embed = 128;
  std::size_t filters = 256;      // ARC-I conv filters; MatchPyramid F1 = F2
  std::size_t lstm_hidden = 64;   // IWAN, per direction
  std::size_t iwan_output = 128;  // IWAN MLP width
  std::size_t fusion_hidden = 128;
  std::size_t max_tokens = 32;
  std::size_t max_entities = 16;
  std::size_t max_triples = 8;

  nlohmann::json ToJson() const;
  bool operator==(const MatcherDims&) const = default;
};

// Defaults per architecture: embedding 256 for IWAN, 128 otherwise.
MatcherDims DefaultDims(Architecture a);
// Overrides `base` with the keys present in `j`; collects problems.
MatcherDims DimsFromJson(const nlohmann::json& j, MatcherDims base,
                         std::vector<std::string>* problems);

// Token vocabulary. Ids 0/1/2 are padding, the null (empty-channel) marker
// and unknown tokens.
class Vocab {
 public:
  static constexpr std::int64_t kPad = 0;
  static constexpr std::int64_t kNull = 1;
  static constexpr std::int64_t kUnknown = 2;

  Vocab();
  // Adds every case-folded token of `texts` in first-seen order.
  static Vocab Build(const std::vector<std::string>& texts, TokenizerMode mode);

  std::int64_t Id(std::string_view token) const;
  std::size_t size() const { return tokens_.size(); }
  const std::vector<std::string>& tokens() const { return tokens_; }

  nlohmann::json ToJson() const;
  static Vocab FromJson(const nlohmann::json& j);

 private:
  void Add(const std::string& token);

  std::vector<std::string> tokens_;
  std::map<std::string, std::int64_t, std::less<>> index_;
};

// Entity-channel ids: 0 padding, 1 null, 2..5 relations, then one id per
// synonym representative in ascending entity-id order.
class EntityVocab {
 public:
  static constexpr std::int64_t kPad = 0;
  static constexpr std::int64_t kNull = 1;
  static constexpr std::int64_t kFirstRelation = 2;
  static constexpr std::int64_t kFirstEntity = 6;

  EntityVocab() = default;
  explicit EntityVocab(const KnowledgeGraph& kg);

  // Id of a normalized entity; unknown entities map to kNull.
  std::int64_t Id(EntityId normalized) const;
  static std::int64_t RelationId(RelationKind r);
  std::size_t size() const { return kFirstEntity + reps_.size(); }
  const std::vector<EntityId>& representatives() const { return reps_; }

  nlohmann::json ToJson() const;
  static EntityVocab FromJson(const nlohmann::json& j);

 private:
  std::vector<EntityId> reps_;
  std::map<EntityId, std::int64_t> index_;
};

// Padded channel ids of one text plus valid lengths. An empty channel holds
// the null id at position 0 with valid length 0.
struct ChannelizedInput {
  std::vector<std::int64_t> tokens;
  std::vector<std::int64_t> entities;
  std::vector<std::array<std::int64_t, 3>> triples;  // (head, relation, tail)
  std::size_t token_length = 0;
  std::size_t entity_length = 0;
  std::size_t triple_length = 0;

  bool operator==(const ChannelizedInput&) const = default;
};

// Encodes one text with its anchors. Only has_operation triples enter the
// triple channel. Over-long channels are truncated from the right with a
// warning.
ChannelizedInput EncodeChannels(std::string_view text, const AnchorSet& anchors,
                                const Vocab& vocab, const EntityVocab& entities,
                                const MatcherDims& dims, TokenizerMode mode);

struct SimilarityFeatures {
  ad::Tensor token;
  ad::Tensor entity;
  ad::Tensor triple;

  ad::Tensor Fused() const;
};

struct MatcherConfig {
  Architecture architecture = Architecture::kArc1;
  ChannelSet channels;
  MatcherDims dims = DefaultDims(Architecture::kArc1);
  std::size_t token_vocab = 3;
  std::size_t entity_vocab = 6;

  nlohmann::json ToJson() const;
  static MatcherConfig FromJson(const nlohmann::json& j);
};

inline constexpr std::array<const char*, 3> kLabelNames = {"unrelated", "related",
                                                           "similar"};

// Multi-channel query/title matcher. Each enabled channel has its own
// extractor weights; the entity and triple channels share one entity
// embedding table. Disabled channels contribute zero features.
class Matcher {
 public:
  Matcher(const MatcherConfig& config, std::uint64_t seed);
  Matcher(const MatcherConfig& config, ParameterSet params);

  const MatcherConfig& config() const { return config_; }
  ParameterSet& params() { return params_; }
  const ParameterSet& params() const { return params_; }

  // Width of one channel's similarity feature vector.
  std::size_t FeatureDim() const;

  ad::Tensor ChannelFeatures(Channel c, const ChannelizedInput& q,
                             const ChannelizedInput& d) const;
  SimilarityFeatures Features(const ChannelizedInput& q, const ChannelizedInput& d) const;
  // Fused features -> 2-layer MLP -> [1, 3] logits.
  ad::Tensor Classify(const ad::Tensor& fused) const;
  ad::Tensor Logits(const ChannelizedInput& q, const ChannelizedInput& d) const;
  std::array<double, 3> Predict(const ChannelizedInput& q, const ChannelizedInput& d) const;

 private:
  ad::Tensor Embed(Channel c, const ChannelizedInput& x) const;
  ad::Tensor Arc1(const std::string& prefix, const ad::Tensor& q, const ad::Tensor& d) const;
  ad::Tensor Pyramid(const std::string& prefix, const ad::Tensor& q,
                     const ad::Tensor& d) const;
  ad::Tensor Iwan(const std::string& prefix, const ad::Tensor& q, const ad::Tensor& d) const;

  MatcherConfig config_;
  ParameterSet params_;
};

// Rowwise split of h into parts parallel and orthogonal to a: returns
// (p, h - p). A zero row of `a` gives p = 0.
std::pair<ad::Tensor, ad::Tensor> OrthogonalDecomposition(const ad::Tensor& h,
                                                          const ad::Tensor& a);

}  // namespace kaqa

#endif  // KAQA_MATCHERS_H_
