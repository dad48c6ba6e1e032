#ifndef KAQA_SYNTHETIC_H_
#define KAQA_SYNTHETIC_H_

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "kaqa/dataset.h"
#include "kaqa/kg.h"
#include "kaqa/random.h"

namespace kaqa {

// Small software-support KG: products, their components ("objects") and the
// operations objects support, plus synonym and hypernym links. Entity types
// are "product", "object" and "operation".
KnowledgeGraph SyntheticKg();

// Bootstrapping demo inputs: extraction patterns and a corpus whose pattern
// matches recover part of the has_operation triples.
std::vector<Pattern> SyntheticPatterns();
std::vector<std::string> SyntheticCorpus(const KnowledgeGraph& kg, std::size_t n,
                                         std::uint64_t seed);

// The intended reading of a generated query: `operation` applied to
// `object` of `product`; `distractor` is another operation of the object
// mentioned in a side clause (0 when absent).
struct QueryFrame {
  EntityId product = 0;
  EntityId object = 0;
  EntityId operation = 0;
  EntityId distractor = 0;
};

struct SyntheticOptions {
  std::uint64_t seed = 1;
  // Zipf exponent over each synonym class's surfaces; larger values make
  // non-canonical aliases rarer.
  double alias_skew = 1.0;
  // Probability that a query carries a distractor operation.
  double distractor_rate = 0.8;
};

class SyntheticGenerator {
 public:
  SyntheticGenerator(const KnowledgeGraph& kg, const SyntheticOptions& options);

  QueryFrame RandomFrame();
  // Renders a frame with a random template and random surfaces.
  std::string Render(const QueryFrame& frame);

  // Query/title pairs. similar: same product, object and operation;
  // related: same product and object, different operation (often with the
  // query's operation as the title's distractor); unrelated: different
  // product or different object.
  std::vector<MatchExample> Matching(std::size_t n);

  // Every has_operation candidate of queries with at least two such
  // candidates, labeled 1 iff it is the intended (object, operation). With
  // `with_component_of`, the correct (object, component_of, product)
  // candidate is added as a positive row.
  std::vector<DisambExample> Disambiguation(std::size_t queries, bool with_component_of);

 private:
  std::string Surface(EntityId id);

  const KnowledgeGraph& kg_;
  SyntheticOptions options_;
  Rng rng_;
  std::vector<EntityId> products_;
  std::map<EntityId, std::vector<EntityId>> objects_of_;     // product -> objects
  std::map<EntityId, std::vector<EntityId>> products_of_;    // object -> products
  std::map<EntityId, std::vector<EntityId>> operations_of_;  // object -> operations
  std::map<EntityId, std::vector<std::string>> surfaces_;    // rep -> aliases
};

}  // namespace kaqa

#endif  // KAQA_SYNTHETIC_H_
