#ifndef KAQA_TRAINER_H_
#define KAQA_TRAINER_H_

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "kaqa/anchoring.h"
#include "kaqa/checkpoint.h"
#include "kaqa/dataset.h"
#include "kaqa/json_io.h"
#include "kaqa/matchers.h"
#include "kaqa/ntd.h"

namespace kaqa {

struct TrainOptions {
  std::size_t batch_size = 32;
  double learning_rate = 0.001;
  std::size_t epochs = 10;
  std::uint64_t seed = 1;
};

struct EncodedExample {
  ChannelizedInput query;
  ChannelizedInput title;
  int label = kUnrelated;
};

struct EpochStats {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double train_accuracy = 0.0;
  double valid_loss = 0.0;
  double valid_accuracy = 0.0;
};

using EpochCallback = std::function<void(const EpochStats&)>;

struct MatcherTrainResult {
  Matcher model;  // parameters of the best-valid epoch
  std::vector<EpochStats> history;
  std::size_t best_epoch = 0;
  double best_valid_accuracy = 0.0;
};

// Minibatch Adam on mean cross-entropy. Examples are visited in a seeded
// shuffle each epoch; the model with the best valid accuracy (first epoch on
// ties) is kept. Throws TrainingError on a non-finite loss.
MatcherTrainResult TrainMatcher(const MatcherConfig& config, const TrainOptions& options,
                                const std::vector<EncodedExample>& train,
                                const std::vector<EncodedExample>& valid,
                                const EpochCallback& on_epoch = {});

std::vector<int> PredictLabels(const Matcher& model, const std::vector<EncodedExample>& xs);
// Argmax accuracy. Throws DataError on an empty set.
double EvaluateAccuracy(const Matcher& model, const std::vector<EncodedExample>& xs);

// Anchors every text not yet in `cache`.
void AnchorTexts(const std::vector<std::string>& texts, const KnowledgeGraph& kg,
                 const AnchorConfig& config, const NtdModel* ntd, AnchorCache& cache);

struct MatchingData {
  Vocab vocab;
  EntityVocab entities;
  std::vector<EncodedExample> train;
  std::vector<EncodedExample> valid;
  std::vector<EncodedExample> test;
};

// Builds the token vocabulary from the training split and encodes all
// splits. Every text must be present in `anchors`.
MatchingData EncodeMatching(const Split<MatchExample>& split, const KnowledgeGraph& kg,
                            const AnchorCache& anchors, const MatcherDims& dims,
                            TokenizerMode mode);

EncodedExample EncodeExample(const MatchExample& ex, const AnchorCache& anchors,
                             const Vocab& vocab, const EntityVocab& entities,
                             const MatcherDims& dims, TokenizerMode mode);

struct LoadedMatcher {
  Matcher model;
  Vocab vocab;
  EntityVocab entities;
  TokenizerMode mode;
  nlohmann::json training;
};

Checkpoint MatcherCheckpoint(const Matcher& model, const Vocab& vocab,
                             const EntityVocab& entities, TokenizerMode mode,
                             const nlohmann::json& training);
LoadedMatcher MatcherFromCheckpoint(const Checkpoint& ckpt);

// ---- Triple disambiguation ----

// A labeled candidate inside its query's full, scored candidate list.
struct DisambInstance {
  std::vector<TokenSpan> tokens;
  std::vector<TripleCandidate> candidates;  // RB-scored, KR-flagged
  std::size_t target = 0;
  int label = 0;
};

// Locates each example's candidate in its query. Rows whose candidate is
// not generated are skipped and counted in `unmatched`.
std::vector<DisambInstance> PrepareDisambiguation(const std::vector<DisambExample>& xs,
                                                  const KnowledgeGraph& kg,
                                                  const AnchorConfig& config,
                                                  std::size_t* unmatched = nullptr);

struct NtdTrainResult {
  NtdModel model;
  std::size_t best_epoch = 0;
  double best_valid_accuracy = 0.0;
};

// Logistic loss with minibatch Adam; best valid accuracy selects the model
// (train accuracy when `valid` is empty). Throws TrainingError when the
// training labels contain a single class.
NtdTrainResult TrainNtd(const std::vector<DisambInstance>& train,
                        const std::vector<DisambInstance>& valid, const NtdConfig& config);

std::vector<std::int64_t> NtdFeatureIds(const DisambInstance& x, std::size_t buckets);

enum class DisambScorer { kRuleBased, kRuleBasedKr, kEnsemble };
std::string_view DisambScorerName(DisambScorer s);

// Per-instance scores of the RB, RB+KR or RB+KR+NTD configuration.
std::vector<double> DisambScores(const std::vector<DisambInstance>& xs, DisambScorer scorer,
                                 const AnchorConfig& config, const NtdModel* ntd);

struct DisambMetrics {
  double accuracy = 0.0;
  double auc = 0.0;
};

DisambMetrics EvaluateDisambiguation(const std::vector<DisambInstance>& xs,
                                     DisambScorer scorer, const AnchorConfig& config,
                                     const NtdModel* ntd);

// ---- Channel ablation ----

struct AblationRow {
  std::string name;
  ChannelSet channels;
  std::vector<double> accuracies;  // one per seed
  double mean_accuracy = 0.0;
};

// token, token+entity, token+triple, token+entity+triple.
std::vector<std::pair<std::string, ChannelSet>> StandardAblationGrid();

// Trains every grid entry once per seed on `data` and reports test accuracy.
std::vector<AblationRow> RunAblation(
    const MatcherConfig& base, const TrainOptions& options,
    const std::vector<std::uint64_t>& seeds, const MatchingData& data,
    const std::vector<std::pair<std::string, ChannelSet>>& grid = StandardAblationGrid(),
    const std::function<void(const std::string&)>& progress = {});

}  // namespace kaqa

#endif  // KAQA_TRAINER_H_
