#include "kaqa/trainer.h"

#include <cmath>
#include <numeric>
#include <unordered_map>

#include "kaqa/log.h"
#include "kaqa/metrics.h"

namespace kaqa {

using ad::Tensor;
using nlohmann::json;

namespace {

void CheckFinite(double loss, std::size_t epoch, std::size_t batch) {
  if (!std::isfinite(loss)) {
    throw TrainingError("loss diverged (" + std::to_string(loss) + ") in epoch " +
                        std::to_string(epoch) + ", batch " + std::to_string(batch) +
                        "; try a lower learning rate");
  }
}

int Argmax(const Tensor& logits) {
  auto v = logits.values();
  return static_cast<int>(std::max_element(v.begin(), v.end()) - v.begin());
}

// Mean loss and accuracy without recording a tape.
std::pair<double, double> LossAndAccuracy(const Matcher& model,
                                          const std::vector<EncodedExample>& xs) {
  if (xs.empty()) return {0.0, 0.0};
  double loss = 0.0;
  std::size_t hits = 0;
  for (const EncodedExample& x : xs) {
    Tensor logits = model.Logits(x.query, x.title);
    const int label = x.label;
    loss += ad::CrossEntropyWithLogits(logits, std::span(&label, 1)).item();
    hits += Argmax(logits) == label;
  }
  const double n = static_cast<double>(xs.size());
  return {loss / n, static_cast<double>(hits) / n};
}

}  // namespace

MatcherTrainResult TrainMatcher(const MatcherConfig& config, const TrainOptions& options,
                                const std::vector<EncodedExample>& train,
                                const std::vector<EncodedExample>& valid,
                                const EpochCallback& on_epoch) {
  if (train.empty()) throw DataError("empty training set");
  if (options.batch_size == 0) throw UsageError("batch_size must be positive");
  Matcher model(config, options.seed);
  MatcherTrainResult result{model, {}, 0, -1.0};
  Rng rng(options.seed ^ 0x9e3779b97f4a7c15ULL);
  const AdamOptions adam{options.learning_rate};
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);

  for (std::size_t epoch = 1; epoch <= options.epochs; ++epoch) {
    rng.Shuffle(std::span(order));
    double epoch_loss = 0.0;
    std::size_t hits = 0;
    for (std::size_t start = 0, batch = 0; start < order.size();
         start += options.batch_size, ++batch) {
      const std::size_t end = std::min(order.size(), start + options.batch_size);
      const double inv = 1.0 / static_cast<double>(end - start);
      model.params().ZeroGrad();
      double batch_loss = 0.0;
      for (std::size_t k = start; k < end; ++k) {
        const EncodedExample& x = train[order[k]];
        ad::Tape tape;
        Tensor logits = model.Logits(x.query, x.title);
        const int label = x.label;
        Tensor loss = ad::CrossEntropyWithLogits(logits, std::span(&label, 1));
        batch_loss += loss.item();
        hits += Argmax(logits) == label;
        tape.Backward(ad::Scale(loss, inv));
      }
      CheckFinite(batch_loss, epoch, batch);
      AdamStep(model.params(), adam);
      epoch_loss += batch_loss;
    }
    EpochStats stats;
    stats.epoch = epoch;
    stats.train_loss = epoch_loss / static_cast<double>(train.size());
    stats.train_accuracy = static_cast<double>(hits) / static_cast<double>(train.size());
    std::tie(stats.valid_loss, stats.valid_accuracy) =
        valid.empty() ? std::pair{stats.train_loss, stats.train_accuracy}
                      : LossAndAccuracy(model, valid);
    CheckFinite(stats.valid_loss, epoch, 0);
    result.history.push_back(stats);
    if (stats.valid_accuracy > result.best_valid_accuracy) {
      result.best_valid_accuracy = stats.valid_accuracy;
      result.best_epoch = epoch;
      result.model.params().CopyValuesFrom(model.params());
    }
    if (on_epoch) on_epoch(stats);
  }
  return result;
}

std::vector<int> PredictLabels(const Matcher& model, const std::vector<EncodedExample>& xs) {
  std::vector<int> out;
  out.reserve(xs.size());
  for (const EncodedExample& x : xs) out.push_back(Argmax(model.Logits(x.query, x.title)));
  return out;
}

double EvaluateAccuracy(const Matcher& model, const std::vector<EncodedExample>& xs) {
  if (xs.empty()) throw DataError("cannot evaluate on an empty set");
  std::vector<int> labels;
  for (const EncodedExample& x : xs) labels.push_back(x.label);
  return Accuracy(PredictLabels(model, xs), labels);
}

void AnchorTexts(const std::vector<std::string>& texts, const KnowledgeGraph& kg,
                 const AnchorConfig& config, const NtdModel* ntd, AnchorCache& cache) {
  for (const std::string& t : texts) {
    if (cache.contains(t)) continue;
    cache.emplace(t, Anchor(t, kg, ntd, config));
  }
}

EncodedExample EncodeExample(const MatchExample& ex, const AnchorCache& anchors,
                             const Vocab& vocab, const EntityVocab& entities,
                             const MatcherDims& dims, TokenizerMode mode) {
  auto find = [&](const std::string& text) -> const AnchorSet& {
    auto it = anchors.find(text);
    if (it == anchors.end()) throw DataError("no anchors computed for text: " + text);
    return it->second;
  };
  return {EncodeChannels(ex.query, find(ex.query), vocab, entities, dims, mode),
          EncodeChannels(ex.title, find(ex.title), vocab, entities, dims, mode), ex.label};
}

MatchingData EncodeMatching(const Split<MatchExample>& split, const KnowledgeGraph& kg,
                            const AnchorCache& anchors, const MatcherDims& dims,
                            TokenizerMode mode) {
  std::vector<std::string> texts;
  for (const MatchExample& e : split.train) {
    texts.push_back(e.query);
    texts.push_back(e.title);
  }
  MatchingData data{Vocab::Build(texts, mode), EntityVocab(kg), {}, {}, {}};
  auto encode = [&](const std::vector<MatchExample>& xs, std::vector<EncodedExample>& out) {
    for (const MatchExample& e : xs) {
      out.push_back(EncodeExample(e, anchors, data.vocab, data.entities, dims, mode));
    }
  };
  encode(split.train, data.train);
  encode(split.valid, data.valid);
  encode(split.test, data.test);
  return data;
}

Checkpoint MatcherCheckpoint(const Matcher& model, const Vocab& vocab,
                             const EntityVocab& entities, TokenizerMode mode,
                             const json& training) {
  json meta = {{"config", {{"matcher", model.config().ToJson()}, {"training", training}}},
               {"vocab", vocab.ToJson()},
               {"entity_vocab", entities.ToJson()},
               {"tokenizer", TokenizerModeName(mode)}};
  return MakeCheckpoint("matcher", std::move(meta), model.params());
}

LoadedMatcher MatcherFromCheckpoint(const Checkpoint& ckpt) {
  if (ckpt.kind != "matcher") {
    throw DataError("expected a matcher checkpoint, got kind '" + ckpt.kind + "'");
  }
  try {
    const json& meta = ckpt.metadata;
    MatcherConfig config = MatcherConfig::FromJson(meta.at("config").at("matcher"));
    return {Matcher(config, ParametersFrom(ckpt)), Vocab::FromJson(meta.at("vocab")),
            EntityVocab::FromJson(meta.at("entity_vocab")),
            ParseTokenizerMode(meta.at("tokenizer").get<std::string>()),
            meta.at("config").value("training", json::object())};
  } catch (const json::exception& e) {
    throw DataError(std::string("bad matcher checkpoint metadata: ") + e.what());
  } catch (const UsageError& e) {
    throw DataError(std::string("bad matcher checkpoint metadata: ") + e.what());
  }
}

std::vector<DisambInstance> PrepareDisambiguation(const std::vector<DisambExample>& xs,
                                                  const KnowledgeGraph& kg,
                                                  const AnchorConfig& config,
                                                  std::size_t* unmatched) {
  struct Parsed {
    std::vector<TokenSpan> tokens;
    std::vector<TripleCandidate> candidates;
  };
  std::unordered_map<std::string, Parsed> parsed;
  std::vector<DisambInstance> out;
  std::size_t missing = 0;
  for (const DisambExample& x : xs) {
    auto it = parsed.find(x.query);
    if (it == parsed.end()) {
      Parsed p;
      p.tokens = Tokenize(x.query, config.tokenizer);
      auto mentions = ExtractEntitiesFmm(p.tokens, kg, x.query, config.tokenizer);
      p.candidates = FilterKnowledgeReasoning(GenerateTripleCandidates(mentions, kg), kg);
      for (TripleCandidate& c : p.candidates) c.rb_score = ScoreRuleBased(c, p.tokens, config);
      it = parsed.emplace(x.query, std::move(p)).first;
    }
    auto head = kg.ResolveAlias(x.head);
    auto tail = kg.ResolveAlias(x.tail);
    std::optional<std::size_t> target;
    if (head && tail) {
      const EntityId h = kg.Normalize(*head), t = kg.Normalize(*tail);
      for (std::size_t i = 0; i < it->second.candidates.size(); ++i) {
        const TripleCandidate& c = it->second.candidates[i];
        if (c.head.entity == h && c.tail.entity == t && c.relation == x.relation) {
          target = i;
          break;
        }
      }
    }
    if (!target) {
      ++missing;
      continue;
    }
    out.push_back({it->second.tokens, it->second.candidates, *target, x.label});
  }
  if (unmatched != nullptr) *unmatched = missing;
  return out;
}

std::vector<std::int64_t> NtdFeatureIds(const DisambInstance& x, std::size_t buckets) {
  const NtdFeatureBag bag = NtdFeatures(x.candidates[x.target], x.tokens, x.candidates);
  return HashFeatures(NtdFeatureStrings(bag), buckets);
}

namespace {

double NtdAccuracy(const NtdModel& model, const std::vector<std::vector<std::int64_t>>& ids,
                   const std::vector<int>& labels) {
  std::vector<double> scores;
  for (const auto& x : ids) scores.push_back(model.ScoreIds(x));
  return BinaryAccuracy(scores, labels);
}

}  // namespace

NtdTrainResult TrainNtd(const std::vector<DisambInstance>& train,
                        const std::vector<DisambInstance>& valid, const NtdConfig& config) {
  if (train.empty()) throw DataError("empty ntd training set");
  std::vector<std::vector<std::int64_t>> train_ids, valid_ids;
  std::vector<int> train_labels, valid_labels;
  for (const DisambInstance& x : train) {
    train_ids.push_back(NtdFeatureIds(x, config.buckets));
    train_labels.push_back(x.label);
  }
  for (const DisambInstance& x : valid) {
    valid_ids.push_back(NtdFeatureIds(x, config.buckets));
    valid_labels.push_back(x.label);
  }
  const auto positives = std::count(train_labels.begin(), train_labels.end(), 1);
  if (positives == 0 || positives == static_cast<long>(train_labels.size())) {
    throw TrainingError("ntd training labels contain a single class");
  }

  NtdModel model(config);
  NtdTrainResult result{model, 0, -1.0};
  Rng rng(config.seed ^ 0x9e3779b97f4a7c15ULL);
  const AdamOptions adam{config.learning_rate};
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    rng.Shuffle(std::span(order));
    for (std::size_t start = 0, batch = 0; start < order.size();
         start += config.batch_size, ++batch) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      const double inv = 1.0 / static_cast<double>(end - start);
      model.params().ZeroGrad();
      double batch_loss = 0.0;
      for (std::size_t k = start; k < end; ++k) {
        ad::Tape tape;
        Tensor z = model.Logit(train_ids[order[k]]);
        Tensor loss =
            ad::BinaryCrossEntropyWithLogits(z, std::span(&train_labels[order[k]], 1));
        batch_loss += loss.item();
        tape.Backward(ad::Scale(loss, inv));
      }
      CheckFinite(batch_loss, epoch, batch);
      AdamStep(model.params(), adam);
    }
    const double acc = valid.empty() ? NtdAccuracy(model, train_ids, train_labels)
                                     : NtdAccuracy(model, valid_ids, valid_labels);
    if (acc > result.best_valid_accuracy) {
      result.best_valid_accuracy = acc;
      result.best_epoch = epoch;
      result.model.params().CopyValuesFrom(model.params());
    }
  }
  return result;
}

std::string_view DisambScorerName(DisambScorer s) {
  switch (s) {
    case DisambScorer::kRuleBased:
      return "RB";
    case DisambScorer::kRuleBasedKr:
      return "RB+KR";
    case DisambScorer::kEnsemble:
      return "RB+KR+NTD";
  }
  return "?";
}

std::vector<double> DisambScores(const std::vector<DisambInstance>& xs, DisambScorer scorer,
                                 const AnchorConfig& config, const NtdModel* ntd) {
  if (scorer == DisambScorer::kEnsemble && ntd == nullptr) {
    throw UsageError("the RB+KR+NTD configuration needs an ntd model");
  }
  std::vector<double> scores;
  scores.reserve(xs.size());
  for (const DisambInstance& x : xs) {
    TripleCandidate c = x.candidates[x.target];
    switch (scorer) {
      case DisambScorer::kRuleBased:
        scores.push_back(c.rb_score);
        break;
      case DisambScorer::kRuleBasedKr:
        scores.push_back(CombineScores(c, config, false));
        break;
      case DisambScorer::kEnsemble:
        c.ntd_score = ntd->Score(NtdFeatures(c, x.tokens, x.candidates));
        scores.push_back(CombineScores(c, config, true));
        break;
    }
  }
  return scores;
}

DisambMetrics EvaluateDisambiguation(const std::vector<DisambInstance>& xs,
                                     DisambScorer scorer, const AnchorConfig& config,
                                     const NtdModel* ntd) {
  const std::vector<double> scores = DisambScores(xs, scorer, config, ntd);
  std::vector<int> labels;
  for (const DisambInstance& x : xs) labels.push_back(x.label);
  return {BinaryAccuracy(scores, labels, config.threshold), Auc(scores, labels)};
}

std::vector<std::pair<std::string, ChannelSet>> StandardAblationGrid() {
  return {{"token", {true, false, false}},
          {"token+entity", {true, true, false}},
          {"token+triple", {true, false, true}},
          {"token+entity+triple", {true, true, true}}};
}

std::vector<AblationRow> RunAblation(
    const MatcherConfig& base, const TrainOptions& options,
    const std::vector<std::uint64_t>& seeds, const MatchingData& data,
    const std::vector<std::pair<std::string, ChannelSet>>& grid,
    const std::function<void(const std::string&)>& progress) {
  std::vector<AblationRow> rows;
  for (const auto& [name, channels] : grid) {
    AblationRow row{name, channels, {}, 0.0};
    MatcherConfig config = base;
    config.channels = channels;
    for (std::uint64_t seed : seeds) {
      TrainOptions opt = options;
      opt.seed = seed;
      MatcherTrainResult r = TrainMatcher(config, opt, data.train, data.valid);
      row.accuracies.push_back(EvaluateAccuracy(r.model, data.test));
      if (progress) {
        progress(name + " seed " + std::to_string(seed) + ": " +
                 std::to_string(row.accuracies.back()));
      }
    }
    row.mean_accuracy = std::accumulate(row.accuracies.begin(), row.accuracies.end(), 0.0) /
                        static_cast<double>(row.accuracies.size());
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace kaqa
