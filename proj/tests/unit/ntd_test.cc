#include <cmath>

#include "doctest.h"
#include "kaqa/anchoring.h"
#include "kaqa/metrics.h"
#include "kaqa/ntd.h"
#include "kaqa/trainer.h"
#include "test_util.h"

namespace kaqa {
namespace {

std::vector<DisambInstance> ToyInstances(std::size_t n, std::uint64_t seed) {
  KnowledgeGraph kg = testing::MakeToyKg();
  std::size_t unmatched = 0;
  auto xs = PrepareDisambiguation(testing::MakeToyDisamb(n, seed), kg, AnchorConfig{},
                                  &unmatched);
  REQUIRE(unmatched == 0);
  return xs;
}

NtdConfig SmallConfig() {
  NtdConfig c;
  c.buckets = 1024;
  c.dim = 8;
  c.epochs = 15;
  c.batch_size = 8;
  c.learning_rate = 0.05;
  c.seed = 3;
  return c;
}

std::vector<double> Scores(const NtdModel& m, const std::vector<DisambInstance>& xs) {
  std::vector<double> out;
  for (const auto& x : xs) out.push_back(m.ScoreIds(NtdFeatureIds(x, m.config().buckets)));
  return out;
}

TEST_CASE("feature hashing is stable and in range") {
  auto ids = HashFeatures({"w=friend", "w=friend", "t=1|has_operation|3"}, 97);
  REQUIRE(ids.size() == 3);
  CHECK(ids[0] == ids[1]);
  for (auto id : ids) {
    CHECK(id >= 0);
    CHECK(id < 97);
  }
  // FNV-1a 64 of "a" is 0xaf63dc4c8601ec8c.
  CHECK(HashFeatures({"a"}, 1000)[0] == static_cast<std::int64_t>(0xaf63dc4c8601ec8cULL % 1000));
}

TEST_CASE("a fresh model scores one half") {
  NtdModel m(SmallConfig());
  KnowledgeGraph kg = testing::MakeToyKg();
  AnchorTrace t = AnchorDetailed(testing::kMotivatingQuery, kg, &m, AnchorConfig{});
  for (const auto& c : t.candidates) CHECK(c.ntd_score == 0.5);
  NtdFeatureBag empty;
  CHECK(m.Score(empty) == 0.5);
}

TEST_CASE("scoring is deterministic") {
  auto xs = ToyInstances(40, 1);
  NtdTrainResult r = TrainNtd(xs, {}, SmallConfig());
  const NtdFeatureBag bag = NtdFeatures(xs[0].candidates[xs[0].target], xs[0].tokens,
                                        xs[0].candidates);
  CHECK(r.model.Score(bag) == r.model.Score(bag));
  NtdTrainResult again = TrainNtd(xs, {}, SmallConfig());
  CHECK(Scores(again.model, xs) == Scores(r.model, xs));
}

TEST_CASE("capacity: 50 separable examples are fit") {
  auto xs = ToyInstances(50, 2);
  REQUIRE(xs.size() == 50);
  NtdTrainResult r = TrainNtd(xs, {}, SmallConfig());
  std::vector<int> labels;
  for (const auto& x : xs) labels.push_back(x.label);
  CHECK(BinaryAccuracy(Scores(r.model, xs), labels) >= 0.95);
  CHECK(r.best_valid_accuracy >= 0.95);
}

TEST_CASE("flipped labels mirror the scores") {
  auto train = ToyInstances(60, 4);
  auto held = ToyInstances(30, 5);
  auto flipped = train;
  for (auto& x : flipped) x.label = 1 - x.label;
  NtdConfig c = SmallConfig();
  c.epochs = 5;
  NtdTrainResult a = TrainNtd(train, train, c);
  NtdTrainResult b = TrainNtd(flipped, flipped, c);
  CHECK(a.best_epoch == b.best_epoch);
  const auto sa = Scores(a.model, held);
  const auto sb = Scores(b.model, held);
  for (std::size_t i = 0; i < sa.size(); ++i) CHECK(std::abs(sb[i] - (1.0 - sa[i])) < 1e-9);
}

TEST_CASE("single-class training data is rejected") {
  auto xs = ToyInstances(20, 6);
  std::vector<DisambInstance> positives;
  for (const auto& x : xs)
    if (x.label == 1) positives.push_back(x);
  CHECK_THROWS_AS(TrainNtd(positives, {}, SmallConfig()), TrainingError);
  CHECK_THROWS_AS(TrainNtd({}, {}, SmallConfig()), DataError);
}

TEST_CASE("ntd checkpoints round-trip") {
  auto xs = ToyInstances(30, 7);
  NtdTrainResult r = TrainNtd(xs, {}, SmallConfig());
  auto dir = testing::ScratchDir("ntd_ckpt");
  r.model.Save(dir / "ntd.ckpt");
  NtdModel back = NtdModel::Load(dir / "ntd.ckpt");
  CHECK(back.config().buckets == 1024);
  CHECK(Scores(back, xs) == Scores(r.model, xs));
  Checkpoint wrong = r.model.ToCheckpoint();
  wrong.kind = "matcher";
  CHECK_THROWS_AS(NtdModel::FromCheckpoint(wrong), DataError);
}

TEST_CASE("ntd config validation lists every problem") {
  try {
    NtdConfig::FromJson({{"buckets", 0}, {"dim", 0}, {"colour", 1}});
    FAIL("expected UsageError");
  } catch (const UsageError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("buckets") != std::string::npos);
    CHECK(msg.find("dim") != std::string::npos);
    CHECK(msg.find("colour") != std::string::npos);
  }
  NtdConfig c = NtdConfig::FromJson(SmallConfig().ToJson());
  CHECK(c.learning_rate == 0.05);
  CHECK(c.epochs == 15);
}

}  // namespace
}  // namespace kaqa
