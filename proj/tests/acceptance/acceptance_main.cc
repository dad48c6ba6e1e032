// Acceptance checks 1-8. Prints one PASS/FAIL line per criterion and exits
// nonzero when any fails.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "commands.h"
#include "common/oracles.h"
#include "json.hpp"
#include "kaqa/anchoring.h"
#include "kaqa/checkpoint.h"
#include "kaqa/dataset.h"
#include "kaqa/kg.h"
#include "kaqa/log.h"
#include "kaqa/matchers.h"
#include "kaqa/metrics.h"
#include "kaqa/ntd.h"
#include "kaqa/optim.h"
#include "kaqa/random.h"
#include "kaqa/trainer.h"

namespace kaqa {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

// Tolerances and budgets.
constexpr double kGradTolerance = 1e-4;
constexpr double kGradBudgetSeconds = 30.0;
constexpr std::size_t kGradCoordinates = 2000;
constexpr double kDecompositionTolerance = 1e-9;
constexpr double kDisambMinAccuracy = 0.85;
constexpr double kDisambMinAuc = 0.90;
constexpr double kDisambBudgetSeconds = 120.0;
constexpr std::size_t kDisambMinCandidates = 1000;
constexpr double kAblationMargin = 0.05;
constexpr double kAblationBudgetSeconds = 15 * 60.0;
constexpr double kCapacityMinAccuracy = 0.95;
constexpr std::size_t kCapacityExamples = 200;
constexpr std::size_t kCapacityEpochs = 30;
constexpr double kCapacityBudgetSeconds = 5 * 60.0;

const fs::path kSource = KAQA_SOURCE_DIR;
const char* const kMotivatingQuery = "How to recover WeChat friend if she has deleted me?";

struct Outcome {
  bool pass = false;
  std::string detail;
};

double Seconds(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

std::string Fmt(double v, int digits = 4) {
  std::ostringstream s;
  s.setf(std::ios::fixed);
  s.precision(digits);
  s << v;
  return s.str();
}

std::string Sci(double v) {
  std::ostringstream s;
  s.setf(std::ios::scientific);
  s.precision(2);
  s << v;
  return s.str();
}

fs::path Scratch() {
  static const fs::path dir = [] {
    fs::path d = fs::temp_directory_path() / "kaqa_acceptance";
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

struct CliResult {
  int code;
  std::string out;
  std::string err;
};

CliResult RunCli(const std::vector<std::string>& args, const std::string& input = "") {
  std::istringstream in(input);
  std::ostringstream out, err;
  const int code = cli::Run(args, in, out, err);
  return {code, out.str(), err.str()};
}

// Copies a shipped config with every path made absolute and `edit` applied.
fs::path ScratchConfig(const std::string& name, const std::function<void(json&)>& edit) {
  const fs::path src = kSource / "data" / "configs" / (name + ".json");
  std::ifstream in(src);
  json c = json::parse(in);
  for (const char* key : {"kg", "anchoring", "dataset", "test_dataset", "ntd_checkpoint",
                          "anchor_cache", "output"}) {
    if (c.contains(key)) c[key] = (src.parent_path() / c[key].get<std::string>()).string();
  }
  edit(c);
  const fs::path dst = Scratch() / (name + "_" + std::to_string(std::hash<std::string>{}(
                                                      c.dump())) + ".json");
  std::ofstream(dst) << c.dump(2);
  return dst;
}

fs::path NtdCheckpoint() { return Scratch() / "ntd.ckpt"; }

// Trains the shipped NTD configuration once through cmd_train.
void EnsureNtd() {
  if (fs::exists(NtdCheckpoint())) return;
  const fs::path cfg =
      ScratchConfig("ntd", [](json& c) { c["output"] = NtdCheckpoint().string(); });
  const CliResult r = RunCli({"--quiet", "--config", cfg.string(), "train"});
  if (r.code != 0) throw TrainingError("NTD training failed: " + r.err);
}

ChannelizedInput ToyInput(std::vector<std::int64_t> tokens, std::vector<std::int64_t> ents,
                          std::vector<std::array<std::int64_t, 3>> triples,
                          const MatcherDims& d) {
  ChannelizedInput x;
  x.token_length = tokens.size();
  x.entity_length = ents.size();
  x.triple_length = triples.size();
  tokens.resize(d.max_tokens, Vocab::kPad);
  ents.resize(d.max_entities, EntityVocab::kPad);
  triples.resize(d.max_triples, {0, 0, 0});
  x.tokens = tokens;
  x.entities = ents;
  x.triples = triples;
  return x;
}

Outcome GradientChecks() {
  const auto start = std::chrono::steady_clock::now();
  Outcome o{true, ""};
  for (Architecture a : {Architecture::kArc1, Architecture::kMatchPyramid, Architecture::kIwan}) {
    MatcherConfig c;
    c.architecture = a;
    c.dims = DefaultDims(a);
    c.token_vocab = 12;
    c.entity_vocab = 9;
    Matcher m(c, 17);
    const ChannelizedInput q = ToyInput({3, 5, 7, 4}, {6, 8}, {{6, 2, 8}}, c.dims);
    const ChannelizedInput d = ToyInput({3, 9, 7, 10}, {6, 7}, {{6, 2, 7}, {8, 2, 7}}, c.dims);
    auto loss = [&](ParameterSet&) {
      const int label = kSimilar;
      return ad::CrossEntropyWithLogits(m.Logits(q, d), std::span(&label, 1));
    };
    GradCheckOptions opts;
    // Probe about kGradCoordinates randomly chosen coordinates per model.
    opts.full_check_limit = kGradCoordinates;
    opts.sample_fraction =
        static_cast<double>(kGradCoordinates) / static_cast<double>(m.params().NumValues());
    const GradCheckResult r = GradientCheck(loss, m.params(), opts);
    o.pass = o.pass && r.max_relative_error < kGradTolerance;
    o.detail += std::string(ArchitectureName(a)) + " max_rel_err=" +
                Sci(r.max_relative_error) + " (" +
                std::to_string(r.coordinates_checked) + " coords); ";
  }
  const double secs = Seconds(start);
  o.pass = o.pass && secs < kGradBudgetSeconds;
  o.detail += "total " + Fmt(secs, 1) + "s";
  return o;
}

Outcome DecompositionIdentities() {
  Rng rng(2024);
  double worst_sum = 0.0, worst_dot = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t rows = 1 + rng.Below(6), cols = 1 + rng.Below(32);
    const double scale = std::pow(10.0, rng.Uniform(-2.0, 2.0));
    ad::Tensor h(ad::Shape{rows, cols}), a(ad::Shape{rows, cols});
    for (double& v : h.mutable_values()) v = scale * rng.Uniform(-1, 1);
    for (double& v : a.mutable_values()) v = rng.Uniform(-1, 1);
    if (trial % 50 == 0) {
      for (std::size_t j = 0; j < cols; ++j) a.mutable_values()[j] = 0.0;  // zero row
    }
    const auto [p, orth] = OrthogonalDecomposition(h, a);
    for (std::size_t i = 0; i < rows; ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < cols; ++j) {
        const std::size_t k = i * cols + j;
        worst_sum = std::max(worst_sum, std::abs(p[k] + orth[k] - h[k]));
        dot += orth[k] * a[k];
      }
      worst_dot = std::max(worst_dot, std::abs(dot));
    }
  }
  return {worst_sum < kDecompositionTolerance && worst_dot < kDecompositionTolerance,
          "max|p+o-h|=" + Sci(worst_sum) + " max|o.a|=" + Sci(worst_dot)};
}

Outcome FmmOracle() {
  Rng rng(77);
  std::size_t mismatches = 0, sequences = 0;
  for (int dict = 0; dict < 200; ++dict) {
    const oracles::RandomDictionary d = oracles::MakeRandomDictionary(rng);
    const KnowledgeGraph kg = oracles::DictionaryKg(d);
    for (int seq = 0; seq < 50; ++seq) {
      std::vector<std::string> words;
      std::string text;
      const std::size_t n = rng.Below(13);
      for (std::size_t i = 0; i < n; ++i) {
        words.push_back(d.words[rng.Below(d.words.size())]);
        text += (i ? " " : "") + words.back();
      }
      const auto expect = oracles::FmmSegments(words, d.aliases);
      const auto got = ExtractEntitiesFmm(Tokenize(text), kg, text);
      bool same = got.size() == expect.size();
      for (std::size_t k = 0; same && k < got.size(); ++k) {
        same = got[k].first_token == expect[k].first.first &&
               got[k].end_token == expect[k].first.second &&
               got[k].entity == *kg.ResolveAlias(expect[k].second);
      }
      mismatches += same ? 0 : 1;
      ++sequences;
    }
  }
  return {mismatches == 0,
          std::to_string(sequences - mismatches) + "/" + std::to_string(sequences) +
              " sequences agree"};
}

Outcome DisambiguationOrdering() {
  const auto start = std::chrono::steady_clock::now();
  EnsureNtd();
  const KnowledgeGraph kg =
      LoadKg(kSource / "data/kg/entities.jsonl", kSource / "data/kg/triples.jsonl");
  const AnchorConfig config = LoadAnchorConfig(kSource / "data/anchoring.json");
  std::size_t unmatched = 0;
  const auto xs = PrepareDisambiguation(
      LoadDisambDataset(kSource / "data/synthetic/disamb_test.tsv"), kg, config, &unmatched);
  const NtdModel ntd = NtdModel::Load(NtdCheckpoint());
  const DisambMetrics rb = EvaluateDisambiguation(xs, DisambScorer::kRuleBased, config, nullptr);
  const DisambMetrics kr =
      EvaluateDisambiguation(xs, DisambScorer::kRuleBasedKr, config, nullptr);
  const DisambMetrics full = EvaluateDisambiguation(xs, DisambScorer::kEnsemble, config, &ntd);
  const double secs = Seconds(start);
  const bool pass = xs.size() >= kDisambMinCandidates && unmatched == 0 &&
                    rb.accuracy < kr.accuracy && kr.accuracy < full.accuracy &&
                    full.accuracy >= kDisambMinAccuracy && full.auc >= kDisambMinAuc &&
                    secs < kDisambBudgetSeconds;
  return {pass, std::to_string(xs.size()) + " candidates; RB acc=" + Fmt(rb.accuracy) +
                    " auc=" + Fmt(rb.auc) + "; RB+KR acc=" + Fmt(kr.accuracy) +
                    " auc=" + Fmt(kr.auc) + "; RB+KR+NTD acc=" + Fmt(full.accuracy) +
                    " auc=" + Fmt(full.auc) + "; " + Fmt(secs, 1) + "s"};
}

Outcome AblationOrdering() {
  const auto start = std::chrono::steady_clock::now();
  EnsureNtd();
  const fs::path cfg = ScratchConfig("ablation", [](json& c) {
    c["ntd_checkpoint"] = NtdCheckpoint().string();
    c["anchor_cache"] = (Scratch() / "anchors.jsonl").string();
    c["output"] = (Scratch() / "ablation.ckpt").string();
  });
  const cli::RunConfig c = cli::LoadRunConfig(cfg, std::nullopt);
  const cli::MatchingSetup s = cli::PrepareMatching(c);
  MatcherConfig base = c.matcher;
  base.token_vocab = s.data.vocab.size();
  base.entity_vocab = s.data.entities.size();
  const auto rows = RunAblation(base, c.training, c.ablation_seeds, s.data);
  std::size_t ordered = 0;
  std::string detail;
  for (std::size_t k = 0; k < c.ablation_seeds.size(); ++k) {
    const double tok = rows[0].accuracies[k], ent = rows[1].accuracies[k],
                 tri = rows[2].accuracies[k], all = rows[3].accuracies[k];
    const bool ok = tok < ent && ent <= tri && tri < all;
    ordered += ok ? 1 : 0;
    detail += "seed " + std::to_string(c.ablation_seeds[k]) + ": " + Fmt(tok) + " < " +
              Fmt(ent) + " <= " + Fmt(tri) + " < " + Fmt(all) + (ok ? " ok" : " violated") +
              "; ";
  }
  const double margin = rows[3].mean_accuracy - rows[0].mean_accuracy;
  const double secs = Seconds(start);
  const bool pass = c.ablation_seeds.size() == 3 && ordered >= 2 &&
                    margin >= kAblationMargin && secs < kAblationBudgetSeconds;
  return {pass, detail + "all-token=" + Fmt(margin) + "; " + Fmt(secs, 1) + "s"};
}

Outcome Capacity() {
  EnsureNtd();
  Outcome o{true, ""};
  for (const char* name : {"arc1", "matchpyramid", "iwan"}) {
    const auto start = std::chrono::steady_clock::now();
    const fs::path cfg = ScratchConfig(name, [](json& c) {
      c["ntd_checkpoint"] = NtdCheckpoint().string();
      c["anchor_cache"] = (Scratch() / "capacity_anchors.jsonl").string();
      c.erase("output");
    });
    const cli::RunConfig c = cli::LoadRunConfig(cfg, std::nullopt);
    const KnowledgeGraph kg = LoadKg(c.kg_dir / "entities.jsonl", c.kg_dir / "triples.jsonl");
    const AnchorConfig anchor = LoadAnchorConfig(c.anchoring);
    const NtdModel ntd = NtdModel::Load(NtdCheckpoint());
    auto examples = LoadMatchDataset(c.dataset);
    examples.resize(kCapacityExamples);
    std::vector<std::string> texts;
    for (const auto& ex : examples) {
      texts.push_back(ex.query);
      texts.push_back(ex.title);
    }
    AnchorCache cache;
    AnchorTexts(texts, kg, anchor, &ntd, cache);
    Split<MatchExample> split;
    split.train = examples;
    const MatchingData data = EncodeMatching(split, kg, cache, c.matcher.dims, anchor.tokenizer);
    MatcherConfig mc = c.matcher;
    mc.token_vocab = data.vocab.size();
    mc.entity_vocab = data.entities.size();
    TrainOptions opts = c.training;
    opts.epochs = kCapacityEpochs;
    opts.batch_size = 8;
    opts.learning_rate = 0.005;
    const MatcherTrainResult r = TrainMatcher(mc, opts, data.train, {});
    const double acc = EvaluateAccuracy(r.model, data.train);
    const double secs = Seconds(start);
    o.pass = o.pass && acc >= kCapacityMinAccuracy && secs < kCapacityBudgetSeconds;
    o.detail += std::string(name) + " train_acc=" + Fmt(acc) + " (" + Fmt(secs, 1) + "s); ";
  }
  return o;
}

std::string ReadBytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

Outcome Determinism() {
  EnsureNtd();
  std::vector<std::string> bytes;
  for (int run = 0; run < 2; ++run) {
    const fs::path out = Scratch() / ("determinism_" + std::to_string(run) + ".ckpt");
    const fs::path cfg = ScratchConfig("arc1", [&](json& c) {
      c["ntd_checkpoint"] = NtdCheckpoint().string();
      c["anchor_cache"] = (Scratch() / ("determinism_" + std::to_string(run) + ".jsonl")).string();
      c["output"] = out.string();
      c["training"]["epochs"] = 3;
    });
    const CliResult r = RunCli({"--quiet", "--seed", "5", "--config", cfg.string(), "train"});
    if (r.code != 0) return {false, "cmd_train exit " + std::to_string(r.code) + ": " + r.err};
    bytes.push_back(ReadBytes(out));
  }
  const bool identical = bytes[0] == bytes[1] && !bytes[0].empty();
  const std::string again = SerializeCheckpoint(DeserializeCheckpoint(bytes[0]));
  const Checkpoint loaded = LoadCheckpoint(Scratch() / "determinism_0.ckpt");
  bool tensors_exact = true;
  const Checkpoint direct = DeserializeCheckpoint(bytes[1]);
  for (const auto& [name, t] : loaded.tensors) {
    const auto& u = direct.tensors.at(name);
    tensors_exact = tensors_exact && t.shape() == u.shape() &&
                    std::memcmp(t.values().data(), u.values().data(),
                                t.size() * sizeof(double)) == 0;
  }
  const bool round_trip = again == bytes[0] && tensors_exact;
  return {identical && round_trip,
          std::to_string(bytes[0].size()) + " bytes; runs identical=" +
              (identical ? "yes" : "no") + "; round-trip exact=" + (round_trip ? "yes" : "no")};
}

Outcome MotivatingExample() {
  EnsureNtd();
  const CliResult r = RunCli({"--quiet", "anchor", "--kg", (kSource / "data/kg").string(),
                              "--anchoring", (kSource / "data/anchoring.json").string(),
                              "--ntd", NtdCheckpoint().string(), "--explain", "--text",
                              kMotivatingQuery});
  if (r.code != 0) return {false, "cmd_anchor exit " + std::to_string(r.code) + ": " + r.err};
  const json j = json::parse(r.out);
  const KnowledgeGraph kg =
      LoadKg(kSource / "data/kg/entities.jsonl", kSource / "data/kg/triples.jsonl");
  auto id = [&](const char* alias) { return kg.Normalize(*kg.ResolveAlias(alias)); };
  using Key = std::tuple<EntityId, std::string, EntityId>;
  std::set<Key> accepted;
  for (const json& t : j["triples"]) {
    accepted.insert({t["head"].get<EntityId>(), t["relation"].get<std::string>(),
                     t["tail"].get<EntityId>()});
  }
  const std::set<Key> expected = {{id("friend"), "has_operation", id("recover")},
                                  {id("friend"), "component_of", id("WeChat")}};
  bool demoted = false;
  std::string scores;
  for (const json& c : j["candidates"]) {
    scores += "(" + c["head_surface"].get<std::string>() + ", " +
              c["relation"].get<std::string>() + ", " + c["tail_surface"].get<std::string>() +
              ") final=" + Fmt(c["final"].get<double>(), 3) + "; ";
    if (c["head"] == id("WeChat") && c["relation"] == "has_operation" &&
        c["tail"] == id("recover")) {
      demoted = !c["kr_pass"].get<bool>() && !c["accepted"].get<bool>();
    }
  }
  return {accepted == expected && demoted && j["candidates"].size() == 5,
          std::to_string(accepted.size()) + " accepted, WeChat-headed recover demoted by KR=" +
              (demoted ? "yes" : "no") + "; " + scores};
}

}  // namespace
}  // namespace kaqa

int main() {
  using kaqa::Outcome;
  kaqa::SetQuiet(true);
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
      {"gradient check (ARC-I, MatchPyramid, IWAN)", kaqa::GradientChecks},
      {"orthogonal decomposition identities", kaqa::DecompositionIdentities},
      {"FMM equals brute-force oracle", kaqa::FmmOracle},
      {"disambiguation ordering RB < RB+KR < RB+KR+NTD", kaqa::DisambiguationOrdering},
      {"channel ablation ordering", kaqa::AblationOrdering},
      {"training capacity on 200 examples", kaqa::Capacity},
      {"deterministic checkpoints", kaqa::Determinism},
      {"motivating example end to end", kaqa::MotivatingExample},
  };
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failures += o.pass ? 0 : 1;
    std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << i + 1 << " — "
              << criteria[i].first << ": " << o.detail << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
