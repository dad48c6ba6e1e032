#include "commands.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "kaqa/anchoring.h"
#include "kaqa/checkpoint.h"
#include "kaqa/dataset.h"
#include "kaqa/json_io.h"
#include "kaqa/kg.h"
#include "kaqa/log.h"
#include "kaqa/metrics.h"
#include "kaqa/synthetic.h"

namespace kaqa::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

std::string ReadFile(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void WriteFile(const fs::path& path, const std::string& bytes) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << bytes;
}

void WriteLines(const fs::path& path, const std::vector<std::string>& lines) {
  std::string bytes;
  for (const std::string& l : lines) bytes += l + "\n";
  WriteFile(path, bytes);
}

std::uint64_t Fnv1a(std::string_view bytes, std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string Hex(std::uint64_t v) {
  std::ostringstream s;
  s << std::hex << std::setw(16) << std::setfill('0') << v;
  return s.str();
}

std::string Fixed4(double v) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(4) << v;
  return s.str();
}

fs::path KgEntities(const fs::path& dir) { return dir / "entities.jsonl"; }
fs::path KgTriples(const fs::path& dir) { return dir / "triples.jsonl"; }

KnowledgeGraph LoadKgDir(const fs::path& dir) {
  return LoadKg(KgEntities(dir), KgTriples(dir));
}

// ---- Run config ----

RunConfig ParseRunConfig(const json& j, const fs::path& base,
                         std::optional<std::uint64_t> seed_override) {
  RunConfig c;
  c.raw = j;
  std::vector<std::string> problems;
  if (!j.is_object()) throw UsageError("config must be a JSON object");
  static const std::set<std::string> kTop = {
      "task", "kg", "anchoring", "dataset", "test_dataset", "ntd_checkpoint",
      "anchor_cache", "output", "model", "training", "ntd", "ablation"};
  for (const auto& [key, value] : j.items()) {
    if (!kTop.contains(key)) problems.push_back("unknown field '" + key + "'");
  }
  auto path_field = [&](const char* key, bool required, bool must_exist)
      -> std::optional<fs::path> {
    if (!j.contains(key)) {
      if (required) problems.push_back("missing required field '" + std::string(key) + "'");
      return std::nullopt;
    }
    if (!j[key].is_string()) {
      problems.push_back("'" + std::string(key) + "' must be a string path");
      return std::nullopt;
    }
    fs::path p = j[key].get<std::string>();
    if (p.is_relative()) p = base / p;
    if (must_exist && !fs::exists(p)) {
      problems.push_back("'" + std::string(key) + "' does not exist: " + p.string());
    }
    return p;
  };

  const std::string task = j.value("task", std::string("matcher"));
  if (task == "matcher") {
    c.task = Task::kMatcher;
  } else if (task == "ntd") {
    c.task = Task::kNtd;
  } else {
    problems.push_back("task must be 'matcher' or 'ntd', got '" + task + "'");
  }
  if (auto p = path_field("kg", true, true)) {
    c.kg_dir = *p;
    if (fs::is_directory(*p) &&
        (!fs::exists(KgEntities(*p)) || !fs::exists(KgTriples(*p)))) {
      problems.push_back("'kg' must contain entities.jsonl and triples.jsonl");
    }
  }
  if (auto p = path_field("anchoring", true, true)) c.anchoring = *p;
  if (auto p = path_field("dataset", true, true)) c.dataset = *p;
  c.test_dataset = path_field("test_dataset", false, true);
  c.ntd_checkpoint = path_field("ntd_checkpoint", false, true);
  c.anchor_cache = path_field("anchor_cache", false, false);
  c.output = path_field("output", false, false);

  if (j.contains("model")) {
    const json& m = j["model"];
    if (!m.is_object()) {
      problems.push_back("model must be an object");
    } else {
      for (const auto& [key, value] : m.items()) {
        if (key != "architecture" && key != "channels" && key != "dims") {
          problems.push_back("unknown field 'model." + key + "'");
        }
      }
      try {
        c.matcher.architecture = ParseArchitecture(m.value("architecture", std::string("arc1")));
      } catch (const std::exception& e) {
        problems.push_back(std::string("model.architecture: ") + e.what());
      }
      c.matcher.dims = DefaultDims(c.matcher.architecture);
      if (m.contains("channels")) {
        try {
          c.matcher.channels =
              ChannelSet::FromNames(m["channels"].get<std::vector<std::string>>());
        } catch (const std::exception& e) {
          problems.push_back(std::string("model.channels: ") + e.what());
        }
      }
      if (m.contains("dims")) {
        std::vector<std::string> dim_problems;
        c.matcher.dims = DimsFromJson(m["dims"], c.matcher.dims, &dim_problems);
        for (const auto& p : dim_problems) problems.push_back("model.dims: " + p);
      }
    }
  }
  if (!c.matcher.channels.token && !c.matcher.channels.entity && !c.matcher.channels.triple) {
    problems.push_back("model.channels must enable at least one channel");
  }

  if (j.contains("training")) {
    const json& t = j["training"];
    if (!t.is_object()) {
      problems.push_back("training must be an object");
    } else {
      for (const auto& [key, value] : t.items()) {
        const bool known = key == "batch_size" || key == "learning_rate" || key == "epochs" ||
                           key == "seed" || key == "split_seed";
        if (!known) {
          problems.push_back("unknown field 'training." + key + "'");
        } else if (!value.is_number()) {
          problems.push_back("training." + key + " must be a number");
        }
      }
      auto count = [&](const char* key, std::size_t& dst, long long lo) {
        if (!t.contains(key) || !t[key].is_number()) return;
        const double v = t[key].get<double>();
        if (v < static_cast<double>(lo) || v != std::floor(v)) {
          problems.push_back("training." + std::string(key) + " must be an integer >= " +
                             std::to_string(lo));
        } else {
          dst = static_cast<std::size_t>(v);
        }
      };
      count("batch_size", c.training.batch_size, 1);
      count("epochs", c.training.epochs, 1);
      std::size_t seed = c.training.seed, split = c.split_seed;
      count("seed", seed, 0);
      count("split_seed", split, 0);
      c.training.seed = seed;
      c.split_seed = split;
      if (t.contains("learning_rate") && t["learning_rate"].is_number()) {
        c.training.learning_rate = t["learning_rate"].get<double>();
        if (!(c.training.learning_rate > 0.0) || !std::isfinite(c.training.learning_rate)) {
          problems.push_back("training.learning_rate must be positive and finite");
        }
      }
    }
  }
  if (j.contains("ntd")) {
    try {
      c.ntd = NtdConfig::FromJson(j["ntd"]);
    } catch (const UsageError& e) {
      problems.push_back(std::string("ntd: ") + e.what());
    }
  }
  if (seed_override) {
    c.training.seed = *seed_override;
    c.ntd.seed = *seed_override;
  }
  c.ablation_seeds = {c.training.seed, c.training.seed + 1, c.training.seed + 2};
  if (j.contains("ablation")) {
    const json& a = j["ablation"];
    if (!a.is_object()) {
      problems.push_back("ablation must be an object");
    } else {
      for (const auto& [key, value] : a.items()) {
        if (key != "seeds") problems.push_back("unknown field 'ablation." + key + "'");
      }
      if (a.contains("seeds")) {
        if (!a["seeds"].is_array() || a["seeds"].empty()) {
          problems.push_back("ablation.seeds must be a nonempty array");
        } else {
          c.ablation_seeds.clear();
          for (const json& s : a["seeds"]) {
            if (!s.is_number_unsigned()) {
              problems.push_back("ablation.seeds entries must be nonnegative integers");
              break;
            }
            c.ablation_seeds.push_back(s.get<std::uint64_t>());
          }
        }
      }
    }
  }
  if (!problems.empty()) {
    std::string msg = "invalid config (" + std::to_string(problems.size()) + " problem" +
                      (problems.size() == 1 ? "" : "s") + "):";
    for (const auto& p : problems) msg += "\n  - " + p;
    throw UsageError(msg);
  }
  return c;
}

// ---- Shared pipeline pieces ----

std::optional<NtdModel> LoadNtdOrWarn(const std::optional<fs::path>& path) {
  if (!path) {
    LogWarning("no NTD model given; anchoring falls back to RB+KR");
    return std::nullopt;
  }
  if (!fs::exists(*path)) {
    LogWarning("NTD model " + path->string() + " not found; anchoring falls back to RB+KR");
    return std::nullopt;
  }
  return NtdModel::Load(*path);
}

std::string AnchorFingerprint(const fs::path& kg_dir, const fs::path& anchoring,
                              const std::optional<NtdModel>& ntd) {
  std::uint64_t h = Fnv1a(ReadFile(KgEntities(kg_dir)));
  h = Fnv1a(ReadFile(KgTriples(kg_dir)), h);
  h = Fnv1a(ReadFile(anchoring), h);
  h = Fnv1a(ntd ? SerializeCheckpoint(ntd->ToCheckpoint()) : std::string("no-ntd"), h);
  return Hex(h);
}

}  // namespace

MatchingSetup PrepareMatching(const RunConfig& c) {
  MatchingSetup s{LoadKgDir(c.kg_dir), LoadAnchorConfig(c.anchoring), std::nullopt, {}};
  s.ntd = LoadNtdOrWarn(c.ntd_checkpoint);
  const auto examples = LoadMatchDataset(c.dataset);
  std::vector<std::string> texts;
  for (const auto& ex : examples) {
    texts.push_back(ex.query);
    texts.push_back(ex.title);
  }
  AnchorCache cache;
  std::string fingerprint;
  if (c.anchor_cache) {
    fingerprint = AnchorFingerprint(c.kg_dir, c.anchoring, s.ntd);
    if (fs::exists(*c.anchor_cache)) cache = LoadAnchorCache(*c.anchor_cache, fingerprint);
  }
  const std::size_t before = cache.size();
  AnchorTexts(texts, s.kg, s.anchor, s.ntd ? &*s.ntd : nullptr, cache);
  if (c.anchor_cache && cache.size() != before) {
    SaveAnchorCache(*c.anchor_cache, cache, fingerprint);
  }
  LogInfo("anchored " + std::to_string(cache.size()) + " texts (" +
          std::to_string(cache.size() - before) + " new)");
  s.data = EncodeMatching(SplitDataset(examples, c.split_seed), s.kg, cache, c.matcher.dims,
                          s.anchor.tokenizer);
  return s;
}

namespace {

MatcherConfig SizedConfig(const RunConfig& c, const MatchingData& data) {
  MatcherConfig m = c.matcher;
  m.token_vocab = data.vocab.size();
  m.entity_vocab = data.entities.size();
  return m;
}

void LogEpoch(const EpochStats& e) {
  std::ostringstream s;
  s << "epoch " << e.epoch << " train_loss " << Fixed4(e.train_loss) << " train_acc "
    << Fixed4(e.train_accuracy) << " valid_loss " << Fixed4(e.valid_loss) << " valid_acc "
    << Fixed4(e.valid_accuracy);
  LogInfo(s.str());
}

// Held-out NTD validation queries: every row of a query lands on one side.
std::pair<std::vector<DisambExample>, std::vector<DisambExample>> SplitByQuery(
    const std::vector<DisambExample>& xs, std::uint64_t seed) {
  std::vector<std::string> queries;
  std::set<std::string> seen;
  for (const auto& x : xs) {
    if (seen.insert(x.query).second) queries.push_back(x.query);
  }
  Rng rng(seed);
  rng.Shuffle(std::span<std::string>(queries));
  const std::set<std::string> valid(queries.begin(), queries.begin() + queries.size() / 10);
  std::pair<std::vector<DisambExample>, std::vector<DisambExample>> out;
  for (const auto& x : xs) (valid.contains(x.query) ? out.second : out.first).push_back(x);
  return out;
}

// ---- Commands ----

struct Globals {
  std::optional<std::uint64_t> seed;
  std::string config;
  bool quiet = false;
};

RunConfig RequireRunConfig(const Globals& g) {
  if (g.config.empty()) throw UsageError("--config is required");
  return LoadRunConfig(g.config, g.seed);
}

struct SynthArgs {
  std::string out = "data";
  std::size_t match = 3000;
  std::size_t disamb_train = 1200;
  std::size_t disamb_test = 400;
  std::size_t corpus = 300;
  double alias_skew = 1.0;
  double distractor_rate = 0.8;
};

int CmdSynth(const Globals& g, const SynthArgs& a, std::ostream& out) {
  const std::uint64_t seed = g.seed.value_or(1);
  const fs::path root = a.out;
  const KnowledgeGraph kg = SyntheticKg();
  fs::create_directories(root / "kg");
  fs::create_directories(root / "synthetic");
  SaveKg(kg, root / "kg" / "entities.jsonl", root / "kg" / "triples.jsonl");
  std::vector<std::string> patterns;
  for (const Pattern& p : SyntheticPatterns()) {
    patterns.push_back(json{{"pattern", p.text},
                            {"relation", RelationName(p.relation)},
                            {"head", p.head_slot},
                            {"tail", p.tail_slot}}
                           .dump());
  }
  WriteLines(root / "kg" / "patterns.jsonl", patterns);
  WriteLines(root / "kg" / "corpus.txt", SyntheticCorpus(kg, a.corpus, seed));

  SyntheticOptions opts;
  opts.alias_skew = a.alias_skew;
  opts.distractor_rate = a.distractor_rate;
  opts.seed = seed;
  SaveMatchDataset(root / "synthetic" / "match.tsv",
                   SyntheticGenerator(kg, opts).Matching(a.match));
  opts.seed = seed + 1;
  SaveDisambDataset(root / "synthetic" / "disamb_train.tsv",
                    SyntheticGenerator(kg, opts).Disambiguation(a.disamb_train, true));
  opts.seed = seed + 2;
  SaveDisambDataset(root / "synthetic" / "disamb_test.tsv",
                    SyntheticGenerator(kg, opts).Disambiguation(a.disamb_test, false));
  out << "wrote synthetic KG and datasets under " << root.string() << "\n";
  return kExitOk;
}

struct BuildKgArgs {
  std::string entities;
  std::string triples;
  std::string corpus;
  std::string patterns;
  std::size_t min_count = 2;
  std::string out;
};

json StatsJson(const KgStats& s) {
  return json{{"entities", s.entities},
              {"normalized_entities", s.normalized_entities},
              {"triples", s.triples},
              {"per_relation", s.per_relation}};
}

int CmdBuildKg(const BuildKgArgs& a, std::ostream& out) {
  if (a.corpus.empty() != a.patterns.empty()) {
    throw UsageError("--corpus and --patterns must be given together");
  }
  KnowledgeGraph kg = LoadKg(a.entities, a.triples);
  if (!a.corpus.empty()) {
    const auto patterns = LoadPatterns(a.patterns);
    std::vector<std::string> corpus;
    std::istringstream lines(ReadFile(a.corpus));
    for (std::string line; std::getline(lines, line);) corpus.push_back(line);
    std::vector<Entity> entities;
    for (const auto& [id, e] : kg.entities()) entities.push_back(e);
    std::vector<Triple> triples = kg.triples();
    std::size_t added = 0;
    for (const auto& b : BootstrapTriples(corpus, patterns, kg)) {
      if (b.count < a.min_count) continue;
      if (kg.HasNormalizedTriple(b.triple.head, b.triple.relation, b.triple.tail)) continue;
      triples.push_back(b.triple);
      ++added;
    }
    LogInfo("bootstrapping added " + std::to_string(added) + " triples");
    kg = KnowledgeGraph::Build(std::move(entities), std::move(triples), a.entities, a.triples);
  }
  const json stats = StatsJson(ComputeStats(kg));
  if (!a.out.empty()) {
    fs::create_directories(a.out);
    SaveKg(kg, KgEntities(a.out), KgTriples(a.out));
    WriteFile(fs::path(a.out) / "stats.json", stats.dump(2) + "\n");
  }
  out << stats.dump() << "\n";
  return kExitOk;
}

struct AnchorArgs {
  std::string kg = "data/kg";
  std::string anchoring = "data/anchoring.json";
  std::string ntd;
  std::optional<double> threshold;
  std::vector<std::string> texts;
  std::string input;
  bool explain = false;
};

int CmdAnchor(const AnchorArgs& a, std::istream& in, std::ostream& out) {
  const KnowledgeGraph kg = LoadKgDir(a.kg);
  AnchorConfig config = LoadAnchorConfig(a.anchoring);
  if (a.threshold) {
    if (*a.threshold < 0.0 || *a.threshold > 1.0) {
      throw UsageError("--threshold must lie in [0, 1]");
    }
    config.threshold = *a.threshold;
  }
  const std::optional<NtdModel> ntd =
      LoadNtdOrWarn(a.ntd.empty() ? std::nullopt : std::optional<fs::path>(a.ntd));
  auto emit = [&](const std::string& text) {
    const AnchorTrace trace = AnchorDetailed(text, kg, ntd ? &*ntd : nullptr, config);
    const json j = a.explain ? ExplainJson(trace, config.threshold)
                             : AnchorSetToJson(trace.anchors);
    out << j.dump() << "\n";
  };
  if (!a.texts.empty()) {
    for (const std::string& t : a.texts) emit(t);
    return kExitOk;
  }
  std::ifstream file;
  if (!a.input.empty()) {
    file.open(a.input);
    if (!file) throw DataError("cannot open " + a.input);
  }
  std::istream& src = a.input.empty() ? in : file;
  for (std::string line; std::getline(src, line);) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    emit(line);
  }
  return kExitOk;
}

int TrainNtdTask(const RunConfig& c, std::ostream& out) {
  const KnowledgeGraph kg = LoadKgDir(c.kg_dir);
  const AnchorConfig anchor = LoadAnchorConfig(c.anchoring);
  const auto [train_rows, valid_rows] = SplitByQuery(LoadDisambDataset(c.dataset), c.split_seed);
  std::size_t unmatched = 0;
  const auto train = PrepareDisambiguation(train_rows, kg, anchor, &unmatched);
  const auto valid = PrepareDisambiguation(valid_rows, kg, anchor, &unmatched);
  if (unmatched > 0) {
    LogWarning(std::to_string(unmatched) + " disambiguation rows name no generated candidate");
  }
  NtdTrainResult r = TrainNtd(train, valid, c.ntd);
  out << "ntd best_epoch " << r.best_epoch << " valid_accuracy "
      << Fixed4(r.best_valid_accuracy) << "\n";
  if (c.output) {
    if (c.output->has_parent_path()) fs::create_directories(c.output->parent_path());
    r.model.Save(*c.output);
    LogInfo("wrote " + c.output->string());
  }
  return kExitOk;
}

int CmdTrain(const Globals& g, std::ostream& out) {
  const RunConfig c = RequireRunConfig(g);
  if (!c.output) throw UsageError("train needs 'output' in the config");
  if (c.task == Task::kNtd) return TrainNtdTask(c, out);
  MatchingSetup s = PrepareMatching(c);
  MatcherTrainResult r = TrainMatcher(SizedConfig(c, s.data), c.training, s.data.train,
                                      s.data.valid, LogEpoch);
  if (c.output->has_parent_path()) fs::create_directories(c.output->parent_path());
  json training = c.raw.value("training", json::object());
  training["seed"] = c.training.seed;
  SaveCheckpoint(*c.output, MatcherCheckpoint(r.model, s.data.vocab, s.data.entities,
                                              s.anchor.tokenizer, training));
  out << "best_epoch " << r.best_epoch << " valid_accuracy " << Fixed4(r.best_valid_accuracy)
      << "\n";
  LogInfo("wrote " + c.output->string());
  return kExitOk;
}

struct EvalArgs {
  std::string checkpoint;
  std::size_t runs = 1;
};

int EvalNtdTask(const RunConfig& c, const EvalArgs& a, std::ostream& out) {
  if (!c.test_dataset) throw UsageError("ntd eval needs 'test_dataset' in the config");
  const KnowledgeGraph kg = LoadKgDir(c.kg_dir);
  const AnchorConfig anchor = LoadAnchorConfig(c.anchoring);
  std::size_t unmatched = 0;
  const auto xs = PrepareDisambiguation(LoadDisambDataset(*c.test_dataset), kg, anchor,
                                        &unmatched);
  if (unmatched > 0) {
    LogWarning(std::to_string(unmatched) + " disambiguation rows name no generated candidate");
  }
  std::optional<NtdModel> ntd;
  if (!a.checkpoint.empty()) {
    ntd = NtdModel::Load(a.checkpoint);
  } else if (c.output && fs::exists(*c.output)) {
    ntd = NtdModel::Load(*c.output);
  }
  for (DisambScorer s :
       {DisambScorer::kRuleBased, DisambScorer::kRuleBasedKr, DisambScorer::kEnsemble}) {
    if (s == DisambScorer::kEnsemble && !ntd) {
      LogWarning("no NTD checkpoint; skipping " + std::string(DisambScorerName(s)));
      continue;
    }
    const DisambMetrics m = EvaluateDisambiguation(xs, s, anchor, ntd ? &*ntd : nullptr);
    out << DisambScorerName(s) << "\t" << Fixed4(m.accuracy) << "\t" << Fixed4(m.auc) << "\n";
  }
  return kExitOk;
}

int CmdEval(const Globals& g, const EvalArgs& a, std::ostream& out) {
  const RunConfig c = RequireRunConfig(g);
  if (a.runs < 1) throw UsageError("--runs must be at least 1");
  if (c.task == Task::kNtd) return EvalNtdTask(c, a, out);
  if (a.runs == 1) {
    const fs::path path = !a.checkpoint.empty() ? fs::path(a.checkpoint)
                          : c.output            ? *c.output
                                                : fs::path();
    if (path.empty()) throw UsageError("eval needs --checkpoint or 'output' in the config");
    const LoadedMatcher m = MatcherFromCheckpoint(LoadCheckpoint(path));
    const KnowledgeGraph kg = LoadKgDir(c.kg_dir);
    const AnchorConfig anchor = LoadAnchorConfig(c.anchoring);
    const std::optional<NtdModel> ntd = LoadNtdOrWarn(c.ntd_checkpoint);
    const auto split = SplitDataset(LoadMatchDataset(c.dataset), c.split_seed);
    std::vector<std::string> texts;
    for (const auto& ex : split.test) {
      texts.push_back(ex.query);
      texts.push_back(ex.title);
    }
    AnchorCache cache;
    AnchorTexts(texts, kg, anchor, ntd ? &*ntd : nullptr, cache);
    std::vector<EncodedExample> test;
    for (const auto& ex : split.test) {
      test.push_back(EncodeExample(ex, cache, m.vocab, m.entities, m.model.config().dims,
                                   m.mode));
    }
    out << "accuracy\t" << Fixed4(EvaluateAccuracy(m.model, test)) << "\n";
    return kExitOk;
  }
  MatchingSetup s = PrepareMatching(c);
  double total = 0.0;
  for (std::size_t run = 0; run < a.runs; ++run) {
    TrainOptions opts = c.training;
    opts.seed = c.training.seed + run;
    MatcherTrainResult r =
        TrainMatcher(SizedConfig(c, s.data), opts, s.data.train, s.data.valid);
    const double acc = EvaluateAccuracy(r.model, s.data.test);
    LogInfo("run " + std::to_string(run + 1) + " seed " + std::to_string(opts.seed) +
            " accuracy " + Fixed4(acc));
    total += acc;
  }
  out << "accuracy\t" << Fixed4(total / static_cast<double>(a.runs)) << "\n";
  return kExitOk;
}

int CmdAblate(const Globals& g, const std::string& report, std::ostream& out) {
  const RunConfig c = RequireRunConfig(g);
  if (c.task != Task::kMatcher) throw UsageError("ablate needs a matcher config");
  MatchingSetup s = PrepareMatching(c);
  const auto rows = RunAblation(SizedConfig(c, s.data), c.training, c.ablation_seeds, s.data,
                                StandardAblationGrid(),
                                [](const std::string& m) { LogInfo(m); });
  std::ostringstream tsv;
  for (const AblationRow& r : rows) tsv << r.name << "\t" << Fixed4(r.mean_accuracy) << "\n";
  out << tsv.str();
  if (!report.empty()) WriteFile(report, tsv.str());
  return kExitOk;
}

struct MatchArgs {
  std::string kg = "data/kg";
  std::string anchoring = "data/anchoring.json";
  std::string ntd;
  std::string checkpoint;
  std::string index;
  std::size_t k = 5;
};

std::string TripleText(const KnowledgeGraph& kg, const TripleCandidate& t) {
  return "(" + kg.entity(t.head.entity).canonical_name + ", " +
         std::string(RelationName(t.relation)) + ", " +
         kg.entity(t.tail.entity).canonical_name + ")";
}

int CmdMatch(const MatchArgs& a, std::istream& in, std::ostream& out) {
  if (a.k < 1) throw UsageError("-k must be at least 1");
  const KnowledgeGraph kg = LoadKgDir(a.kg);
  const AnchorConfig anchor = LoadAnchorConfig(a.anchoring);
  const std::optional<NtdModel> ntd =
      LoadNtdOrWarn(a.ntd.empty() ? std::nullopt : std::optional<fs::path>(a.ntd));
  const LoadedMatcher m = MatcherFromCheckpoint(LoadCheckpoint(a.checkpoint));
  std::vector<std::string> titles;
  {
    std::istringstream lines(ReadFile(a.index));
    for (std::string line; std::getline(lines, line);) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      line = line.substr(0, line.find('\t'));
      if (!line.empty()) titles.push_back(line);
    }
  }
  if (titles.empty()) throw DataError("index " + a.index + " has no titles");
  const NtdModel* ntd_ptr = ntd ? &*ntd : nullptr;
  AnchorCache cache;
  AnchorTexts(titles, kg, anchor, ntd_ptr, cache);
  std::vector<ChannelizedInput> encoded;
  for (const auto& t : titles) {
    encoded.push_back(EncodeChannels(t, cache.at(t), m.vocab, m.entities,
                                     m.model.config().dims, m.mode));
  }
  out << "> " << std::flush;
  for (std::string line; std::getline(in, line); out << "> " << std::flush) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    try {
      const AnchorSet qa = Anchor(line, kg, ntd_ptr, anchor);
      const ChannelizedInput q =
          EncodeChannels(line, qa, m.vocab, m.entities, m.model.config().dims, m.mode);
      std::vector<std::pair<std::array<double, 3>, std::size_t>> scored;
      for (std::size_t i = 0; i < titles.size(); ++i) {
        scored.emplace_back(m.model.Predict(q, encoded[i]), i);
      }
      std::stable_sort(scored.begin(), scored.end(), [](const auto& x, const auto& y) {
        if (x.first[kSimilar] != y.first[kSimilar]) {
          return x.first[kSimilar] > y.first[kSimilar];
        }
        return x.first[kRelated] > y.first[kRelated];
      });
      std::string anchors;
      for (const auto& t : qa.triples) anchors += (anchors.empty() ? "" : " ") + TripleText(kg, t);
      out << "anchors: " << (anchors.empty() ? "-" : anchors) << "\n";
      for (std::size_t r = 0; r < std::min(a.k, scored.size()); ++r) {
        const auto& [p, i] = scored[r];
        const int label = static_cast<int>(std::max_element(p.begin(), p.end()) - p.begin());
        std::string shared;
        for (const auto& t : cache.at(titles[i]).triples) {
          for (const auto& u : qa.triples) {
            if (t.head.entity == u.head.entity && t.relation == u.relation &&
                t.tail.entity == u.tail.entity) {
              shared += (shared.empty() ? "" : " ") + TripleText(kg, t);
            }
          }
        }
        out << r + 1 << "\t" << kLabelNames[label] << "\t" << Fixed4(p[kSimilar]) << "\t"
            << Fixed4(p[kRelated]) << "\t" << Fixed4(p[kUnrelated]) << "\t" << titles[i]
            << "\t" << (shared.empty() ? "-" : shared) << "\n";
      }
    } catch (const Error& e) {
      out << "error: " << e.what() << "\n";
    }
  }
  out << "\n";
  return kExitOk;
}

}  // namespace

RunConfig LoadRunConfig(const fs::path& path, std::optional<std::uint64_t> seed_override) {
  json j;
  try {
    j = json::parse(ReadFile(path));
  } catch (const json::parse_error& e) {
    throw UsageError(path.string() + ": " + e.what());
  } catch (const DataError& e) {
    throw UsageError(e.what());
  }
  return ParseRunConfig(j, path.parent_path(), seed_override);
}

int Run(const std::vector<std::string>& args, std::istream& in, std::ostream& out,
        std::ostream& err) {
  CLI::App app{"Knowledge-anchor FAQ matching toolkit", "kaqa"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  std::uint64_t seed = 0;
  auto* seed_opt = app.add_option("--seed", seed, "Random seed override");
  app.add_option("--config", g.config, "JSON run configuration");
  app.add_flag("--quiet", g.quiet, "Suppress informational logging");

  SynthArgs synth;
  auto* synth_cmd = app.add_subcommand("synth", "Write the synthetic KG and datasets");
  synth_cmd->add_option("--out", synth.out, "Output root directory");
  synth_cmd->add_option("--match", synth.match, "Matching pairs");
  synth_cmd->add_option("--disamb-train", synth.disamb_train, "Training queries");
  synth_cmd->add_option("--disamb-test", synth.disamb_test, "Test queries");
  synth_cmd->add_option("--corpus", synth.corpus, "Bootstrapping corpus lines");
  synth_cmd->add_option("--alias-skew", synth.alias_skew, "Zipf exponent over aliases");
  synth_cmd->add_option("--distractor-rate", synth.distractor_rate,
                        "Share of queries with a distractor operation");

  BuildKgArgs build;
  auto* build_cmd = app.add_subcommand("build-kg", "Validate a KG and print its stats");
  build_cmd->add_option("--entities", build.entities, "entities.jsonl")->required();
  build_cmd->add_option("--triples", build.triples, "triples.jsonl")->required();
  build_cmd->add_option("--corpus", build.corpus, "Corpus for pattern bootstrapping");
  build_cmd->add_option("--patterns", build.patterns, "Pattern JSONL");
  build_cmd->add_option("--min-count", build.min_count, "Minimum pattern matches");
  build_cmd->add_option("--out", build.out, "Directory for the normalized KG");

  AnchorArgs anchor;
  std::optional<double> threshold;
  auto* anchor_cmd = app.add_subcommand("anchor", "Print knowledge anchors as JSON lines");
  anchor_cmd->add_option("--kg", anchor.kg, "KG directory");
  anchor_cmd->add_option("--anchoring", anchor.anchoring, "Anchoring config JSON");
  anchor_cmd->add_option("--ntd", anchor.ntd, "NTD checkpoint");
  anchor_cmd->add_option("--threshold", threshold, "Acceptance threshold");
  anchor_cmd->add_option("--text", anchor.texts, "Text to anchor (repeatable)");
  anchor_cmd->add_option("--input", anchor.input, "File with one text per line");
  anchor_cmd->add_flag("--explain", anchor.explain, "Include per-candidate scores");

  auto* train_cmd = app.add_subcommand("train", "Train a matcher or NTD model");

  EvalArgs eval;
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a matcher or the disambiguators");
  eval_cmd->add_option("--checkpoint", eval.checkpoint, "Checkpoint to evaluate");
  eval_cmd->add_option("--runs", eval.runs, "Average test accuracy over N training seeds");

  std::string report;
  auto* ablate_cmd = app.add_subcommand("ablate", "Channel ablation report");
  ablate_cmd->add_option("--report", report, "Also write the TSV here");

  MatchArgs match;
  auto* match_cmd = app.add_subcommand("match", "Interactive FAQ matching loop");
  match_cmd->add_option("--kg", match.kg, "KG directory");
  match_cmd->add_option("--anchoring", match.anchoring, "Anchoring config JSON");
  match_cmd->add_option("--ntd", match.ntd, "NTD checkpoint");
  match_cmd->add_option("--checkpoint", match.checkpoint, "Matcher checkpoint")->required();
  match_cmd->add_option("--index", match.index, "Titles, one per line")->required();
  match_cmd->add_option("-k", match.k, "Results per query");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  if (seed_opt->count() > 0) g.seed = seed;
  const bool was_quiet = IsQuiet();
  SetQuiet(g.quiet);
  anchor.threshold = threshold;
  int code = kExitOk;
  try {
    if (synth_cmd->parsed()) {
      code = CmdSynth(g, synth, out);
    } else if (build_cmd->parsed()) {
      code = CmdBuildKg(build, out);
    } else if (anchor_cmd->parsed()) {
      code = CmdAnchor(anchor, in, out);
    } else if (train_cmd->parsed()) {
      code = CmdTrain(g, out);
    } else if (eval_cmd->parsed()) {
      code = CmdEval(g, eval, out);
    } else if (ablate_cmd->parsed()) {
      code = CmdAblate(g, report, out);
    } else if (match_cmd->parsed()) {
      code = CmdMatch(match, in, out);
    }
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    code = kExitUsage;
  } catch (const TrainingError& e) {
    err << "training failed: " << e.what() << "\n";
    code = kExitTraining;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    code = kExitData;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    code = kExitData;
  }
  SetQuiet(was_quiet);
  return code;
}

}  // namespace kaqa::cli
