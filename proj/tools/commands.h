#ifndef KAQA_TOOLS_COMMANDS_H_
#define KAQA_TOOLS_COMMANDS_H_

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "kaqa/matchers.h"
#include "kaqa/ntd.h"
#include "kaqa/trainer.h"

namespace kaqa::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitData = 2;
inline constexpr int kExitTraining = 3;

enum class Task { kMatcher, kNtd };

// Validated train / eval / ablate configuration. Relative paths in the file
// resolve against the file's directory.
struct RunConfig {
  Task task = Task::kMatcher;
  std::filesystem::path kg_dir;
  std::filesystem::path anchoring;
  std::filesystem::path dataset;
  std::optional<std::filesystem::path> test_dataset;
  std::optional<std::filesystem::path> ntd_checkpoint;
  std::optional<std::filesystem::path> anchor_cache;
  std::optional<std::filesystem::path> output;
  MatcherConfig matcher;
  TrainOptions training;
  std::uint64_t split_seed = 1;
  NtdConfig ntd;
  std::vector<std::uint64_t> ablation_seeds;
  nlohmann::json raw;  // the file's JSON, recorded in checkpoints
};

// Throws UsageError listing every schema violation and missing input file.
RunConfig LoadRunConfig(const std::filesystem::path& path,
                        std::optional<std::uint64_t> seed_override);

struct MatchingSetup {
  KnowledgeGraph kg;
  AnchorConfig anchor;
  std::optional<NtdModel> ntd;
  MatchingData data;
};

// Loads the KG, anchoring config and NTD model named by `c`, anchors the
// matching dataset (through the anchor cache when configured) and encodes
// its 8:1:1 split.
MatchingSetup PrepareMatching(const RunConfig& c);

// Runs the command line and returns the process exit code. `args` excludes
// the program name.
int Run(const std::vector<std::string>& args, std::istream& in, std::ostream& out,
        std::ostream& err);

}  // namespace kaqa::cli

#endif  // KAQA_TOOLS_COMMANDS_H_
