#ifndef KAQA_NTD_H_
#define KAQA_NTD_H_

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "kaqa/anchoring.h"
#include "kaqa/checkpoint.h"
#include "kaqa/optim.h"

namespace kaqa {

struct NtdConfig {
  std::size_t buckets = 1 << 14;
  std::size_t dim = 16;
  std::size_t epochs = 20;
  std::size_t batch_size = 16;
  double learning_rate = 0.01;
  std::uint64_t seed = 1;

  nlohmann::json ToJson() const;
  // Missing keys keep their defaults; unknown keys and bad values throw
  // UsageError listing every problem.
  static NtdConfig FromJson(const nlohmann::json& j);
};

// FNV-1a 64 of each feature string, reduced modulo `buckets`.
std::vector<std::int64_t> HashFeatures(const std::vector<std::string>& features,
                                       std::size_t buckets);

// Averaged hashed-feature embeddings -> linear -> logistic. The output layer
// starts at zero, so a fresh model scores 0.5 everywhere.
class NtdModel {
 public:
  explicit NtdModel(const NtdConfig& config);

  const NtdConfig& config() const { return config_; }
  ParameterSet& params() { return params_; }
  const ParameterSet& params() const { return params_; }

  double Score(const NtdFeatureBag& bag) const;
  double ScoreIds(std::span<const std::int64_t> ids) const;
  // Differentiable pre-logistic score, shape [1].
  ad::Tensor Logit(std::span<const std::int64_t> ids) const;

  Checkpoint ToCheckpoint() const;
  static NtdModel FromCheckpoint(const Checkpoint& ckpt);
  void Save(const std::filesystem::path& path) const;
  static NtdModel Load(const std::filesystem::path& path);

 private:
  NtdConfig config_;
  ParameterSet params_;
};

}  // namespace kaqa

#endif  // KAQA_NTD_H_
