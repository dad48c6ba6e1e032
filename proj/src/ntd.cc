#include "kaqa/ntd.h"

#include <cmath>

namespace kaqa {

using ad::Tensor;
using nlohmann::json;

json NtdConfig::ToJson() const {
  return {{"buckets", buckets},       {"dim", dim},
          {"epochs", epochs},         {"batch_size", batch_size},
          {"learning_rate", learning_rate}, {"seed", seed}};
}

NtdConfig NtdConfig::FromJson(const json& j) {
  NtdConfig c;
  if (!j.is_object()) throw UsageError("ntd config must be a JSON object");
  std::vector<std::string> problems;
  auto positive = [&](const char* key, std::size_t& field) {
    if (!j.contains(key)) return;
    if (!j[key].is_number_unsigned() || j[key].get<std::uint64_t>() == 0) {
      problems.push_back(std::string("ntd.") + key + " must be a positive integer");
      return;
    }
    field = j[key].get<std::size_t>();
  };
  for (const auto& [key, value] : j.items()) {
    if (key != "buckets" && key != "dim" && key != "epochs" && key != "batch_size" &&
        key != "learning_rate" && key != "seed") {
      problems.push_back("ntd: unknown field '" + key + "'");
    }
  }
  positive("buckets", c.buckets);
  positive("dim", c.dim);
  positive("epochs", c.epochs);
  positive("batch_size", c.batch_size);
  if (j.contains("learning_rate")) {
    if (!j["learning_rate"].is_number() || j["learning_rate"].get<double>() <= 0) {
      problems.push_back("ntd.learning_rate must be a positive number");
    } else {
      c.learning_rate = j["learning_rate"].get<double>();
    }
  }
  if (j.contains("seed")) {
    if (!j["seed"].is_number_unsigned()) {
      problems.push_back("ntd.seed must be a non-negative integer");
    } else {
      c.seed = j["seed"].get<std::uint64_t>();
    }
  }
  if (!problems.empty()) {
    std::string msg = "invalid ntd config:";
    for (const auto& p : problems) msg += "\n  " + p;
    throw UsageError(msg);
  }
  return c;
}

std::vector<std::int64_t> HashFeatures(const std::vector<std::string>& features,
                                       std::size_t buckets) {
  std::vector<std::int64_t> ids;
  ids.reserve(features.size());
  for (const std::string& f : features) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : f) {
      h ^= ch;
      h *= 0x100000001b3ULL;
    }
    ids.push_back(static_cast<std::int64_t>(h % buckets));
  }
  return ids;
}

NtdModel::NtdModel(const NtdConfig& config) : config_(config) {
  Rng rng(config.seed);
  params_.CreateUniform("embedding", {config.buckets, config.dim}, config.dim, rng);
  params_.Create("w", {config.dim, 1});
  params_.Create("b", {1});
}

Tensor NtdModel::Logit(std::span<const std::int64_t> ids) const {
  if (ids.empty()) throw ShapeError("ntd: empty feature bag");
  Tensor avg = ad::MeanRows(ad::EmbeddingLookup(params_.Get("embedding"), ids));
  Tensor z = ad::MatMul(ad::Reshape(avg, {1, config_.dim}), params_.Get("w"));
  return ad::Reshape(ad::Add(z, params_.Get("b")), {1});
}

double NtdModel::ScoreIds(std::span<const std::int64_t> ids) const {
  const double z = Logit(ids).item();
  return z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
}

double NtdModel::Score(const NtdFeatureBag& bag) const {
  return ScoreIds(HashFeatures(NtdFeatureStrings(bag), config_.buckets));
}

Checkpoint NtdModel::ToCheckpoint() const {
  return MakeCheckpoint("ntd", {{"config", config_.ToJson()}}, params_);
}

NtdModel NtdModel::FromCheckpoint(const Checkpoint& ckpt) {
  if (ckpt.kind != "ntd") {
    throw DataError("expected an ntd checkpoint, got kind '" + ckpt.kind + "'");
  }
  NtdModel model(NtdConfig::FromJson(ckpt.metadata.at("config")));
  model.params_.CopyValuesFrom(ParametersFrom(ckpt));
  return model;
}

void NtdModel::Save(const std::filesystem::path& path) const {
  SaveCheckpoint(path, ToCheckpoint());
}

NtdModel NtdModel::Load(const std::filesystem::path& path) {
  return FromCheckpoint(LoadCheckpoint(path));
}

}  // namespace kaqa
