#ifndef KAQA_CHECKPOINT_H_
#define KAQA_CHECKPOINT_H_

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

#include "json.hpp"
#include "kaqa/optim.h"
#include "kaqa/tensor.h"

namespace kaqa {

inline constexpr std::uint32_t kCheckpointVersion = 1;

// Binary model container:
//   "KAQACKPT" | u32 version | string kind | u64 config hash |
//   string metadata JSON | u64 tensor count |
//   per tensor: string name | u64 rank | u64 dims... | raw f64 values
// Strings are u64 length + bytes; all integers and doubles little-endian.
// The config hash covers metadata["config"].
struct Checkpoint {
  std::string kind;
  nlohmann::json metadata = nlohmann::json::object();
  std::map<std::string, ad::Tensor> tensors;
};

// FNV-1a 64 over the canonical (sorted-key, compact) JSON dump.
std::uint64_t ConfigHash(const nlohmann::json& config);

std::string SerializeCheckpoint(const Checkpoint& ckpt);
Checkpoint DeserializeCheckpoint(const std::string& bytes);

void SaveCheckpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
// Throws DataError on bad magic, unknown version, truncation or hash mismatch.
Checkpoint LoadCheckpoint(const std::filesystem::path& path);

Checkpoint MakeCheckpoint(const std::string& kind, nlohmann::json metadata,
                          const ParameterSet& params);
// Parameters (requires_grad on) from a checkpoint's tensors.
ParameterSet ParametersFrom(const Checkpoint& ckpt);

}  // namespace kaqa

#endif  // KAQA_CHECKPOINT_H_
