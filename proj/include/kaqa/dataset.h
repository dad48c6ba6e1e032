#ifndef KAQA_DATASET_H_
#define KAQA_DATASET_H_

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "kaqa/error.h"
#include "kaqa/kg.h"
#include "kaqa/random.h"

namespace kaqa {

inline constexpr int kUnrelated = 0;
inline constexpr int kRelated = 1;
inline constexpr int kSimilar = 2;

struct MatchExample {
  std::string query;
  std::string title;
  int label = kUnrelated;

  bool operator==(const MatchExample&) const = default;
};

// One labeled triple candidate of a query, named by its mention surfaces.
struct DisambExample {
  std::string query;
  std::string head;
  RelationKind relation = RelationKind::kHasOperation;
  std::string tail;
  int label = 0;

  bool operator==(const DisambExample&) const = default;
};

// query \t title \t label(0/1/2), no header. Errors name file and line.
std::vector<MatchExample> LoadMatchDataset(const std::filesystem::path& path);
void SaveMatchDataset(const std::filesystem::path& path,
                      const std::vector<MatchExample>& examples);

// query \t head \t relation \t tail \t label(0/1).
std::vector<DisambExample> LoadDisambDataset(const std::filesystem::path& path);
void SaveDisambDataset(const std::filesystem::path& path,
                       const std::vector<DisambExample>& examples);

template <typename T>
struct Split {
  std::vector<T> train;
  std::vector<T> valid;
  std::vector<T> test;
};

// Sizes of an 8:1:1 split of n items: train floor(8n/10), valid floor(n/10),
// test the remainder.
struct SplitSizes {
  std::size_t train;
  std::size_t valid;
  std::size_t test;
};
SplitSizes ComputeSplitSizes(std::size_t n);

// Deterministic shuffled 8:1:1 partition. Throws DataError below 10 items.
template <typename T>
Split<T> SplitDataset(std::vector<T> items, std::uint64_t seed) {
  if (items.size() < 10) {
    throw DataError("split needs at least 10 examples, got " +
                    std::to_string(items.size()));
  }
  Rng rng(seed);
  rng.Shuffle(std::span<T>(items));
  const SplitSizes sizes = ComputeSplitSizes(items.size());
  Split<T> out;
  auto it = std::make_move_iterator(items.begin());
  out.train.assign(it, it + sizes.train);
  out.valid.assign(it + sizes.train, it + sizes.train + sizes.valid);
  out.test.assign(it + sizes.train + sizes.valid, std::make_move_iterator(items.end()));
  return out;
}

}  // namespace kaqa

#endif  // KAQA_DATASET_H_
