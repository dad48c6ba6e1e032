#include "kaqa/metrics.h"

#include <algorithm>
#include <numeric>
#include <string>
#include <vector>

#include "kaqa/error.h"

namespace kaqa {
namespace {

void CheckSizes(std::size_t a, std::size_t b) {
  if (a == 0) throw DataError("metric over an empty set");
  if (a != b) {
    throw DataError("metric inputs differ in length: " + std::to_string(a) + " vs " +
                    std::to_string(b));
  }
}

}  // namespace

double Accuracy(std::span<const int> predicted, std::span<const int> labels) {
  CheckSizes(predicted.size(), labels.size());
  std::size_t hits = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) hits += predicted[i] == labels[i];
  return static_cast<double>(hits) / static_cast<double>(labels.size());
}

double BinaryAccuracy(std::span<const double> scores, std::span<const int> labels,
                      double threshold) {
  CheckSizes(scores.size(), labels.size());
  std::size_t hits = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    hits += (scores[i] >= threshold ? 1 : 0) == labels[i];
  }
  return static_cast<double>(hits) / static_cast<double>(labels.size());
}

double Auc(std::span<const double> scores, std::span<const int> labels) {
  CheckSizes(scores.size(), labels.size());
  // Mann-Whitney U with midranks.
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double positive_rank_sum = 0.0;
  std::size_t positives = 0;
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() && scores[order[j + 1]] == scores[order[i]]) ++j;
    const double midrank = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) {
      if (labels[order[k]] == 1) {
        positive_rank_sum += midrank;
        ++positives;
      }
    }
    i = j + 1;
  }
  const std::size_t negatives = scores.size() - positives;
  if (positives == 0 || negatives == 0) {
    throw DataError("AUC undefined without both positive and negative examples");
  }
  const double np = static_cast<double>(positives);
  const double nn = static_cast<double>(negatives);
  return (positive_rank_sum - np * (np + 1.0) / 2.0) / (np * nn);
}

}  // namespace kaqa
