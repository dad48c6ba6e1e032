#ifndef KAQA_METRICS_H_
#define KAQA_METRICS_H_

#include <span>

namespace kaqa {

// Fraction of equal entries. Throws DataError on empty or mismatched input.
double Accuracy(std::span<const int> predicted, std::span<const int> labels);

// Accuracy of `score >= threshold` against 0/1 labels.
double BinaryAccuracy(std::span<const double> scores, std::span<const int> labels,
                      double threshold = 0.5);

// Probability that a random positive outscores a random negative, ties
// counted one half. Throws DataError without both classes.
double Auc(std::span<const double> scores, std::span<const int> labels);

}  // namespace kaqa

#endif  // KAQA_METRICS_H_
