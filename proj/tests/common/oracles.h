#ifndef KAQA_TESTS_COMMON_ORACLES_H_
#define KAQA_TESTS_COMMON_ORACLES_H_

#include <set>
#include <string>
#include <utility>
#include <vector>

#include "kaqa/kg.h"
#include "kaqa/random.h"

// Independent reference implementations shared by unit and acceptance tests.
namespace kaqa::oracles {

// Longest-first segmentation by exhaustive search: at each position every
// span length up to the end of the sequence is tried, longest first.
// Returns (first token, end token, alias) triples.
inline std::vector<std::pair<std::pair<std::size_t, std::size_t>, std::string>> FmmSegments(
    const std::vector<std::string>& tokens, const std::set<std::string>& dictionary) {
  std::vector<std::pair<std::pair<std::size_t, std::size_t>, std::string>> out;
  std::size_t i = 0;
  while (i < tokens.size()) {
    std::size_t best = 0;
    std::string best_surface;
    for (std::size_t len = 1; i + len <= tokens.size(); ++len) {
      std::string s;
      for (std::size_t k = i; k < i + len; ++k) s += (k > i ? " " : "") + tokens[k];
      if (dictionary.contains(s)) {
        best = len;
        best_surface = s;
      }
    }
    if (best == 0) {
      ++i;
    } else {
      out.push_back({{i, i + best}, best_surface});
      i += best;
    }
  }
  return out;
}

// Random dictionary over a small lowercase vocabulary, aliases of 1-3 words,
// each alias its own entity.
struct RandomDictionary {
  std::vector<std::string> words;
  std::set<std::string> aliases;
};

inline RandomDictionary MakeRandomDictionary(Rng& rng) {
  RandomDictionary d;
  const std::size_t vocab = 4 + rng.Below(5);
  for (std::size_t i = 0; i < vocab; ++i) d.words.push_back(std::string(1, char('a' + i)));
  const std::size_t n = 1 + rng.Below(10);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t len = 1 + rng.Below(3);
    std::string s;
    for (std::size_t k = 0; k < len; ++k) s += (k ? " " : "") + d.words[rng.Below(vocab)];
    d.aliases.insert(s);
  }
  return d;
}

inline KnowledgeGraph DictionaryKg(const RandomDictionary& d) {
  std::vector<Entity> entities;
  EntityId id = 1;
  for (const std::string& a : d.aliases) entities.push_back(Entity{id++, a, {a}, "x"});
  return KnowledgeGraph::Build(std::move(entities), {});
}

// AUC as the fraction of (positive, negative) pairs ranked correctly, ties
// counting one half.
inline double PairwiseAuc(const std::vector<double>& scores, const std::vector<int>& labels) {
  double wins = 0.0;
  double pairs = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (labels[i] != 1) continue;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (labels[j] != 0) continue;
      pairs += 1.0;
      if (scores[i] > scores[j]) {
        wins += 1.0;
      } else if (scores[i] == scores[j]) {
        wins += 0.5;
      }
    }
  }
  return wins / pairs;
}

}  // namespace kaqa::oracles

#endif  // KAQA_TESTS_COMMON_ORACLES_H_
