#ifndef KAQA_RANDOM_H_
#define KAQA_RANDOM_H_

#include <cstdint>
#include <random>
#include <span>
#include <utility>

namespace kaqa {

// Seeded generator whose derived draws do not depend on the standard
// library's distribution implementations, so results are reproducible
// across toolchains.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t NextU64() { return engine_(); }

  // Uniform in [0, 1).
  double Uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double Uniform(double lo, double hi) { return lo + (hi - lo) * Uniform(); }

  // Uniform integer in [0, n). n must be positive.
  std::uint64_t Below(std::uint64_t n) {
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x;
    do {
      x = engine_();
    } while (x >= limit);
    return x % n;
  }

  bool Bernoulli(double p) { return Uniform() < p; }

  template <typename T>
  void Shuffle(std::span<T> items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::swap(items[i - 1], items[Below(i)]);
    }
  }

  template <typename Container>
  const auto& Pick(const Container& c) {
    return c[Below(c.size())];
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace kaqa

#endif  // KAQA_RANDOM_H_
