#include <cmath>

#include "doctest.h"
#include "kaqa/optim.h"

namespace kaqa {
namespace {

using ad::Tensor;

TEST_CASE("first Adam step moves each weight by lr against the gradient sign") {
  ParameterSet params;
  Tensor& w = params.Create("w", {4});
  const std::vector<double> start = {0.5, -0.25, 1.0, 0.0};
  const std::vector<double> g = {3.0, -0.02, 1e-3, -40.0};
  std::copy(start.begin(), start.end(), w.mutable_values().begin());
  std::copy(g.begin(), g.end(), w.mutable_grad().begin());
  AdamOptions opts;
  opts.learning_rate = 0.01;
  AdamStep(params, opts);
  for (std::size_t i = 0; i < 4; ++i) {
    const double expect = start[i] - 0.01 * (g[i] > 0 ? 1.0 : -1.0);
    // m_hat / sqrt(v_hat) = g / |g| up to epsilon.
    CHECK(w[i] == doctest::Approx(expect).epsilon(1e-6));
  }
}

TEST_CASE("second Adam step follows the bias-corrected recurrence") {
  ParameterSet params;
  Tensor& w = params.Create("w", {1});
  AdamOptions opts;
  opts.learning_rate = 0.1;
  const double g1 = 2.0, g2 = -1.0;
  w.mutable_grad()[0] = g1;
  AdamStep(params, opts);
  params.ZeroGrad();
  w.mutable_grad()[0] = g2;
  AdamStep(params, opts);
  const double m1 = 0.1 * g1, v1 = 0.001 * g1 * g1;
  const double w1 = -0.1 * (m1 / 0.1) / (std::sqrt(v1 / 0.001) + 1e-8);
  const double m2 = 0.9 * m1 + 0.1 * g2, v2 = 0.999 * v1 + 0.001 * g2 * g2;
  const double c1 = 1 - 0.9 * 0.9, c2 = 1 - 0.999 * 0.999;
  const double w2 = w1 - 0.1 * (m2 / c1) / (std::sqrt(v2 / c2) + 1e-8);
  CHECK(w[0] == doctest::Approx(w2).epsilon(1e-12));
}

TEST_CASE("frozen parameters are untouched by Adam") {
  ParameterSet params;
  Tensor& a = params.Create("a", {2});
  Tensor& b = params.Create("b", {2});
  b.mutable_values()[0] = 7.0;
  b.set_requires_grad(false);
  a.mutable_grad()[0] = 1.0;
  AdamStep(params, {});
  CHECK(b[0] == 7.0);
  CHECK(b[1] == 0.0);
  CHECK(a[0] < 0.0);
}

TEST_CASE("Adam rejects a trainable parameter without gradient") {
  ParameterSet params;
  params.Create("a", {2});
  CHECK_THROWS_AS(AdamStep(params, {}), TrainingError);
}

TEST_CASE("parameter set copies are deep") {
  ParameterSet params;
  params.Create("w", {3}).mutable_values()[1] = 2.0;
  ParameterSet copy = params;
  copy.Get("w").mutable_values()[1] = 5.0;
  CHECK(params.Get("w")[1] == 2.0);
  CHECK_FALSE(copy.Get("w").SameStorage(params.Get("w")));
  CHECK(copy.Get("w").requires_grad());
  params.CopyValuesFrom(copy);
  CHECK(params.Get("w")[1] == 5.0);
}

TEST_CASE("parameter set errors") {
  ParameterSet params;
  params.Create("w", {3});
  CHECK_THROWS_AS(params.Create("w", {3}), UsageError);
  CHECK_THROWS_AS(params.Get("missing"), DataError);
  ParameterSet other;
  other.Create("w", {4});
  CHECK_THROWS_AS(params.CopyValuesFrom(other), ShapeError);
  CHECK(params.NumValues() == 3);
}

TEST_CASE("uniform init respects the fan-in bound") {
  Rng rng(3);
  ParameterSet params;
  const Tensor& w = params.CreateUniform("w", {64, 32}, 64, rng);
  double lo = 1, hi = -1;
  for (double v : w.values()) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  CHECK(lo >= -0.125);
  CHECK(hi <= 0.125);
  CHECK(hi - lo > 0.2);
}

TEST_CASE("gradient check detects a wrong gradient") {
  ParameterSet params;
  params.Create("w", {3}).mutable_values()[0] = 0.7;
  // Correct loss: sum(w^2).
  auto good = [](ParameterSet& p) { return ad::Sum(ad::Mul(p.Get("w"), p.Get("w"))); };
  CHECK(GradientCheck(good, params).max_relative_error < 1e-8);
  // Same forward value, but the second factor is detached so backward halves
  // the gradient.
  auto bad = [](ParameterSet& p) {
    Tensor detached = p.Get("w").Clone();
    return ad::Sum(ad::Mul(p.Get("w"), detached));
  };
  GradCheckResult r = GradientCheck(bad, params);
  CHECK(r.max_relative_error == doctest::Approx(0.5).epsilon(1e-6));
  CHECK(r.worst_parameter == "w[0]");
}

TEST_CASE("gradient check samples large parameter sets") {
  ParameterSet params;
  Rng rng(1);
  params.CreateUniform("w", {200, 100}, 10, rng);
  auto loss = [](ParameterSet& p) { return ad::Sum(ad::Tanh(p.Get("w"))); };
  GradCheckResult r = GradientCheck(loss, params);
  CHECK(r.coordinates_checked == 1000);
  CHECK(r.max_relative_error < 1e-7);
}

}  // namespace
}  // namespace kaqa
