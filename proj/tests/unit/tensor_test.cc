#include <cmath>

#include "doctest.h"
#include "kaqa/nn.h"
#include "kaqa/optim.h"
#include "kaqa/tensor.h"

namespace kaqa {
namespace {

using ad::Shape;
using ad::Tensor;

Tensor RandomTensor(Shape shape, Rng& rng, bool requires_grad = false) {
  Tensor t(std::move(shape), requires_grad);
  for (double& v : t.mutable_values()) v = rng.Uniform(-1.0, 1.0);
  return t;
}

// Contracts the op output with fixed random weights so every output
// coordinate receives a distinct upstream gradient.
Tensor Probe(const Tensor& out, std::uint64_t seed) {
  Rng rng(seed);
  Tensor w = RandomTensor(out.shape(), rng);
  return ad::Sum(ad::Mul(out, w));
}

double CheckOp(const std::vector<Shape>& shapes,
               const std::function<Tensor(const std::vector<Tensor>&)>& op,
               std::uint64_t seed = 7) {
  Rng rng(seed);
  ParameterSet params;
  for (std::size_t i = 0; i < shapes.size(); ++i) {
    Tensor& t = params.Create("x" + std::to_string(i), shapes[i]);
    for (double& v : t.mutable_values()) v = rng.Uniform(-1.0, 1.0);
  }
  auto loss = [&](ParameterSet& p) {
    std::vector<Tensor> xs;
    for (std::size_t i = 0; i < shapes.size(); ++i) xs.push_back(p.Get("x" + std::to_string(i)));
    return Probe(op(xs), seed + 1);
  };
  return GradientCheck(loss, params).max_relative_error;
}

TEST_CASE("backward of x^2 at 3 is 6") {
  Tensor x = Tensor::Scalar(3.0, true);
  ad::Tape tape;
  Tensor y = ad::Mul(x, x);
  tape.Backward(y);
  CHECK(x.grad()[0] == doctest::Approx(6.0));
  CHECK(tape.size() == 0);
}

TEST_CASE("backward of x*y at (2,5) is (5,2)") {
  Tensor x = Tensor::Scalar(2.0, true);
  Tensor y = Tensor::Scalar(5.0, true);
  ad::Tape tape;
  tape.Backward(ad::Mul(x, y));
  CHECK(x.grad()[0] == 5.0);
  CHECK(y.grad()[0] == 2.0);
}

TEST_CASE("backward rejects non-scalar loss") {
  Tensor x = Tensor::Vector({1, 2}, true);
  ad::Tape tape;
  Tensor y = ad::Scale(x, 2.0);
  CHECK_THROWS_AS(tape.Backward(y), ShapeError);
}

TEST_CASE("ops outside a tape record nothing") {
  Tensor x = Tensor::Vector({1, 2}, true);
  Tensor y = ad::Scale(x, 2.0);
  CHECK_FALSE(y.requires_grad());
}

TEST_CASE("shape mismatch names op and both shapes") {
  Tensor a(Shape{2, 3});
  Tensor b(Shape{2, 3});
  try {
    ad::MatMul(a, b);
    FAIL("expected ShapeError");
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("matmul") != std::string::npos);
    CHECK(msg.find("[2,3]") != std::string::npos);
  }
}

TEST_CASE("conv2d of ones with ones kernel is 4") {
  Tensor x(Shape{1, 2, 2}, {1, 1, 1, 1});
  Tensor w(Shape{1, 1, 2, 2}, {1, 1, 1, 1});
  Tensor b(Shape{1}, {0});
  Tensor y = ad::Conv2d(x, w, b, 0, 0);
  CHECK(y.shape() == Shape{1, 1, 1});
  CHECK(y[0] == 4.0);
}

TEST_CASE("softmax of zeros is uniform") {
  Tensor y = ad::Softmax(Tensor::Vector({0, 0, 0}));
  for (double v : y.values()) CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
}

TEST_CASE("softmax rows are distributions") {
  Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    Tensor x = RandomTensor({4, 6}, rng);
    for (double& v : x.mutable_values()) v *= 50.0;
    Tensor y = ad::Softmax(x);
    for (std::size_t r = 0; r < 4; ++r) {
      double s = 0.0;
      for (std::size_t c = 0; c < 6; ++c) {
        CHECK(y.at(r, c) >= 0.0);
        s += y.at(r, c);
      }
      CHECK(std::abs(s - 1.0) < 1e-9);
    }
  }
}

TEST_CASE("max_pool2d picks the maximum") {
  Tensor x(Shape{1, 2, 2}, {1, 2, 3, 4});
  Tensor y = ad::MaxPool2d(x, 2, 2);
  CHECK(y.size() == 1);
  CHECK(y[0] == 4.0);
}

TEST_CASE("max_pool2d keeps partial windows") {
  Tensor x(Shape{1, 3, 3}, {1, 2, 3, 4, 5, 6, 7, 8, 9});
  Tensor y = ad::MaxPool2d(x, 2, 2);
  CHECK(y.shape() == Shape{1, 2, 2});
  CHECK(std::vector<double>(y.values().begin(), y.values().end()) ==
        std::vector<double>{5, 6, 8, 9});
}

TEST_CASE("adaptive max pool on a 1x1 map replicates the cell") {
  Tensor x(Shape{2, 1, 1}, {3, -1});
  Tensor y = ad::AdaptiveMaxPool2d(x, 2, 2);
  CHECK(std::vector<double>(y.values().begin(), y.values().end()) ==
        std::vector<double>{3, 3, 3, 3, -1, -1, -1, -1});
}

TEST_CASE("conv1d matches a direct window sum") {
  Rng rng(11);
  Tensor x = RandomTensor({4, 3}, rng);
  Tensor w = RandomTensor({6, 2}, rng);
  Tensor b = RandomTensor({2}, rng);
  Tensor y = ad::Conv1d(x, w, b, 2, 1);
  REQUIRE(y.shape() == Shape{4, 2});
  for (std::size_t t = 0; t < 4; ++t) {
    for (std::size_t f = 0; f < 2; ++f) {
      double expect = b[f];
      for (std::size_t k = 0; k < 2; ++k) {
        if (t + k >= 4) continue;
        for (std::size_t c = 0; c < 3; ++c) expect += x.at(t + k, c) * w.at(k * 3 + c, f);
      }
      CHECK(y.at(t, f) == doctest::Approx(expect).epsilon(1e-12));
    }
  }
}

TEST_CASE("cosine similarity matrix matches a double-loop oracle") {
  Rng rng(5);
  Tensor a = RandomTensor({3, 4}, rng);
  Tensor b = RandomTensor({5, 4}, rng);
  Tensor m = ad::CosineSimilarityMatrix(a, b);
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t j = 0; j < 5; ++j) {
      double dot = 0, na = 0, nb = 0;
      for (std::size_t k = 0; k < 4; ++k) {
        dot += a.at(i, k) * b.at(j, k);
        na += a.at(i, k) * a.at(i, k);
        nb += b.at(j, k) * b.at(j, k);
      }
      CHECK(std::abs(m.at(i, j) - dot / std::sqrt(na * nb)) < 1e-12);
    }
  }
}

TEST_CASE("cosine similarity conventions") {
  Tensor a = Tensor::Matrix(2, 2, {1, 0, 0, 1});
  Tensor m = ad::CosineSimilarityMatrix(a, a);
  CHECK(m.at(0, 0) == doctest::Approx(1.0));
  CHECK(m.at(1, 1) == doctest::Approx(1.0));
  CHECK(m.at(0, 1) == 0.0);
  Tensor z = Tensor::Matrix(1, 2, {0, 0});
  CHECK(ad::CosineSimilarityMatrix(z, a).at(0, 0) == 0.0);
  Rng rng(9);
  for (int trial = 0; trial < 100; ++trial) {
    Tensor x = RandomTensor({3, 5}, rng);
    Tensor y = RandomTensor({4, 5}, rng);
    Tensor m = ad::CosineSimilarityMatrix(x, y);
    for (double v : m.values()) {
      CHECK(v >= -1.0 - 1e-9);
      CHECK(v <= 1.0 + 1e-9);
    }
  }
}

TEST_CASE("parallel component arithmetic") {
  Tensor h = Tensor::Matrix(1, 2, {1, 1});
  Tensor a = Tensor::Matrix(1, 2, {1, 0});
  Tensor p = ad::ParallelComponent(h, a);
  CHECK(p[0] == 1.0);
  CHECK(p[1] == 0.0);
  Tensor zero = Tensor::Matrix(1, 2, {0, 0});
  Tensor pz = ad::ParallelComponent(h, zero);
  CHECK(pz[0] == 0.0);
  CHECK(pz[1] == 0.0);
}

TEST_CASE("cross entropy reference values") {
  SUBCASE("uniform predictions give ln 3") {
    Tensor z = Tensor::Matrix(1, 3, {0, 0, 0});
    const int y = 1;
    CHECK(ad::CrossEntropyWithLogits(z, std::span(&y, 1)).item() ==
          doctest::Approx(std::log(3.0)));
  }
  SUBCASE("probabilities 0.5 and 0.25 on the labels") {
    Tensor p = Tensor::Matrix(2, 3, {0.5, 0.25, 0.25, 0.25, 0.25, 0.5});
    const int y[] = {0, 0};
    CHECK(ad::NllFromProbs(p, y).item() ==
          doctest::Approx(-(std::log(0.5) + std::log(0.25)) / 2));
  }
  SUBCASE("one-hot predictions give zero") {
    Tensor p = Tensor::Matrix(1, 3, {0, 0, 1});
    const int y = 2;
    CHECK(ad::NllFromProbs(p, std::span(&y, 1)).item() == 0.0);
  }
  SUBCASE("empty batch is an error") {
    Tensor z(Shape{0, 3});
    CHECK_THROWS_AS(ad::CrossEntropyWithLogits(z, {}), ShapeError);
  }
}

TEST_CASE("every differentiable op passes a gradient check") {
  constexpr double kTol = 1e-6;
  using V = std::vector<Tensor>;
  CHECK(CheckOp({{3, 4}, {4, 2}}, [](const V& x) { return ad::MatMul(x[0], x[1]); }) < kTol);
  CHECK(CheckOp({{3, 4}, {4}}, [](const V& x) { return ad::Add(x[0], x[1]); }) < kTol);
  CHECK(CheckOp({{3, 4}, {3, 4}}, [](const V& x) { return ad::Sub(x[0], x[1]); }) < kTol);
  CHECK(CheckOp({{3, 4}, {3, 4}}, [](const V& x) { return ad::Mul(x[0], x[1]); }) < kTol);
  CHECK(CheckOp({{3, 4}}, [](const V& x) { return ad::Scale(x[0], -1.5); }) < kTol);
  CHECK(CheckOp({{3, 4}}, [](const V& x) { return ad::Transpose(x[0]); }) < kTol);
  CHECK(CheckOp({{3, 4}}, [](const V& x) { return ad::Reshape(x[0], {12}); }) < kTol);
  CHECK(CheckOp({{2, 3}, {2, 2}},
                [](const V& x) { return ad::Concat({x[0], x[1]}, 1); }) < kTol);
  CHECK(CheckOp({{2, 3}, {1, 3}},
                [](const V& x) { return ad::Concat({x[0], x[1]}, 0); }) < kTol);
  CHECK(CheckOp({{4, 3}}, [](const V& x) { return ad::SliceRows(x[0], 1, 3); }) < kTol);
  CHECK(CheckOp({{4, 3}}, [](const V& x) { return ad::SliceCols(x[0], 1, 3); }) < kTol);
  CHECK(CheckOp({{5, 3}}, [](const V& x) {
          const std::int64_t ids[] = {4, 0, 4, 2};
          return ad::EmbeddingLookup(x[0], ids);
        }) < kTol);
  CHECK(CheckOp({{5, 3}, {6, 4}, {4}},
                [](const V& x) { return ad::Conv1d(x[0], x[1], x[2], 2, 1); }) < kTol);
  CHECK(CheckOp({{2, 4, 5}, {3, 2, 2, 2}, {3}},
                [](const V& x) { return ad::Conv2d(x[0], x[1], x[2], 1, 1); }) < kTol);
  CHECK(CheckOp({{2, 5, 3}}, [](const V& x) { return ad::MaxPool2d(x[0], 2, 2); }) < kTol);
  CHECK(CheckOp({{2, 5, 3}},
                [](const V& x) { return ad::AdaptiveMaxPool2d(x[0], 2, 2); }) < kTol);
  CHECK(CheckOp({{5, 3}}, [](const V& x) { return ad::MaxOverRows(x[0]); }) < kTol);
  CHECK(CheckOp({{3, 4}}, [](const V& x) { return ad::Relu(x[0]); }) < kTol);
  CHECK(CheckOp({{3, 4}}, [](const V& x) { return ad::Tanh(x[0]); }) < kTol);
  CHECK(CheckOp({{3, 4}}, [](const V& x) { return ad::Logistic(x[0]); }) < kTol);
  CHECK(CheckOp({{3, 4}}, [](const V& x) {
          return ad::Log(ad::Add(ad::Mul(x[0], x[0]), Tensor::Vector({1, 1, 1, 1})));
        }) < kTol);
  CHECK(CheckOp({{3, 4}}, [](const V& x) { return ad::Softmax(x[0]); }) < kTol);
  CHECK(CheckOp({{4}}, [](const V& x) { return ad::Softmax(x[0]); }) < kTol);
  CHECK(CheckOp({{3, 4}}, [](const V& x) { return ad::Mean(x[0]); }) < kTol);
  CHECK(CheckOp({{3, 4}}, [](const V& x) { return ad::MeanRows(x[0]); }) < kTol);
  CHECK(CheckOp({{3, 4}, {5, 4}},
                [](const V& x) { return ad::CosineSimilarityMatrix(x[0], x[1]); }) < kTol);
  CHECK(CheckOp({{3, 4}, {3, 4}},
                [](const V& x) { return ad::ParallelComponent(x[0], x[1]); }) < kTol);
  CHECK(CheckOp({{2, 3}}, [](const V& x) {
          const int y[] = {2, 0};
          return ad::CrossEntropyWithLogits(x[0], y);
        }) < kTol);
  CHECK(CheckOp({{3}}, [](const V& x) {
          const int y[] = {1, 0, 1};
          return ad::BinaryCrossEntropyWithLogits(x[0], y);
        }) < kTol);
  CHECK(CheckOp({{2, 3}}, [](const V& x) {
          const int y[] = {2, 0};
          return ad::NllFromProbs(ad::Softmax(x[0]), y);
        }) < kTol);
}

TEST_CASE("composite CNN + MLP loss agrees with finite differences") {
  Rng rng(21);
  ParameterSet params;
  params.CreateUniform("emb", {6, 4}, 4, rng);
  params.CreateUniform("conv.w", {8, 5}, 8, rng);
  params.CreateUniform("conv.b", {5}, 8, rng);
  params.CreateUniform("w", {5, 3}, 5, rng);
  params.CreateUniform("b", {3}, 5, rng);
  auto loss = [](ParameterSet& p) {
    const std::int64_t ids[] = {1, 3, 5, 2};
    Tensor h = ad::Conv1d(ad::EmbeddingLookup(p.Get("emb"), ids), p.Get("conv.w"),
                          p.Get("conv.b"), 2, 1);
    Tensor pooled = ad::Reshape(ad::MaxOverRows(ad::Tanh(h)), {1, 5});
    Tensor z = Linear(pooled, p.Get("w"), p.Get("b"));
    const int y = 1;
    return ad::CrossEntropyWithLogits(z, std::span(&y, 1));
  };
  CHECK(GradientCheck(loss, params).max_relative_error < 1e-6);
}

TEST_CASE("lstm step with zero everything yields zero state") {
  ParameterSet params;
  Rng rng(1);
  LstmParams p = CreateLstm(params, "l", 3, 2, rng);
  for (auto* t : {&p.w_input, &p.w_hidden, &p.bias}) {
    for (double& v : t->mutable_values()) v = 0.0;
  }
  auto [h, c] = LstmStep(Tensor(Shape{1, 3}), Tensor(Shape{1, 2}), Tensor(Shape{1, 2}), p);
  for (double v : h.values()) CHECK(v == 0.0);
  for (double v : c.values()) CHECK(v == 0.0);
}

TEST_CASE("scalar lstm step matches hand computation") {
  ParameterSet params;
  Rng rng(1);
  LstmParams p = CreateLstm(params, "l", 1, 1, rng);
  // Gate order: input, forget, cell, output.
  const double wi[] = {0.5, -0.3, 0.8, 0.1};
  const double wh[] = {0.2, 0.4, -0.6, 0.7};
  const double bb[] = {0.1, 0.2, -0.1, 0.0};
  for (int k = 0; k < 4; ++k) {
    p.w_input.mutable_values()[k] = wi[k];
    p.w_hidden.mutable_values()[k] = wh[k];
    p.bias.mutable_values()[k] = bb[k];
  }
  const double x = 0.9, h0 = -0.4, c0 = 0.3;
  auto sig = [](double v) { return 1.0 / (1.0 + std::exp(-v)); };
  const double i = sig(wi[0] * x + wh[0] * h0 + bb[0]);
  const double f = sig(wi[1] * x + wh[1] * h0 + bb[1]);
  const double g = std::tanh(wi[2] * x + wh[2] * h0 + bb[2]);
  const double o = sig(wi[3] * x + wh[3] * h0 + bb[3]);
  const double c1 = f * c0 + i * g;
  const double h1 = o * std::tanh(c1);
  auto scalar = [](double v) { return Tensor::Matrix(1, 1, {v}); };
  auto [h, c] = LstmStep(scalar(x), scalar(h0), scalar(c0), p);
  CHECK(h[0] == doctest::Approx(h1).epsilon(1e-14));
  CHECK(c[0] == doctest::Approx(c1).epsilon(1e-14));
}

TEST_CASE("bilstm on a length-1 sequence concatenates both directions") {
  ParameterSet params;
  Rng rng(4);
  LstmParams fw = CreateLstm(params, "fw", 3, 2, rng);
  LstmParams bw = CreateLstm(params, "bw", 3, 2, rng);
  Tensor x = RandomTensor({1, 3}, rng);
  Tensor y = Bilstm(x, fw, bw);
  REQUIRE(y.shape() == Shape{1, 4});
  auto [hf, cf] = LstmStep(x, Tensor(Shape{1, 2}), Tensor(Shape{1, 2}), fw);
  auto [hb, cb] = LstmStep(x, Tensor(Shape{1, 2}), Tensor(Shape{1, 2}), bw);
  CHECK(y[0] == hf[0]);
  CHECK(y[1] == hf[1]);
  CHECK(y[2] == hb[0]);
  CHECK(y[3] == hb[1]);
}

TEST_CASE("bilstm gradient check") {
  ParameterSet params;
  Rng rng(8);
  CreateLstm(params, "fw", 3, 2, rng);
  CreateLstm(params, "bw", 3, 2, rng);
  params.CreateUniform("x", {4, 3}, 1, rng);
  auto loss = [](ParameterSet& p) {
    Tensor y = Bilstm(p.Get("x"), GetLstm(p, "fw"), GetLstm(p, "bw"));
    return Probe(y, 3);
  };
  CHECK(GradientCheck(loss, params).max_relative_error < 1e-6);
}

TEST_CASE("forward is bit-deterministic") {
  auto run = [] {
    Rng rng(42);
    Tensor a = RandomTensor({6, 5}, rng);
    Tensor b = RandomTensor({5, 7}, rng);
    Tensor c = ad::Softmax(ad::Tanh(ad::MatMul(a, b)));
    return std::vector<double>(c.values().begin(), c.values().end());
  };
  CHECK(run() == run());
}

}  // namespace
}  // namespace kaqa
