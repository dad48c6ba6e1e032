#ifndef KAQA_TENSOR_H_
#define KAQA_TENSOR_H_

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "kaqa/error.h"

namespace kaqa::ad {

using Shape = std::vector<std::size_t>;

std::string ShapeString(const Shape& shape);
std::size_t NumElements(const Shape& shape);

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // empty until a gradient flows in
  bool requires_grad = false;

  std::span<double> Grad() {
    if (grad.empty()) grad.assign(value.size(), 0.0);
    return grad;
  }
};

}  // namespace detail

// Dense row-major double tensor. Copies share storage; use Clone() for a
// deep copy.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, bool requires_grad = false);
  Tensor(Shape shape, std::vector<double> values, bool requires_grad = false);

  static Tensor Scalar(double v, bool requires_grad = false);
  static Tensor Vector(std::vector<double> values, bool requires_grad = false);
  static Tensor Matrix(std::size_t rows, std::size_t cols,
                       std::vector<double> values, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t dim(std::size_t i) const { return node_->shape.at(i); }
  std::size_t size() const { return node_->value.size(); }

  std::span<const double> values() const { return node_->value; }
  std::span<double> mutable_values() { return node_->value; }
  double item() const;
  double operator[](std::size_t i) const { return node_->value[i]; }
  double at(std::size_t r, std::size_t c) const;

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool on);
  bool has_grad() const { return !node_->grad.empty(); }
  std::span<const double> grad() const { return node_->grad; }
  std::span<double> mutable_grad() { return node_->Grad(); }
  void ZeroGrad();

  // Deep copy of values without gradient history.
  Tensor Clone(bool requires_grad = false) const;

  bool SameStorage(const Tensor& other) const { return node_ == other.node_; }
  const std::shared_ptr<detail::Node>& node() const { return node_; }

 private:
  std::shared_ptr<detail::Node> node_;
};

// Records backward closures of ops executed while it is the thread's active
// tape. Construction activates it; destruction restores the previous one.
class Tape {
 public:
  Tape();
  ~Tape();
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  static Tape* Current();

  void Record(std::function<void()> backward);
  std::size_t size() const { return entries_.size(); }

  // Seeds d(loss)/d(loss) = 1, runs recorded closures in reverse and clears
  // the tape. `loss` must be a scalar.
  void Backward(const Tensor& loss);
  void Clear() { entries_.clear(); }

 private:
  std::vector<std::function<void()>> entries_;
  Tape* previous_;
};

// Backward on the active tape.
void Backward(const Tensor& loss);

// True when an op producing from these inputs must be recorded.
bool ShouldRecord(std::initializer_list<const Tensor*> inputs);

// ---- Forward ops. Each records its backward pass on the active tape. ----

Tensor MatMul(const Tensor& a, const Tensor& b);        // [n,k] x [k,m]
Tensor Add(const Tensor& a, const Tensor& b);           // same shape, or [..,m] + [m]
Tensor Sub(const Tensor& a, const Tensor& b);
Tensor Mul(const Tensor& a, const Tensor& b);           // elementwise
Tensor Scale(const Tensor& a, double factor);
Tensor Reshape(const Tensor& a, Shape shape);
Tensor Transpose(const Tensor& a);                      // rank 2
Tensor Concat(const std::vector<Tensor>& parts, std::size_t axis);
Tensor SliceRows(const Tensor& a, std::size_t begin, std::size_t end);
Tensor SliceCols(const Tensor& a, std::size_t begin, std::size_t end);
Tensor EmbeddingLookup(const Tensor& table, std::span<const std::int64_t> ids);

// x [L, C], weight [window*C, F], bias [F]. Zero rows are appended to x
// (`pad_end` of them) before sliding the window. Output [L+pad_end-window+1, F].
Tensor Conv1d(const Tensor& x, const Tensor& weight, const Tensor& bias,
              std::size_t window, std::size_t pad_end);

// x [Cin, H, W], weight [F, Cin, kh, kw], bias [F]; zero padding on the
// bottom/right. Output [F, H+pad-kh+1, W+pad-kw+1].
Tensor Conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias,
              std::size_t pad_bottom, std::size_t pad_right);

// Non-overlapping pooling windows, partial windows kept (ceil mode).
Tensor MaxPool2d(const Tensor& x, std::size_t pool_h, std::size_t pool_w);
// Pools [C, H, W] onto a fixed [C, out_h, out_w] grid.
Tensor AdaptiveMaxPool2d(const Tensor& x, std::size_t out_h, std::size_t out_w);
// [L, F] -> [F]
Tensor MaxOverRows(const Tensor& x);

Tensor Relu(const Tensor& x);
Tensor Tanh(const Tensor& x);
Tensor Logistic(const Tensor& x);
Tensor Log(const Tensor& x);
// Along the last axis (rank 1 or 2).
Tensor Softmax(const Tensor& x);

Tensor Mean(const Tensor& x);      // scalar
Tensor Sum(const Tensor& x);       // scalar
Tensor MeanRows(const Tensor& x);  // [L, d] -> [d]

// Rowwise cosine similarity: [n,k] x [m,k] -> [n,m]. Zero rows give 0.
Tensor CosineSimilarityMatrix(const Tensor& a, const Tensor& b);

// Rowwise projection of h onto a: (h.a / a.a) a; a zero row projects to 0.
Tensor ParallelComponent(const Tensor& h, const Tensor& a);

// Mean negative log-likelihood of `labels` under softmax(logits) [n, C].
Tensor CrossEntropyWithLogits(const Tensor& logits, std::span<const int> labels);
// Mean -log p[label] for probability rows [n, C].
Tensor NllFromProbs(const Tensor& probs, std::span<const int> labels);
// Mean binary cross-entropy of logistic(z) for z [n] and labels in {0, 1}.
Tensor BinaryCrossEntropyWithLogits(const Tensor& logits,
                                    std::span<const int> labels);

}  // namespace kaqa::ad

#endif  // KAQA_TENSOR_H_
