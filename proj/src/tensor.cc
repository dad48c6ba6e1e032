#include "kaqa/tensor.h"

#include <numeric>

namespace kaqa::ad {
namespace {

thread_local Tape* current_tape = nullptr;

}  // namespace

std::string ShapeString(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i > 0) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

std::size_t NumElements(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

Tensor::Tensor(Shape shape, bool requires_grad)
    : node_(std::make_shared<detail::Node>()) {
  node_->value.assign(NumElements(shape), 0.0);
  node_->shape = std::move(shape);
  set_requires_grad(requires_grad);
}

Tensor::Tensor(Shape shape, std::vector<double> values, bool requires_grad)
    : node_(std::make_shared<detail::Node>()) {
  if (values.size() != NumElements(shape)) {
    throw ShapeError("tensor of shape " + ShapeString(shape) + " given " +
                     std::to_string(values.size()) + " values");
  }
  node_->shape = std::move(shape);
  node_->value = std::move(values);
  set_requires_grad(requires_grad);
}

Tensor Tensor::Scalar(double v, bool requires_grad) {
  return Tensor(Shape{}, {v}, requires_grad);
}

Tensor Tensor::Vector(std::vector<double> values, bool requires_grad) {
  const std::size_t n = values.size();
  return Tensor(Shape{n}, std::move(values), requires_grad);
}

Tensor Tensor::Matrix(std::size_t rows, std::size_t cols,
                      std::vector<double> values, bool requires_grad) {
  return Tensor(Shape{rows, cols}, std::move(values), requires_grad);
}

double Tensor::item() const {
  if (size() != 1) {
    throw ShapeError("item() on tensor of shape " + ShapeString(shape()));
  }
  return node_->value[0];
}

double Tensor::at(std::size_t r, std::size_t c) const {
  return node_->value[r * node_->shape.back() + c];
}

void Tensor::set_requires_grad(bool on) {
  node_->requires_grad = on;
}

void Tensor::ZeroGrad() {
  std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

Tensor Tensor::Clone(bool requires_grad) const {
  return Tensor(node_->shape, node_->value, requires_grad);
}

Tape::Tape() : previous_(current_tape) { current_tape = this; }

Tape::~Tape() { current_tape = previous_; }

Tape* Tape::Current() { return current_tape; }

void Tape::Record(std::function<void()> backward) {
  entries_.push_back(std::move(backward));
}

void Tape::Backward(const Tensor& loss) {
  if (!loss.defined() || loss.size() != 1) {
    throw ShapeError("backward needs a scalar loss, got shape " +
                     (loss.defined() ? ShapeString(loss.shape()) : "undefined"));
  }
  auto node = loss.node();
  node->Grad()[0] += 1.0;
  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) (*it)();
  entries_.clear();
}

void Backward(const Tensor& loss) {
  Tape* tape = Tape::Current();
  if (tape == nullptr) throw ShapeError("backward called without an active tape");
  tape->Backward(loss);
}

bool ShouldRecord(std::initializer_list<const Tensor*> inputs) {
  if (current_tape == nullptr) return false;
  for (const Tensor* t : inputs) {
    if (t->requires_grad()) return true;
  }
  return false;
}

}  // namespace kaqa::ad
