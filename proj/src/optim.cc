#include "kaqa/optim.h"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace kaqa {

using ad::Tensor;

Tensor& ParameterSet::Create(const std::string& name, ad::Shape shape) {
  return Insert(name, Tensor(std::move(shape), true));
}

Tensor& ParameterSet::CreateUniform(const std::string& name, ad::Shape shape,
                                    std::size_t fan_in, Rng& rng) {
  Tensor t(std::move(shape), true);
  const double bound = 1.0 / std::sqrt(static_cast<double>(std::max<std::size_t>(fan_in, 1)));
  for (double& v : t.mutable_values()) v = rng.Uniform(-bound, bound);
  return Insert(name, std::move(t));
}

Tensor& ParameterSet::Insert(const std::string& name, Tensor tensor) {
  if (tensors_.contains(name)) throw UsageError("duplicate parameter '" + name + "'");
  return tensors_.emplace(name, std::move(tensor)).first->second;
}

const Tensor& ParameterSet::Get(const std::string& name) const {
  auto it = tensors_.find(name);
  if (it == tensors_.end()) throw DataError("missing parameter '" + name + "'");
  return it->second;
}

Tensor& ParameterSet::Get(const std::string& name) {
  auto it = tensors_.find(name);
  if (it == tensors_.end()) throw DataError("missing parameter '" + name + "'");
  return it->second;
}

std::size_t ParameterSet::NumValues() const {
  std::size_t n = 0;
  for (const auto& [name, t] : tensors_) n += t.size();
  return n;
}

void ParameterSet::ZeroGrad() {
  for (auto& [name, t] : tensors_) t.ZeroGrad();
}

ParameterSet::ParameterSet(const ParameterSet& other)
    : moments_(other.moments_), step_(other.step_) {
  for (const auto& [name, t] : other.tensors_) {
    tensors_.emplace(name, t.Clone(t.requires_grad()));
  }
}

ParameterSet& ParameterSet::operator=(const ParameterSet& other) {
  if (this != &other) *this = ParameterSet(other);
  return *this;
}

void ParameterSet::CopyValuesFrom(const ParameterSet& other) {
  for (auto& [name, t] : tensors_) {
    const Tensor& src = other.Get(name);
    if (src.shape() != t.shape()) {
      throw ShapeError("parameter '" + name + "' has shape " + ad::ShapeString(src.shape()) +
                       ", expected " + ad::ShapeString(t.shape()));
    }
    std::copy(src.values().begin(), src.values().end(), t.mutable_values().begin());
  }
}

void AdamStep(ParameterSet& params, const AdamOptions& options) {
  for (const auto& [name, t] : params.tensors_) {
    if (t.requires_grad() && !t.has_grad()) {
      throw TrainingError("parameter '" + name + "' has no gradient");
    }
  }
  ++params.step_;
  const double step = static_cast<double>(params.step_);
  const double c1 = 1.0 - std::pow(options.beta1, step);
  const double c2 = 1.0 - std::pow(options.beta2, step);
  for (auto& [name, t] : params.tensors_) {
    if (!t.requires_grad()) continue;
    auto& mom = params.moments_[name];
    if (mom.m.empty()) {
      mom.m.assign(t.size(), 0.0);
      mom.v.assign(t.size(), 0.0);
    }
    auto g = t.grad();
    auto w = t.mutable_values();
    for (std::size_t i = 0; i < w.size(); ++i) {
      mom.m[i] = options.beta1 * mom.m[i] + (1.0 - options.beta1) * g[i];
      mom.v[i] = options.beta2 * mom.v[i] + (1.0 - options.beta2) * g[i] * g[i];
      const double m_hat = mom.m[i] / c1;
      const double v_hat = mom.v[i] / c2;
      w[i] -= options.learning_rate * m_hat / (std::sqrt(v_hat) + options.epsilon);
    }
  }
}

GradCheckResult GradientCheck(const std::function<Tensor(ParameterSet&)>& build_loss,
                              ParameterSet& params, const GradCheckOptions& options) {
  params.ZeroGrad();
  {
    ad::Tape tape;
    Tensor loss = build_loss(params);
    tape.Backward(loss);
  }
  std::map<std::string, std::vector<double>> analytic;
  for (const auto& [name, t] : params.tensors()) {
    if (!t.requires_grad()) continue;
    if (t.has_grad()) {
      analytic[name].assign(t.grad().begin(), t.grad().end());
    } else {
      analytic[name].assign(t.size(), 0.0);
    }
  }

  std::vector<std::pair<std::string, std::size_t>> coords;
  for (const auto& [name, grads] : analytic) {
    for (std::size_t i = 0; i < grads.size(); ++i) coords.emplace_back(name, i);
  }
  if (coords.size() > options.full_check_limit) {
    Rng rng(options.seed);
    rng.Shuffle(std::span(coords));
    const auto keep = static_cast<std::size_t>(
        std::ceil(options.sample_fraction * static_cast<double>(coords.size())));
    coords.resize(keep);
    std::sort(coords.begin(), coords.end());
  }

  GradCheckResult result;
  for (const auto& [name, i] : coords) {
    Tensor& t = params.Get(name);
    double& w = t.mutable_values()[i];
    const double saved = w;
    w = saved + options.epsilon;
    const double plus = build_loss(params).item();
    w = saved - options.epsilon;
    const double minus = build_loss(params).item();
    w = saved;
    const double numeric = (plus - minus) / (2.0 * options.epsilon);
    const double a = analytic[name][i];
    const double denom =
        std::max({std::abs(a), std::abs(numeric), options.denominator_floor});
    const double err = std::abs(a - numeric) / denom;
    if (err > result.max_relative_error || !std::isfinite(err)) {
      result.max_relative_error = std::isfinite(err) ? err : INFINITY;
      result.worst_parameter = name + "[" + std::to_string(i) + "]";
    }
    ++result.coordinates_checked;
  }
  params.ZeroGrad();
  return result;
}

}  // namespace kaqa
