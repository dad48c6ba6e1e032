#ifndef KAQA_OPTIM_H_
#define KAQA_OPTIM_H_

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "kaqa/random.h"
#include "kaqa/tensor.h"

namespace kaqa {

struct AdamOptions;

// Named trainable tensors plus the Adam moment estimates kept alongside them.
// Copies are deep: tensors are cloned along with the optimizer state.
class ParameterSet {
 public:
  ParameterSet() = default;
  ParameterSet(const ParameterSet& other);
  ParameterSet& operator=(const ParameterSet& other);
  ParameterSet(ParameterSet&&) = default;
  ParameterSet& operator=(ParameterSet&&) = default;

  // Zero-filled parameter. Throws UsageError on a duplicate name.
  ad::Tensor& Create(const std::string& name, ad::Shape shape);
  // Parameter drawn from uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)).
  ad::Tensor& CreateUniform(const std::string& name, ad::Shape shape,
                            std::size_t fan_in, Rng& rng);
  // Inserts an existing tensor (e.g. loaded from a checkpoint).
  ad::Tensor& Insert(const std::string& name, ad::Tensor tensor);

  bool Contains(const std::string& name) const { return tensors_.contains(name); }
  const ad::Tensor& Get(const std::string& name) const;
  ad::Tensor& Get(const std::string& name);

  const std::map<std::string, ad::Tensor>& tensors() const { return tensors_; }
  std::size_t NumValues() const;

  void ZeroGrad();
  // Overwrites values from another set with identical names and shapes.
  void CopyValuesFrom(const ParameterSet& other);

 private:
  friend void AdamStep(ParameterSet&, const AdamOptions&);

  struct Moments {
    std::vector<double> m;
    std::vector<double> v;
  };

  std::map<std::string, ad::Tensor> tensors_;
  std::map<std::string, Moments> moments_;
  std::int64_t step_ = 0;
};

struct AdamOptions {
  double learning_rate = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// One bias-corrected Adam update of every parameter with requires_grad set.
// Parameters with requires_grad off are left untouched. Throws TrainingError
// when a trainable parameter has no gradient buffer.
void AdamStep(ParameterSet& params, const AdamOptions& options);

struct GradCheckOptions {
  double epsilon = 1e-5;
  // Above this many coordinates only `sample_fraction` of them are probed.
  std::size_t full_check_limit = 10000;
  double sample_fraction = 0.05;
  // Floor of the relative-error denominator so that near-zero gradients are
  // compared absolutely.
  double denominator_floor = 1e-6;
  std::uint64_t seed = 0;
};

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::size_t coordinates_checked = 0;
  std::string worst_parameter;
};

// Compares backward() against central finite differences of `build_loss`.
// The relative error of a coordinate is |a - n| / max(|a|, |n|, floor).
GradCheckResult GradientCheck(
    const std::function<ad::Tensor(ParameterSet&)>& build_loss,
    ParameterSet& params, const GradCheckOptions& options = {});

}  // namespace kaqa

#endif  // KAQA_OPTIM_H_
