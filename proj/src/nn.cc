#include "kaqa/nn.h"

namespace kaqa {

using ad::Tensor;

LstmParams CreateLstm(ParameterSet& params, const std::string& prefix,
                      std::size_t input_dim, std::size_t hidden_dim, Rng& rng) {
  LstmParams p;
  p.w_input = params.CreateUniform(prefix + ".w_input", {input_dim, 4 * hidden_dim},
                                   input_dim, rng);
  p.w_hidden = params.CreateUniform(prefix + ".w_hidden", {hidden_dim, 4 * hidden_dim},
                                    hidden_dim, rng);
  p.bias = params.CreateUniform(prefix + ".bias", {4 * hidden_dim}, hidden_dim, rng);
  return p;
}

LstmParams GetLstm(ParameterSet& params, const std::string& prefix) {
  return {params.Get(prefix + ".w_input"), params.Get(prefix + ".w_hidden"),
          params.Get(prefix + ".bias")};
}

namespace {

// Gates from a precomputed input projection row [1, 4H].
std::pair<Tensor, Tensor> Cell(const Tensor& projected, const Tensor& h,
                               const Tensor& c, const LstmParams& p) {
  const std::size_t n = p.hidden();
  Tensor gates = ad::Add(projected, ad::MatMul(h, p.w_hidden));
  Tensor i = ad::Logistic(ad::SliceCols(gates, 0, n));
  Tensor f = ad::Logistic(ad::SliceCols(gates, n, 2 * n));
  Tensor g = ad::Tanh(ad::SliceCols(gates, 2 * n, 3 * n));
  Tensor o = ad::Logistic(ad::SliceCols(gates, 3 * n, 4 * n));
  Tensor c_next = ad::Add(ad::Mul(f, c), ad::Mul(i, g));
  Tensor h_next = ad::Mul(o, ad::Tanh(c_next));
  return {h_next, c_next};
}

}  // namespace

std::pair<Tensor, Tensor> LstmStep(const Tensor& x, const Tensor& h, const Tensor& c,
                                   const LstmParams& p) {
  if (x.rank() != 2 || x.dim(0) != 1 || h.shape() != ad::Shape{1, p.hidden()} ||
      c.shape() != h.shape()) {
    throw ShapeError("lstm_step: x " + ad::ShapeString(x.shape()) + ", h " +
                     ad::ShapeString(h.shape()) + ", c " + ad::ShapeString(c.shape()) +
                     " for hidden size " + std::to_string(p.hidden()));
  }
  return Cell(Linear(x, p.w_input, p.bias), h, c, p);
}

Tensor Lstm(const Tensor& seq, const LstmParams& p, bool reverse) {
  if (seq.rank() != 2 || seq.dim(0) == 0) {
    throw ShapeError("lstm: expected a non-empty [L, in] sequence, got " +
                     ad::ShapeString(seq.shape()));
  }
  const std::size_t len = seq.dim(0);
  const std::size_t n = p.hidden();
  Tensor projected = Linear(seq, p.w_input, p.bias);
  Tensor h(ad::Shape{1, n});
  Tensor c(ad::Shape{1, n});
  std::vector<Tensor> states(len);
  for (std::size_t k = 0; k < len; ++k) {
    const std::size_t t = reverse ? len - 1 - k : k;
    std::tie(h, c) = Cell(ad::SliceRows(projected, t, t + 1), h, c, p);
    states[t] = h;
  }
  return ad::Concat(states, 0);
}

Tensor Bilstm(const Tensor& seq, const LstmParams& forward, const LstmParams& backward) {
  return ad::Concat({Lstm(seq, forward, false), Lstm(seq, backward, true)}, 1);
}

Tensor Linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  return ad::Add(ad::MatMul(x, w), b);
}

}  // namespace kaqa
