#ifndef KAQA_NN_H_
#define KAQA_NN_H_

#include <string>
#include <utility>

#include "kaqa/optim.h"
#include "kaqa/tensor.h"

namespace kaqa {

// LSTM cell weights; gate blocks are ordered input, forget, cell, output.
struct LstmParams {
  ad::Tensor w_input;   // [in, 4H]
  ad::Tensor w_hidden;  // [H, 4H]
  ad::Tensor bias;      // [4H]

  std::size_t hidden() const { return w_hidden.dim(0); }
};

LstmParams CreateLstm(ParameterSet& params, const std::string& prefix,
                      std::size_t input_dim, std::size_t hidden_dim, Rng& rng);
LstmParams GetLstm(ParameterSet& params, const std::string& prefix);

// One step: x [1, in], h [1, H], c [1, H] -> (h', c').
std::pair<ad::Tensor, ad::Tensor> LstmStep(const ad::Tensor& x, const ad::Tensor& h,
                                           const ad::Tensor& c, const LstmParams& p);

// Runs over the rows of seq [L, in] from a zero state; returns [L, H] in
// input order. `reverse` scans from the last row to the first.
ad::Tensor Lstm(const ad::Tensor& seq, const LstmParams& p, bool reverse);

// [L, in] -> [L, 2H]: forward states followed by backward states per row.
ad::Tensor Bilstm(const ad::Tensor& seq, const LstmParams& forward,
                  const LstmParams& backward);

// x [n, in] -> x W + b for W [in, out], b [out].
ad::Tensor Linear(const ad::Tensor& x, const ad::Tensor& w, const ad::Tensor& b);

}  // namespace kaqa

#endif  // KAQA_NN_H_
