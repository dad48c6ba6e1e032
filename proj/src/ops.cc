#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/Core>

#include "kaqa/tensor.h"

namespace kaqa::ad {
namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;
using NodePtr = std::shared_ptr<detail::Node>;

[[noreturn]] void Mismatch(const char* op, const Shape& a, const Shape& b) {
  throw ShapeError(std::string(op) + ": incompatible shapes " + ShapeString(a) +
                   " and " + ShapeString(b));
}

void Expect(bool ok, const char* op, const Shape& a, const Shape& b) {
  if (!ok) Mismatch(op, a, b);
}

void ExpectRank(const Tensor& t, std::size_t rank, const char* op) {
  if (t.rank() != rank) {
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) +
                     ", got shape " + ShapeString(t.shape()));
  }
}

// Marks `out` as differentiable and records `fn` if any input needs a grad.
// `fn` runs only when a gradient actually reached `out`.
template <typename Fn>
void Record(std::initializer_list<const Tensor*> inputs, Tensor& out, Fn&& fn) {
  if (!ShouldRecord(inputs)) return;
  out.node()->requires_grad = true;
  NodePtr on = out.node();
  Tape::Current()->Record([on, fn = std::forward<Fn>(fn)]() {
    if (on->grad.empty()) return;
    fn(std::span<const double>(on->grad));
  });
}

template <typename Fn>
Tensor Unary(const Tensor& x, Fn&& f) {
  Tensor out(x.shape());
  auto xv = x.values();
  auto ov = out.mutable_values();
  for (std::size_t i = 0; i < xv.size(); ++i) ov[i] = f(xv[i]);
  return out;
}

}  // namespace

Tensor MatMul(const Tensor& a, const Tensor& b) {
  ExpectRank(a, 2, "matmul");
  ExpectRank(b, 2, "matmul");
  Expect(a.dim(1) == b.dim(0), "matmul", a.shape(), b.shape());
  const auto n = static_cast<Eigen::Index>(a.dim(0));
  const auto k = static_cast<Eigen::Index>(a.dim(1));
  const auto m = static_cast<Eigen::Index>(b.dim(1));
  Tensor out(Shape{a.dim(0), b.dim(1)});
  MutMap(out.mutable_values().data(), n, m).noalias() =
      ConstMap(a.values().data(), n, k) * ConstMap(b.values().data(), k, m);
  NodePtr an = a.node(), bn = b.node();
  Record({&a, &b}, out, [an, bn, n, k, m](std::span<const double> g) {
    ConstMap gm(g.data(), n, m);
    if (an->requires_grad) {
      MutMap(an->Grad().data(), n, k).noalias() +=
          gm * ConstMap(bn->value.data(), k, m).transpose();
    }
    if (bn->requires_grad) {
      MutMap(bn->Grad().data(), k, m).noalias() +=
          ConstMap(an->value.data(), n, k).transpose() * gm;
    }
  });
  return out;
}

Tensor Add(const Tensor& a, const Tensor& b) {
  const bool broadcast = a.shape() != b.shape();
  if (broadcast) {
    Expect(b.rank() == 1 && a.rank() >= 1 && a.shape().back() == b.size(), "add",
           a.shape(), b.shape());
  }
  Tensor out(a.shape());
  auto av = a.values();
  auto bv = b.values();
  auto ov = out.mutable_values();
  const std::size_t width = b.size();
  for (std::size_t i = 0; i < av.size(); ++i) {
    ov[i] = av[i] + bv[broadcast ? i % width : i];
  }
  NodePtr an = a.node(), bn = b.node();
  Record({&a, &b}, out, [an, bn, broadcast, width](std::span<const double> g) {
    if (an->requires_grad) {
      auto ga = an->Grad();
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    }
    if (bn->requires_grad) {
      auto gb = bn->Grad();
      for (std::size_t i = 0; i < g.size(); ++i) gb[broadcast ? i % width : i] += g[i];
    }
  });
  return out;
}

Tensor Sub(const Tensor& a, const Tensor& b) {
  Expect(a.shape() == b.shape(), "sub", a.shape(), b.shape());
  Tensor out(a.shape());
  auto av = a.values();
  auto bv = b.values();
  auto ov = out.mutable_values();
  for (std::size_t i = 0; i < av.size(); ++i) ov[i] = av[i] - bv[i];
  NodePtr an = a.node(), bn = b.node();
  Record({&a, &b}, out, [an, bn](std::span<const double> g) {
    if (an->requires_grad) {
      auto ga = an->Grad();
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    }
    if (bn->requires_grad) {
      auto gb = bn->Grad();
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
    }
  });
  return out;
}

Tensor Mul(const Tensor& a, const Tensor& b) {
  Expect(a.shape() == b.shape(), "mul", a.shape(), b.shape());
  Tensor out(a.shape());
  auto av = a.values();
  auto bv = b.values();
  auto ov = out.mutable_values();
  for (std::size_t i = 0; i < av.size(); ++i) ov[i] = av[i] * bv[i];
  NodePtr an = a.node(), bn = b.node();
  Record({&a, &b}, out, [an, bn](std::span<const double> g) {
    if (an->requires_grad) {
      auto ga = an->Grad();
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bn->value[i];
    }
    if (bn->requires_grad) {
      auto gb = bn->Grad();
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * an->value[i];
    }
  });
  return out;
}

Tensor Scale(const Tensor& a, double factor) {
  Tensor out = Unary(a, [factor](double v) { return v * factor; });
  NodePtr an = a.node();
  Record({&a}, out, [an, factor](std::span<const double> g) {
    auto ga = an->Grad();
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * factor;
  });
  return out;
}

Tensor Reshape(const Tensor& a, Shape shape) {
  if (NumElements(shape) != a.size()) Mismatch("reshape", a.shape(), shape);
  Tensor out(std::move(shape), std::vector<double>(a.values().begin(), a.values().end()));
  NodePtr an = a.node();
  Record({&a}, out, [an](std::span<const double> g) {
    auto ga = an->Grad();
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
  });
  return out;
}

Tensor Transpose(const Tensor& a) {
  ExpectRank(a, 2, "transpose");
  const std::size_t r = a.dim(0), c = a.dim(1);
  Tensor out(Shape{c, r});
  auto av = a.values();
  auto ov = out.mutable_values();
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < c; ++j) ov[j * r + i] = av[i * c + j];
  }
  NodePtr an = a.node();
  Record({&a}, out, [an, r, c](std::span<const double> g) {
    auto ga = an->Grad();
    for (std::size_t i = 0; i < r; ++i) {
      for (std::size_t j = 0; j < c; ++j) ga[i * c + j] += g[j * r + i];
    }
  });
  return out;
}

Tensor Concat(const std::vector<Tensor>& parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  const Shape& first = parts[0].shape();
  if (axis >= first.size()) {
    throw ShapeError("concat: axis " + std::to_string(axis) + " out of range for " +
                     ShapeString(first));
  }
  Shape out_shape = first;
  out_shape[axis] = 0;
  for (const Tensor& p : parts) {
    bool ok = p.rank() == first.size();
    for (std::size_t d = 0; ok && d < first.size(); ++d) {
      if (d != axis && p.dim(d) != first[d]) ok = false;
    }
    if (!ok) Mismatch("concat", first, p.shape());
    out_shape[axis] += p.dim(axis);
  }
  std::size_t outer = 1;
  for (std::size_t d = 0; d < axis; ++d) outer *= first[d];
  std::size_t inner = 1;
  for (std::size_t d = axis + 1; d < first.size(); ++d) inner *= first[d];
  const std::size_t out_block = out_shape[axis] * inner;

  Tensor out(out_shape);
  auto ov = out.mutable_values();
  std::vector<std::size_t> offsets;
  std::size_t offset = 0;
  for (const Tensor& p : parts) {
    const std::size_t block = p.dim(axis) * inner;
    auto pv = p.values();
    for (std::size_t o = 0; o < outer; ++o) {
      std::copy_n(pv.begin() + o * block, block, ov.begin() + o * out_block + offset);
    }
    offsets.push_back(offset);
    offset += block;
  }

  bool any = false;
  for (const Tensor& p : parts) any = any || p.requires_grad();
  if (any && Tape::Current() != nullptr) {
    out.node()->requires_grad = true;
    std::vector<NodePtr> nodes;
    std::vector<std::size_t> blocks;
    for (const Tensor& p : parts) {
      nodes.push_back(p.node());
      blocks.push_back(p.dim(axis) * inner);
    }
    NodePtr on = out.node();
    Tape::Current()->Record([on, nodes, blocks, offsets, outer, out_block]() {
      if (on->grad.empty()) return;
      for (std::size_t k = 0; k < nodes.size(); ++k) {
        if (!nodes[k]->requires_grad) continue;
        auto gp = nodes[k]->Grad();
        for (std::size_t o = 0; o < outer; ++o) {
          for (std::size_t i = 0; i < blocks[k]; ++i) {
            gp[o * blocks[k] + i] += on->grad[o * out_block + offsets[k] + i];
          }
        }
      }
    });
  }
  return out;
}

Tensor SliceRows(const Tensor& a, std::size_t begin, std::size_t end) {
  ExpectRank(a, 2, "slice_rows");
  if (begin >= end || end > a.dim(0)) {
    throw ShapeError("slice_rows: range [" + std::to_string(begin) + ", " +
                     std::to_string(end) + ") invalid for " + ShapeString(a.shape()));
  }
  const std::size_t cols = a.dim(1);
  Tensor out(Shape{end - begin, cols},
             std::vector<double>(a.values().begin() + begin * cols,
                                 a.values().begin() + end * cols));
  NodePtr an = a.node();
  Record({&a}, out, [an, begin, cols](std::span<const double> g) {
    auto ga = an->Grad();
    for (std::size_t i = 0; i < g.size(); ++i) ga[begin * cols + i] += g[i];
  });
  return out;
}

Tensor SliceCols(const Tensor& a, std::size_t begin, std::size_t end) {
  ExpectRank(a, 2, "slice_cols");
  if (begin >= end || end > a.dim(1)) {
    throw ShapeError("slice_cols: range [" + std::to_string(begin) + ", " +
                     std::to_string(end) + ") invalid for " + ShapeString(a.shape()));
  }
  const std::size_t rows = a.dim(0), cols = a.dim(1), w = end - begin;
  Tensor out(Shape{rows, w});
  auto av = a.values();
  auto ov = out.mutable_values();
  for (std::size_t r = 0; r < rows; ++r) {
    std::copy_n(av.begin() + r * cols + begin, w, ov.begin() + r * w);
  }
  NodePtr an = a.node();
  Record({&a}, out, [an, rows, cols, begin, w](std::span<const double> g) {
    auto ga = an->Grad();
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < w; ++c) ga[r * cols + begin + c] += g[r * w + c];
    }
  });
  return out;
}

Tensor EmbeddingLookup(const Tensor& table, std::span<const std::int64_t> ids) {
  ExpectRank(table, 2, "embedding_lookup");
  const std::size_t vocab = table.dim(0), dim = table.dim(1);
  std::vector<std::int64_t> idx(ids.begin(), ids.end());
  Tensor out(Shape{idx.size(), dim});
  auto tv = table.values();
  auto ov = out.mutable_values();
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] < 0 || static_cast<std::size_t>(idx[i]) >= vocab) {
      throw ShapeError("embedding_lookup: id " + std::to_string(idx[i]) +
                       " outside table of shape " + ShapeString(table.shape()));
    }
    std::copy_n(tv.begin() + idx[i] * dim, dim, ov.begin() + i * dim);
  }
  NodePtr tn = table.node();
  Record({&table}, out, [tn, idx, dim](std::span<const double> g) {
    auto gt = tn->Grad();
    for (std::size_t i = 0; i < idx.size(); ++i) {
      for (std::size_t d = 0; d < dim; ++d) gt[idx[i] * dim + d] += g[i * dim + d];
    }
  });
  return out;
}

Tensor Conv1d(const Tensor& x, const Tensor& weight, const Tensor& bias,
              std::size_t window, std::size_t pad_end) {
  ExpectRank(x, 2, "conv1d");
  ExpectRank(weight, 2, "conv1d");
  const std::size_t len = x.dim(0), channels = x.dim(1);
  Expect(weight.dim(0) == window * channels, "conv1d", x.shape(), weight.shape());
  const std::size_t filters = weight.dim(1);
  Expect(bias.rank() == 1 && bias.size() == filters, "conv1d", weight.shape(),
         bias.shape());
  if (window == 0 || len + pad_end < window) {
    throw ShapeError("conv1d: window " + std::to_string(window) +
                     " longer than padded input " + ShapeString(x.shape()));
  }
  const std::size_t out_len = len + pad_end - window + 1;
  const std::size_t span = window * channels;
  auto cols = std::make_shared<std::vector<double>>(out_len * span, 0.0);
  auto xv = x.values();
  for (std::size_t t = 0; t < out_len; ++t) {
    for (std::size_t k = 0; k < window; ++k) {
      if (t + k >= len) break;
      std::copy_n(xv.begin() + (t + k) * channels, channels,
                  cols->begin() + t * span + k * channels);
    }
  }
  Tensor out(Shape{out_len, filters});
  const auto n = static_cast<Eigen::Index>(out_len);
  const auto s = static_cast<Eigen::Index>(span);
  const auto f = static_cast<Eigen::Index>(filters);
  MutMap om(out.mutable_values().data(), n, f);
  om.noalias() = ConstMap(cols->data(), n, s) * ConstMap(weight.values().data(), s, f);
  om.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(bias.values().data(), f);

  NodePtr xn = x.node(), wn = weight.node(), bn = bias.node();
  Record({&x, &weight, &bias}, out,
         [xn, wn, bn, cols, n, s, f, len, channels, window](std::span<const double> g) {
           ConstMap gm(g.data(), n, f);
           if (wn->requires_grad) {
             MutMap(wn->Grad().data(), s, f).noalias() +=
                 ConstMap(cols->data(), n, s).transpose() * gm;
           }
           if (bn->requires_grad) {
             Eigen::Map<Eigen::RowVectorXd>(bn->Grad().data(), f) += gm.colwise().sum();
           }
           if (xn->requires_grad) {
             RowMat gcols = gm * ConstMap(wn->value.data(), s, f).transpose();
             auto gx = xn->Grad();
             for (Eigen::Index t = 0; t < n; ++t) {
               for (std::size_t k = 0; k < window; ++k) {
                 const std::size_t row = static_cast<std::size_t>(t) + k;
                 if (row >= len) break;
                 for (std::size_t c = 0; c < channels; ++c) {
                   gx[row * channels + c] += gcols(t, static_cast<Eigen::Index>(k * channels + c));
                 }
               }
             }
           }
         });
  return out;
}

Tensor Conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias,
              std::size_t pad_bottom, std::size_t pad_right) {
  ExpectRank(x, 3, "conv2d");
  ExpectRank(weight, 4, "conv2d");
  const std::size_t cin = x.dim(0), h = x.dim(1), w = x.dim(2);
  const std::size_t filters = weight.dim(0), kh = weight.dim(2), kw = weight.dim(3);
  Expect(weight.dim(1) == cin, "conv2d", x.shape(), weight.shape());
  Expect(bias.rank() == 1 && bias.size() == filters, "conv2d", weight.shape(),
         bias.shape());
  if (h + pad_bottom < kh || w + pad_right < kw) {
    Mismatch("conv2d", x.shape(), weight.shape());
  }
  const std::size_t oh = h + pad_bottom - kh + 1, ow = w + pad_right - kw + 1;
  const std::size_t span = cin * kh * kw;
  const std::size_t positions = oh * ow;
  auto cols = std::make_shared<std::vector<double>>(positions * span, 0.0);
  auto xv = x.values();
  for (std::size_t i = 0; i < oh; ++i) {
    for (std::size_t j = 0; j < ow; ++j) {
      double* row = cols->data() + (i * ow + j) * span;
      for (std::size_t c = 0; c < cin; ++c) {
        for (std::size_t a = 0; a < kh; ++a) {
          if (i + a >= h) continue;
          for (std::size_t b = 0; b < kw; ++b) {
            if (j + b >= w) continue;
            row[(c * kh + a) * kw + b] = xv[(c * h + i + a) * w + j + b];
          }
        }
      }
    }
  }
  const auto p = static_cast<Eigen::Index>(positions);
  const auto s = static_cast<Eigen::Index>(span);
  const auto f = static_cast<Eigen::Index>(filters);
  // out_mat [positions, filters] = cols * W^T with W viewed as [filters, span].
  RowMat out_mat = ConstMap(cols->data(), p, s) *
                   ConstMap(weight.values().data(), f, s).transpose();
  Tensor out(Shape{filters, oh, ow});
  auto ov = out.mutable_values();
  auto bv = bias.values();
  for (std::size_t k = 0; k < filters; ++k) {
    for (std::size_t q = 0; q < positions; ++q) {
      ov[k * positions + q] = out_mat(static_cast<Eigen::Index>(q),
                                      static_cast<Eigen::Index>(k)) + bv[k];
    }
  }

  NodePtr xn = x.node(), wn = weight.node(), bn = bias.node();
  Record({&x, &weight, &bias}, out,
         [xn, wn, bn, cols, p, s, f, cin, h, w, kh, kw, oh, ow](std::span<const double> g) {
           // g is [filters, positions]; view it transposed as [positions, filters].
           ConstMap gfp(g.data(), f, p);
           if (wn->requires_grad) {
             MutMap(wn->Grad().data(), f, s).noalias() +=
                 gfp * ConstMap(cols->data(), p, s);
           }
           if (bn->requires_grad) {
             Eigen::Map<Eigen::VectorXd>(bn->Grad().data(), f) += gfp.rowwise().sum();
           }
           if (xn->requires_grad) {
             RowMat gcols = gfp.transpose() * ConstMap(wn->value.data(), f, s);
             auto gx = xn->Grad();
             for (std::size_t i = 0; i < oh; ++i) {
               for (std::size_t j = 0; j < ow; ++j) {
                 const auto row = static_cast<Eigen::Index>(i * ow + j);
                 for (std::size_t c = 0; c < cin; ++c) {
                   for (std::size_t a = 0; a < kh; ++a) {
                     if (i + a >= h) continue;
                     for (std::size_t b = 0; b < kw; ++b) {
                       if (j + b >= w) continue;
                       gx[(c * h + i + a) * w + j + b] +=
                           gcols(row, static_cast<Eigen::Index>((c * kh + a) * kw + b));
                     }
                   }
                 }
               }
             }
           }
         });
  return out;
}

namespace {

// Max pooling over explicit [start, end) windows per output cell.
Tensor PoolWindows(const Tensor& x, std::size_t out_h, std::size_t out_w,
                   const std::vector<std::pair<std::size_t, std::size_t>>& rows,
                   const std::vector<std::pair<std::size_t, std::size_t>>& cols) {
  const std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
  Tensor out(Shape{c, out_h, out_w});
  std::vector<std::size_t> argmax(c * out_h * out_w);
  auto xv = x.values();
  auto ov = out.mutable_values();
  for (std::size_t k = 0; k < c; ++k) {
    for (std::size_t i = 0; i < out_h; ++i) {
      for (std::size_t j = 0; j < out_w; ++j) {
        double best = -std::numeric_limits<double>::infinity();
        std::size_t best_idx = 0;
        for (std::size_t a = rows[i].first; a < rows[i].second; ++a) {
          for (std::size_t b = cols[j].first; b < cols[j].second; ++b) {
            const std::size_t idx = (k * h + a) * w + b;
            if (xv[idx] > best) {
              best = xv[idx];
              best_idx = idx;
            }
          }
        }
        const std::size_t o = (k * out_h + i) * out_w + j;
        ov[o] = best;
        argmax[o] = best_idx;
      }
    }
  }
  NodePtr xn = x.node();
  Record({&x}, out, [xn, argmax = std::move(argmax)](std::span<const double> g) {
    auto gx = xn->Grad();
    for (std::size_t o = 0; o < g.size(); ++o) gx[argmax[o]] += g[o];
  });
  return out;
}

}  // namespace

Tensor MaxPool2d(const Tensor& x, std::size_t pool_h, std::size_t pool_w) {
  ExpectRank(x, 3, "max_pool2d");
  if (pool_h == 0 || pool_w == 0 || x.dim(1) == 0 || x.dim(2) == 0) {
    throw ShapeError("max_pool2d: empty window or input " + ShapeString(x.shape()));
  }
  const std::size_t h = x.dim(1), w = x.dim(2);
  const std::size_t oh = (h + pool_h - 1) / pool_h, ow = (w + pool_w - 1) / pool_w;
  std::vector<std::pair<std::size_t, std::size_t>> rows, cols;
  for (std::size_t i = 0; i < oh; ++i) rows.emplace_back(i * pool_h, std::min(h, (i + 1) * pool_h));
  for (std::size_t j = 0; j < ow; ++j) cols.emplace_back(j * pool_w, std::min(w, (j + 1) * pool_w));
  return PoolWindows(x, oh, ow, rows, cols);
}

Tensor AdaptiveMaxPool2d(const Tensor& x, std::size_t out_h, std::size_t out_w) {
  ExpectRank(x, 3, "adaptive_max_pool2d");
  if (out_h == 0 || out_w == 0 || x.dim(1) == 0 || x.dim(2) == 0) {
    throw ShapeError("adaptive_max_pool2d: empty grid or input " + ShapeString(x.shape()));
  }
  const std::size_t h = x.dim(1), w = x.dim(2);
  std::vector<std::pair<std::size_t, std::size_t>> rows, cols;
  for (std::size_t i = 0; i < out_h; ++i) {
    rows.emplace_back(i * h / out_h, ((i + 1) * h + out_h - 1) / out_h);
  }
  for (std::size_t j = 0; j < out_w; ++j) {
    cols.emplace_back(j * w / out_w, ((j + 1) * w + out_w - 1) / out_w);
  }
  return PoolWindows(x, out_h, out_w, rows, cols);
}

Tensor MaxOverRows(const Tensor& x) {
  ExpectRank(x, 2, "max_over_rows");
  const std::size_t rows = x.dim(0), cols = x.dim(1);
  if (rows == 0) throw ShapeError("max_over_rows: no rows");
  Tensor out(Shape{cols});
  std::vector<std::size_t> argmax(cols, 0);
  auto xv = x.values();
  auto ov = out.mutable_values();
  for (std::size_t c = 0; c < cols; ++c) {
    double best = xv[c];
    for (std::size_t r = 1; r < rows; ++r) {
      if (xv[r * cols + c] > best) {
        best = xv[r * cols + c];
        argmax[c] = r;
      }
    }
    ov[c] = best;
  }
  NodePtr xn = x.node();
  Record({&x}, out, [xn, argmax = std::move(argmax), cols](std::span<const double> g) {
    auto gx = xn->Grad();
    for (std::size_t c = 0; c < cols; ++c) gx[argmax[c] * cols + c] += g[c];
  });
  return out;
}

Tensor Relu(const Tensor& x) {
  Tensor out = Unary(x, [](double v) { return v > 0.0 ? v : 0.0; });
  NodePtr xn = x.node();
  Record({&x}, out, [xn](std::span<const double> g) {
    auto gx = xn->Grad();
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (xn->value[i] > 0.0) gx[i] += g[i];
    }
  });
  return out;
}

Tensor Tanh(const Tensor& x) {
  Tensor out = Unary(x, [](double v) { return std::tanh(v); });
  NodePtr xn = x.node(), on = out.node();
  std::weak_ptr<detail::Node> weak = on;
  Record({&x}, out, [xn, weak](std::span<const double> g) {
    auto o = weak.lock();
    auto gx = xn->Grad();
    for (std::size_t i = 0; i < g.size(); ++i) {
      gx[i] += g[i] * (1.0 - o->value[i] * o->value[i]);
    }
  });
  return out;
}

Tensor Logistic(const Tensor& x) {
  Tensor out = Unary(x, [](double v) {
    if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
    const double e = std::exp(v);
    return e / (1.0 + e);
  });
  NodePtr xn = x.node();
  std::weak_ptr<detail::Node> weak = out.node();
  Record({&x}, out, [xn, weak](std::span<const double> g) {
    auto o = weak.lock();
    auto gx = xn->Grad();
    for (std::size_t i = 0; i < g.size(); ++i) {
      gx[i] += g[i] * o->value[i] * (1.0 - o->value[i]);
    }
  });
  return out;
}

Tensor Log(const Tensor& x) {
  Tensor out = Unary(x, [](double v) { return std::log(v); });
  NodePtr xn = x.node();
  Record({&x}, out, [xn](std::span<const double> g) {
    auto gx = xn->Grad();
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] / xn->value[i];
  });
  return out;
}

Tensor Softmax(const Tensor& x) {
  if (x.rank() != 1 && x.rank() != 2) {
    throw ShapeError("softmax: expected rank 1 or 2, got " + ShapeString(x.shape()));
  }
  const std::size_t cols = x.shape().back();
  const std::size_t rows = x.size() / std::max<std::size_t>(cols, 1);
  Tensor out(x.shape());
  auto xv = x.values();
  auto ov = out.mutable_values();
  for (std::size_t r = 0; r < rows; ++r) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < cols; ++c) mx = std::max(mx, xv[r * cols + c]);
    double sum = 0.0;
    for (std::size_t c = 0; c < cols; ++c) {
      ov[r * cols + c] = std::exp(xv[r * cols + c] - mx);
      sum += ov[r * cols + c];
    }
    for (std::size_t c = 0; c < cols; ++c) ov[r * cols + c] /= sum;
  }
  NodePtr xn = x.node();
  std::weak_ptr<detail::Node> weak = out.node();
  Record({&x}, out, [xn, weak, rows, cols](std::span<const double> g) {
    auto o = weak.lock();
    auto gx = xn->Grad();
    for (std::size_t r = 0; r < rows; ++r) {
      double dot = 0.0;
      for (std::size_t c = 0; c < cols; ++c) dot += g[r * cols + c] * o->value[r * cols + c];
      for (std::size_t c = 0; c < cols; ++c) {
        gx[r * cols + c] += o->value[r * cols + c] * (g[r * cols + c] - dot);
      }
    }
  });
  return out;
}

Tensor Sum(const Tensor& x) {
  double s = 0.0;
  for (double v : x.values()) s += v;
  Tensor out = Tensor::Scalar(s);
  NodePtr xn = x.node();
  Record({&x}, out, [xn](std::span<const double> g) {
    auto gx = xn->Grad();
    for (double& v : gx) v += g[0];
  });
  return out;
}

Tensor Mean(const Tensor& x) {
  if (x.size() == 0) throw ShapeError("mean of empty tensor");
  return Scale(Sum(x), 1.0 / static_cast<double>(x.size()));
}

Tensor MeanRows(const Tensor& x) {
  ExpectRank(x, 2, "mean_rows");
  const std::size_t rows = x.dim(0), cols = x.dim(1);
  if (rows == 0) throw ShapeError("mean_rows: no rows");
  Tensor out(Shape{cols});
  auto xv = x.values();
  auto ov = out.mutable_values();
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) ov[c] += xv[r * cols + c];
  }
  const double inv = 1.0 / static_cast<double>(rows);
  for (double& v : ov) v *= inv;
  NodePtr xn = x.node();
  Record({&x}, out, [xn, rows, cols, inv](std::span<const double> g) {
    auto gx = xn->Grad();
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < cols; ++c) gx[r * cols + c] += g[c] * inv;
    }
  });
  return out;
}

Tensor CosineSimilarityMatrix(const Tensor& a, const Tensor& b) {
  ExpectRank(a, 2, "cosine_similarity_matrix");
  ExpectRank(b, 2, "cosine_similarity_matrix");
  Expect(a.dim(1) == b.dim(1) && a.dim(1) >= 1, "cosine_similarity_matrix",
         a.shape(), b.shape());
  const std::size_t n = a.dim(0), m = b.dim(0), k = a.dim(1);
  auto av = a.values();
  auto bv = b.values();
  std::vector<double> na(n), nb(m);
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t d = 0; d < k; ++d) s += av[i * k + d] * av[i * k + d];
    na[i] = std::sqrt(s);
  }
  for (std::size_t j = 0; j < m; ++j) {
    double s = 0.0;
    for (std::size_t d = 0; d < k; ++d) s += bv[j * k + d] * bv[j * k + d];
    nb[j] = std::sqrt(s);
  }
  Tensor out(Shape{n, m});
  auto ov = out.mutable_values();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      if (na[i] == 0.0 || nb[j] == 0.0) continue;
      double dot = 0.0;
      for (std::size_t d = 0; d < k; ++d) dot += av[i * k + d] * bv[j * k + d];
      ov[i * m + j] = dot / (na[i] * nb[j]);
    }
  }
  NodePtr an = a.node(), bn = b.node();
  std::weak_ptr<detail::Node> weak = out.node();
  Record({&a, &b}, out, [an, bn, weak, na, nb, n, m, k](std::span<const double> g) {
    auto o = weak.lock();
    const auto& av = an->value;
    const auto& bv = bn->value;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < m; ++j) {
        if (na[i] == 0.0 || nb[j] == 0.0) continue;
        const double gij = g[i * m + j];
        if (gij == 0.0) continue;
        const double mij = o->value[i * m + j];
        const double inv = 1.0 / (na[i] * nb[j]);
        if (an->requires_grad) {
          auto ga = an->Grad();
          const double self = mij / (na[i] * na[i]);
          for (std::size_t d = 0; d < k; ++d) {
            ga[i * k + d] += gij * (bv[j * k + d] * inv - self * av[i * k + d]);
          }
        }
        if (bn->requires_grad) {
          auto gb = bn->Grad();
          const double self = mij / (nb[j] * nb[j]);
          for (std::size_t d = 0; d < k; ++d) {
            gb[j * k + d] += gij * (av[i * k + d] * inv - self * bv[j * k + d]);
          }
        }
      }
    }
  });
  return out;
}

Tensor ParallelComponent(const Tensor& h, const Tensor& a) {
  ExpectRank(h, 2, "parallel_component");
  Expect(h.shape() == a.shape(), "parallel_component", h.shape(), a.shape());
  const std::size_t n = h.dim(0), k = h.dim(1);
  auto hv = h.values();
  auto av = a.values();
  Tensor out(h.shape());
  auto ov = out.mutable_values();
  for (std::size_t i = 0; i < n; ++i) {
    double ha = 0.0, aa = 0.0;
    for (std::size_t d = 0; d < k; ++d) {
      ha += hv[i * k + d] * av[i * k + d];
      aa += av[i * k + d] * av[i * k + d];
    }
    if (aa == 0.0) continue;
    const double coef = ha / aa;
    for (std::size_t d = 0; d < k; ++d) ov[i * k + d] = coef * av[i * k + d];
  }
  NodePtr hn = h.node(), an = a.node();
  Record({&h, &a}, out, [hn, an, n, k](std::span<const double> g) {
    const auto& hv = hn->value;
    const auto& av = an->value;
    for (std::size_t i = 0; i < n; ++i) {
      double ha = 0.0, aa = 0.0, ga_dot = 0.0;
      for (std::size_t d = 0; d < k; ++d) {
        ha += hv[i * k + d] * av[i * k + d];
        aa += av[i * k + d] * av[i * k + d];
        ga_dot += g[i * k + d] * av[i * k + d];
      }
      if (aa == 0.0) continue;
      const double coef = ha / aa;
      if (hn->requires_grad) {
        auto gh = hn->Grad();
        for (std::size_t d = 0; d < k; ++d) gh[i * k + d] += ga_dot / aa * av[i * k + d];
      }
      if (an->requires_grad) {
        auto gav = an->Grad();
        for (std::size_t d = 0; d < k; ++d) {
          gav[i * k + d] += coef * g[i * k + d] +
                            ga_dot * (hv[i * k + d] / aa - 2.0 * ha * av[i * k + d] / (aa * aa));
        }
      }
    }
  });
  return out;
}

namespace {

void CheckLabels(std::size_t rows, std::size_t classes, std::span<const int> labels,
                 const char* op) {
  if (rows == 0) throw ShapeError(std::string(op) + ": empty batch");
  if (labels.size() != rows) {
    throw ShapeError(std::string(op) + ": " + std::to_string(labels.size()) +
                     " labels for " + std::to_string(rows) + " rows");
  }
  for (int y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= classes) {
      throw ShapeError(std::string(op) + ": label " + std::to_string(y) +
                       " outside [0, " + std::to_string(classes) + ")");
    }
  }
}

}  // namespace

Tensor CrossEntropyWithLogits(const Tensor& logits, std::span<const int> labels) {
  ExpectRank(logits, 2, "cross_entropy");
  const std::size_t rows = logits.dim(0), classes = logits.dim(1);
  CheckLabels(rows, classes, labels, "cross_entropy");
  auto zv = logits.values();
  std::vector<double> probs(zv.size());
  double loss = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < classes; ++c) mx = std::max(mx, zv[r * classes + c]);
    double sum = 0.0;
    for (std::size_t c = 0; c < classes; ++c) {
      probs[r * classes + c] = std::exp(zv[r * classes + c] - mx);
      sum += probs[r * classes + c];
    }
    for (std::size_t c = 0; c < classes; ++c) probs[r * classes + c] /= sum;
    loss += std::log(sum) + mx - zv[r * classes + labels[r]];
  }
  const double inv = 1.0 / static_cast<double>(rows);
  Tensor out = Tensor::Scalar(loss * inv);
  NodePtr zn = logits.node();
  std::vector<int> y(labels.begin(), labels.end());
  Record({&logits}, out, [zn, probs = std::move(probs), y = std::move(y), classes,
                          inv](std::span<const double> g) {
    auto gz = zn->Grad();
    for (std::size_t r = 0; r < y.size(); ++r) {
      for (std::size_t c = 0; c < classes; ++c) {
        const double target = static_cast<int>(c) == y[r] ? 1.0 : 0.0;
        gz[r * classes + c] += g[0] * inv * (probs[r * classes + c] - target);
      }
    }
  });
  return out;
}

Tensor NllFromProbs(const Tensor& probs, std::span<const int> labels) {
  ExpectRank(probs, 2, "nll");
  const std::size_t rows = probs.dim(0), classes = probs.dim(1);
  CheckLabels(rows, classes, labels, "nll");
  auto pv = probs.values();
  double loss = 0.0;
  for (std::size_t r = 0; r < rows; ++r) loss -= std::log(pv[r * classes + labels[r]]);
  const double inv = 1.0 / static_cast<double>(rows);
  Tensor out = Tensor::Scalar(loss * inv);
  NodePtr pn = probs.node();
  std::vector<int> y(labels.begin(), labels.end());
  Record({&probs}, out, [pn, y = std::move(y), classes, inv](std::span<const double> g) {
    auto gp = pn->Grad();
    for (std::size_t r = 0; r < y.size(); ++r) {
      const std::size_t idx = r * classes + y[r];
      gp[idx] -= g[0] * inv / pn->value[idx];
    }
  });
  return out;
}

Tensor BinaryCrossEntropyWithLogits(const Tensor& logits,
                                    std::span<const int> labels) {
  const std::size_t n = logits.size();
  CheckLabels(n, 2, labels, "binary_cross_entropy");
  auto zv = logits.values();
  double loss = 0.0;
  std::vector<double> sig(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double z = zv[i];
    loss += std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z))) - labels[i] * z;
    sig[i] = z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
  }
  const double inv = 1.0 / static_cast<double>(n);
  Tensor out = Tensor::Scalar(loss * inv);
  NodePtr zn = logits.node();
  std::vector<int> y(labels.begin(), labels.end());
  Record({&logits}, out, [zn, sig = std::move(sig), y = std::move(y), inv](std::span<const double> g) {
    auto gz = zn->Grad();
    for (std::size_t i = 0; i < y.size(); ++i) gz[i] += g[0] * inv * (sig[i] - y[i]);
  });
  return out;
}

}  // namespace kaqa::ad
