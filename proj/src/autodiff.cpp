// Copyright 2026 The sfmlab Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "sfm/autodiff.hpp"

#include <cmath>
#include <stdexcept>

namespace sfm::ad {
namespace {

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

Tape& same_tape(const Var& a, const Var& b) {
  if (&a.tape() != &b.tape()) throw std::logic_error("operands on different tapes");
  return a.tape();
}

template <class F>
Tensor map(const Tensor& a, F f) {
  Tensor out = a;
  for (double& v : out.data()) v = f(v);
  return out;
}

}  // namespace

const Tensor& Var::value() const { return tape_->value(id_); }
const Tensor& Var::grad() const { return tape_->grad(id_); }

Var Tape::leaf(Tensor value) {
  Node n;
  n.grad = Tensor::zeros_like(value);
  n.value = std::move(value);
  n.needs_grad = true;
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Var Tape::constant(Tensor value) {
  Node n;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(Tensor value, std::span<const std::size_t> parents,
                 BackwardFn backward) {
  Node n;
  for (std::size_t p : parents) n.needs_grad = n.needs_grad || nodes_[p].needs_grad;
  if (n.needs_grad) {
    n.grad = Tensor::zeros_like(value);
    n.backward = std::move(backward);
  }
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

void Tape::accumulate(std::size_t id, const Tensor& delta) {
  Node& n = nodes_[id];
  if (!n.needs_grad) return;
  n.grad += delta;
}

void Tape::backward(const Var& root) {
  if (root.value().size() != 1) {
    throw DimensionError("backward: root must be a scalar, got " +
                         shape_string(root.value().shape()));
  }
  for (Node& n : nodes_) {
    if (n.needs_grad) n.grad *= 0.0;
  }
  visits_ = 0;
  if (!nodes_[root.id()].needs_grad) return;
  nodes_[root.id()].grad[0] = 1.0;
  for (std::size_t i = root.id() + 1; i-- > 0;) {
    ++visits_;
    if (nodes_[i].backward) nodes_[i].backward(*this, i);
  }
}

void Tape::clear() {
  nodes_.clear();
  visits_ = 0;
}

Var matmul(const Var& a, const Var& b) {
  Tape& t = same_tape(a, b);
  const std::size_t ids[] = {a.id(), b.id()};
  const std::size_t ia = a.id(), ib = b.id();
  return t.record(sfm::matmul(a.value(), b.value()), ids,
                  [ia, ib](Tape& tp, std::size_t self) {
                    const Tensor& g = tp.grad(self);
                    if (tp.needs_grad(ia))
                      tp.accumulate(ia, sfm::matmul(g, transpose(tp.value(ib))));
                    if (tp.needs_grad(ib))
                      tp.accumulate(ib, sfm::matmul(transpose(tp.value(ia)), g));
                  });
}

Var add(const Var& a, const Var& b) {
  Tape& t = same_tape(a, b);
  const std::size_t ids[] = {a.id(), b.id()};
  const std::size_t ia = a.id(), ib = b.id();
  return t.record(a.value() + b.value(), ids, [ia, ib](Tape& tp, std::size_t self) {
    tp.accumulate(ia, tp.grad(self));
    tp.accumulate(ib, tp.grad(self));
  });
}

Var sub(const Var& a, const Var& b) {
  Tape& t = same_tape(a, b);
  const std::size_t ids[] = {a.id(), b.id()};
  const std::size_t ia = a.id(), ib = b.id();
  return t.record(a.value() - b.value(), ids, [ia, ib](Tape& tp, std::size_t self) {
    tp.accumulate(ia, tp.grad(self));
    if (tp.needs_grad(ib)) tp.accumulate(ib, tp.grad(self) * -1.0);
  });
}

Var mul(const Var& a, const Var& b) {
  Tape& t = same_tape(a, b);
  const std::size_t ids[] = {a.id(), b.id()};
  const std::size_t ia = a.id(), ib = b.id();
  return t.record(hadamard(a.value(), b.value()), ids,
                  [ia, ib](Tape& tp, std::size_t self) {
                    const Tensor& g = tp.grad(self);
                    if (tp.needs_grad(ia)) tp.accumulate(ia, hadamard(g, tp.value(ib)));
                    if (tp.needs_grad(ib)) tp.accumulate(ib, hadamard(g, tp.value(ia)));
                  });
}

Var add_bias(const Var& x, const Var& b) {
  Tape& t = same_tape(x, b);
  const Tensor& xv = x.value();
  const Tensor& bv = b.value();
  if (xv.rank() != 2 || bv.size() != xv.cols()) {
    throw DimensionError("add_bias: " + shape_string(xv.shape()) + " + " +
                         shape_string(bv.shape()));
  }
  Tensor out = xv;
  for (std::size_t r = 0; r < out.rows(); ++r) {
    auto row = out.row(r);
    for (std::size_t c = 0; c < row.size(); ++c) row[c] += bv[c];
  }
  const std::size_t ids[] = {x.id(), b.id()};
  const std::size_t ix = x.id(), ib = b.id();
  return t.record(std::move(out), ids, [ix, ib](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad(self);
    tp.accumulate(ix, g);
    if (tp.needs_grad(ib)) {
      Tensor gb = Tensor::zeros_like(tp.value(ib));
      for (std::size_t r = 0; r < g.rows(); ++r) {
        auto row = g.row(r);
        for (std::size_t c = 0; c < row.size(); ++c) gb[c] += row[c];
      }
      tp.accumulate(ib, gb);
    }
  });
}

Var scale(const Var& a, double s) {
  const std::size_t ids[] = {a.id()};
  const std::size_t ia = a.id();
  return a.tape().record(a.value() * s, ids, [ia, s](Tape& tp, std::size_t self) {
    tp.accumulate(ia, tp.grad(self) * s);
  });
}

Var mul_const(const Var& a, const Tensor& c) {
  const std::size_t ids[] = {a.id()};
  const std::size_t ia = a.id();
  return a.tape().record(hadamard(a.value(), c), ids,
                         [ia, c](Tape& tp, std::size_t self) {
                           tp.accumulate(ia, hadamard(tp.grad(self), c));
                         });
}

Var tanh(const Var& a) {
  const std::size_t ids[] = {a.id()};
  const std::size_t ia = a.id();
  return a.tape().record(map(a.value(), [](double v) { return std::tanh(v); }), ids,
                         [ia](Tape& tp, std::size_t self) {
                           Tensor d = tp.grad(self);
                           const Tensor& y = tp.value(self);
                           for (std::size_t i = 0; i < d.size(); ++i)
                             d[i] *= 1.0 - y[i] * y[i];
                           tp.accumulate(ia, d);
                         });
}

Var silu(const Var& a) {
  const std::size_t ids[] = {a.id()};
  const std::size_t ia = a.id();
  return a.tape().record(map(a.value(), [](double v) { return v * sigmoid(v); }), ids,
                         [ia](Tape& tp, std::size_t self) {
                           Tensor d = tp.grad(self);
                           const Tensor& x = tp.value(ia);
                           for (std::size_t i = 0; i < d.size(); ++i) {
                             const double s = sigmoid(x[i]);
                             d[i] *= s * (1.0 + x[i] * (1.0 - s));
                           }
                           tp.accumulate(ia, d);
                         });
}

Var square(const Var& a) {
  const std::size_t ids[] = {a.id()};
  const std::size_t ia = a.id();
  return a.tape().record(hadamard(a.value(), a.value()), ids,
                         [ia](Tape& tp, std::size_t self) {
                           tp.accumulate(ia, hadamard(tp.grad(self), tp.value(ia)) * 2.0);
                         });
}

Var sum(const Var& a) {
  const std::size_t ids[] = {a.id()};
  const std::size_t ia = a.id();
  return a.tape().record(Tensor({1}, {sfm::sum(a.value())}), ids,
                         [ia](Tape& tp, std::size_t self) {
                           tp.accumulate(ia, Tensor(tp.value(ia).shape(), tp.grad(self)[0]));
                         });
}

Var mean(const Var& a) {
  const double n = static_cast<double>(a.value().size());
  return scale(sum(a), 1.0 / n);
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw DimensionError("concat_cols: no operands");
  Tape& t = parts.front().tape();
  const std::size_t n = parts.front().value().rows();
  std::size_t width = 0;
  std::vector<std::size_t> ids, offsets, widths;
  for (const Var& p : parts) {
    if (&p.tape() != &t) throw std::logic_error("operands on different tapes");
    const Tensor& v = p.value();
    if (v.rank() != 2 || v.rows() != n) {
      throw DimensionError("concat_cols: row mismatch " + shape_string(v.shape()));
    }
    ids.push_back(p.id());
    offsets.push_back(width);
    widths.push_back(v.cols());
    width += v.cols();
  }
  Tensor out({n, width});
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const Tensor& v = parts[k].value();
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t c = 0; c < widths[k]; ++c) out.at(r, offsets[k] + c) = v.at(r, c);
  }
  return t.record(std::move(out), ids,
                  [ids, offsets, widths, n](Tape& tp, std::size_t self) {
                    const Tensor& g = tp.grad(self);
                    for (std::size_t k = 0; k < ids.size(); ++k) {
                      if (!tp.needs_grad(ids[k])) continue;
                      Tensor part({n, widths[k]});
                      for (std::size_t r = 0; r < n; ++r)
                        for (std::size_t c = 0; c < widths[k]; ++c)
                          part.at(r, c) = g.at(r, offsets[k] + c);
                      tp.accumulate(ids[k], part);
                    }
                  });
}

Var gather_rows(const Var& table, std::span<const std::size_t> indices) {
  const Tensor& tv = table.value();
  if (tv.rank() != 2) throw DimensionError("gather_rows: table must be rank 2");
  const std::size_t width = tv.cols();
  Tensor out({indices.size(), width});
  for (std::size_t r = 0; r < indices.size(); ++r) {
    if (indices[r] >= tv.rows()) throw DimensionError("gather_rows: index out of range");
    auto src = tv.row(indices[r]);
    std::copy(src.begin(), src.end(), out.row(r).begin());
  }
  const std::size_t ids[] = {table.id()};
  const std::size_t it = table.id();
  std::vector<std::size_t> idx(indices.begin(), indices.end());
  return table.tape().record(std::move(out), ids,
                             [it, idx](Tape& tp, std::size_t self) {
                               const Tensor& g = tp.grad(self);
                               Tensor d = Tensor::zeros_like(tp.value(it));
                               for (std::size_t r = 0; r < idx.size(); ++r) {
                                 auto dst = d.row(idx[r]);
                                 auto src = g.row(r);
                                 for (std::size_t c = 0; c < dst.size(); ++c) dst[c] += src[c];
                               }
                               tp.accumulate(it, d);
                             });
}

Var mean_squared_error(const Var& a, const Var& b) {
  const double n = static_cast<double>(a.value().rows());
  return scale(sum(square(sub(a, b))), 1.0 / n);
}

}  // namespace sfm::ad
