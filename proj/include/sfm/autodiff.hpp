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

#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "sfm/tensor.hpp"

namespace sfm::ad {

class Tape;

/// Handle to a node recorded on a Tape.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape& tape() const { return *tape_; }
  std::size_t id() const { return id_; }
  const Tensor& value() const;
  const Tensor& grad() const;

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Linear record of tensor operations for reverse-mode differentiation.
///
/// Nodes are appended in evaluation order, so walking them backwards is a valid
/// reverse topological order and each node is visited exactly once.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::size_t self)>;

  Var leaf(Tensor value);
  Var constant(Tensor value);
  Var record(Tensor value, std::span<const std::size_t> parents,
             BackwardFn backward);

  /// Seeds d(root)/d(root) = 1 and propagates. `root` must hold one element.
  void backward(const Var& root);

  const Tensor& value(std::size_t id) const { return nodes_[id].value; }
  const Tensor& grad(std::size_t id) const { return nodes_[id].grad; }
  bool needs_grad(std::size_t id) const { return nodes_[id].needs_grad; }
  std::size_t size() const { return nodes_.size(); }
  std::size_t visits() const { return visits_; }

  /// Adds `delta` into the adjoint of node `id` (no-op for constants).
  void accumulate(std::size_t id, const Tensor& delta);
  void clear();

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool needs_grad = false;
    BackwardFn backward;
  };
  std::vector<Node> nodes_;
  std::size_t visits_ = 0;
};

Var matmul(const Var& a, const Var& b);
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
/// x (n x m) plus a bias row b (m) broadcast over rows.
Var add_bias(const Var& x, const Var& b);
Var scale(const Var& a, double s);
/// Elementwise product with a constant tensor (dropout masks, weights).
Var mul_const(const Var& a, const Tensor& c);
Var tanh(const Var& a);
Var silu(const Var& a);
Var square(const Var& a);
Var sum(const Var& a);
Var mean(const Var& a);
/// Column-wise concatenation of rank-2 nodes with equal row counts.
Var concat_cols(std::span<const Var> parts);
/// Rows of `table` selected by `indices` (embedding lookup).
Var gather_rows(const Var& table, std::span<const std::size_t> indices);

/// Mean over rows of the squared Euclidean row residual: (1/n) sum ||a_i - b_i||^2.
Var mean_squared_error(const Var& a, const Var& b);

}  // namespace sfm::ad
