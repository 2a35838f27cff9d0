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
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "sfm/interpolant.hpp"
#include "sfm/nets.hpp"
#include "sfm/rng.hpp"
#include "sfm/tensor.hpp"

namespace sfm {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct TrainConfig {
  /// Weight of the score loss in L_v + lambda L_s.
  double lambda = 1.0;
  /// Probability of replacing a condition by the null condition.
  double p_c = 0.1;
  std::size_t batch_size = 256;
  std::size_t epochs = 200;
  AdamConfig adam;
  std::uint64_t seed = 0;
  /// Dropout active during training with fresh masks per batch.
  bool dropout = true;

  void validate() const;
};

struct LossRecord {
  std::size_t epoch = 0;
  double velocity_loss = 0.0;
  double score_loss = 0.0;
};

/// Paired training data drawn from p0 x p1(. | c).
struct PairBatch {
  Tensor x0;
  Tensor x1;
  std::vector<ConditionId> conditions;

  std::size_t size() const { return x0.rows(); }
};

/// Randomness consumed by one loss evaluation; drawn by `draw_loss_noise` or
/// fixed by hand in tests.
struct LossNoise {
  std::vector<double> t_velocity;
  Tensor z_velocity;
  std::vector<double> t_score;  // within [t_min, 1 - t_min]
  Tensor z_score;
  std::vector<bool> masked;     // condition replaced by null
  std::vector<Tensor> velocity_masks;  // per hidden layer, n x width, empty = off
  std::vector<Tensor> score_masks;
};

LossNoise draw_loss_noise(const FieldPair& nets, const PairBatch& batch, RngStream& rng,
                          const TrainConfig& cfg);

struct BatchLoss {
  double velocity_loss = 0.0;
  double score_loss = 0.0;
  std::size_t masked = 0;
  std::size_t n = 0;
  /// Gradients of L_v w.r.t. theta and of lambda L_s w.r.t. phi.
  std::vector<double> velocity_grad;
  std::vector<double> score_grad;
};

/// L_v = mean ||v(x_t, t, c) - (x1 - x0)||^2 and L_s = mean ||s(x_t, t, c) + z / gamma_t||^2.
BatchLoss loss_batch(const FieldPair& nets, const PairBatch& batch, const LossNoise& noise,
                     const TrainConfig& cfg, bool with_gradients = true);
BatchLoss loss_batch(const FieldPair& nets, const PairBatch& batch, RngStream& rng,
                     const TrainConfig& cfg, bool with_gradients = true);

class Adam {
 public:
  Adam(std::size_t n, AdamConfig cfg) : cfg_(cfg), m_(n, 0.0), v_(n, 0.0) {}
  void step(std::span<double> weights, std::span<const double> grad);

 private:
  AdamConfig cfg_;
  std::vector<double> m_, v_;
  std::size_t t_ = 0;
};

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct FitResult {
  FieldPair nets;
  std::vector<LossRecord> history;
};

/// Fresh velocity and score nets initialised from the train seed.
FieldPair initial_nets(const MlpConfig& velocity, const MlpConfig& score,
                       const InterpolantConfig& interpolant, std::uint64_t seed);

/// Mini-batch Adam on L_v + lambda L_s. Deterministic given cfg.seed.
FitResult fit(const PairBatch& dataset, FieldPair nets, const TrainConfig& cfg);

}  // namespace sfm
