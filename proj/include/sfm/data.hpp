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
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "sfm/detect.hpp"
#include "sfm/nets.hpp"
#include "sfm/rng.hpp"
#include "sfm/tensor.hpp"
#include "sfm/train.hpp"

namespace sfm {

enum class TargetFamily { gaussian_mixture, ring, moons };

std::string to_string(TargetFamily family);
TargetFamily parse_target_family(std::string_view tag);

/// Synthetic distribution-to-distribution benchmark. The source is a
/// zero-mean, unit-variance Gaussian whose first two coordinates have
/// correlation `source_correlation` (so a rotation of the source is a real
/// shift); condition c has a target obtained by rotating the family's base
/// shape by 2 pi c / condition_count in the first coordinate plane.
struct DatasetSpec {
  std::size_t d = 2;
  TargetFamily family = TargetFamily::gaussian_mixture;
  std::size_t condition_count = 5;
  std::vector<std::int32_t> withheld = {4};
  std::size_t n_train = 4000;
  std::size_t n_eval = 200;
  std::uint64_t seed = 0;
  double source_correlation = 0.6;

  /// Mixture: component count, radius and per-component standard deviation.
  std::size_t mixture_components = 3;
  double mixture_radius = 2.0;
  double mixture_std = 0.35;

  void validate() const;
  std::vector<std::int32_t> training_conditions() const;
  bool is_withheld(std::int32_t c) const;
  /// Embedding rows needed by a net trained on this data (all conditions + null).
  std::size_t net_condition_count() const { return condition_count + 1; }
};

enum class ShiftKind { none, intensity, unseen_condition, rotated_source };

std::string to_string(ShiftKind kind);
ShiftKind parse_shift_kind(std::string_view tag);

struct ShiftSpec {
  ShiftKind kind = ShiftKind::none;
  double severity = 0.0;
};

/// Draws n points as an n x d tensor.
using PointSampler = std::function<Tensor(RngStream& rng, std::size_t n)>;

PointSampler source_sampler(const DatasetSpec& spec);
PointSampler target_sampler(const DatasetSpec& spec, std::int32_t condition);

/// Applies the shift map to every row: intensity x -> (1 + s) x + s 1,
/// rotated_source rotates the first coordinate plane by (pi / 2) s, otherwise
/// identity.
Tensor shift_points(const Tensor& x, const ShiftSpec& shift);
PointSampler apply_shift(PointSampler source, const ShiftSpec& shift);

/// Evaluation inputs with provenance.
struct EvalPool {
  Tensor x0;
  std::vector<ConditionId> conditions;
  std::vector<Label> provenance;
  std::vector<std::string> ids;

  std::size_t size() const { return x0.rows(); }
};

struct Dataset {
  PairBatch train;
  EvalPool eval;  // n_eval ID inputs from the unshifted source
};

/// Independent coupling: x0 ~ p0, c uniform over training conditions,
/// x1 ~ p1(. | c). Deterministic given spec.seed.
Dataset make_dataset(const DatasetSpec& spec);

/// n_id ID inputs (unshifted source, training conditions) followed by n_ood
/// inputs under `shift` (withheld conditions for unseen_condition).
EvalPool make_scenario_pool(const DatasetSpec& spec, const ShiftSpec& shift, std::size_t n_id,
                            std::size_t n_ood, std::uint64_t stream = 0);

/// Held-out target samples for one condition, independent of training data.
Tensor reference_targets(const DatasetSpec& spec, std::int32_t condition, std::size_t n);

}  // namespace sfm
