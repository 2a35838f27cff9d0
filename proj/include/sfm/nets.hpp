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
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sfm/autodiff.hpp"
#include "sfm/interpolant.hpp"
#include "sfm/rng.hpp"
#include "sfm/tensor.hpp"

namespace sfm {

enum class FieldKind : std::uint8_t { velocity = 0, score = 1 };

std::string to_string(FieldKind kind);

/// Shape of one field network: [x, fourier(t), embed(c)] -> hidden SiLU
/// layers (with dropout) -> linear head of width input_dim.
struct MlpConfig {
  std::size_t input_dim = 2;
  std::vector<std::size_t> hidden_widths = {64, 64, 64};
  std::size_t time_embed_dim = 16;
  /// Includes the reserved null condition, which occupies the last row.
  std::size_t condition_count = 2;
  std::size_t condition_embed_dim = 8;
  double dropout_rate = 0.1;

  void validate() const;
  std::size_t feature_dim() const {
    return input_dim + time_embed_dim + condition_embed_dim;
  }
  std::size_t parameter_count() const;

  friend bool operator==(const MlpConfig&, const MlpConfig&) = default;
};

/// Discrete condition label. The null condition c_0 is a reserved value that
/// maps to the final embedding row.
class ConditionId {
 public:
  constexpr ConditionId() = default;
  constexpr explicit ConditionId(std::int32_t value) : value_(value) {}
  static constexpr ConditionId null() { return ConditionId(kNull); }

  constexpr std::int32_t value() const { return value_; }
  constexpr bool is_null() const { return value_ == kNull; }

  friend constexpr bool operator==(ConditionId, ConditionId) = default;

 private:
  static constexpr std::int32_t kNull = -1;
  std::int32_t value_ = 0;
};

/// Per-hidden-unit keep masks (entries 0 or 1). Applied as mask * keep_scale.
struct DropoutMask {
  std::vector<std::vector<std::uint8_t>> layers;
  double keep_scale = 1.0;

  static DropoutMask all_ones(const MlpConfig& cfg);
  std::size_t kept() const;
  std::size_t units() const;

  friend bool operator==(const DropoutMask&, const DropoutMask&) = default;
};

/// Bernoulli(1 - dropout_rate) keep mask per hidden unit. A zero rate gives the
/// all-ones mask.
DropoutMask sample_mask(RngStream& rng, const MlpConfig& cfg);

/// Sinusoidal features [sin(pi k t), cos(pi k t)] for k = 1..count/2.
void fourier_features(double t, std::span<double> out);

/// Parameter leaves of one network bound onto a tape.
struct TapedParams {
  ad::Var embedding;
  std::vector<ad::Var> weights;
  std::vector<ad::Var> biases;
};

/// MLP field v_theta(x, t, c) or s_phi(x, t, c) over a flat parameter vector.
class FieldNet {
 public:
  FieldNet(MlpConfig cfg, FieldKind kind, std::vector<double> weights);

  static FieldNet zeros(const MlpConfig& cfg, FieldKind kind);
  /// LeCun-normal weights, zero biases, N(0, 1) embeddings.
  static FieldNet initialise(const MlpConfig& cfg, FieldKind kind, RngStream& rng);

  const MlpConfig& config() const { return cfg_; }
  FieldKind kind() const { return kind_; }
  std::span<const double> weights() const { return weights_; }
  std::span<double> mutable_weights() { return weights_; }

  /// Batched forward over the rows of `x` (n x d) with per-row times and
  /// conditions. Without a mask dropout is disabled.
  Tensor forward(const Tensor& x, std::span<const double> t,
                 std::span<const ConditionId> c,
                 const DropoutMask* mask = nullptr) const;
  /// All rows share one time and condition.
  Tensor forward(const Tensor& x, double t, ConditionId c,
                 const DropoutMask* mask = nullptr) const;

  TapedParams bind(ad::Tape& tape) const;
  /// Forward recorded on `tape`. `row_masks`, when non-empty, holds one
  /// (n x width) tensor per hidden layer with entries 0 or keep_scale.
  ad::Var forward(ad::Tape& tape, const TapedParams& params, const Tensor& x,
                  std::span<const double> t, std::span<const ConditionId> c,
                  std::span<const Tensor> row_masks = {}) const;
  /// Flattens the adjoints of `params` in weight-vector order.
  std::vector<double> gradient(const TapedParams& params) const;

  std::size_t embedding_row(ConditionId c) const;

  friend bool operator==(const FieldNet&, const FieldNet&) = default;

 private:
  struct Layout {
    std::size_t embedding = 0;
    std::vector<std::size_t> weight, bias;
    std::vector<std::size_t> fan_in, fan_out;
    friend bool operator==(const Layout&, const Layout&) = default;
  };
  static Layout layout_of(const MlpConfig& cfg);
  Tensor features(const Tensor& x, std::span<const double> t,
                  std::span<const ConditionId> c) const;

  MlpConfig cfg_;
  FieldKind kind_;
  std::vector<double> weights_;
  Layout layout_;
};

/// Classifier-free guidance: alpha f(x,t,c) + (1 - alpha) f(x,t,c_0). With
/// alpha == 1 this is the conditional forward exactly.
Tensor guided_velocity(const FieldNet& net, const Tensor& x, double t, ConditionId c,
                       double alpha, const DropoutMask* mask = nullptr);
/// Per-row condition variant used by batched integrators.
Tensor guided_velocity(const FieldNet& net, const Tensor& x, double t,
                       std::span<const ConditionId> c, double alpha,
                       const DropoutMask* mask = nullptr);

/// Velocity/score pair together with the interpolant they were trained on.
struct FieldPair {
  FieldNet velocity;
  FieldNet score;
  InterpolantConfig interpolant;
};

/// Binary checkpoint: magic, format version, JSON config block and the two
/// little-endian float64 weight vectors (theta then phi).
void save_checkpoint(const std::string& path, const FieldPair& nets);
FieldPair load_checkpoint(const std::string& path);

inline constexpr std::uint32_t kCheckpointVersion = 1;

}  // namespace sfm
