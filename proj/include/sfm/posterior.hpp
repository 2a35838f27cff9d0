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
#include <memory>
#include <optional>
#include <string>

#include "sfm/nets.hpp"
#include "sfm/rng.hpp"

namespace sfm {

enum class PosteriorKind : std::uint8_t { map, mc_dropout, finite_ensemble };

std::string to_string(PosteriorKind kind);

/// One realisation of (theta, phi). MAP draws carry nothing, MC-dropout draws
/// carry independent masks for the two networks, ensemble draws a member index.
struct PosteriorDraw {
  std::size_t draw_id = 0;
  PosteriorKind kind = PosteriorKind::map;
  std::optional<DropoutMask> velocity_mask;
  std::optional<DropoutMask> score_mask;
  std::optional<std::size_t> member;
};

class PosteriorSampler {
 public:
  virtual ~PosteriorSampler() = default;
  virtual PosteriorKind kind() const = 0;
  virtual PosteriorDraw draw(RngStream& rng) const = 0;
};

/// Point mass at the trained weights; ignores the stream.
class MapSampler final : public PosteriorSampler {
 public:
  PosteriorKind kind() const override { return PosteriorKind::map; }
  PosteriorDraw draw(RngStream& rng) const override;
};

/// Keeps dropout active at inference: every draw is a fresh pair of
/// Bernoulli masks, one per network.
class McDropoutSampler final : public PosteriorSampler {
 public:
  McDropoutSampler() = default;
  McDropoutSampler(MlpConfig velocity, MlpConfig score);
  static McDropoutSampler from(const FieldPair& nets);

  bool initialised() const { return velocity_.has_value(); }
  PosteriorKind kind() const override { return PosteriorKind::mc_dropout; }
  PosteriorDraw draw(RngStream& rng) const override;

 private:
  std::optional<MlpConfig> velocity_;
  std::optional<MlpConfig> score_;
};

/// Uniform choice among a fixed list of members, used to give estimator tests
/// an exactly known posterior.
class FiniteEnsembleSampler final : public PosteriorSampler {
 public:
  explicit FiniteEnsembleSampler(std::size_t members);

  std::size_t members() const { return members_; }
  PosteriorKind kind() const override { return PosteriorKind::finite_ensemble; }
  PosteriorDraw draw(RngStream& rng) const override;

 private:
  std::size_t members_;
};

/// Sampler for a method name: "map", "mc_dropout". Throws ConfigError otherwise.
std::unique_ptr<PosteriorSampler> make_sampler(const std::string& kind,
                                               const FieldPair& nets);

}  // namespace sfm
