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

#include "sfm/posterior.hpp"

#include <stdexcept>

namespace sfm {

std::string to_string(PosteriorKind kind) {
  switch (kind) {
    case PosteriorKind::map: return "map";
    case PosteriorKind::mc_dropout: return "mc_dropout";
    case PosteriorKind::finite_ensemble: return "finite_ensemble";
  }
  return "unknown";
}

PosteriorDraw MapSampler::draw(RngStream&) const {
  return PosteriorDraw{0, PosteriorKind::map, std::nullopt, std::nullopt, std::nullopt};
}

McDropoutSampler::McDropoutSampler(MlpConfig velocity, MlpConfig score)
    : velocity_(std::move(velocity)), score_(std::move(score)) {
  velocity_->validate();
  score_->validate();
}

McDropoutSampler McDropoutSampler::from(const FieldPair& nets) {
  return McDropoutSampler(nets.velocity.config(), nets.score.config());
}

PosteriorDraw McDropoutSampler::draw(RngStream& rng) const {
  if (!initialised()) throw std::logic_error("mc_dropout sampler used before initialisation");
  PosteriorDraw d;
  d.kind = PosteriorKind::mc_dropout;
  d.velocity_mask = sample_mask(rng, *velocity_);
  d.score_mask = sample_mask(rng, *score_);
  return d;
}

FiniteEnsembleSampler::FiniteEnsembleSampler(std::size_t members) : members_(members) {
  if (members_ == 0) throw std::logic_error("finite ensemble needs at least one member");
}

PosteriorDraw FiniteEnsembleSampler::draw(RngStream& rng) const {
  PosteriorDraw d;
  d.kind = PosteriorKind::finite_ensemble;
  d.member = static_cast<std::size_t>(rng.below(members_));
  return d;
}

std::unique_ptr<PosteriorSampler> make_sampler(const std::string& kind,
                                               const FieldPair& nets) {
  if (kind == "map") return std::make_unique<MapSampler>();
  if (kind == "mc_dropout") return std::make_unique<McDropoutSampler>(McDropoutSampler::from(nets));
  throw ConfigError("unknown posterior sampler '" + kind + "'");
}

}  // namespace sfm
