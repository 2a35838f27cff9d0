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
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "sfm/interpolant.hpp"
#include "sfm/nets.hpp"
#include "sfm/rng.hpp"
#include "sfm/tensor.hpp"

namespace sfm {

enum class SigmaShape { sinusoidal, constant };

struct SdeConfig {
  std::size_t steps = 100;
  double sigma_max = 0.5;
  SigmaShape sigma_shape = SigmaShape::sinusoidal;
  double guidance_alpha = 1.0;
  /// Adds the +1/2 sigma_t^2 score drift that keeps the ODE marginals. Turning
  /// it off gives the naive noisy sampler.
  bool drift_correction = true;

  void validate() const;
};

/// Diffusion schedule; sigma_max sin(pi t) by default, zero at both endpoints.
double sigma(double t, const SdeConfig& cfg);

/// Standard-normal increments for one trajectory, steps x d. The antithetic
/// partner shares `eps` and carries the opposite sign.
struct NoisePath {
  Tensor eps;
  int sign = 1;
};

struct Trajectory {
  Tensor states;  // (steps + 1) x d, states[0] == x0
  Tensor terminal() const;
};

/// Field evaluated on a batch of rows (n x d) at a shared time.
using FieldFn = std::function<Tensor(const Tensor& x, double t)>;

struct Dynamics {
  FieldFn velocity;
  FieldFn score;
};

class IntegrationError : public std::runtime_error {
 public:
  IntegrationError(const std::string& what, std::size_t step)
      : std::runtime_error(what + " at step " + std::to_string(step)), step_(step) {}
  std::size_t step() const { return step_; }

 private:
  std::size_t step_;
};

/// Called after every step with the step index (1-based) and the batch state.
using StepObserver = std::function<void(std::size_t step, const Tensor& states)>;

/// Explicit Euler on a uniform grid of `cfg.steps` steps.
Trajectory ode_solve(const FieldFn& velocity, const Tensor& x0, const SdeConfig& cfg);
/// Euler-Maruyama with drift v + 1/2 sigma^2 s and noise sigma sqrt(dt) sign eps.
Trajectory sde_solve(const Dynamics& fields, const Tensor& x0, const NoisePath& path,
                     const SdeConfig& cfg);

/// Batched variants: row i of `x0s` is integrated independently (row i of the
/// SDE batch is driven by paths[i]). Only terminal states are returned.
Tensor ode_terminals(const FieldFn& velocity, const Tensor& x0s, const SdeConfig& cfg,
                     const StepObserver& observer = {});
Tensor sde_terminals(const Dynamics& fields, const Tensor& x0s,
                     std::span<const NoisePath> paths, const SdeConfig& cfg,
                     const StepObserver& observer = {});

/// J fresh increment paths, each emitted with sign +1 then -1 (K = 2J paths).
std::vector<NoisePath> antithetic_paths(RngStream& rng, std::size_t pairs,
                                        std::size_t steps, std::size_t d);
/// K independent paths, all with sign +1.
std::vector<NoisePath> iid_paths(RngStream& rng, std::size_t count, std::size_t steps,
                                 std::size_t d);

/// Fields of a trained pair for per-row conditions, optionally under dropout
/// masks. Guidance (alpha > 1) applies to the velocity only; both guided
/// branches share the velocity mask. `nets` and the masks are held by
/// reference and must outlive the returned fields.
Dynamics net_dynamics(const FieldPair& nets, std::vector<ConditionId> conditions,
                      double guidance_alpha = 1.0,
                      const DropoutMask* velocity_mask = nullptr,
                      const DropoutMask* score_mask = nullptr);

/// Exact transport velocity and score of the Gaussian-oracle path marginals.
Dynamics oracle_dynamics(const GaussianPairOracle& oracle,
                         const InterpolantConfig* cfg = nullptr);

/// CSV dump: step, t, x0, x1, ...
void write_trajectory_csv(std::ostream& os, const Trajectory& trajectory);

}  // namespace sfm
