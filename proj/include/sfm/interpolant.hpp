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

#include <functional>
#include <stdexcept>

#include "sfm/tensor.hpp"

namespace sfm {

/// Raised for time arguments outside the admissible range.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Raised for invalid configuration values.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Perturbation schedule gamma_t = a sin^2(pi t) and the endpoint clamp used
/// when sampling score-regression times.
struct InterpolantConfig {
  double a = 0.1;
  double sigma_max = 0.5;
  double t_min = 0.05;

  void validate() const;
};

double gamma(double t, const InterpolantConfig& cfg);
/// d gamma / dt.
double gamma_dot(double t, const InterpolantConfig& cfg);

/// (1 - t) x0 + t x1 + gamma_t z. Shapes of all three must agree.
Tensor interpolate(const Tensor& x0, const Tensor& x1, double t, const Tensor& z,
                   const InterpolantConfig& cfg);

/// Analytic score of the perturbed path, -z / gamma_t. Requires
/// t in [t_min, 1 - t_min].
Tensor score_target(const Tensor& z, double t, const InterpolantConfig& cfg);

/// Independent isotropic Gaussian endpoints p0 = N(mu0, var0 I),
/// p1 = N(mu1, var1 I). Closed-form reference for path marginals.
struct GaussianPairOracle {
  Tensor mu0;
  Tensor mu1;
  double var0 = 1.0;
  double var1 = 1.0;

  void validate() const;
  std::size_t dim() const { return mu0.size(); }

  /// Mean of the path marginal p_t.
  Tensor marginal_mean(double t) const;
  /// Per-coordinate variance of p_t under a perturbation amplitude gamma.
  double marginal_variance(double t, double gamma_t) const;
};

/// E[x1 - x0 | x_t = x] for the Gaussian oracle, with x_t perturbed by
/// gamma_t z (gamma taken from `cfg`; pass nullptr for the unperturbed path).
/// `x` is either a single point (rank 1) or a batch of rows.
Tensor oracle_velocity(const Tensor& x, double t, const GaussianPairOracle& oracle,
                       const InterpolantConfig* cfg = nullptr);

/// E[x1 - x0 + gamma'_t z | x_t = x]: the velocity whose flow carries p_t
/// exactly, including the gamma perturbation. Equals oracle_velocity when
/// gamma is identically zero.
Tensor oracle_transport_velocity(const Tensor& x, double t,
                                 const GaussianPairOracle& oracle,
                                 const InterpolantConfig* cfg = nullptr);

/// grad_x log N(x; (1-t) mu0 + t mu1, (1-t)^2 var0 + t^2 var1 + gamma_t^2).
Tensor oracle_score(const Tensor& x, double t, const GaussianPairOracle& oracle,
                    const InterpolantConfig* cfg = nullptr);

/// log N(x; marginal of p_t), used by finite-difference checks.
double oracle_log_density(const Tensor& x, double t, const GaussianPairOracle& oracle,
                          const InterpolantConfig* cfg = nullptr);

}  // namespace sfm
