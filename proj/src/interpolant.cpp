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

#include "sfm/interpolant.hpp"

#include <cmath>
#include <numbers>
#include <string>

namespace sfm {
namespace {

void check_unit_time(double t, const char* what) {
  if (!(t >= 0.0 && t <= 1.0)) {
    throw DomainError(std::string(what) + ": t=" + std::to_string(t) +
                      " outside [0, 1]");
  }
}

double gamma_or_zero(double t, const InterpolantConfig* cfg) {
  return cfg ? gamma(t, *cfg) : 0.0;
}

// Applies f(row, out_row) to every row of x (rank 1 counts as one row).
template <class F>
Tensor map_rows(const Tensor& x, std::size_t d, F f) {
  if (x.cols() != d) {
    throw DimensionError("oracle: point dimension " + std::to_string(x.cols()) +
                         " vs oracle dimension " + std::to_string(d));
  }
  Tensor out = Tensor::zeros_like(x);
  for (std::size_t r = 0; r < x.rows(); ++r) f(x.row(r), out.row(r));
  return out;
}

}  // namespace

void InterpolantConfig::validate() const {
  if (!(a > 0.0)) throw ConfigError("interpolant.a must be > 0");
  if (!(sigma_max >= 0.0)) throw ConfigError("interpolant.sigma_max must be >= 0");
  if (!(t_min > 0.0 && t_min < 0.5)) {
    throw ConfigError("interpolant.t_min must lie in (0, 0.5)");
  }
}

double gamma(double t, const InterpolantConfig& cfg) {
  check_unit_time(t, "gamma");
  // sin(pi) is not exactly zero in floating point.
  if (t == 0.0 || t == 1.0) return 0.0;
  const double s = std::sin(std::numbers::pi * t);
  return cfg.a * s * s;
}

double gamma_dot(double t, const InterpolantConfig& cfg) {
  check_unit_time(t, "gamma_dot");
  return cfg.a * std::numbers::pi * std::sin(2.0 * std::numbers::pi * t);
}

Tensor interpolate(const Tensor& x0, const Tensor& x1, double t, const Tensor& z,
                   const InterpolantConfig& cfg) {
  if (!x0.same_shape(x1) || !x0.same_shape(z)) {
    throw DimensionError("interpolate: shapes " + shape_string(x0.shape()) + ", " +
                         shape_string(x1.shape()) + ", " + shape_string(z.shape()));
  }
  check_unit_time(t, "interpolate");
  if (t == 0.0) return x0;
  if (t == 1.0) return x1;
  const double g = gamma(t, cfg);
  Tensor out = Tensor::zeros_like(x0);
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = (1.0 - t) * x0[i] + t * x1[i] + g * z[i];
  }
  return out;
}

Tensor score_target(const Tensor& z, double t, const InterpolantConfig& cfg) {
  if (!(t >= cfg.t_min && t <= 1.0 - cfg.t_min)) {
    throw DomainError("score_target: t=" + std::to_string(t) +
                      " within t_min of an endpoint");
  }
  const double g = gamma(t, cfg);
  Tensor out = z;
  for (double& v : out.data()) v = -v / g;
  return out;
}

void GaussianPairOracle::validate() const {
  if (!(var0 > 0.0) || !(var1 > 0.0)) {
    throw ConfigError("GaussianPairOracle: variances must be positive");
  }
  if (!mu0.same_shape(mu1)) throw DimensionError("GaussianPairOracle: mean shapes");
}

Tensor GaussianPairOracle::marginal_mean(double t) const {
  Tensor m = mu0;
  for (std::size_t i = 0; i < m.size(); ++i) m[i] = (1.0 - t) * mu0[i] + t * mu1[i];
  return m;
}

double GaussianPairOracle::marginal_variance(double t, double gamma_t) const {
  return (1.0 - t) * (1.0 - t) * var0 + t * t * var1 + gamma_t * gamma_t;
}

// Per coordinate, (u = x1 - x0, x_t) is jointly Gaussian with
//   Cov(u, x_t) = t var1 - (1 - t) var0,  Var(x_t) = S_t,
// and Cov(z, x_t) = gamma_t.
Tensor oracle_velocity(const Tensor& x, double t, const GaussianPairOracle& oracle,
                       const InterpolantConfig* cfg) {
  check_unit_time(t, "oracle_velocity");
  const double g = gamma_or_zero(t, cfg);
  const double s = oracle.marginal_variance(t, g);
  const double k = (t * oracle.var1 - (1.0 - t) * oracle.var0) / s;
  const Tensor m = oracle.marginal_mean(t);
  return map_rows(x, oracle.dim(), [&](auto in, auto out) {
    for (std::size_t i = 0; i < in.size(); ++i) {
      out[i] = (oracle.mu1[i] - oracle.mu0[i]) + k * (in[i] - m[i]);
    }
  });
}

Tensor oracle_transport_velocity(const Tensor& x, double t,
                                 const GaussianPairOracle& oracle,
                                 const InterpolantConfig* cfg) {
  Tensor v = oracle_velocity(x, t, oracle, cfg);
  if (!cfg) return v;
  const double g = gamma(t, *cfg);
  const double gd = gamma_dot(t, *cfg);
  const double kz = gd * g / oracle.marginal_variance(t, g);
  const Tensor m = oracle.marginal_mean(t);
  for (std::size_t r = 0; r < v.rows(); ++r) {
    auto in = x.row(r);
    auto out = v.row(r);
    for (std::size_t i = 0; i < in.size(); ++i) out[i] += kz * (in[i] - m[i]);
  }
  return v;
}

Tensor oracle_score(const Tensor& x, double t, const GaussianPairOracle& oracle,
                    const InterpolantConfig* cfg) {
  check_unit_time(t, "oracle_score");
  const double s = oracle.marginal_variance(t, gamma_or_zero(t, cfg));
  const Tensor m = oracle.marginal_mean(t);
  return map_rows(x, oracle.dim(), [&](auto in, auto out) {
    for (std::size_t i = 0; i < in.size(); ++i) out[i] = -(in[i] - m[i]) / s;
  });
}

double oracle_log_density(const Tensor& x, double t, const GaussianPairOracle& oracle,
                          const InterpolantConfig* cfg) {
  const double s = oracle.marginal_variance(t, gamma_or_zero(t, cfg));
  const Tensor m = oracle.marginal_mean(t);
  double q = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) q += (x[i] - m[i]) * (x[i] - m[i]);
  const double d = static_cast<double>(x.size());
  return -0.5 * q / s - 0.5 * d * std::log(2.0 * std::numbers::pi * s);
}

}  // namespace sfm
