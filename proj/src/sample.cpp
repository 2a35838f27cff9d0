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

#include "sfm/sample.hpp"

#include <cmath>
#include <memory>
#include <optional>
#include <numbers>
#include <ostream>

namespace sfm {
namespace {

Tensor as_batch(const Tensor& x) { return x.rank() == 1 ? x.reshaped({1, x.size()}) : x; }

void check_state(const Tensor& x, std::size_t step) {
  if (!x.all_finite()) throw IntegrationError("non-finite state", step);
}

void check_field(const Tensor& f, const Tensor& x, const char* what) {
  if (!f.same_shape(x)) {
    throw DimensionError(std::string(what) + " field returned " + shape_string(f.shape()) +
                         " for state " + shape_string(x.shape()));
  }
}

// Shared Euler / Euler-Maruyama loop. `paths` empty means deterministic.
Tensor integrate(const Dynamics& fields, Tensor x, std::span<const NoisePath> paths,
                 const SdeConfig& cfg, const StepObserver& observer, Tensor* record) {
  cfg.validate();
  const std::size_t n = x.rows(), d = x.cols(), N = cfg.steps;
  const bool stochastic = !paths.empty();
  if (stochastic) {
    if (paths.size() != n) {
      throw DimensionError("sde: " + std::to_string(paths.size()) + " paths for " +
                           std::to_string(n) + " trajectories");
    }
    for (const NoisePath& p : paths) {
      if (p.eps.rows() != N || p.eps.cols() != d) {
        throw DimensionError("sde: noise path shape " + shape_string(p.eps.shape()) +
                             " does not match steps x d");
      }
    }
  }
  const double dt = 1.0 / static_cast<double>(N);
  const double sqrt_dt = std::sqrt(dt);
  check_state(x, 0);
  for (std::size_t k = 0; k < N; ++k) {
    const double t = static_cast<double>(k) * dt;
    const double s = stochastic ? sigma(t, cfg) : 0.0;
    Tensor drift = fields.velocity(x, t);
    check_field(drift, x, "velocity");
    if (s > 0.0 && cfg.drift_correction) {
      const Tensor score = fields.score(x, t);
      check_field(score, x, "score");
      const double c = 0.5 * s * s;
      for (std::size_t i = 0; i < drift.size(); ++i) drift[i] += c * score[i];
    }
    for (std::size_t i = 0; i < x.size(); ++i) x[i] += drift[i] * dt;
    if (s > 0.0) {
      const double amp = s * sqrt_dt;
      for (std::size_t r = 0; r < n; ++r) {
        auto row = x.row(r);
        const auto e = paths[r].eps.row(k);
        const double a = amp * paths[r].sign;
        for (std::size_t j = 0; j < d; ++j) row[j] += a * e[j];
      }
    }
    check_state(x, k + 1);
    if (record) std::copy(x.data().begin(), x.data().end(), record->row(k + 1).begin());
    if (observer) observer(k + 1, x);
  }
  return x;
}

}  // namespace

void SdeConfig::validate() const {
  if (steps < 1) throw ConfigError("sde.steps must be >= 1");
  if (!(sigma_max >= 0.0)) throw ConfigError("sde.sigma_max must be >= 0");
  if (!(guidance_alpha >= 1.0)) throw ConfigError("sde.guidance_alpha must be >= 1");
}

double sigma(double t, const SdeConfig& cfg) {
  if (!(t >= 0.0 && t <= 1.0)) {
    throw DomainError("sigma: t=" + std::to_string(t) + " outside [0, 1]");
  }
  if (cfg.sigma_shape == SigmaShape::constant) return cfg.sigma_max;
  if (t == 0.0 || t == 1.0) return 0.0;
  return cfg.sigma_max * std::sin(std::numbers::pi * t);
}

Tensor Trajectory::terminal() const {
  auto last = states.row(states.rows() - 1);
  return Tensor::vector(std::vector<double>(last.begin(), last.end()));
}

Trajectory ode_solve(const FieldFn& velocity, const Tensor& x0, const SdeConfig& cfg) {
  const Tensor x = as_batch(x0);
  if (x.rows() != 1) throw DimensionError("ode_solve: single initial state expected");
  Trajectory tr{Tensor({cfg.steps + 1, x.cols()})};
  std::copy(x.data().begin(), x.data().end(), tr.states.row(0).begin());
  integrate(Dynamics{velocity, {}}, x, {}, cfg, {}, &tr.states);
  return tr;
}

Trajectory sde_solve(const Dynamics& fields, const Tensor& x0, const NoisePath& path,
                     const SdeConfig& cfg) {
  const Tensor x = as_batch(x0);
  if (x.rows() != 1) throw DimensionError("sde_solve: single initial state expected");
  Trajectory tr{Tensor({cfg.steps + 1, x.cols()})};
  std::copy(x.data().begin(), x.data().end(), tr.states.row(0).begin());
  integrate(fields, x, std::span<const NoisePath>(&path, 1), cfg, {}, &tr.states);
  return tr;
}

Tensor ode_terminals(const FieldFn& velocity, const Tensor& x0s, const SdeConfig& cfg,
                     const StepObserver& observer) {
  return integrate(Dynamics{velocity, {}}, as_batch(x0s), {}, cfg, observer, nullptr);
}

Tensor sde_terminals(const Dynamics& fields, const Tensor& x0s,
                     std::span<const NoisePath> paths, const SdeConfig& cfg,
                     const StepObserver& observer) {
  if (paths.empty()) throw DimensionError("sde_terminals: no noise paths");
  return integrate(fields, as_batch(x0s), paths, cfg, observer, nullptr);
}

std::vector<NoisePath> antithetic_paths(RngStream& rng, std::size_t pairs,
                                        std::size_t steps, std::size_t d) {
  if (pairs < 1) throw ConfigError("antithetic_paths: need at least one pair");
  std::vector<NoisePath> out;
  out.reserve(2 * pairs);
  for (std::size_t j = 0; j < pairs; ++j) {
    Tensor eps = gauss(rng, steps * d).reshaped({steps, d});
    out.push_back(NoisePath{eps, +1});
    out.push_back(NoisePath{std::move(eps), -1});
  }
  return out;
}

std::vector<NoisePath> iid_paths(RngStream& rng, std::size_t count, std::size_t steps,
                                 std::size_t d) {
  std::vector<NoisePath> out;
  out.reserve(count);
  for (std::size_t k = 0; k < count; ++k) {
    out.push_back(NoisePath{gauss(rng, steps * d).reshaped({steps, d}), +1});
  }
  return out;
}

Dynamics net_dynamics(const FieldPair& nets, std::vector<ConditionId> conditions,
                      double guidance_alpha, const DropoutMask* velocity_mask,
                      const DropoutMask* score_mask) {
  auto conds = std::make_shared<const std::vector<ConditionId>>(std::move(conditions));
  auto check = [conds](const Tensor& x) {
    if (x.rows() != conds->size()) {
      throw DimensionError("net_dynamics: batch of " + std::to_string(x.rows()) +
                           " rows for " + std::to_string(conds->size()) + " conditions");
    }
  };
  Dynamics dyn;
  dyn.velocity = [&nets, conds, guidance_alpha, velocity_mask, check](const Tensor& x,
                                                                      double t) {
    check(x);
    return guided_velocity(nets.velocity, x, t, *conds, guidance_alpha, velocity_mask);
  };
  dyn.score = [&nets, conds, score_mask, check](const Tensor& x, double t) {
    check(x);
    const std::vector<double> ts(x.rows(), t);
    return nets.score.forward(x, ts, *conds, score_mask);
  };
  return dyn;
}

Dynamics oracle_dynamics(const GaussianPairOracle& oracle, const InterpolantConfig* cfg) {
  std::optional<InterpolantConfig> c;
  if (cfg) c = *cfg;
  Dynamics dyn;
  dyn.velocity = [oracle, c](const Tensor& x, double t) {
    return oracle_transport_velocity(x, t, oracle, c ? &*c : nullptr);
  };
  dyn.score = [oracle, c](const Tensor& x, double t) {
    return oracle_score(x, t, oracle, c ? &*c : nullptr);
  };
  return dyn;
}

void write_trajectory_csv(std::ostream& os, const Trajectory& trajectory) {
  const Tensor& s = trajectory.states;
  const std::size_t steps = s.rows() - 1;
  os << "step,t";
  for (std::size_t j = 0; j < s.cols(); ++j) os << ",x" << j;
  os << '\n';
  os.precision(17);
  for (std::size_t k = 0; k <= steps; ++k) {
    os << k << ',' << static_cast<double>(k) / static_cast<double>(steps);
    for (double v : s.row(k)) os << ',' << v;
    os << '\n';
  }
}

}  // namespace sfm
