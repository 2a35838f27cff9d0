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

#include <atomic>
#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sfm/nets.hpp"
#include "sfm/posterior.hpp"
#include "sfm/rng.hpp"
#include "sfm/sample.hpp"
#include "sfm/tensor.hpp"

namespace sfm {

/// Realises p(x1 | x0, c, theta) for a given posterior draw. Every returned
/// terminal row counts as one solve.
class ConditionalSimulator {
 public:
  virtual ~ConditionalSimulator() = default;
  virtual std::size_t dim() const = 0;
  virtual std::size_t steps() const = 0;
  virtual Tensor sde_terminals(const PosteriorDraw& draw, const Tensor& x0s,
                               std::span<const ConditionId> conditions,
                               std::span<const NoisePath> paths) const = 0;
  virtual Tensor ode_terminals(const PosteriorDraw& draw, const Tensor& x0s,
                               std::span<const ConditionId> conditions) const = 0;

  std::size_t solves() const { return solves_.load(); }
  void reset_solves() { solves_ = 0; }

 protected:
  void count(std::size_t n) const { solves_ += n; }

 private:
  mutable std::atomic<std::size_t> solves_{0};
};

/// Trained velocity/score networks integrated with the configured SDE.
class NetSimulator final : public ConditionalSimulator {
 public:
  NetSimulator(const FieldPair& nets, SdeConfig cfg);
  std::size_t dim() const override { return nets_.velocity.config().input_dim; }
  std::size_t steps() const override { return cfg_.steps; }
  Tensor sde_terminals(const PosteriorDraw& draw, const Tensor& x0s,
                       std::span<const ConditionId> conditions,
                       std::span<const NoisePath> paths) const override;
  Tensor ode_terminals(const PosteriorDraw& draw, const Tensor& x0s,
                       std::span<const ConditionId> conditions) const override;

 private:
  const FieldPair& nets_;
  SdeConfig cfg_;
};

/// Analytic fields, one set per ensemble member (member 0 for MAP draws).
/// Conditions are ignored.
class FieldSimulator final : public ConditionalSimulator {
 public:
  FieldSimulator(std::vector<Dynamics> members, std::size_t dim, SdeConfig cfg);
  std::size_t dim() const override { return dim_; }
  std::size_t steps() const override { return cfg_.steps; }
  Tensor sde_terminals(const PosteriorDraw& draw, const Tensor& x0s,
                       std::span<const ConditionId> conditions,
                       std::span<const NoisePath> paths) const override;
  Tensor ode_terminals(const PosteriorDraw& draw, const Tensor& x0s,
                       std::span<const ConditionId> conditions) const override;

 private:
  const Dynamics& member(const PosteriorDraw& draw) const;
  std::vector<Dynamics> members_;
  std::size_t dim_;
  SdeConfig cfg_;
};

/// Members emit N(mean_m, variance_m I) exactly: the terminal is
/// mean + sign sqrt(variance) * (sum_k eps_k) / sqrt(steps), independent of x0.
class GaussianEnsembleSimulator final : public ConditionalSimulator {
 public:
  struct Member {
    Tensor mean;
    double variance = 1.0;
  };
  GaussianEnsembleSimulator(std::vector<Member> members, std::size_t steps);
  std::size_t dim() const override { return members_.front().mean.size(); }
  std::size_t steps() const override { return steps_; }
  const std::vector<Member>& members() const { return members_; }
  Tensor sde_terminals(const PosteriorDraw& draw, const Tensor& x0s,
                       std::span<const ConditionId> conditions,
                       std::span<const NoisePath> paths) const override;
  Tensor ode_terminals(const PosteriorDraw& draw, const Tensor& x0s,
                       std::span<const ConditionId> conditions) const override;

 private:
  std::vector<Member> members_;
  std::size_t steps_;
};

enum class UqMode { iid, antithetic };
std::string to_string(UqMode mode);

/// M posterior draws x K SDE samples per draw (K = 2J when antithetic).
struct UqBudget {
  std::size_t M = 4;
  std::size_t K = 4;
  UqMode mode = UqMode::antithetic;

  void validate() const;
  std::size_t pairs() const { return K / 2; }
};

/// Sign applied to traces when forming anomaly scores.
enum class ScoreSign { negated, raw };
double signed_score(double trace, ScoreSign sign);

/// mu-hat and tr(Sigma-hat) for one posterior draw. Only per-coordinate
/// variances are accumulated; no d x d matrix is formed.
struct DrawStats {
  Tensor mean;
  double variance_trace = 0.0;
};

/// Sample mean and (K-1)-denominator variance trace of K rows.
DrawStats per_draw_stats(const Tensor& samples);
/// Rows ordered (+, -) per pair: mean from the pair means, variance trace from
/// all raw rows.
DrawStats antithetic_draw_stats(const Tensor& samples);

struct UqReport {
  double aleatoric_trace = 0.0;
  std::optional<double> epistemic_raw;
  std::optional<double> epistemic_corrected;
  bool corrected_negative = false;
  UqBudget budget;
  double score_aleatoric = 0.0;
  std::optional<double> score_epistemic;
  std::size_t solves = 0;
};

/// tr(A) = mean of per-draw traces, tr(E) = (M-1)-denominator variance trace
/// of the per-draw means, corrected tr(E) = tr(E) - tr(A)/K. With M < 2 only
/// the aleatoric part is reported.
UqReport decompose(std::span<const DrawStats> draws, std::size_t K,
                   ScoreSign sign = ScoreSign::negated);

/// Per-input statistics of K solves under one draw. Row i of `x0s` gets its
/// noise from noise.split(i).
std::vector<DrawStats> draw_stats(const ConditionalSimulator& sim,
                                  const PosteriorDraw& draw, const Tensor& x0s,
                                  std::span<const ConditionId> conditions, std::size_t K,
                                  UqMode mode, const RngStream& noise);

/// Nested estimator over a batch of inputs: M draws from `sampler`, K solves
/// per draw and input, iid or antithetic per `budget.mode`. Draw m uses
/// rng.split("posterior").split(m) and noise from rng.split("sample").split(m).
std::vector<UqReport> nested_uq(const ConditionalSimulator& sim, const Tensor& x0s,
                                std::span<const ConditionId> conditions,
                                const PosteriorSampler& sampler, const UqBudget& budget,
                                const RngStream& rng, ScoreSign sign = ScoreSign::negated);

/// Antithetic nested estimator; rejects budgets that are not antithetic with
/// even K.
std::vector<UqReport> avuq(const ConditionalSimulator& sim, const Tensor& x0s,
                           std::span<const ConditionId> conditions,
                           const PosteriorSampler& sampler, const UqBudget& budget,
                           const RngStream& rng, ScoreSign sign = ScoreSign::negated);
UqReport avuq(const ConditionalSimulator& sim, const Tensor& x0, ConditionId c,
              const PosteriorSampler& sampler, const UqBudget& budget,
              const RngStream& rng, ScoreSign sign = ScoreSign::negated);

struct ScalarScore {
  double score = 0.0;
  double trace = 0.0;
  std::size_t solves = 0;
};

/// Score from the per-coordinate mean variance, sign * tr(Sigma)/d, over K iid
/// SDE solves at the MAP weights.
std::vector<ScalarScore> map_aleatoric(const ConditionalSimulator& sim, const Tensor& x0s,
                                       std::span<const ConditionId> conditions,
                                       std::size_t K, const RngStream& rng,
                                       ScoreSign sign = ScoreSign::negated);
/// Score from the across-draw variance trace of M deterministic ODE terminals.
std::vector<ScalarScore> mcd_dfm_epistemic(const ConditionalSimulator& sim,
                                           const Tensor& x0s,
                                           std::span<const ConditionId> conditions,
                                           const PosteriorSampler& sampler, std::size_t M,
                                           const RngStream& rng,
                                           ScoreSign sign = ScoreSign::negated);

/// Monte-Carlo check of |E_q[V] - V(w*)| <= L eps sqrt(d) with
/// q = N(w*, eps^2 I).
struct BoundCheck {
  double lhs = 0.0;
  double rhs = 0.0;
  double slack = 0.0;  // 4 standard errors of the E_q[V] estimate
  bool holds = false;
};

using ScalarField = std::function<double(std::span<const double>)>;

BoundCheck map_bound_check(const ScalarField& V, std::span<const double> map_point,
                           double epsilon, double lipschitz, std::size_t n_draws,
                           RngStream& rng);

/// Mean of the chi distribution with d degrees of freedom, E||zeta|| for
/// zeta ~ N(0, I_d).
double chi_mean(std::size_t d);

}  // namespace sfm
