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

#include "sfm/uq.hpp"

#include <cmath>
#include <stdexcept>

namespace sfm {
namespace {

// Repeats each row of x0s `k` times: row i*k + j is input i.
Tensor repeat_rows(const Tensor& x0s, std::size_t k) {
  const std::size_t n = x0s.rows(), d = x0s.cols();
  Tensor out({n * k, d});
  for (std::size_t i = 0; i < n; ++i) {
    auto src = x0s.row(i);
    for (std::size_t j = 0; j < k; ++j) std::copy(src.begin(), src.end(), out.row(i * k + j).begin());
  }
  return out;
}

std::vector<ConditionId> repeat(std::span<const ConditionId> c, std::size_t k) {
  std::vector<ConditionId> out;
  out.reserve(c.size() * k);
  for (ConditionId v : c)
    for (std::size_t j = 0; j < k; ++j) out.push_back(v);
  return out;
}

Tensor rows_of(const Tensor& x, std::size_t first, std::size_t count) {
  const std::size_t d = x.cols();
  auto begin = x.data().begin() + static_cast<std::ptrdiff_t>(first * d);
  return Tensor({count, d}, std::vector<double>(begin, begin + static_cast<std::ptrdiff_t>(count * d)));
}

Tensor batch_of(const Tensor& x) { return x.rank() == 1 ? x.reshaped({1, x.size()}) : x; }

void check_inputs(const ConditionalSimulator& sim, const Tensor& x0s,
                  std::span<const ConditionId> conditions) {
  if (x0s.cols() != sim.dim()) throw DimensionError("uq: input dimension mismatch");
  if (conditions.size() != x0s.rows()) throw DimensionError("uq: one condition per input required");
}

// Sum over coordinates of the (n-1)-denominator variance of the given rows.
double variance_trace(const Tensor& rows) {
  const std::size_t n = rows.rows(), d = rows.cols();
  double trace = 0.0;
  for (std::size_t j = 0; j < d; ++j) {
    double mean = 0.0;
    for (std::size_t r = 0; r < n; ++r) mean += rows.at(r, j);
    mean /= static_cast<double>(n);
    double ss = 0.0;
    for (std::size_t r = 0; r < n; ++r) {
      const double e = rows.at(r, j) - mean;
      ss += e * e;
    }
    trace += ss / static_cast<double>(n - 1);
  }
  return trace;
}

Tensor column_means(const Tensor& rows) {
  const std::size_t n = rows.rows(), d = rows.cols();
  Tensor mean({d});
  for (std::size_t r = 0; r < n; ++r) {
    auto row = rows.row(r);
    for (std::size_t j = 0; j < d; ++j) mean[j] += row[j];
  }
  mean *= 1.0 / static_cast<double>(n);
  return mean;
}

}  // namespace

NetSimulator::NetSimulator(const FieldPair& nets, SdeConfig cfg)
    : nets_(nets), cfg_(std::move(cfg)) {
  cfg_.validate();
}

Tensor NetSimulator::sde_terminals(const PosteriorDraw& draw, const Tensor& x0s,
                                   std::span<const ConditionId> conditions,
                                   std::span<const NoisePath> paths) const {
  const DropoutMask* vm = draw.velocity_mask ? &*draw.velocity_mask : nullptr;
  const DropoutMask* sm = draw.score_mask ? &*draw.score_mask : nullptr;
  const Dynamics dyn = net_dynamics(nets_, {conditions.begin(), conditions.end()},
                                    cfg_.guidance_alpha, vm, sm);
  Tensor out = sfm::sde_terminals(dyn, x0s, paths, cfg_);
  count(out.rows());
  return out;
}

Tensor NetSimulator::ode_terminals(const PosteriorDraw& draw, const Tensor& x0s,
                                   std::span<const ConditionId> conditions) const {
  const DropoutMask* vm = draw.velocity_mask ? &*draw.velocity_mask : nullptr;
  const Dynamics dyn = net_dynamics(nets_, {conditions.begin(), conditions.end()},
                                    cfg_.guidance_alpha, vm, nullptr);
  Tensor out = sfm::ode_terminals(dyn.velocity, x0s, cfg_);
  count(out.rows());
  return out;
}

FieldSimulator::FieldSimulator(std::vector<Dynamics> members, std::size_t dim, SdeConfig cfg)
    : members_(std::move(members)), dim_(dim), cfg_(std::move(cfg)) {
  if (members_.empty()) throw std::logic_error("FieldSimulator needs at least one member");
  cfg_.validate();
}

const Dynamics& FieldSimulator::member(const PosteriorDraw& draw) const {
  const std::size_t m = draw.member.value_or(0);
  if (m >= members_.size()) throw std::out_of_range("FieldSimulator: member index out of range");
  return members_[m];
}

Tensor FieldSimulator::sde_terminals(const PosteriorDraw& draw, const Tensor& x0s,
                                     std::span<const ConditionId>,
                                     std::span<const NoisePath> paths) const {
  Tensor out = sfm::sde_terminals(member(draw), x0s, paths, cfg_);
  count(out.rows());
  return out;
}

Tensor FieldSimulator::ode_terminals(const PosteriorDraw& draw, const Tensor& x0s,
                                     std::span<const ConditionId>) const {
  Tensor out = sfm::ode_terminals(member(draw).velocity, x0s, cfg_);
  count(out.rows());
  return out;
}

GaussianEnsembleSimulator::GaussianEnsembleSimulator(std::vector<Member> members,
                                                     std::size_t steps)
    : members_(std::move(members)), steps_(steps) {
  if (members_.empty()) throw std::logic_error("GaussianEnsembleSimulator needs members");
  if (steps_ < 1) throw ConfigError("GaussianEnsembleSimulator: steps must be >= 1");
  for (const Member& m : members_) {
    if (m.mean.size() != members_.front().mean.size() || !(m.variance >= 0.0)) {
      throw ConfigError("GaussianEnsembleSimulator: inconsistent member");
    }
  }
}

Tensor GaussianEnsembleSimulator::sde_terminals(const PosteriorDraw& draw, const Tensor& x0s,
                                                std::span<const ConditionId>,
                                                std::span<const NoisePath> paths) const {
  const Member& m = members_.at(draw.member.value_or(0));
  const std::size_t n = batch_of(x0s).rows(), d = dim();
  if (paths.size() != n) throw DimensionError("GaussianEnsembleSimulator: path count");
  const double scale = std::sqrt(m.variance / static_cast<double>(steps_));
  Tensor out({n, d});
  for (std::size_t r = 0; r < n; ++r) {
    const Tensor& eps = paths[r].eps;
    if (eps.rows() != steps_ || eps.cols() != d) {
      throw DimensionError("GaussianEnsembleSimulator: noise path shape");
    }
    for (std::size_t j = 0; j < d; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < steps_; ++k) s += eps.at(k, j);
      out.at(r, j) = m.mean[j] + paths[r].sign * scale * s;
    }
  }
  count(n);
  return out;
}

Tensor GaussianEnsembleSimulator::ode_terminals(const PosteriorDraw& draw, const Tensor& x0s,
                                                std::span<const ConditionId>) const {
  const Member& m = members_.at(draw.member.value_or(0));
  const std::size_t n = batch_of(x0s).rows();
  Tensor out({n, dim()});
  for (std::size_t r = 0; r < n; ++r) std::copy(m.mean.data().begin(), m.mean.data().end(), out.row(r).begin());
  count(n);
  return out;
}

std::string to_string(UqMode mode) { return mode == UqMode::iid ? "iid" : "antithetic"; }

void UqBudget::validate() const {
  if (M < 1) throw ConfigError("budget: M must be >= 1");
  if (K < 2) throw ConfigError("budget: K must be >= 2 for a within-draw variance");
  if (mode == UqMode::antithetic && K % 2 != 0) {
    throw ConfigError("budget: antithetic mode needs an even K, got " + std::to_string(K));
  }
}

double signed_score(double trace, ScoreSign sign) {
  return sign == ScoreSign::negated ? -trace : trace;
}

DrawStats per_draw_stats(const Tensor& samples) {
  const Tensor rows = batch_of(samples);
  if (rows.rows() < 2) throw ConfigError("per_draw_stats: K must be >= 2");
  return DrawStats{column_means(rows), variance_trace(rows)};
}

DrawStats antithetic_draw_stats(const Tensor& samples) {
  const std::size_t k = samples.rows(), d = samples.cols();
  if (k < 2 || k % 2 != 0) throw ConfigError("antithetic_draw_stats: even K >= 2 required");
  const std::size_t pairs = k / 2;
  Tensor mean({d});
  for (std::size_t j = 0; j < pairs; ++j) {
    auto plus = samples.row(2 * j);
    auto minus = samples.row(2 * j + 1);
    for (std::size_t c = 0; c < d; ++c) mean[c] += 0.5 * (plus[c] + minus[c]);
  }
  mean *= 1.0 / static_cast<double>(pairs);
  return DrawStats{std::move(mean), variance_trace(samples)};
}

UqReport decompose(std::span<const DrawStats> draws, std::size_t K, ScoreSign sign) {
  if (draws.empty()) throw ConfigError("decompose: no posterior draws");
  if (K < 1) throw ConfigError("decompose: K must be >= 1");
  UqReport rep;
  rep.budget.M = draws.size();
  rep.budget.K = K;
  double a = 0.0;
  for (const DrawStats& s : draws) a += s.variance_trace;
  rep.aleatoric_trace = a / static_cast<double>(draws.size());
  rep.score_aleatoric = signed_score(rep.aleatoric_trace, sign);
  if (draws.size() >= 2) {
    const std::size_t d = draws.front().mean.size();
    Tensor means({draws.size(), d});
    for (std::size_t m = 0; m < draws.size(); ++m) {
      if (draws[m].mean.size() != d) throw DimensionError("decompose: ragged draw means");
      std::copy(draws[m].mean.data().begin(), draws[m].mean.data().end(), means.row(m).begin());
    }
    const double e = variance_trace(means);
    rep.epistemic_raw = e;
    rep.epistemic_corrected = e - rep.aleatoric_trace / static_cast<double>(K);
    rep.corrected_negative = *rep.epistemic_corrected < 0.0;
    rep.score_epistemic = signed_score(e, sign);
  }
  return rep;
}

std::vector<DrawStats> draw_stats(const ConditionalSimulator& sim, const PosteriorDraw& draw,
                                  const Tensor& x0s, std::span<const ConditionId> conditions,
                                  std::size_t K, UqMode mode, const RngStream& noise) {
  const Tensor inputs = batch_of(x0s);
  check_inputs(sim, inputs, conditions);
  const std::size_t n = inputs.rows(), d = sim.dim(), steps = sim.steps();
  std::vector<NoisePath> paths;
  paths.reserve(n * K);
  for (std::size_t i = 0; i < n; ++i) {
    RngStream stream = noise.split(i);
    auto p = mode == UqMode::antithetic ? antithetic_paths(stream, K / 2, steps, d)
                                        : iid_paths(stream, K, steps, d);
    for (auto& path : p) paths.push_back(std::move(path));
  }
  const Tensor terminals =
      sim.sde_terminals(draw, repeat_rows(inputs, K), repeat(conditions, K), paths);
  std::vector<DrawStats> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Tensor block = rows_of(terminals, i * K, K);
    out.push_back(mode == UqMode::antithetic ? antithetic_draw_stats(block)
                                             : per_draw_stats(block));
  }
  return out;
}

std::vector<UqReport> nested_uq(const ConditionalSimulator& sim, const Tensor& x0s,
                                std::span<const ConditionId> conditions,
                                const PosteriorSampler& sampler, const UqBudget& budget,
                                const RngStream& rng, ScoreSign sign) {
  budget.validate();
  const Tensor inputs = batch_of(x0s);
  check_inputs(sim, inputs, conditions);
  const std::size_t n = inputs.rows();
  const RngStream posterior = rng.split("posterior");
  const RngStream noise = rng.split("sample");
  // per_input[i][m]
  std::vector<std::vector<DrawStats>> per_input(n);
  for (std::size_t m = 0; m < budget.M; ++m) {
    RngStream ds = posterior.split(m);
    PosteriorDraw draw = sampler.draw(ds);
    draw.draw_id = m;
    auto stats = draw_stats(sim, draw, inputs, conditions, budget.K, budget.mode, noise.split(m));
    for (std::size_t i = 0; i < n; ++i) per_input[i].push_back(std::move(stats[i]));
  }
  std::vector<UqReport> reports;
  reports.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    UqReport r = decompose(per_input[i], budget.K, sign);
    r.budget = budget;
    r.solves = budget.M * budget.K;
    reports.push_back(std::move(r));
  }
  return reports;
}

std::vector<UqReport> avuq(const ConditionalSimulator& sim, const Tensor& x0s,
                           std::span<const ConditionId> conditions,
                           const PosteriorSampler& sampler, const UqBudget& budget,
                           const RngStream& rng, ScoreSign sign) {
  if (budget.mode != UqMode::antithetic) throw ConfigError("avuq: budget must be antithetic");
  return nested_uq(sim, x0s, conditions, sampler, budget, rng, sign);
}

UqReport avuq(const ConditionalSimulator& sim, const Tensor& x0, ConditionId c,
              const PosteriorSampler& sampler, const UqBudget& budget, const RngStream& rng,
              ScoreSign sign) {
  const ConditionId cs[] = {c};
  return avuq(sim, batch_of(x0), cs, sampler, budget, rng, sign).front();
}

std::vector<ScalarScore> map_aleatoric(const ConditionalSimulator& sim, const Tensor& x0s,
                                       std::span<const ConditionId> conditions, std::size_t K,
                                       const RngStream& rng, ScoreSign sign) {
  if (K < 2) throw ConfigError("map_aleatoric: K must be >= 2");
  const Tensor inputs = batch_of(x0s);
  RngStream unused = rng;
  const PosteriorDraw draw = MapSampler().draw(unused);
  const auto stats = draw_stats(sim, draw, inputs, conditions, K, UqMode::iid,
                                rng.split("sample").split(std::uint64_t{0}));
  const double d = static_cast<double>(sim.dim());
  std::vector<ScalarScore> out;
  for (const DrawStats& s : stats) {
    out.push_back(ScalarScore{signed_score(s.variance_trace / d, sign), s.variance_trace, K});
  }
  return out;
}

std::vector<ScalarScore> mcd_dfm_epistemic(const ConditionalSimulator& sim, const Tensor& x0s,
                                           std::span<const ConditionId> conditions,
                                           const PosteriorSampler& sampler, std::size_t M,
                                           const RngStream& rng, ScoreSign sign) {
  if (M < 2) throw ConfigError("mcd_dfm_epistemic: M must be >= 2");
  const Tensor inputs = batch_of(x0s);
  check_inputs(sim, inputs, conditions);
  const std::size_t n = inputs.rows(), d = sim.dim();
  const RngStream posterior = rng.split("posterior");
  std::vector<Tensor> terminals(n, Tensor({M, d}));
  for (std::size_t m = 0; m < M; ++m) {
    RngStream ds = posterior.split(m);
    PosteriorDraw draw = sampler.draw(ds);
    draw.draw_id = m;
    const Tensor out = sim.ode_terminals(draw, inputs, conditions);
    for (std::size_t i = 0; i < n; ++i) {
      std::copy(out.row(i).begin(), out.row(i).end(), terminals[i].row(m).begin());
    }
  }
  std::vector<ScalarScore> scores;
  for (const Tensor& t : terminals) {
    const double trace = variance_trace(t);
    scores.push_back(ScalarScore{signed_score(trace, sign), trace, M});
  }
  return scores;
}

BoundCheck map_bound_check(const ScalarField& V, std::span<const double> map_point,
                           double epsilon, double lipschitz, std::size_t n_draws,
                           RngStream& rng) {
  if (n_draws < 2) throw ConfigError("map_bound_check: need at least two draws");
  const std::size_t d = map_point.size();
  const double v0 = V(map_point);
  std::vector<double> w(d);
  double mean = 0.0, m2 = 0.0;
  for (std::size_t i = 0; i < n_draws; ++i) {
    for (std::size_t j = 0; j < d; ++j) w[j] = map_point[j] + epsilon * rng.normal();
    const double v = V(w);
    // Welford
    const double delta = v - mean;
    mean += delta / static_cast<double>(i + 1);
    m2 += delta * (v - mean);
  }
  const double var = m2 / static_cast<double>(n_draws - 1);
  BoundCheck out;
  out.lhs = std::abs(mean - v0);
  out.rhs = lipschitz * epsilon * std::sqrt(static_cast<double>(d));
  out.slack = 4.0 * std::sqrt(var / static_cast<double>(n_draws));
  out.holds = out.lhs <= out.rhs + out.slack;
  return out;
}

double chi_mean(std::size_t d) {
  const double k = static_cast<double>(d);
  return std::sqrt(2.0) * std::exp(std::lgamma(0.5 * (k + 1.0)) - std::lgamma(0.5 * k));
}

}  // namespace sfm
