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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "sfm/uq.hpp"

using namespace sfm;

namespace {

// Returns 2 * (row parity): K = 2 samples per input are {0, 2}.
class ParitySimulator final : public ConditionalSimulator {
 public:
  std::size_t dim() const override { return 1; }
  std::size_t steps() const override { return 1; }
  Tensor sde_terminals(const PosteriorDraw&, const Tensor& x0s, std::span<const ConditionId>,
                       std::span<const NoisePath>) const override {
    Tensor out({x0s.rows(), 1});
    for (std::size_t r = 0; r < out.rows(); ++r) out[r] = 2.0 * static_cast<double>(r % 2);
    count(out.rows());
    return out;
  }
  Tensor ode_terminals(const PosteriorDraw&, const Tensor& x0s,
                       std::span<const ConditionId>) const override {
    count(x0s.rows());
    return Tensor({x0s.rows(), 1});
  }
};

// Hands out members in a fixed cyclic order starting at `offset`.
class CyclicSampler final : public PosteriorSampler {
 public:
  CyclicSampler(std::size_t members, std::size_t offset) : members_(members), next_(offset) {}
  PosteriorKind kind() const override { return PosteriorKind::finite_ensemble; }
  PosteriorDraw draw(RngStream&) const override {
    PosteriorDraw d;
    d.kind = kind();
    d.member = next_++ % members_;
    return d;
  }

 private:
  std::size_t members_;
  mutable std::size_t next_;
};

FieldFn constant(double v) {
  return [v](const Tensor& x, double) {
    Tensor out = Tensor::zeros_like(x);
    for (double& e : out.data()) e = v;
    return out;
  };
}

struct Running {
  double s = 0, s2 = 0;
  std::size_t n = 0;
  void add(double v) {
    s += v;
    s2 += v * v;
    ++n;
  }
  double mean() const { return s / n; }
  double se() const { return std::sqrt(std::max(0.0, s2 / n - mean() * mean()) / (n - 1)); }
};

GaussianEnsembleSimulator pm_one(double s2) {
  return GaussianEnsembleSimulator(
      {{Tensor::vector({-1.0}), s2}, {Tensor::vector({1.0}), s2}}, 1);
}

const ConditionId kC0[] = {ConditionId(0)};

}  // namespace

TEST_CASE("per-draw statistics") {
  const DrawStats same = per_draw_stats(Tensor::matrix({{1, 2}, {1, 2}, {1, 2}}));
  CHECK(same.variance_trace == 0.0);
  const DrawStats s = per_draw_stats(Tensor::matrix({{0}, {2}}));
  CHECK(s.mean[0] == 1.0);
  CHECK(s.variance_trace == 2.0);
  CHECK_THROWS_AS(per_draw_stats(Tensor::matrix({{1}})), ConfigError);

  RngStream rng(1, 0);
  Tensor big({100000, 2});
  for (double& v : big.data()) v = rng.normal();
  CHECK(std::abs(per_draw_stats(big).variance_trace - 2.0) < 0.05);
}

TEST_CASE("scale equivariance of traces and scores") {
  RngStream rng(2, 0);
  std::vector<DrawStats> base, scaled;
  const double alpha = 3.0;
  for (int m = 0; m < 4; ++m) {
    Tensor x({6, 3});
    for (double& v : x.data()) v = rng.normal() + m;
    base.push_back(per_draw_stats(x));
    scaled.push_back(per_draw_stats(x * alpha));
  }
  const UqReport a = decompose(base, 6), b = decompose(scaled, 6);
  CHECK(b.aleatoric_trace == doctest::Approx(alpha * alpha * a.aleatoric_trace).epsilon(1e-12));
  CHECK(*b.epistemic_raw == doctest::Approx(alpha * alpha * *a.epistemic_raw).epsilon(1e-12));
  CHECK(*b.score_epistemic == doctest::Approx(alpha * alpha * *a.score_epistemic).epsilon(1e-12));
  CHECK(b.score_aleatoric == doctest::Approx(alpha * alpha * a.score_aleatoric).epsilon(1e-12));
}

TEST_CASE("decompose with exact per-draw statistics") {
  // Identical draws: no disagreement.
  const std::vector<DrawStats> same(5, DrawStats{Tensor::vector({0.5, 1.0}), 0.0});
  const UqReport r0 = decompose(same, 1000000);
  CHECK(*r0.epistemic_corrected == 0.0);

  // Two members N(-1, s^2), N(+1, s^2): aleatoric s^2; the (M-1)-denominator
  // spread of the realized means {-1, +1} is 2, population value 1.
  const double s2 = 0.49;
  const std::vector<DrawStats> pm = {DrawStats{Tensor::vector({-1.0}), s2},
                                     DrawStats{Tensor::vector({1.0}), s2}};
  const UqReport r = decompose(pm, 4);
  CHECK(r.aleatoric_trace == s2);
  CHECK(*r.epistemic_raw == 2.0);
  CHECK(*r.epistemic_corrected == doctest::Approx(2.0 - s2 / 4));
  CHECK(r.score_aleatoric == -s2);
  CHECK(*r.score_epistemic == -2.0);
  CHECK(decompose(pm, 4, ScoreSign::raw).score_aleatoric == s2);

  // Many balanced draws approach the population value.
  std::vector<DrawStats> many;
  for (int m = 0; m < 1000; ++m) many.push_back(pm[m % 2]);
  CHECK(*decompose(many, 4).epistemic_raw == doctest::Approx(1.0).epsilon(2e-3));

  const UqReport single = decompose(std::span(pm).first(1), 4);
  CHECK(!single.epistemic_raw);
  CHECK(!single.score_epistemic);
  CHECK(single.aleatoric_trace == s2);
}

TEST_CASE("negative corrected epistemic is flagged, not clipped") {
  const std::vector<DrawStats> draws = {DrawStats{Tensor::vector({0.0}), 4.0},
                                        DrawStats{Tensor::vector({0.1}), 4.0}};
  const UqReport r = decompose(draws, 2);
  CHECK(r.corrected_negative);
  CHECK(*r.epistemic_corrected < 0.0);
}

TEST_CASE("exchangeability of posterior draws") {
  RngStream rng(3, 0);
  std::vector<DrawStats> draws;
  for (int m = 0; m < 7; ++m) {
    Tensor x({5, 2});
    for (double& v : x.data()) v = rng.normal() * (1 + m);
    draws.push_back(per_draw_stats(x));
  }
  const UqReport a = decompose(draws, 5);
  std::reverse(draws.begin(), draws.end());
  std::rotate(draws.begin(), draws.begin() + 3, draws.end());
  const UqReport b = decompose(draws, 5);
  CHECK(a.aleatoric_trace == doctest::Approx(b.aleatoric_trace).epsilon(1e-12));
  CHECK(*a.epistemic_raw == doctest::Approx(*b.epistemic_raw).epsilon(1e-12));
}

TEST_CASE("residual Monte Carlo noise law on the two-member ensemble") {
  const auto sim = pm_one(1.0);
  const FiniteEnsembleSampler sampler(2);
  const Tensor x0 = Tensor::vector({0.0});
  for (std::size_t K : {2, 4, 8}) {
    CAPTURE(K);
    Running raw, corrected, aleatoric, total, diff;
    const UqBudget budget{64, K, UqMode::iid};
    for (std::uint64_t rep = 0; rep < 1000; ++rep) {
      const RngStream rng(100 + rep, 0);
      const UqReport r = nested_uq(sim, x0.reshaped({1, 1}), kC0, sampler, budget, rng).front();
      raw.add(*r.epistemic_raw);
      corrected.add(*r.epistemic_corrected);
      aleatoric.add(r.aleatoric_trace);
      diff.add(*r.epistemic_raw - *r.epistemic_corrected - 1.0 / K);
    }
    CHECK(std::abs(aleatoric.mean() - 1.0) < 4 * aleatoric.se());
    CHECK(std::abs(corrected.mean() - 1.0) < 4 * corrected.se());
    CHECK(std::abs(raw.mean() - (1.0 + 1.0 / K)) < 4 * raw.se());
    // raw - corrected is exactly A/K; its expectation is 1/K.
    CHECK(std::abs(diff.mean()) < 4 * diff.se() + 1e-15);
  }
}

TEST_CASE("law of total variance over all samples") {
  const auto sim = pm_one(1.0);
  const FiniteEnsembleSampler sampler(2);
  Running gap;
  for (std::uint64_t rep = 0; rep < 300; ++rep) {
    const RngStream rng(5000 + rep, 0);
    const UqBudget budget{64, 8, UqMode::iid};
    // Reconstruct the M*K samples with the same streams nested_uq uses.
    Tensor all({64 * 8, 1});
    const RngStream post = rng.split("posterior"), noise = rng.split("sample");
    for (std::size_t m = 0; m < 64; ++m) {
      RngStream ds = post.split(m);
      const PosteriorDraw d = sampler.draw(ds);
      RngStream ns = noise.split(m).split(std::uint64_t{0});
      const auto paths = iid_paths(ns, 8, 1, 1);
      const Tensor y = sim.sde_terminals(d, Tensor({8, 1}), {}, paths);
      for (std::size_t k = 0; k < 8; ++k) all[m * 8 + k] = y[k];
    }
    const UqReport r =
        nested_uq(sim, Tensor({1, 1}), kC0, sampler, budget, rng).front();
    gap.add(per_draw_stats(all).variance_trace - (r.aleatoric_trace + 1.0));
  }
  CHECK(std::abs(gap.mean()) < 4 * gap.se());
}

TEST_CASE("avuq degenerate and mirror cases") {
  GaussianPairOracle o{Tensor::vector({0.0}), Tensor::vector({1.0}), 1.0, 0.5};
  const InterpolantConfig icfg{};
  SdeConfig cfg;
  cfg.steps = 50;
  cfg.sigma_max = 0.0;
  const FieldSimulator det({oracle_dynamics(o, &icfg)}, 1, cfg);
  const MapSampler map;
  const UqBudget budget{4, 4, UqMode::antithetic};
  const UqReport r = avuq(det, Tensor::vector({0.3}), ConditionId(0), map, budget, RngStream(1, 0));
  CHECK(r.aleatoric_trace == 0.0);
  CHECK(*r.epistemic_raw == 0.0);

  cfg.sigma_max = 0.8;
  const FieldSimulator mirror({Dynamics{constant(0.0), constant(0.0)}}, 2, cfg);
  for (std::size_t K : {2, 4, 8}) {
    const UqReport m = avuq(mirror, Tensor::vector({0.0, 0.0}), ConditionId(0), map,
                            UqBudget{3, K, UqMode::antithetic}, RngStream(2, 0));
    CHECK(*m.epistemic_raw == 0.0);
    CHECK(m.aleatoric_trace > 0.0);
  }
  CHECK_THROWS_AS(avuq(det, Tensor::vector({0.3}), ConditionId(0), map,
                       UqBudget{4, 3, UqMode::antithetic}, RngStream(1, 0)),
                  ConfigError);
  CHECK_THROWS_AS(avuq(det, Tensor::vector({0.3}), ConditionId(0), map,
                       UqBudget{4, 4, UqMode::iid}, RngStream(1, 0)),
                  ConfigError);
}

TEST_CASE("antithetic mean estimator has lower variance") {
  GaussianPairOracle o{Tensor::vector({0.0}), Tensor::vector({1.0}), 1.0, 0.5};
  const InterpolantConfig icfg{};
  SdeConfig cfg;
  cfg.steps = 100;
  cfg.sigma_max = 0.5;
  const FieldSimulator sim({oracle_dynamics(o, &icfg)}, 1, cfg);
  const PosteriorDraw draw;
  const std::size_t K = 4;
  Running anti, iid;
  std::vector<double> a, b;
  const RngStream root(3, 0);
  for (std::uint64_t rep = 0; rep < 1000; ++rep) {
    const Tensor x0 = Tensor::vector({0.3}).reshaped({1, 1});
    a.push_back(draw_stats(sim, draw, x0, kC0, K, UqMode::antithetic, root.split(rep).split("a"))
                    .front()
                    .mean[0]);
    b.push_back(
        draw_stats(sim, draw, x0, kC0, K, UqMode::iid, root.split(rep).split("b")).front().mean[0]);
    anti.add(a.back());
    iid.add(b.back());
  }
  const double va = anti.se() * anti.se() * 1000, vb = iid.se() * iid.se() * 1000;
  CHECK(va / vb < 0.9);
  CHECK(std::abs(anti.mean() - iid.mean()) <
        4 * std::sqrt(anti.se() * anti.se() + iid.se() * iid.se()));
}

TEST_CASE("map aleatoric baseline") {
  const ParitySimulator parity;
  const auto s = map_aleatoric(parity, Tensor({1, 1}), kC0, 2, RngStream(1, 0));
  CHECK(s.front().score == -2.0);
  CHECK(s.front().solves == 2);
  CHECK(parity.solves() == 2);
  CHECK_THROWS_AS(map_aleatoric(parity, Tensor({1, 1}), kC0, 1, RngStream(1, 0)), ConfigError);

  // Agrees with the per-draw trace on the same samples, scaled by -1/d.
  const GaussianEnsembleSimulator g({{Tensor::vector({0.0, 1.0, 2.0}), 0.7}}, 3);
  const RngStream rng(7, 0);
  const auto m = map_aleatoric(g, Tensor({1, 3}), kC0, 5, rng);
  const auto stats = draw_stats(g, PosteriorDraw{}, Tensor({1, 3}), kC0, 5, UqMode::iid,
                                rng.split("sample").split(std::uint64_t{0}));
  CHECK(m.front().score == -stats.front().variance_trace / 3.0);

  SdeConfig cfg;
  cfg.sigma_max = 0.0;
  const FieldSimulator det({Dynamics{constant(1.0), constant(0.0)}}, 1, cfg);
  CHECK(map_aleatoric(det, Tensor({1, 1}), kC0, 4, rng).front().score == 0.0);
}

TEST_CASE("mcd-dfm epistemic baseline") {
  SdeConfig cfg;
  cfg.steps = 10;
  const FieldSimulator sim({Dynamics{constant(0.0), {}}, Dynamics{constant(1.0), {}}}, 1, cfg);
  const CyclicSampler forward(2, 0), backward(2, 1);
  const auto a = mcd_dfm_epistemic(sim, Tensor({1, 1}), kC0, forward, 2, RngStream(1, 0));
  CHECK(a.front().trace == doctest::Approx(0.5).epsilon(1e-14));
  CHECK(a.front().score == doctest::Approx(-0.5).epsilon(1e-14));
  const auto b = mcd_dfm_epistemic(sim, Tensor({1, 1}), kC0, backward, 2, RngStream(1, 0));
  CHECK(b.front().score == a.front().score);
  CHECK(mcd_dfm_epistemic(sim, Tensor({1, 1}), kC0, MapSampler(), 4, RngStream(1, 0))
            .front()
            .score == 0.0);
  CHECK_THROWS_AS(mcd_dfm_epistemic(sim, Tensor({1, 1}), kC0, MapSampler(), 1, RngStream(1, 0)),
                  ConfigError);
}

TEST_CASE("solve counters") {
  const auto sim = pm_one(1.0);
  const FiniteEnsembleSampler sampler(2);
  const ConditionId cs[] = {ConditionId(0), ConditionId(0), ConditionId(0)};
  const Tensor x0s({3, 1});
  const auto r = nested_uq(sim, x0s, cs, sampler, UqBudget{5, 4, UqMode::iid}, RngStream(1, 0));
  CHECK(sim.solves() == 3 * 5 * 4);
  CHECK(r.front().solves == 20);
}

TEST_CASE("bound check") {
  const std::vector<double> w0(16, 0.3);
  RngStream rng(9, 0);
  const auto c = map_bound_check([](std::span<const double>) { return 2.5; }, w0, 0.1, 1.0,
                                 1000, rng);
  CHECK(c.lhs == 0.0);
  CHECK(c.holds);

  const double L = 3.0, eps = 0.1;
  auto norm_v = [&](std::span<const double> w) {
    double s = 0;
    for (std::size_t j = 0; j < w.size(); ++j) s += (w[j] - w0[j]) * (w[j] - w0[j]);
    return L * std::sqrt(s);
  };
  const auto n = map_bound_check(norm_v, w0, eps, L, 200000, rng);
  CHECK(n.holds);
  CHECK(std::abs(n.lhs - L * eps * chi_mean(16)) < n.slack);
  CHECK(chi_mean(16) == doctest::Approx(std::sqrt(2.0) * std::tgamma(8.5) / std::tgamma(8.0)));
  CHECK(chi_mean(16) < 4.0);

  auto linear = [&](std::span<const double> w) {
    double s = 0;
    for (double v : w) s += L / 4.0 * v;  // gradient norm L in 16-D
    return s;
  };
  const auto l = map_bound_check(linear, w0, eps, L, 100000, rng);
  CHECK(l.holds);
  CHECK(l.lhs < l.slack);
}

TEST_CASE("large dimension smoke run") {
  RngStream rng(10, 0);
  Tensor x({4, 20000});
  for (double& v : x.data()) v = rng.normal();
  const DrawStats s = per_draw_stats(x);
  CHECK(s.mean.size() == 20000);
  CHECK(std::abs(s.variance_trace / 20000 - 1.0) < 0.05);
}
