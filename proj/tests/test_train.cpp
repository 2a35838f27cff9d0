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

#include <chrono>
#include <cmath>
#include <limits>

#include "sfm/train.hpp"

using namespace sfm;

namespace {

MlpConfig mlp_1d(std::size_t conditions = 2) {
  MlpConfig cfg;
  cfg.input_dim = 1;
  cfg.hidden_widths = {32, 32};
  cfg.time_embed_dim = 8;
  cfg.condition_count = conditions;
  cfg.condition_embed_dim = 2;
  cfg.dropout_rate = 0.1;
  return cfg;
}

// Independent pairs x0 ~ N(mu0, v0), x1 ~ N(mu1, v1), all with condition 0.
PairBatch gaussian_pairs(std::size_t n, double mu0, double v0, double mu1, double v1,
                         std::uint64_t seed) {
  RngStream rng(seed, 0);
  PairBatch b{Tensor({n, 1}), Tensor({n, 1}), {}};
  for (std::size_t i = 0; i < n; ++i) {
    b.x0[i] = mu0 + std::sqrt(v0) * rng.normal();
    b.x1[i] = mu1 + std::sqrt(v1) * rng.normal();
    b.conditions.emplace_back(0);
  }
  return b;
}

// E_t Var(x1 - x0 | x_t) for the 1-D Gaussian pair, t ~ U[0, 1] (midpoint rule).
double irreducible_velocity_variance(double v0, double v1, const InterpolantConfig& ic) {
  const int n = 20000;
  double acc = 0.0;
  for (int k = 0; k < n; ++k) {
    const double t = (k + 0.5) / n, g = gamma(t, ic);
    const double s = (1 - t) * (1 - t) * v0 + t * t * v1 + g * g;
    const double c = t * v1 - (1 - t) * v0;
    acc += v0 + v1 - c * c / s;
  }
  return acc / n;
}

// Deterministic-forward velocity loss averaged over fresh interpolation noise.
double eval_velocity_loss(const FieldPair& nets, const PairBatch& data, int repeats) {
  TrainConfig cfg;
  cfg.p_c = 0.0;
  cfg.dropout = false;
  RngStream rng(999, 0);
  double acc = 0.0;
  for (int r = 0; r < repeats; ++r) acc += loss_batch(nets, data, rng, cfg, false).velocity_loss;
  return acc / repeats;
}

struct Trained {
  FitResult fit;
  PairBatch data;
};

Trained train_1d(std::size_t pairs, std::size_t epochs, std::size_t batch) {
  const PairBatch data = gaussian_pairs(pairs, -1.0, 0.5, 1.5, 0.3, 1);
  TrainConfig cfg;
  cfg.epochs = epochs;
  cfg.batch_size = batch;
  cfg.seed = 3;
  cfg.dropout = false;
  cfg.lambda = 0.0;
  const FieldPair init = initial_nets(mlp_1d(), mlp_1d(), InterpolantConfig{}, 3);
  const auto t0 = std::chrono::steady_clock::now();
  FitResult fr = fit(data, init, cfg);
  MESSAGE("1-D fit seconds: "
          << std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
  return Trained{std::move(fr), data};
}

// 2k pairs, 200 epochs.
const Trained& trained_small() {
  static const Trained t = train_1d(2000, 200, 128);
  return t;
}

// A larger sample for the pointwise comparison with the oracle.
const Trained& trained_1d() {
  static const Trained t = train_1d(50000, 40, 512);
  return t;
}

}  // namespace

TEST_CASE("config validation") {
  TrainConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  cfg.lambda = -1;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = TrainConfig{};
  cfg.p_c = 1.5;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = TrainConfig{};
  cfg.batch_size = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("perfect velocity net has zero velocity loss") {
  // Pairs share one displacement; a net whose output bias equals it is exact.
  MlpConfig cfg = mlp_1d();
  cfg.input_dim = 2;
  FieldNet v = FieldNet::zeros(cfg, FieldKind::velocity);
  auto w = v.mutable_weights();
  w[w.size() - 2] = 0.5;
  w[w.size() - 1] = -1.25;
  const FieldPair nets{v, FieldNet::zeros(cfg, FieldKind::score), InterpolantConfig{}};
  RngStream rng(1, 0);
  PairBatch b{Tensor({16, 2}), Tensor({16, 2}), std::vector<ConditionId>(16, ConditionId(1 - 1))};
  for (std::size_t i = 0; i < 16; ++i) {
    b.x0.at(i, 0) = rng.normal();
    b.x0.at(i, 1) = rng.normal();
    b.x1.at(i, 0) = b.x0.at(i, 0) + 0.5;
    b.x1.at(i, 1) = b.x0.at(i, 1) - 1.25;
  }
  TrainConfig tc;
  tc.dropout = false;
  CHECK(loss_batch(nets, b, rng, tc).velocity_loss == doctest::Approx(0.0));
}

TEST_CASE("zero score net residual against the analytic target") {
  MlpConfig cfg = mlp_1d();
  cfg.input_dim = 3;
  const FieldPair nets{FieldNet::zeros(cfg, FieldKind::velocity),
                       FieldNet::zeros(cfg, FieldKind::score), InterpolantConfig{}};
  const std::size_t n = 4;
  PairBatch b{Tensor({n, 3}), Tensor({n, 3}, 1.0), std::vector<ConditionId>(n, ConditionId(0))};
  LossNoise noise;
  noise.t_velocity.assign(n, 0.5);
  noise.z_velocity = Tensor({n, 3}, 1.0);
  noise.t_score.assign(n, 0.5);
  noise.z_score = Tensor({n, 3}, 1.0);
  noise.masked.assign(n, false);
  TrainConfig tc;
  const BatchLoss l = loss_batch(nets, b, noise, tc);
  // (0 - (-10))^2 = 100 per coordinate.
  CHECK(l.score_loss / 3.0 == doctest::Approx(100.0));
  CHECK(l.velocity_loss == doctest::Approx(3.0));
}

TEST_CASE("loss batch errors and lambda zero") {
  const FieldPair nets = initial_nets(mlp_1d(), mlp_1d(), InterpolantConfig{}, 1);
  PairBatch empty{Tensor({0, 1}), Tensor({0, 1}), {}};
  RngStream rng(2, 0);
  TrainConfig tc;
  CHECK_THROWS_AS(loss_batch(nets, empty, rng, tc), ConfigError);
  tc.lambda = 0.0;
  const PairBatch b = gaussian_pairs(32, 0, 1, 1, 1, 4);
  const BatchLoss l = loss_batch(nets, b, rng, tc);
  CHECK(l.score_grad.size() == nets.score.weights().size());
  for (double g : l.score_grad) CHECK(g == 0.0);
  CHECK(l.score_loss > 0.0);
}

TEST_CASE("condition masking frequency") {
  const FieldPair nets = initial_nets(mlp_1d(), mlp_1d(), InterpolantConfig{}, 1);
  const PairBatch b = gaussian_pairs(20000, 0, 1, 1, 1, 5);
  TrainConfig tc;
  tc.p_c = 0.1;
  RngStream rng(6, 0);
  const LossNoise noise = draw_loss_noise(nets, b, rng, tc);
  std::size_t masked = 0;
  for (bool m : noise.masked) masked += m;
  const double n = 20000;
  CHECK(std::abs(masked - n * 0.1) < 4.0 * std::sqrt(n * 0.1 * 0.9));
  for (double t : noise.t_score) {
    CHECK(t >= 0.05);
    CHECK(t <= 0.95);
  }
}

TEST_CASE("trained 1-D velocity matches the oracle") {
  const Trained& tr = trained_1d();
  const auto& hist = tr.fit.history;
  CHECK(hist.back().velocity_loss < hist.front().velocity_loss);

  const InterpolantConfig ic{};
  const GaussianPairOracle o{Tensor::vector({-1.0}), Tensor::vector({1.5}), 0.5, 0.3};
  double se = 0.0, sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
  std::size_t n = 0;
  RngStream rng(7, 0);
  for (int k = 0; k < 2000; ++k) {
    const double t = rng.uniform();
    const double m = o.marginal_mean(t)[0];
    const double sd = std::sqrt(o.marginal_variance(t, gamma(t, ic)));
    const double x = m + sd * std::clamp(rng.normal(), -2.0, 2.0);  // bulk of p_t
    const double got = tr.fit.nets.velocity.forward(Tensor::vector({x}), t, ConditionId(0))[0];
    const double want = oracle_velocity(Tensor::vector({x}), t, o, &ic)[0];
    se += (got - want) * (got - want);
    sx += got;
    sy += want;
    sxx += got * got;
    syy += want * want;
    sxy += got * want;
    ++n;
  }
  const double rms = std::sqrt(se / n);
  const double r = (sxy - sx * sy / n) /
                   std::sqrt((sxx - sx * sx / n) * (syy - sy * sy / n));
  MESSAGE("velocity RMS vs oracle " << rms << ", Pearson r " << r);
  CHECK(rms < 0.05);
  CHECK(r > 0.99);
}

TEST_CASE("trained velocity loss approaches the irreducible variance") {
  const Trained& tr = trained_small();
  const double floor = irreducible_velocity_variance(0.5, 0.3, InterpolantConfig{});
  const double loss = eval_velocity_loss(tr.fit.nets, tr.data, 20);
  MESSAGE("velocity loss " << loss << " vs irreducible " << floor);
  CHECK(std::abs(loss - floor) < 0.1 * floor);
}

TEST_CASE("irreducible variance agrees with a rejection-sampling estimate") {
  // Var(x1 - x0 | x_t ~= x) at one (t, x) by kernel conditioning.
  const InterpolantConfig ic{};
  const double t = 0.4, x = 0.2, v0 = 0.5, v1 = 0.3;
  RngStream rng(8, 0);
  double s = 0, s2 = 0;
  std::size_t n = 0;
  for (int i = 0; i < 1000000; ++i) {
    const double a = -1.0 + std::sqrt(v0) * rng.normal();
    const double b = 1.5 + std::sqrt(v1) * rng.normal();
    const double xt = (1 - t) * a + t * b + gamma(t, ic) * rng.normal();
    if (std::abs(xt - x) < 0.01) {
      s += b - a;
      s2 += (b - a) * (b - a);
      ++n;
    }
  }
  const double var = s2 / n - (s / n) * (s / n);
  const double g = gamma(t, ic);
  const double S = (1 - t) * (1 - t) * v0 + t * t * v1 + g * g, c = t * v1 - (1 - t) * v0;
  const double exact = v0 + v1 - c * c / S;
  // Standard error of a sample variance ~ var * sqrt(2 / n).
  CHECK(std::abs(var - exact) < 4.0 * exact * std::sqrt(2.0 / n));
}

TEST_CASE("fit is bit-reproducible and never moves the score net at lambda zero") {
  const PairBatch data = gaussian_pairs(200, 0, 1, 2, 0.5, 9);
  TrainConfig cfg;
  cfg.epochs = 3;
  cfg.batch_size = 64;
  cfg.seed = 11;
  const FieldPair init = initial_nets(mlp_1d(), mlp_1d(), InterpolantConfig{}, 11);
  const FitResult a = fit(data, init, cfg), b = fit(data, init, cfg);
  CHECK(a.nets.velocity == b.nets.velocity);
  CHECK(a.nets.score == b.nets.score);
  CHECK(!(a.nets.score == init.score));
  cfg.lambda = 0.0;
  const FitResult c = fit(data, init, cfg);
  CHECK(c.nets.score == init.score);
  CHECK(!(c.nets.velocity == init.velocity));
}

TEST_CASE("non-finite loss aborts with a diagnostic") {
  PairBatch data = gaussian_pairs(100, 0, 1, 2, 0.5, 12);
  data.x1[37] = std::numeric_limits<double>::quiet_NaN();
  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.batch_size = 10;
  const FieldPair init = initial_nets(mlp_1d(), mlp_1d(), InterpolantConfig{}, 1);
  try {
    fit(data, init, cfg);
    FAIL("expected TrainingError");
  } catch (const TrainingError& e) {
    const std::string what = e.what();
    CHECK(what.find("learning_rate") != std::string::npos);
    CHECK(what.find("batch") != std::string::npos);
  }
  CHECK_THROWS_AS(fit(PairBatch{Tensor({0, 1}), Tensor({0, 1}), {}}, init, cfg), ConfigError);
}

TEST_CASE("fully masked training is unconditional") {
  // Condition-independent data; every condition is replaced by null.
  PairBatch data = gaussian_pairs(5000, -1.0, 0.5, 1.5, 0.3, 13);
  RngStream crng(14, 0);
  for (auto& c : data.conditions) c = ConditionId(static_cast<std::int32_t>(crng.below(2)));
  TrainConfig cfg;
  cfg.p_c = 1.0;
  cfg.epochs = 40;
  cfg.batch_size = 256;
  cfg.lambda = 0.0;
  const FieldPair init = initial_nets(mlp_1d(3), mlp_1d(3), InterpolantConfig{}, 15);
  const FitResult fr = fit(data, init, cfg);

  // Output samples under independent p_t inputs for the conditional and null forwards.
  const InterpolantConfig ic{};
  const GaussianPairOracle o{Tensor::vector({-1.0}), Tensor::vector({1.5}), 0.5, 0.3};
  RngStream rng(16, 0);
  auto outputs = [&](ConditionId c, std::size_t n) {
    Tensor y({n, 1});
    for (std::size_t i = 0; i < n; ++i) {
      const double t = rng.uniform();
      const double x = o.marginal_mean(t)[0] +
                       std::sqrt(o.marginal_variance(t, gamma(t, ic))) * rng.normal();
      y[i] = fr.nets.velocity.forward(Tensor::vector({x}), t, c)[0];
    }
    return y;
  };
  const std::size_t n = 200;
  const Tensor a = outputs(ConditionId(0), n), b = outputs(ConditionId::null(), n);
  // Permutation test on the energy statistic at level 0.01.
  auto energy = [&](const std::vector<double>& v) {
    double cross = 0, wa = 0, wb = 0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        cross += std::abs(v[i] - v[n + j]);
        wa += std::abs(v[i] - v[j]);
        wb += std::abs(v[n + i] - v[n + j]);
      }
    return (2 * cross - wa - wb) / (n * n);
  };
  std::vector<double> pooled(a.data().begin(), a.data().end());
  pooled.insert(pooled.end(), b.data().begin(), b.data().end());
  const double observed = energy(pooled);
  std::size_t exceed = 0;
  const std::size_t perms = 199;
  RngStream prng(17, 0);
  for (std::size_t p = 0; p < perms; ++p) {
    for (std::size_t i = pooled.size(); i > 1; --i) std::swap(pooled[i - 1], pooled[prng.below(i)]);
    exceed += energy(pooled) >= observed;
  }
  const double p_value = (exceed + 1.0) / (perms + 1.0);
  MESSAGE("p-value " << p_value);
  CHECK(p_value > 0.01);
  // The conditional forward is in fact the null-conditioned one.
  const Tensor x = Tensor::vector({0.3});
  CHECK(fr.nets.velocity.forward(x, 0.4, ConditionId(1)) ==
        fr.nets.velocity.forward(x, 0.4, ConditionId::null()));
}
