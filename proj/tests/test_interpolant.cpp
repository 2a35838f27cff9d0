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

#include <cmath>

#include "sfm/interpolant.hpp"
#include "sfm/rng.hpp"

using namespace sfm;

namespace {

const InterpolantConfig kCfg{};

GaussianPairOracle oracle_1d(double mu0, double mu1, double v0, double v1) {
  return GaussianPairOracle{Tensor::vector({mu0}), Tensor::vector({mu1}), v0, v1};
}

}  // namespace

TEST_CASE("gamma schedule") {
  CHECK(gamma(0.0, kCfg) == 0.0);
  CHECK(gamma(1.0, kCfg) == 0.0);
  CHECK(gamma(0.5, kCfg) == doctest::Approx(0.1).epsilon(1e-15));
  CHECK(gamma(0.25, kCfg) == doctest::Approx(0.05).epsilon(1e-14));
  CHECK_THROWS_AS(gamma(-0.1, kCfg), DomainError);
  CHECK_THROWS_AS(gamma(1.1, kCfg), DomainError);
  const double h = 1e-6;
  for (double t : {0.1, 0.3, 0.7}) {
    CHECK(gamma_dot(t, kCfg) ==
          doctest::Approx((gamma(t + h, kCfg) - gamma(t - h, kCfg)) / (2 * h)).epsilon(1e-6));
  }
}

TEST_CASE("config validation") {
  CHECK_NOTHROW(kCfg.validate());
  CHECK_THROWS_AS((InterpolantConfig{0.0, 0.5, 0.05}.validate()), ConfigError);
  CHECK_THROWS_AS((InterpolantConfig{0.1, -1.0, 0.05}.validate()), ConfigError);
  CHECK_THROWS_AS((InterpolantConfig{0.1, 0.5, 0.5}.validate()), ConfigError);
  CHECK_THROWS_AS((InterpolantConfig{0.1, 0.5, 0.0}.validate()), ConfigError);
}

TEST_CASE("interpolate endpoints and hand value") {
  RngStream rng(1, 0);
  const Tensor x0 = gauss(rng, 3), x1 = gauss(rng, 3), z = gauss(rng, 3);
  CHECK(interpolate(x0, x1, 0.0, z, kCfg) == x0);
  CHECK(interpolate(x0, x1, 1.0, z, kCfg) == x1);
  const Tensor v = interpolate(Tensor::vector({0}), Tensor::vector({2}), 0.5,
                               Tensor::vector({1}), kCfg);
  CHECK(v[0] == doctest::Approx(1.1).epsilon(1e-15));
  CHECK_THROWS_AS(interpolate(x0, Tensor::vector({1}), 0.5, z, kCfg), DimensionError);
}

TEST_CASE("score target") {
  CHECK(score_target(Tensor::vector({0.0}), 0.5, kCfg)[0] == 0.0);
  CHECK(score_target(Tensor::vector({1.0}), 0.5, kCfg)[0] == doctest::Approx(-10.0));
  CHECK(score_target(Tensor::vector({2.0}), 0.25, kCfg)[0] == doctest::Approx(-40.0));
  CHECK_THROWS_AS(score_target(Tensor::vector({1.0}), 0.01, kCfg), DomainError);
  CHECK_THROWS_AS(score_target(Tensor::vector({1.0}), 0.99, kCfg), DomainError);
  CHECK_NOTHROW(score_target(Tensor::vector({1.0}), kCfg.t_min, kCfg));
}

TEST_CASE("score target is the gradient of the conditional log density") {
  // log N(x; m, g^2) has gradient -(x - m)/g^2 = -z/g when x = m + g z.
  const double t = 0.3, g = gamma(t, kCfg), m = 0.7, z = -1.3;
  const double x = m + g * z, h = 1e-7;
  auto logp = [&](double y) { return -0.5 * (y - m) * (y - m) / (g * g); };
  const double fd = (logp(x + h) - logp(x - h)) / (2 * h);
  CHECK(score_target(Tensor::vector({z}), t, kCfg)[0] == doctest::Approx(fd).epsilon(1e-6));
}

TEST_CASE("oracle velocity closed-form cases") {
  const auto sym = oracle_1d(0, 0, 1, 1);
  for (double t : {0.0, 0.3, 0.8, 1.0}) {
    CHECK(oracle_velocity(Tensor::vector({0.0}), t, sym)[0] == doctest::Approx(0.0));
  }
  // Near-degenerate endpoints: the velocity is the mean displacement.
  const auto det = oracle_1d(0, 2.5, 1e-12, 1e-12);
  for (double t : {0.2, 0.5, 0.9}) {
    const Tensor x = Tensor::vector({2.5 * t});
    CHECK(oracle_velocity(x, t, det)[0] == doctest::Approx(2.5).epsilon(1e-6));
  }
  // Batched rows agree with single-point calls.
  const auto o = oracle_1d(-1, 2, 0.5, 1.5);
  const Tensor batch = Tensor::matrix({{0.1}, {-0.4}});
  const Tensor vb = oracle_velocity(batch, 0.4, o, &kCfg);
  CHECK(vb.at(1, 0) == oracle_velocity(Tensor::vector({-0.4}), 0.4, o, &kCfg)[0]);
}

TEST_CASE("oracle velocity matches a rejection-sampling conditional mean") {
  const auto o = oracle_1d(-0.5, 1.5, 0.8, 0.3);
  const double t = 0.3, x = 0.2, bw = 0.01;
  RngStream rng(77, 0);
  double s = 0.0, s2 = 0.0;
  std::size_t n = 0;
  for (int i = 0; i < 1000000; ++i) {
    const double x0 = -0.5 + std::sqrt(0.8) * rng.normal();
    const double x1 = 1.5 + std::sqrt(0.3) * rng.normal();
    const double z = rng.normal();
    const double xt = (1 - t) * x0 + t * x1 + gamma(t, kCfg) * z;
    if (std::abs(xt - x) < bw) {
      const double u = x1 - x0;
      s += u;
      s2 += u * u;
      ++n;
    }
  }
  REQUIRE(n > 1000);
  const double mean = s / n, var = s2 / n - mean * mean;
  const double se = std::sqrt(var / n);
  const double exact = oracle_velocity(Tensor::vector({x}), t, o, &kCfg)[0];
  CHECK(std::abs(mean - exact) < 3.0 * se);
}

TEST_CASE("oracle score") {
  const auto o = oracle_1d(-1, 3, 0.6, 1.4);
  for (double t : {0.2, 0.5, 0.9}) {
    CHECK(oracle_score(o.marginal_mean(t), t, o, &kCfg)[0] == doctest::Approx(0.0));
  }
  const auto std01 = oracle_1d(0, 0, 1, 1);
  CHECK(oracle_score(Tensor::vector({0.8}), 0.5, std01)[0] == doctest::Approx(-0.8 / 0.5));

  GaussianPairOracle o2{Tensor::vector({0.3, -1.0}), Tensor::vector({1.2, 0.4}), 0.7, 2.1};
  const Tensor x = Tensor::vector({0.9, -0.2});
  const double h = 1e-5;
  const Tensor s = oracle_score(x, 0.37, o2, &kCfg);
  for (std::size_t i = 0; i < 2; ++i) {
    Tensor xp = x, xm = x;
    xp[i] += h;
    xm[i] -= h;
    const double fd = (oracle_log_density(xp, 0.37, o2, &kCfg) -
                       oracle_log_density(xm, 0.37, o2, &kCfg)) /
                      (2 * h);
    CHECK(std::abs(fd - s[i]) < 1e-6);
  }
}

TEST_CASE("transport velocity reduces to the plain velocity when gamma vanishes") {
  const auto o = oracle_1d(-1, 3, 0.6, 1.4);
  const Tensor x = Tensor::vector({0.4});
  CHECK(oracle_transport_velocity(x, 0.3, o)[0] == oracle_velocity(x, 0.3, o)[0]);
}

TEST_CASE("interpolant marginal law") {
  GaussianPairOracle o{Tensor::vector({-1.0, 0.5}), Tensor::vector({2.0, -0.5}), 0.5, 1.5};
  RngStream rng(9, 0);
  const std::size_t n = 100000;
  for (double t : {0.1, 0.5, 0.9}) {
    CAPTURE(t);
    const Tensor mean = o.marginal_mean(t);
    const double var = o.marginal_variance(t, gamma(t, kCfg));
    for (std::size_t i = 0; i < 2; ++i) {
      double s = 0, s2 = 0;
      for (std::size_t k = 0; k < n; ++k) {
        const Tensor x0 = Tensor::vector({o.mu0[i] + std::sqrt(o.var0) * rng.normal()});
        const Tensor x1 = Tensor::vector({o.mu1[i] + std::sqrt(o.var1) * rng.normal()});
        const Tensor z = Tensor::vector({rng.normal()});
        const double v = interpolate(x0, x1, t, z, kCfg)[0];
        s += v;
        s2 += v * v;
      }
      const double m = s / n, sv = (s2 - n * m * m) / (n - 1);
      CHECK(std::abs(m - mean[i]) < 4.0 * std::sqrt(var / n));
      CHECK(std::abs(sv - var) < 4.0 * var * std::sqrt(2.0 / (n - 1)));
    }
  }
}
