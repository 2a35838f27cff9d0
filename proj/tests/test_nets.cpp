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
#include <filesystem>
#include <fstream>

#include "sfm/nets.hpp"

using namespace sfm;

namespace {

MlpConfig small_config() {
  MlpConfig cfg;
  cfg.input_dim = 2;
  cfg.hidden_widths = {5, 4};
  cfg.time_embed_dim = 4;
  cfg.condition_count = 3;
  cfg.condition_embed_dim = 2;
  cfg.dropout_rate = 0.2;
  return cfg;
}

FieldNet random_net(std::uint64_t seed, const MlpConfig& cfg = small_config()) {
  RngStream rng(seed, 0);
  FieldNet net = FieldNet::initialise(cfg, FieldKind::velocity, rng);
  // Nonzero biases so their gradients are exercised.
  for (double& w : net.mutable_weights()) w += 0.05 * rng.normal();
  return net;
}

Tensor random_batch(RngStream& rng, std::size_t n, std::size_t d) {
  Tensor x({n, d});
  for (double& v : x.data()) v = rng.normal();
  return x;
}

}  // namespace

TEST_CASE("config validation and parameter count") {
  MlpConfig cfg = small_config();
  CHECK(cfg.parameter_count() ==
        3 * 2 + (8 * 5 + 5) + (5 * 4 + 4) + (4 * 2 + 2));
  cfg.hidden_widths.clear();
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = small_config();
  cfg.dropout_rate = 1.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  CHECK_THROWS_AS(FieldNet(small_config(), FieldKind::score, {1.0, 2.0}), DimensionError);
}

TEST_CASE("fourier features") {
  std::vector<double> f(4);
  fourier_features(0.25, f);
  CHECK(f[0] == doctest::Approx(std::sin(M_PI * 0.25)));
  CHECK(f[1] == doctest::Approx(std::cos(M_PI * 0.25)));
  CHECK(f[2] == doctest::Approx(std::sin(2 * M_PI * 0.25)));
  CHECK(f[3] == doctest::Approx(std::cos(2 * M_PI * 0.25)));
}

TEST_CASE("zero weights give zero output") {
  const FieldNet net = FieldNet::zeros(small_config(), FieldKind::velocity);
  RngStream rng(3, 0);
  const Tensor x = random_batch(rng, 6, 2);
  const Tensor y = net.forward(x, 0.3, ConditionId(1));
  for (double v : y.data()) CHECK(v == 0.0);
}

TEST_CASE("forward is deterministic and rejects unknown conditions") {
  const FieldNet net = random_net(4);
  RngStream rng(5, 0);
  const Tensor x = random_batch(rng, 3, 2);
  RngStream mrng(6, 0);
  const DropoutMask mask = sample_mask(mrng, net.config());
  CHECK(net.forward(x, 0.4, ConditionId(0), &mask) == net.forward(x, 0.4, ConditionId(0), &mask));
  CHECK_THROWS_AS(net.forward(x, 0.4, ConditionId(2)), ConfigError);
  CHECK_THROWS_AS(net.forward(x, 0.4, ConditionId(-7)), ConfigError);
  CHECK_NOTHROW(net.forward(x, 0.4, ConditionId::null()));
  CHECK_THROWS_AS(net.forward(random_batch(rng, 2, 3), 0.4, ConditionId(0)), DimensionError);
  // Single-point input keeps rank 1.
  CHECK(net.forward(Tensor::vector({0.1, 0.2}), 0.5, ConditionId(0)).rank() == 1);
}

TEST_CASE("changing the condition changes the output") {
  const FieldNet net = random_net(7);
  const Tensor x = Tensor::vector({0.3, -0.2});
  CHECK(!(net.forward(x, 0.5, ConditionId(0)) == net.forward(x, 0.5, ConditionId(1))));
}

TEST_CASE("taped forward agrees with the plain forward") {
  const FieldNet net = random_net(8);
  RngStream rng(9, 0);
  const Tensor x = random_batch(rng, 4, 2);
  const std::vector<double> t = {0.1, 0.4, 0.6, 0.95};
  const std::vector<ConditionId> c = {ConditionId(0), ConditionId(1), ConditionId::null(),
                                      ConditionId(0)};
  ad::Tape tape;
  const auto params = net.bind(tape);
  const ad::Var y = net.forward(tape, params, x, t, c);
  const Tensor plain = net.forward(x, t, c);
  for (std::size_t i = 0; i < plain.size(); ++i) {
    CHECK(y.value()[i] == doctest::Approx(plain[i]).epsilon(1e-14));
  }
}

TEST_CASE("weight gradient matches central differences") {
  FieldNet net = random_net(10);
  RngStream rng(11, 0);
  const Tensor x = random_batch(rng, 5, 2);
  const Tensor target = random_batch(rng, 5, 2);
  const std::vector<double> t = {0.05, 0.3, 0.5, 0.7, 0.99};
  const std::vector<ConditionId> c = {ConditionId(0), ConditionId(1), ConditionId::null(),
                                      ConditionId(1), ConditionId(0)};
  // Fixed per-row dropout masks exercise the masked path.
  std::vector<Tensor> masks;
  for (std::size_t w : net.config().hidden_widths) {
    Tensor m({5, w});
    for (double& v : m.data()) v = rng.bernoulli(0.8) ? 1.25 : 0.0;
    masks.push_back(m);
  }
  auto loss = [&](const FieldNet& n) {
    ad::Tape tape;
    const auto p = n.bind(tape);
    const ad::Var y = n.forward(tape, p, x, t, c, masks);
    return ad::mean_squared_error(y, tape.constant(target)).value()[0];
  };
  ad::Tape tape;
  const auto params = net.bind(tape);
  const ad::Var y = net.forward(tape, params, x, t, c, masks);
  tape.backward(ad::mean_squared_error(y, tape.constant(target)));
  const std::vector<double> grad = net.gradient(params);
  REQUIRE(grad.size() == net.weights().size());

  const double h = 1e-5;
  double worst = 0.0;
  for (std::size_t i = 0; i < grad.size(); ++i) {
    FieldNet plus = net, minus = net;
    plus.mutable_weights()[i] += h;
    minus.mutable_weights()[i] -= h;
    const double fd = (loss(plus) - loss(minus)) / (2 * h);
    worst = std::max(worst, std::abs(fd - grad[i]) / std::max(1.0, std::abs(fd)));
  }
  CHECK(worst < 1e-5);
}

TEST_CASE("guided velocity") {
  const FieldNet net = random_net(12);
  const Tensor x = Tensor::matrix({{0.2, 0.1}, {-1.0, 0.5}});
  const Tensor u = net.forward(x, 0.3, ConditionId(1));
  const Tensor w = net.forward(x, 0.3, ConditionId::null());
  CHECK(guided_velocity(net, x, 0.3, ConditionId(1), 1.0) == u);
  const Tensor g2 = guided_velocity(net, x, 0.3, ConditionId(1), 2.0);
  for (std::size_t i = 0; i < g2.size(); ++i) {
    CHECK(g2[i] == doctest::Approx(2 * u[i] - w[i]).epsilon(1e-14));
  }
  CHECK_THROWS_AS(guided_velocity(net, x, 0.3, ConditionId(1), 0.5), ConfigError);
  CHECK_THROWS_AS(guided_velocity(net, x, 0.3, ConditionId::null(), 2.0), ConfigError);
}

TEST_CASE("guided velocity on constant branches") {
  // One hidden unit reading the first embedding coordinate; the null embedding
  // is zero so the null branch outputs the bias alone.
  MlpConfig cfg;
  cfg.input_dim = 1;
  cfg.hidden_widths = {1};
  cfg.time_embed_dim = 2;
  cfg.condition_count = 2;
  cfg.condition_embed_dim = 1;
  cfg.dropout_rate = 0.0;
  FieldNet net = FieldNet::zeros(cfg, FieldKind::velocity);
  auto w = net.mutable_weights();
  // Layout: embedding[2], W1[4x1], b1[1], W2[1x1], b2[1].
  const double silu1 = 1.0 / (1.0 + std::exp(-1.0));
  w[0] = 1.0;  // condition 0
  w[1] = 0.0;  // null
  w[2 + 3] = 1.0;
  w[2 + 4 + 1] = 2.0 / silu1;
  w[2 + 4 + 1 + 1] = 2.0;
  const Tensor x = Tensor::vector({0.7});
  CHECK(net.forward(x, 0.2, ConditionId(0))[0] == doctest::Approx(4.0));
  CHECK(net.forward(x, 0.2, ConditionId::null())[0] == doctest::Approx(2.0));
  CHECK(guided_velocity(net, x, 0.2, ConditionId(0), 1.5)[0] == doctest::Approx(5.0));
}

TEST_CASE("dropout masks") {
  MlpConfig cfg = small_config();
  cfg.dropout_rate = 0.0;
  RngStream rng(13, 0);
  const DropoutMask ones = sample_mask(rng, cfg);
  CHECK(ones == DropoutMask::all_ones(cfg));
  CHECK(ones.keep_scale == 1.0);

  cfg.dropout_rate = 0.5;
  cfg.hidden_widths = {10000};
  RngStream a(14, 0), b(14, 0);
  const DropoutMask ma = sample_mask(a, cfg), mb = sample_mask(b, cfg);
  CHECK(ma == mb);
  CHECK(ma.keep_scale == 2.0);
  CHECK(std::abs(static_cast<double>(ma.kept()) / ma.units() - 0.5) < 0.02);
}

TEST_CASE("inverted dropout averages to the deterministic forward") {
  // With a single hidden layer the output is linear in the mask, so the mask
  // average is unbiased for the deterministic forward.
  MlpConfig cfg = small_config();
  cfg.hidden_widths = {16};
  cfg.dropout_rate = 0.3;
  const FieldNet net = random_net(15, cfg);
  const Tensor x = Tensor::vector({0.4, -0.6});
  const Tensor det = net.forward(x, 0.5, ConditionId(0));
  RngStream rng(16, 0);
  const int n = 1000;
  std::vector<double> s(2, 0.0), s2(2, 0.0);
  for (int k = 0; k < n; ++k) {
    const DropoutMask m = sample_mask(rng, cfg);
    const Tensor y = net.forward(x, 0.5, ConditionId(0), &m);
    for (std::size_t i = 0; i < 2; ++i) {
      s[i] += y[i];
      s2[i] += y[i] * y[i];
    }
  }
  for (std::size_t i = 0; i < 2; ++i) {
    const double mean = s[i] / n, var = (s2[i] - n * mean * mean) / (n - 1);
    CHECK(std::abs(mean - det[i]) < 5.0 * std::sqrt(var / n));
  }
}

TEST_CASE("checkpoint round trip") {
  const auto dir = std::filesystem::temp_directory_path() / "sfm_nets_test";
  std::filesystem::create_directories(dir);
  const std::string path = (dir / "ckpt.bin").string();
  MlpConfig scfg = small_config();
  scfg.hidden_widths = {3};
  FieldPair pair{random_net(17), FieldNet::zeros(scfg, FieldKind::score),
                 InterpolantConfig{0.2, 0.3, 0.1}};
  save_checkpoint(path, pair);
  const FieldPair back = load_checkpoint(path);
  CHECK(back.velocity == pair.velocity);
  CHECK(back.score == pair.score);
  CHECK(back.interpolant.a == 0.2);
  CHECK(back.interpolant.t_min == 0.1);

  std::ofstream(path, std::ios::binary) << "garbage";
  CHECK_THROWS(load_checkpoint(path));
  std::filesystem::remove_all(dir);
}
