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

#include "sfm/train.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

#include "sfm/autodiff.hpp"

namespace sfm {
namespace {

std::vector<Tensor> row_masks(const MlpConfig& cfg, std::size_t n, RngStream& rng) {
  std::vector<Tensor> masks;
  const double keep = 1.0 - cfg.dropout_rate;
  for (std::size_t w : cfg.hidden_widths) {
    Tensor m({n, w});
    for (double& v : m.data()) v = rng.bernoulli(keep) ? 1.0 / keep : 0.0;
    masks.push_back(std::move(m));
  }
  return masks;
}

PairBatch gather(const PairBatch& data, std::span<const std::size_t> idx) {
  const std::size_t d = data.x0.cols();
  PairBatch b{Tensor({idx.size(), d}), Tensor({idx.size(), d}), {}};
  b.conditions.reserve(idx.size());
  for (std::size_t r = 0; r < idx.size(); ++r) {
    std::copy(data.x0.row(idx[r]).begin(), data.x0.row(idx[r]).end(), b.x0.row(r).begin());
    std::copy(data.x1.row(idx[r]).begin(), data.x1.row(idx[r]).end(), b.x1.row(r).begin());
    b.conditions.push_back(data.conditions[idx[r]]);
  }
  return b;
}

void tie_to_null(FieldNet& net) {
  const MlpConfig& c = net.config();
  auto w = net.mutable_weights();
  const std::size_t E = c.condition_embed_dim;
  const std::size_t null_row = net.embedding_row(ConditionId::null());
  for (std::size_t r = 0; r < null_row; ++r) {
    std::copy_n(w.begin() + null_row * E, E, w.begin() + r * E);
  }
}

}  // namespace

void TrainConfig::validate() const {
  if (!(lambda >= 0.0)) throw ConfigError("train.lambda must be >= 0");
  if (!(p_c >= 0.0 && p_c <= 1.0)) throw ConfigError("train.p_c must lie in [0, 1]");
  if (batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
  if (epochs < 1) throw ConfigError("train.epochs must be >= 1");
  if (!(adam.learning_rate > 0.0)) throw ConfigError("train.learning_rate must be > 0");
}

LossNoise draw_loss_noise(const FieldPair& nets, const PairBatch& batch, RngStream& rng,
                          const TrainConfig& cfg) {
  const std::size_t n = batch.size(), d = batch.x0.cols();
  const InterpolantConfig& ic = nets.interpolant;
  LossNoise noise;
  noise.z_velocity = Tensor({n, d});
  noise.z_score = Tensor({n, d});
  for (std::size_t i = 0; i < n; ++i) {
    noise.t_velocity.push_back(rng.uniform());
    for (double& v : noise.z_velocity.row(i)) v = rng.normal();
    noise.t_score.push_back(rng.uniform(ic.t_min, 1.0 - ic.t_min));
    for (double& v : noise.z_score.row(i)) v = rng.normal();
    noise.masked.push_back(rng.bernoulli(cfg.p_c));
  }
  if (cfg.dropout && nets.velocity.config().dropout_rate > 0.0) {
    noise.velocity_masks = row_masks(nets.velocity.config(), n, rng);
  }
  if (cfg.dropout && nets.score.config().dropout_rate > 0.0) {
    noise.score_masks = row_masks(nets.score.config(), n, rng);
  }
  return noise;
}

BatchLoss loss_batch(const FieldPair& nets, const PairBatch& batch, const LossNoise& noise,
                     const TrainConfig& cfg, bool with_gradients) {
  const std::size_t n = batch.size(), d = batch.x0.cols();
  if (n == 0) throw ConfigError("loss_batch: empty batch");
  if (!batch.x1.same_shape(batch.x0) || batch.conditions.size() != n) {
    throw DimensionError("loss_batch: ragged batch");
  }
  const InterpolantConfig& ic = nets.interpolant;
  BatchLoss out;
  out.n = n;

  std::vector<ConditionId> conds = batch.conditions;
  for (std::size_t i = 0; i < n; ++i) {
    if (noise.masked[i]) {
      conds[i] = ConditionId::null();
      ++out.masked;
    }
  }

  Tensor xv({n, d}), uv({n, d}), xs({n, d}), us({n, d});
  for (std::size_t i = 0; i < n; ++i) {
    const double tv = noise.t_velocity[i], ts = noise.t_score[i];
    const double gv = gamma(tv, ic), gs = gamma(ts, ic);
    for (std::size_t j = 0; j < d; ++j) {
      const double a = batch.x0.at(i, j), b = batch.x1.at(i, j);
      xv.at(i, j) = (1.0 - tv) * a + tv * b + gv * noise.z_velocity.at(i, j);
      uv.at(i, j) = b - a;
      xs.at(i, j) = (1.0 - ts) * a + ts * b + gs * noise.z_score.at(i, j);
      us.at(i, j) = -noise.z_score.at(i, j) / gs;
    }
  }

  {
    ad::Tape tape;
    const TapedParams p = nets.velocity.bind(tape);
    const ad::Var pred = nets.velocity.forward(tape, p, xv, noise.t_velocity, conds,
                                               noise.velocity_masks);
    const ad::Var loss = ad::mean_squared_error(pred, tape.constant(uv));
    out.velocity_loss = loss.value()[0];
    if (with_gradients) {
      tape.backward(loss);
      out.velocity_grad = nets.velocity.gradient(p);
    }
  }
  {
    ad::Tape tape;
    const TapedParams p = nets.score.bind(tape);
    const ad::Var pred =
        nets.score.forward(tape, p, xs, noise.t_score, conds, noise.score_masks);
    const ad::Var loss = ad::mean_squared_error(pred, tape.constant(us));
    out.score_loss = loss.value()[0];
    if (with_gradients) {
      if (cfg.lambda > 0.0) {
        tape.backward(ad::scale(loss, cfg.lambda));
        out.score_grad = nets.score.gradient(p);
      } else {
        out.score_grad.assign(nets.score.weights().size(), 0.0);
      }
    }
  }
  return out;
}

BatchLoss loss_batch(const FieldPair& nets, const PairBatch& batch, RngStream& rng,
                     const TrainConfig& cfg, bool with_gradients) {
  if (batch.size() == 0) throw ConfigError("loss_batch: empty batch");
  const LossNoise noise = draw_loss_noise(nets, batch, rng, cfg);
  return loss_batch(nets, batch, noise, cfg, with_gradients);
}

void Adam::step(std::span<double> weights, std::span<const double> grad) {
  if (weights.size() != m_.size() || grad.size() != m_.size()) {
    throw DimensionError("Adam: parameter count mismatch");
  }
  ++t_;
  const double b1 = cfg_.beta1, b2 = cfg_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  for (std::size_t i = 0; i < weights.size(); ++i) {
    m_[i] = b1 * m_[i] + (1.0 - b1) * grad[i];
    v_[i] = b2 * v_[i] + (1.0 - b2) * grad[i] * grad[i];
    const double mh = m_[i] / c1, vh = v_[i] / c2;
    weights[i] -= cfg_.learning_rate * mh / (std::sqrt(vh) + cfg_.eps);
  }
}

FieldPair initial_nets(const MlpConfig& velocity, const MlpConfig& score,
                       const InterpolantConfig& interpolant, std::uint64_t seed) {
  interpolant.validate();
  const RngStream root = RngStream(seed, 0).split("train").split("init");
  RngStream vr = root.split("velocity");
  RngStream sr = root.split("score");
  return FieldPair{FieldNet::initialise(velocity, FieldKind::velocity, vr),
                   FieldNet::initialise(score, FieldKind::score, sr), interpolant};
}

FitResult fit(const PairBatch& dataset, FieldPair nets, const TrainConfig& cfg) {
  cfg.validate();
  const std::size_t n = dataset.size();
  if (n == 0) throw ConfigError("fit: empty dataset");
  const RngStream root = RngStream(cfg.seed, 0).split("train");
  Adam adam_v(nets.velocity.weights().size(), cfg.adam);
  Adam adam_s(nets.score.weights().size(), cfg.adam);
  FitResult result{std::move(nets), {}};
  std::vector<std::size_t> order(n);
  std::size_t global_batch = 0;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    RngStream shuffle = root.split("shuffle").split(epoch);
    for (std::size_t i = n; i > 1; --i) {
      std::swap(order[i - 1], order[shuffle.below(i)]);
    }
    double sum_v = 0.0, sum_s = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < n; start += cfg.batch_size, ++global_batch) {
      const std::size_t len = std::min(cfg.batch_size, n - start);
      const PairBatch batch =
          gather(dataset, std::span<const std::size_t>(order).subspan(start, len));
      RngStream brng = root.split("batch").split(global_batch);
      BatchLoss bl = loss_batch(result.nets, batch, brng, cfg);
      if (!std::isfinite(bl.velocity_loss) || !std::isfinite(bl.score_loss)) {
        std::ostringstream msg;
        msg << "non-finite loss at epoch " << epoch << ", batch " << batches
            << " (learning_rate=" << cfg.adam.learning_rate
            << ", velocity_loss=" << bl.velocity_loss << ", score_loss=" << bl.score_loss
            << ")";
        throw TrainingError(msg.str());
      }
      adam_v.step(result.nets.velocity.mutable_weights(), bl.velocity_grad);
      if (cfg.lambda > 0.0) adam_s.step(result.nets.score.mutable_weights(), bl.score_grad);
      sum_v += bl.velocity_loss;
      sum_s += bl.score_loss;
      ++batches;
    }
    result.history.push_back(LossRecord{epoch, sum_v / static_cast<double>(batches),
                                        sum_s / static_cast<double>(batches)});
  }
  if (cfg.p_c >= 1.0) {
    // Condition rows never saw a gradient; the model is the null-conditioned one.
    tie_to_null(result.nets.velocity);
    tie_to_null(result.nets.score);
  }
  return result;
}

}  // namespace sfm
