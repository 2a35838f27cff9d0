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

#include "sfm/nets.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <stdexcept>

#include "json.hpp"

namespace sfm {
namespace {

inline double silu(double v) { return v / (1.0 + std::exp(-v)); }

constexpr char kMagic[8] = {'S', 'F', 'M', 'C', 'K', 'P', 'T', '\0'};

void put_u32(std::ostream& os, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) os.put(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_u64(std::ostream& os, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) os.put(static_cast<char>((v >> (8 * i)) & 0xFF));
}

std::uint64_t get_bytes(std::istream& is, int n) {
  std::uint64_t v = 0;
  for (int i = 0; i < n; ++i) {
    const int ch = is.get();
    if (ch == EOF) throw std::runtime_error("checkpoint: truncated file");
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(ch)) << (8 * i);
  }
  return v;
}

void put_f64_vector(std::ostream& os, std::span<const double> w) {
  put_u64(os, w.size());
  for (double v : w) put_u64(os, std::bit_cast<std::uint64_t>(v));
}

std::vector<double> get_f64_vector(std::istream& is) {
  const std::uint64_t n = get_bytes(is, 8);
  std::vector<double> w(n);
  for (auto& v : w) v = std::bit_cast<double>(get_bytes(is, 8));
  return w;
}

nlohmann::json mlp_to_json(const MlpConfig& c) {
  return {{"input_dim", c.input_dim},
          {"hidden_widths", c.hidden_widths},
          {"time_embed_dim", c.time_embed_dim},
          {"condition_count", c.condition_count},
          {"condition_embed_dim", c.condition_embed_dim},
          {"dropout_rate", c.dropout_rate}};
}

MlpConfig mlp_from_json(const nlohmann::json& j) {
  MlpConfig c;
  c.input_dim = j.at("input_dim");
  c.hidden_widths = j.at("hidden_widths").get<std::vector<std::size_t>>();
  c.time_embed_dim = j.at("time_embed_dim");
  c.condition_count = j.at("condition_count");
  c.condition_embed_dim = j.at("condition_embed_dim");
  c.dropout_rate = j.at("dropout_rate");
  return c;
}

}  // namespace

std::string to_string(FieldKind kind) {
  return kind == FieldKind::velocity ? "velocity" : "score";
}

void MlpConfig::validate() const {
  if (input_dim == 0) throw ConfigError("mlp.input_dim must be >= 1");
  if (hidden_widths.empty()) throw ConfigError("mlp.hidden_widths must be nonempty");
  for (std::size_t w : hidden_widths) {
    if (w == 0) throw ConfigError("mlp.hidden_widths entries must be >= 1");
  }
  if (time_embed_dim % 2 != 0) throw ConfigError("mlp.time_embed_dim must be even");
  if (condition_count < 1) {
    throw ConfigError("mlp.condition_count must include the null condition");
  }
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) {
    throw ConfigError("mlp.dropout_rate must lie in [0, 1)");
  }
}

std::size_t MlpConfig::parameter_count() const {
  std::size_t n = condition_count * condition_embed_dim;
  std::size_t in = feature_dim();
  for (std::size_t w : hidden_widths) {
    n += in * w + w;
    in = w;
  }
  return n + in * input_dim + input_dim;
}

DropoutMask DropoutMask::all_ones(const MlpConfig& cfg) {
  DropoutMask m;
  for (std::size_t w : cfg.hidden_widths) m.layers.emplace_back(w, 1);
  return m;
}

std::size_t DropoutMask::kept() const {
  std::size_t k = 0;
  for (const auto& l : layers)
    for (auto v : l) k += v;
  return k;
}

std::size_t DropoutMask::units() const {
  std::size_t k = 0;
  for (const auto& l : layers) k += l.size();
  return k;
}

DropoutMask sample_mask(RngStream& rng, const MlpConfig& cfg) {
  if (cfg.dropout_rate <= 0.0) return DropoutMask::all_ones(cfg);
  DropoutMask m;
  m.keep_scale = 1.0 / (1.0 - cfg.dropout_rate);
  for (std::size_t w : cfg.hidden_widths) {
    std::vector<std::uint8_t> layer(w);
    for (auto& v : layer) v = rng.bernoulli(1.0 - cfg.dropout_rate) ? 1 : 0;
    m.layers.push_back(std::move(layer));
  }
  return m;
}

void fourier_features(double t, std::span<double> out) {
  const std::size_t half = out.size() / 2;
  for (std::size_t k = 0; k < half; ++k) {
    const double w = std::numbers::pi * static_cast<double>(k + 1) * t;
    out[2 * k] = std::sin(w);
    out[2 * k + 1] = std::cos(w);
  }
}

FieldNet::Layout FieldNet::layout_of(const MlpConfig& cfg) {
  Layout l;
  std::size_t offset = cfg.condition_count * cfg.condition_embed_dim;
  std::size_t in = cfg.feature_dim();
  auto add_layer = [&](std::size_t out) {
    l.weight.push_back(offset);
    offset += in * out;
    l.bias.push_back(offset);
    offset += out;
    l.fan_in.push_back(in);
    l.fan_out.push_back(out);
    in = out;
  };
  for (std::size_t w : cfg.hidden_widths) add_layer(w);
  add_layer(cfg.input_dim);
  return l;
}

FieldNet::FieldNet(MlpConfig cfg, FieldKind kind, std::vector<double> weights)
    : cfg_(std::move(cfg)), kind_(kind), weights_(std::move(weights)) {
  cfg_.validate();
  if (weights_.size() != cfg_.parameter_count()) {
    throw DimensionError("FieldNet: " + std::to_string(weights_.size()) +
                         " weights for a config needing " +
                         std::to_string(cfg_.parameter_count()));
  }
  layout_ = layout_of(cfg_);
}

FieldNet FieldNet::zeros(const MlpConfig& cfg, FieldKind kind) {
  return FieldNet(cfg, kind, std::vector<double>(cfg.parameter_count(), 0.0));
}

FieldNet FieldNet::initialise(const MlpConfig& cfg, FieldKind kind, RngStream& rng) {
  FieldNet net = zeros(cfg, kind);
  auto w = net.mutable_weights();
  const std::size_t emb = cfg.condition_count * cfg.condition_embed_dim;
  for (std::size_t i = 0; i < emb; ++i) w[i] = rng.normal();
  const Layout& l = net.layout_;
  for (std::size_t k = 0; k < l.weight.size(); ++k) {
    const double sd = 1.0 / std::sqrt(static_cast<double>(l.fan_in[k]));
    for (std::size_t i = 0; i < l.fan_in[k] * l.fan_out[k]; ++i) {
      w[l.weight[k] + i] = sd * rng.normal();
    }
  }
  return net;
}

std::size_t FieldNet::embedding_row(ConditionId c) const {
  if (c.is_null()) return cfg_.condition_count - 1;
  if (c.value() < 0 || static_cast<std::size_t>(c.value()) + 1 >= cfg_.condition_count) {
    throw ConfigError("unknown condition id " + std::to_string(c.value()) +
                      " (net knows " + std::to_string(cfg_.condition_count - 1) +
                      " conditions plus null)");
  }
  return static_cast<std::size_t>(c.value());
}

Tensor FieldNet::features(const Tensor& x, std::span<const double> t,
                          std::span<const ConditionId> c) const {
  const std::size_t n = x.rows();
  const std::size_t d = cfg_.input_dim;
  if (x.cols() != d) {
    throw DimensionError("FieldNet: input dimension " + std::to_string(x.cols()) +
                         ", expected " + std::to_string(d));
  }
  if (t.size() != n || c.size() != n) {
    throw DimensionError("FieldNet: per-row time/condition count mismatch");
  }
  const std::size_t F = cfg_.time_embed_dim, E = cfg_.condition_embed_dim;
  Tensor h({n, cfg_.feature_dim()});
  for (std::size_t r = 0; r < n; ++r) {
    auto row = h.row(r);
    auto xr = x.row(r);
    std::copy(xr.begin(), xr.end(), row.begin());
    fourier_features(t[r], row.subspan(d, F));
    const std::size_t e = embedding_row(c[r]);
    std::copy_n(weights_.begin() + e * E, E, row.begin() + d + F);
  }
  return h;
}

Tensor FieldNet::forward(const Tensor& x, std::span<const double> t,
                         std::span<const ConditionId> c, const DropoutMask* mask) const {
  if (mask && mask->layers.size() != cfg_.hidden_widths.size()) {
    throw DimensionError("FieldNet: dropout mask has wrong layer count");
  }
  Tensor h = features(x, t, c);
  const std::size_t n = h.rows();
  const std::size_t layers = layout_.weight.size();
  for (std::size_t k = 0; k < layers; ++k) {
    const std::size_t in = layout_.fan_in[k], out = layout_.fan_out[k];
    Tensor w({in, out}, std::vector<double>(weights_.begin() + layout_.weight[k],
                                            weights_.begin() + layout_.weight[k] + in * out));
    Tensor z = matmul(h, w);
    const double* b = weights_.data() + layout_.bias[k];
    const bool hidden = k + 1 < layers;
    for (std::size_t r = 0; r < n; ++r) {
      auto row = z.row(r);
      for (std::size_t j = 0; j < out; ++j) {
        double v = row[j] + b[j];
        if (hidden) {
          v = silu(v);
          if (mask) v *= mask->layers[k][j] ? mask->keep_scale : 0.0;
        }
        row[j] = v;
      }
    }
    h = std::move(z);
  }
  return h;
}

Tensor FieldNet::forward(const Tensor& x, double t, ConditionId c,
                         const DropoutMask* mask) const {
  const bool single = x.rank() == 1;
  const Tensor batch = single ? x.reshaped({1, x.size()}) : x;
  const std::vector<double> ts(batch.rows(), t);
  const std::vector<ConditionId> cs(batch.rows(), c);
  Tensor out = forward(batch, ts, cs, mask);
  return single ? out.reshaped({out.size()}) : out;
}

TapedParams FieldNet::bind(ad::Tape& tape) const {
  TapedParams p;
  const std::size_t E = cfg_.condition_embed_dim;
  p.embedding = tape.leaf(Tensor(
      {cfg_.condition_count, E},
      std::vector<double>(weights_.begin(), weights_.begin() + cfg_.condition_count * E)));
  for (std::size_t k = 0; k < layout_.weight.size(); ++k) {
    const std::size_t in = layout_.fan_in[k], out = layout_.fan_out[k];
    auto w0 = weights_.begin() + layout_.weight[k];
    auto b0 = weights_.begin() + layout_.bias[k];
    p.weights.push_back(tape.leaf(Tensor({in, out}, std::vector<double>(w0, w0 + in * out))));
    p.biases.push_back(tape.leaf(Tensor({out}, std::vector<double>(b0, b0 + out))));
  }
  return p;
}

ad::Var FieldNet::forward(ad::Tape& tape, const TapedParams& params, const Tensor& x,
                          std::span<const double> t, std::span<const ConditionId> c,
                          std::span<const Tensor> row_masks) const {
  const std::size_t n = x.rows();
  if (!row_masks.empty() && row_masks.size() != cfg_.hidden_widths.size()) {
    throw DimensionError("FieldNet: row mask count mismatch");
  }
  if (t.size() != n || c.size() != n || x.cols() != cfg_.input_dim) {
    throw DimensionError("FieldNet: batch shape mismatch");
  }
  Tensor tf({n, cfg_.time_embed_dim});
  std::vector<std::size_t> rows(n);
  for (std::size_t r = 0; r < n; ++r) {
    fourier_features(t[r], tf.row(r));
    rows[r] = embedding_row(c[r]);
  }
  const ad::Var parts[] = {tape.constant(x), tape.constant(std::move(tf)),
                           ad::gather_rows(params.embedding, rows)};
  ad::Var h = ad::concat_cols(parts);
  const std::size_t layers = params.weights.size();
  for (std::size_t k = 0; k < layers; ++k) {
    h = ad::add_bias(ad::matmul(h, params.weights[k]), params.biases[k]);
    if (k + 1 < layers) {
      h = ad::silu(h);
      if (!row_masks.empty()) h = ad::mul_const(h, row_masks[k]);
    }
  }
  return h;
}

std::vector<double> FieldNet::gradient(const TapedParams& params) const {
  std::vector<double> g(weights_.size(), 0.0);
  auto put = [&](const ad::Var& v, std::size_t offset) {
    const Tensor& gr = v.grad();
    std::copy(gr.data().begin(), gr.data().end(), g.begin() + offset);
  };
  put(params.embedding, 0);
  for (std::size_t k = 0; k < params.weights.size(); ++k) {
    put(params.weights[k], layout_.weight[k]);
    put(params.biases[k], layout_.bias[k]);
  }
  return g;
}

Tensor guided_velocity(const FieldNet& net, const Tensor& x, double t,
                       std::span<const ConditionId> c, double alpha,
                       const DropoutMask* mask) {
  if (!(alpha >= 1.0)) {
    throw ConfigError("guidance alpha must be >= 1, got " + std::to_string(alpha));
  }
  const std::vector<double> ts(x.rows(), t);
  Tensor cond = net.forward(x, ts, c, mask);
  if (alpha == 1.0) return cond;
  const std::vector<ConditionId> nulls(x.rows(), ConditionId::null());
  const Tensor uncond = net.forward(x, ts, nulls, mask);
  for (std::size_t i = 0; i < cond.size(); ++i) {
    cond[i] = alpha * cond[i] + (1.0 - alpha) * uncond[i];
  }
  return cond;
}

Tensor guided_velocity(const FieldNet& net, const Tensor& x, double t, ConditionId c,
                       double alpha, const DropoutMask* mask) {
  if (c.is_null()) throw ConfigError("guided_velocity: condition must not be null");
  const bool single = x.rank() == 1;
  const Tensor batch = single ? x.reshaped({1, x.size()}) : x;
  const std::vector<ConditionId> cs(batch.rows(), c);
  Tensor out = guided_velocity(net, batch, t, cs, alpha, mask);
  return single ? out.reshaped({out.size()}) : out;
}

void save_checkpoint(const std::string& path, const FieldPair& nets) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write checkpoint " + path);
  const nlohmann::json cfg = {
      {"velocity", mlp_to_json(nets.velocity.config())},
      {"score", mlp_to_json(nets.score.config())},
      {"interpolant",
       {{"a", nets.interpolant.a},
        {"sigma_max", nets.interpolant.sigma_max},
        {"t_min", nets.interpolant.t_min}}}};
  const std::string text = cfg.dump();
  os.write(kMagic, sizeof kMagic);
  put_u32(os, kCheckpointVersion);
  put_u32(os, static_cast<std::uint32_t>(text.size()));
  os.write(text.data(), static_cast<std::streamsize>(text.size()));
  put_f64_vector(os, nets.velocity.weights());
  put_f64_vector(os, nets.score.weights());
  if (!os) throw std::runtime_error("failed writing checkpoint " + path);
}

FieldPair load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open checkpoint " + path);
  char magic[8];
  is.read(magic, sizeof magic);
  if (!is || std::memcmp(magic, kMagic, sizeof magic) != 0) {
    throw std::runtime_error("checkpoint: bad magic in " + path);
  }
  const auto version = static_cast<std::uint32_t>(get_bytes(is, 4));
  if (version != kCheckpointVersion) {
    throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version));
  }
  const auto len = static_cast<std::size_t>(get_bytes(is, 4));
  std::string text(len, '\0');
  is.read(text.data(), static_cast<std::streamsize>(len));
  if (!is) throw std::runtime_error("checkpoint: truncated config block");
  const auto cfg = nlohmann::json::parse(text);
  InterpolantConfig ic;
  ic.a = cfg.at("interpolant").at("a");
  ic.sigma_max = cfg.at("interpolant").at("sigma_max");
  ic.t_min = cfg.at("interpolant").at("t_min");
  auto theta = get_f64_vector(is);
  auto phi = get_f64_vector(is);
  return FieldPair{FieldNet(mlp_from_json(cfg.at("velocity")), FieldKind::velocity,
                            std::move(theta)),
                   FieldNet(mlp_from_json(cfg.at("score")), FieldKind::score, std::move(phi)),
                   ic};
}

}  // namespace sfm
