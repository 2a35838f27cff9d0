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

#include "sfm/data.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numbers>

#include "sfm/interpolant.hpp"

namespace sfm {
namespace {

void rotate_plane(std::span<double> row, double angle) {
  if (row.size() < 2) return;
  const double c = std::cos(angle), s = std::sin(angle);
  const double x = row[0], y = row[1];
  row[0] = c * x - s * y;
  row[1] = s * x + c * y;
}

RngStream data_root(const DatasetSpec& spec) { return RngStream(spec.seed, 0).split("data"); }

std::uint64_t severity_key(double severity) { return std::bit_cast<std::uint64_t>(severity); }

}  // namespace

std::string to_string(TargetFamily family) {
  switch (family) {
    case TargetFamily::gaussian_mixture: return "gaussian_mixture";
    case TargetFamily::ring: return "ring";
    case TargetFamily::moons: return "moons";
  }
  return "gaussian_mixture";
}

TargetFamily parse_target_family(std::string_view tag) {
  if (tag == "gaussian_mixture") return TargetFamily::gaussian_mixture;
  if (tag == "ring") return TargetFamily::ring;
  if (tag == "moons") return TargetFamily::moons;
  throw ConfigError("unknown target family '" + std::string(tag) + "'");
}

std::string to_string(ShiftKind kind) {
  switch (kind) {
    case ShiftKind::none: return "none";
    case ShiftKind::intensity: return "intensity";
    case ShiftKind::unseen_condition: return "unseen_condition";
    case ShiftKind::rotated_source: return "rotated_source";
  }
  return "none";
}

ShiftKind parse_shift_kind(std::string_view tag) {
  if (tag == "none") return ShiftKind::none;
  if (tag == "intensity") return ShiftKind::intensity;
  if (tag == "unseen_condition") return ShiftKind::unseen_condition;
  if (tag == "rotated_source") return ShiftKind::rotated_source;
  throw ConfigError("unknown scenario '" + std::string(tag) + "'");
}

void DatasetSpec::validate() const {
  if (d < 1) throw ConfigError("dataset.d must be >= 1");
  if (condition_count < 1) throw ConfigError("dataset.condition_count must be >= 1");
  if (n_train == 0) throw ConfigError("dataset.n_train must be >= 1");
  for (std::int32_t w : withheld) {
    if (w < 0 || static_cast<std::size_t>(w) >= condition_count) {
      throw ConfigError("dataset.withheld contains unknown condition " + std::to_string(w));
    }
  }
  if (training_conditions().empty()) {
    throw ConfigError("dataset: every condition is withheld");
  }
  if (!(std::abs(source_correlation) < 1.0)) {
    throw ConfigError("dataset.source_correlation must lie in (-1, 1)");
  }
  if (mixture_components < 1 || !(mixture_std > 0.0)) {
    throw ConfigError("dataset: invalid mixture parameters");
  }
}

bool DatasetSpec::is_withheld(std::int32_t c) const {
  return std::find(withheld.begin(), withheld.end(), c) != withheld.end();
}

std::vector<std::int32_t> DatasetSpec::training_conditions() const {
  std::vector<std::int32_t> out;
  for (std::size_t c = 0; c < condition_count; ++c) {
    if (!is_withheld(static_cast<std::int32_t>(c))) out.push_back(static_cast<std::int32_t>(c));
  }
  return out;
}

PointSampler source_sampler(const DatasetSpec& spec) {
  const std::size_t d = spec.d;
  const double rho = d >= 2 ? spec.source_correlation : 0.0;
  const double rho_c = std::sqrt(1.0 - rho * rho);
  return [d, rho, rho_c](RngStream& rng, std::size_t n) {
    Tensor x({n, d});
    for (double& v : x.data()) v = rng.normal();
    if (d >= 2) {
      for (std::size_t r = 0; r < n; ++r) {
        auto row = x.row(r);
        row[1] = rho * row[0] + rho_c * row[1];
      }
    }
    return x;
  };
}

PointSampler target_sampler(const DatasetSpec& spec, std::int32_t condition) {
  if (condition < 0 || static_cast<std::size_t>(condition) >= spec.condition_count) {
    throw ConfigError("target_sampler: unknown condition " + std::to_string(condition));
  }
  const double angle = 2.0 * std::numbers::pi * condition /
                       static_cast<double>(spec.condition_count);
  const DatasetSpec s = spec;
  return [s, angle, condition](RngStream& rng, std::size_t n) {
    Tensor x({n, s.d});
    for (std::size_t r = 0; r < n; ++r) {
      auto row = x.row(r);
      double px = 0.0, py = 0.0;
      switch (s.family) {
        case TargetFamily::gaussian_mixture: {
          const auto k = rng.below(s.mixture_components);
          const double phi = 2.0 * std::numbers::pi * static_cast<double>(k) /
                             static_cast<double>(s.mixture_components);
          px = s.mixture_radius * std::cos(phi) + s.mixture_std * rng.normal();
          py = s.mixture_radius * std::sin(phi) + s.mixture_std * rng.normal();
          break;
        }
        case TargetFamily::ring: {
          // Radius grows with the condition so rotation is not a symmetry.
          const double radius = 1.0 + 0.3 * condition;
          const double phi = rng.uniform(0.0, 2.0 * std::numbers::pi);
          const double r0 = radius + 0.1 * rng.normal();
          px = r0 * std::cos(phi);
          py = r0 * std::sin(phi);
          break;
        }
        case TargetFamily::moons: {
          const bool upper = rng.bernoulli(0.5);
          const double phi = rng.uniform(0.0, std::numbers::pi);
          px = upper ? std::cos(phi) : 1.0 - std::cos(phi);
          py = upper ? std::sin(phi) : 0.5 - std::sin(phi);
          px = 1.5 * (px - 0.5) + 0.1 * rng.normal();
          py = 1.5 * (py - 0.25) + 0.1 * rng.normal();
          break;
        }
      }
      if (s.d == 1) {
        row[0] = px;
        continue;
      }
      row[0] = px;
      row[1] = py;
      rotate_plane(row, angle);
      for (std::size_t j = 2; j < s.d; ++j) row[j] = 0.5 * rng.normal();
    }
    return x;
  };
}

Tensor shift_points(const Tensor& x, const ShiftSpec& shift) {
  if (shift.severity < 0.0) throw ConfigError("shift severity must be >= 0");
  Tensor out = x;
  if (shift.severity == 0.0) return out;
  switch (shift.kind) {
    case ShiftKind::intensity:
      for (double& v : out.data()) v = (1.0 + shift.severity) * v + shift.severity;
      break;
    case ShiftKind::rotated_source:
      if (out.rank() == 1) {
        rotate_plane(out.data(), 0.5 * std::numbers::pi * shift.severity);
      } else {
        for (std::size_t r = 0; r < out.rows(); ++r) {
          rotate_plane(out.row(r), 0.5 * std::numbers::pi * shift.severity);
        }
      }
      break;
    case ShiftKind::none:
    case ShiftKind::unseen_condition:
      break;
  }
  return out;
}

PointSampler apply_shift(PointSampler source, const ShiftSpec& shift) {
  if (shift.severity < 0.0) throw ConfigError("shift severity must be >= 0");
  return [source = std::move(source), shift](RngStream& rng, std::size_t n) {
    return shift_points(source(rng, n), shift);
  };
}

Dataset make_dataset(const DatasetSpec& spec) {
  spec.validate();
  const RngStream root = data_root(spec);
  const auto conds = spec.training_conditions();
  Dataset ds;
  {
    RngStream rng = root.split("train");
    RngStream crng = rng.split("conditions");
    RngStream srng = rng.split("source");
    ds.train.x0 = source_sampler(spec)(srng, spec.n_train);
    ds.train.x1 = Tensor({spec.n_train, spec.d});
    std::vector<std::size_t> per_condition(spec.condition_count, 0);
    for (std::size_t i = 0; i < spec.n_train; ++i) {
      ds.train.conditions.emplace_back(conds[crng.below(conds.size())]);
    }
    // Targets are drawn per condition from a dedicated stream so they do not
    // depend on the order of the other draws.
    for (std::int32_t c : conds) {
      std::vector<std::size_t> rows;
      for (std::size_t i = 0; i < spec.n_train; ++i) {
        if (ds.train.conditions[i].value() == c) rows.push_back(i);
      }
      RngStream trng = rng.split("target").split(static_cast<std::uint64_t>(c));
      const Tensor t = target_sampler(spec, c)(trng, rows.size());
      for (std::size_t k = 0; k < rows.size(); ++k) {
        std::copy(t.row(k).begin(), t.row(k).end(), ds.train.x1.row(rows[k]).begin());
      }
    }
  }
  ds.eval = make_scenario_pool(spec, ShiftSpec{}, spec.n_eval, 0);
  return ds;
}

EvalPool make_scenario_pool(const DatasetSpec& spec, const ShiftSpec& shift, std::size_t n_id,
                            std::size_t n_ood, std::uint64_t stream) {
  spec.validate();
  const RngStream root = data_root(spec).split("eval").split(stream);
  const auto train_conds = spec.training_conditions();
  EvalPool pool;
  pool.x0 = Tensor({n_id + n_ood, spec.d});
  {
    RngStream rng = root.split("id");
    RngStream crng = rng.split("conditions");
    const Tensor x = source_sampler(spec)(rng, n_id);
    for (std::size_t i = 0; i < n_id; ++i) {
      std::copy(x.row(i).begin(), x.row(i).end(), pool.x0.row(i).begin());
      pool.conditions.emplace_back(train_conds[crng.below(train_conds.size())]);
      pool.provenance.push_back(Label::id);
      pool.ids.push_back("id-" + std::to_string(i));
    }
  }
  if (n_ood > 0) {
    RngStream rng = root.split(to_string(shift.kind)).split(severity_key(shift.severity));
    RngStream crng = rng.split("conditions");
    const Tensor x = apply_shift(source_sampler(spec), shift)(rng, n_ood);
    std::vector<std::int32_t> conds = train_conds;
    if (shift.kind == ShiftKind::unseen_condition) {
      if (spec.withheld.empty()) {
        throw ConfigError("unseen_condition scenario needs withheld conditions");
      }
      conds = spec.withheld;
    }
    for (std::size_t i = 0; i < n_ood; ++i) {
      std::copy(x.row(i).begin(), x.row(i).end(), pool.x0.row(n_id + i).begin());
      pool.conditions.emplace_back(conds[crng.below(conds.size())]);
      pool.provenance.push_back(Label::ood);
      pool.ids.push_back("ood-" + std::to_string(i));
    }
  }
  return pool;
}

Tensor reference_targets(const DatasetSpec& spec, std::int32_t condition, std::size_t n) {
  RngStream rng = data_root(spec).split("reference").split(static_cast<std::uint64_t>(condition));
  return target_sampler(spec, condition)(rng, n);
}

}  // namespace sfm
