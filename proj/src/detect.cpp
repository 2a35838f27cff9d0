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

#include "sfm/detect.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "sfm/interpolant.hpp"

namespace sfm {
namespace {

struct Counts {
  std::size_t pos = 0, neg = 0;
};

Counts count_labels(std::span<const LabeledScore> scores) {
  Counts c;
  for (const auto& s : scores) (s.label == Label::ood ? c.pos : c.neg)++;
  return c;
}

// Indices sorted by descending score.
std::vector<std::size_t> descending(std::span<const LabeledScore> scores) {
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    return scores[a].anomaly_score > scores[b].anomaly_score;
  });
  return idx;
}

}  // namespace

std::string to_string(Label label) { return label == Label::id ? "ID" : "OOD"; }

Label parse_label(std::string_view text) {
  if (text == "ID" || text == "id") return Label::id;
  if (text == "OOD" || text == "ood") return Label::ood;
  throw ConfigError("unknown label '" + std::string(text) + "'");
}

std::string to_string(FilterMode mode) {
  switch (mode) {
    case FilterMode::none: return "none";
    case FilterMode::mean: return "mean";
    case FilterMode::half_sigma: return "half_sigma";
  }
  return "none";
}

FilterMode parse_filter_mode(std::string_view text) {
  if (text == "none") return FilterMode::none;
  if (text == "mean") return FilterMode::mean;
  if (text == "half_sigma") return FilterMode::half_sigma;
  throw ConfigError("unknown filter mode '" + std::string(text) + "'");
}

FilterResult filter(std::span<const PoolEntry> pool, FilterMode mode) {
  if (pool.empty()) throw ConfigError("filter: empty pool");
  FilterResult r;
  double sum = 0.0;
  for (const auto& e : pool) sum += e.error_metric;
  r.mu = sum / static_cast<double>(pool.size());
  double ss = 0.0;
  for (const auto& e : pool) ss += (e.error_metric - r.mu) * (e.error_metric - r.mu);
  r.sigma = std::sqrt(ss / static_cast<double>(pool.size()));
  const double k = mode == FilterMode::half_sigma ? 0.5 : 0.0;
  r.id_cut = r.mu - k * r.sigma;
  r.ood_cut = r.mu + k * r.sigma;
  bool has_id = false, has_ood = false;
  for (const auto& e : pool) {
    if (mode != FilterMode::none) {
      if (e.provenance == Label::id && e.error_metric > r.id_cut) continue;
      if (e.provenance == Label::ood && e.error_metric < r.ood_cut) continue;
    }
    (e.provenance == Label::id ? has_id : has_ood) = true;
    r.kept.push_back(e);
  }
  r.degenerate = !has_id || !has_ood;
  return r;
}

Label decide(double score, double tau) { return score > tau ? Label::ood : Label::id; }

double auroc(std::span<const LabeledScore> scores) {
  const Counts c = count_labels(scores);
  if (c.pos == 0 || c.neg == 0) {
    throw ConfigError("auroc: both ID and OOD entries are required");
  }
  // Mann-Whitney U from midranks of ascending scores.
  std::vector<std::size_t> idx = descending(scores);
  std::reverse(idx.begin(), idx.end());
  double rank_sum = 0.0;
  std::size_t i = 0;
  while (i < idx.size()) {
    std::size_t j = i;
    while (j + 1 < idx.size() &&
           scores[idx[j + 1]].anomaly_score == scores[idx[i]].anomaly_score) {
      ++j;
    }
    const double midrank = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) {
      if (scores[idx[k]].label == Label::ood) rank_sum += midrank;
    }
    i = j + 1;
  }
  const double p = static_cast<double>(c.pos), n = static_cast<double>(c.neg);
  const double u = rank_sum - p * (p + 1.0) / 2.0;
  return u / (p * n);
}

double aupr(std::span<const LabeledScore> scores) {
  const Counts c = count_labels(scores);
  if (c.pos == 0) throw ConfigError("aupr: no OOD entries");
  const std::vector<std::size_t> idx = descending(scores);
  double area = 0.0, prev_recall = 0.0;
  std::size_t tp = 0, seen = 0, i = 0;
  while (i < idx.size()) {
    std::size_t j = i;
    while (j < idx.size() && scores[idx[j]].anomaly_score == scores[idx[i]].anomaly_score) {
      if (scores[idx[j]].label == Label::ood) ++tp;
      ++seen;
      ++j;
    }
    const double recall = static_cast<double>(tp) / static_cast<double>(c.pos);
    const double precision = static_cast<double>(tp) / static_cast<double>(seen);
    area += (recall - prev_recall) * precision;
    prev_recall = recall;
    i = j;
  }
  return area;
}

SeedSummary summarize_seeds(std::span<const double> values) {
  SeedSummary s;
  s.n = values.size();
  if (values.empty()) return s;
  s.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(s.n);
  if (s.n >= 2) {
    double ss = 0.0;
    for (double v : values) ss += (v - s.mean) * (v - s.mean);
    const double sd = std::sqrt(ss / static_cast<double>(s.n - 1));
    s.standard_error = sd / std::sqrt(static_cast<double>(s.n));
  }
  return s;
}

double kendall_tau(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.size() < 2) {
    throw ConfigError("kendall_tau: need two equally long vectors of length >= 2");
  }
  double concordant = 0.0;
  const std::size_t n = a.size();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const double s = (a[i] - a[j]) * (b[i] - b[j]);
      concordant += s > 0 ? 1.0 : (s < 0 ? -1.0 : 0.0);
    }
  }
  return concordant / (0.5 * static_cast<double>(n) * static_cast<double>(n - 1));
}

}  // namespace sfm
