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

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace sfm {

enum class Label { id, ood };

std::string to_string(Label label);
Label parse_label(std::string_view text);

/// One scored evaluation input.
struct LabeledScore {
  std::string input_id;
  double anomaly_score = 0.0;
  Label label = Label::id;
  double error_metric = 0.0;
};

enum class FilterMode { none, mean, half_sigma };

std::string to_string(FilterMode mode);
FilterMode parse_filter_mode(std::string_view text);

/// Pool entry before labelling: generation error and where the input came from.
struct PoolEntry {
  std::string input_id;
  double error_metric = 0.0;
  Label provenance = Label::id;
};

struct FilterResult {
  std::vector<PoolEntry> kept;  // label = provenance of the survivors
  double mu = 0.0;
  double sigma = 0.0;  // population standard deviation over the full pool
  double id_cut = 0.0;   // ID removed when error > id_cut
  double ood_cut = 0.0;  // OOD removed when error < ood_cut
  /// Set when the survivors are empty or lack one of the two classes.
  bool degenerate = false;
};

/// Removes ambiguous entries. `none` keeps everything; `mean` cuts at mu;
/// `half_sigma` cuts ID above mu - sigma/2 and OOD below mu + sigma/2.
FilterResult filter(std::span<const PoolEntry> pool, FilterMode mode);

/// OOD iff score > tau.
Label decide(double score, double tau);

/// P(score_ood > score_id) + 1/2 P(tie), OOD as the positive class.
double auroc(std::span<const LabeledScore> scores);
/// Area under precision-recall (OOD positive), step interpolation over
/// distinct score thresholds.
double aupr(std::span<const LabeledScore> scores);

/// Sample mean and sample-std / sqrt(n); the error is absent for one value.
struct SeedSummary {
  double mean = 0.0;
  std::optional<double> standard_error;
  std::size_t n = 0;
};
SeedSummary summarize_seeds(std::span<const double> values);

/// Kendall rank correlation (tau-a) between two equally long score vectors.
double kendall_tau(std::span<const double> a, std::span<const double> b);

}  // namespace sfm
