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

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "sfm/data.hpp"
#include "sfm/interpolant.hpp"
#include "sfm/nets.hpp"
#include "sfm/sample.hpp"
#include "sfm/train.hpp"
#include "sfm/uq.hpp"

namespace sfm {

/// Width/embedding/dropout settings of one field network; input_dim and
/// condition_count come from the dataset.
struct NetSettings {
  std::vector<std::size_t> hidden_widths = {64, 64, 64};
  std::size_t time_embed_dim = 16;
  std::size_t condition_embed_dim = 8;
  double dropout_rate = 0.1;

  MlpConfig mlp(const DatasetSpec& data) const;
};

enum class GenerateMode { ode, sde };

struct GenerateSettings {
  std::string checkpoint;
  std::vector<ShiftKind> scenarios = {ShiftKind::unseen_condition};
  std::vector<double> severities = {1.0};
  std::size_t n = 200;  // terminals per condition
  GenerateMode mode = GenerateMode::sde;
  std::size_t reference_n = 500;
  bool dump_trajectories = false;
};

enum class UqMethod { avuq, mcd_iid, map, mcd_dfm };
std::string to_string(UqMethod m);

enum class ErrorMetric { energy, nearest_squared };
std::string to_string(ErrorMetric m);

struct UqSettings {
  std::string checkpoint;
  ShiftKind scenario = ShiftKind::intensity;
  double severity = 1.0;
  UqMethod method = UqMethod::avuq;
  std::optional<std::size_t> M;  // absent means the method default (4)
  std::size_t K = 4;
  std::size_t n_id = 100;
  std::size_t n_ood = 100;
  ScoreSign score_sign = ScoreSign::negated;
  ErrorMetric error_metric = ErrorMetric::energy;
  std::size_t reference_n = 200;
};

struct DetectSettings {
  std::vector<std::string> runs;
  FilterMode filter = FilterMode::half_sigma;
  bool histograms = true;
};

struct ReportSettings {
  std::vector<std::string> inputs;
};

/// Everything a subcommand needs, parsed strictly from JSON. Paths are
/// absolute after resolution so a snapshot reruns from any directory.
struct RunConfig {
  std::uint64_t seed = 0;
  std::string output_dir = "sfmlab-out";
  std::optional<std::string> dataset_path;  // training pairs CSV, replaces synthesis
  DatasetSpec dataset;
  InterpolantConfig interpolant;
  NetSettings velocity_net;
  NetSettings score_net;
  TrainConfig train;
  SdeConfig sde;
  GenerateSettings generate;
  UqSettings uq;
  DetectSettings detect;
  ReportSettings report;
};

/// Parses and validates. Unknown keys and bad values throw ConfigError naming
/// the key path (e.g. "train.lamda"). A config without a "dataset" section is
/// rejected when `need_dataset` is set.
RunConfig parse_run_config(const nlohmann::json& j, bool need_dataset = true);
RunConfig load_run_config(const std::string& path, bool need_dataset = true);

/// Fully resolved form with every default written out.
nlohmann::json to_json(const RunConfig& cfg);

}  // namespace sfm
