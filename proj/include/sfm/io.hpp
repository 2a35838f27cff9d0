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
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "sfm/tensor.hpp"
#include "sfm/train.hpp"

namespace sfm {

/// Shortest decimal text that parses back to the same double.
std::string format_double(double v);
std::string format_optional(const std::optional<double>& v);

/// Minimal CSV table: a header and string cells, no quoting (fields never
/// contain commas).
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t column(std::string_view name) const;  // throws if absent
  bool has_column(std::string_view name) const;
};

CsvTable read_csv(const std::string& path);
void write_csv(const std::string& path, const CsvTable& table);
std::optional<double> parse_optional_double(std::string_view cell);

/// Dataset persistence: header split,condition,c0..c{d-1}; training pairs are
/// the i-th "source" row with the i-th "target" row.
void write_pairs_csv(const std::string& path, const PairBatch& pairs);
PairBatch read_pairs_csv(const std::string& path);

/// Two overlaid histograms (ID and OOD scores) with axes, as standalone SVG.
struct HistogramSeries {
  std::string label;
  std::string colour;
  std::vector<double> values;
};
std::string histogram_svg(const std::string& title, const std::vector<HistogramSeries>& series,
                          std::size_t bins = 30);

void write_text(const std::string& path, const std::string& text);
std::string read_text(const std::string& path);

}  // namespace sfm
