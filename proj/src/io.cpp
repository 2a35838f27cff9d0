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

#include "sfm/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace sfm {
namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream is(line);
  while (std::getline(is, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

}  // namespace

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string format_optional(const std::optional<double>& v) {
  return v ? format_double(*v) : std::string();
}

std::size_t CsvTable::column(std::string_view name) const {
  const auto it = std::find(header.begin(), header.end(), name);
  if (it == header.end()) throw std::runtime_error("csv: missing column '" + std::string(name) + "'");
  return static_cast<std::size_t>(it - header.begin());
}

bool CsvTable::has_column(std::string_view name) const {
  return std::find(header.begin(), header.end(), name) != header.end();
}

CsvTable read_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open " + path);
  CsvTable t;
  std::string line;
  if (!std::getline(is, line)) throw std::runtime_error("empty csv " + path);
  t.header = split_line(line);
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    auto cells = split_line(line);
    if (cells.size() != t.header.size()) {
      throw std::runtime_error("csv " + path + ": ragged row " + std::to_string(t.rows.size() + 1));
    }
    t.rows.push_back(std::move(cells));
  }
  return t;
}

void write_csv(const std::string& path, const CsvTable& table) {
  std::ostringstream os;
  auto emit = [&](const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) os << (i ? "," : "") << cells[i];
    os << '\n';
  };
  emit(table.header);
  for (const auto& r : table.rows) emit(r);
  write_text(path, os.str());
}

std::optional<double> parse_optional_double(std::string_view cell) {
  if (cell.empty()) return std::nullopt;
  double v = 0.0;
  const auto res = std::from_chars(cell.data(), cell.data() + cell.size(), v);
  if (res.ec != std::errc() || res.ptr != cell.data() + cell.size()) {
    throw std::runtime_error("csv: not a number '" + std::string(cell) + "'");
  }
  return v;
}

void write_pairs_csv(const std::string& path, const PairBatch& pairs) {
  CsvTable t;
  const std::size_t d = pairs.x0.cols();
  t.header = {"split", "condition"};
  for (std::size_t j = 0; j < d; ++j) t.header.push_back("c" + std::to_string(j));
  for (const char* split : {"source", "target"}) {
    const Tensor& x = std::string_view(split) == "source" ? pairs.x0 : pairs.x1;
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      std::vector<std::string> row = {split, std::to_string(pairs.conditions[i].value())};
      for (double v : x.row(i)) row.push_back(format_double(v));
      t.rows.push_back(std::move(row));
    }
  }
  write_csv(path, t);
}

PairBatch read_pairs_csv(const std::string& path) {
  const CsvTable t = read_csv(path);
  const std::size_t split = t.column("split"), cond = t.column("condition");
  const std::size_t d = t.header.size() - 2;
  if (d == 0) throw std::runtime_error("dataset csv " + path + " has no coordinates");
  std::vector<double> src, tgt;
  std::vector<ConditionId> sc, tc;
  for (const auto& r : t.rows) {
    const bool is_src = r[split] == "source";
    if (!is_src && r[split] != "target") {
      throw std::runtime_error("dataset csv " + path + ": unknown split '" + r[split] + "'");
    }
    auto& dst = is_src ? src : tgt;
    (is_src ? sc : tc).emplace_back(std::stoi(r[cond]));
    for (std::size_t j = 0; j < d; ++j) dst.push_back(*parse_optional_double(r[2 + j]));
  }
  if (sc.size() != tc.size() || sc != tc) {
    throw std::runtime_error("dataset csv " + path + ": source and target rows do not pair up");
  }
  const std::size_t n = sc.size();
  return PairBatch{Tensor({n, d}, src), Tensor({n, d}, tgt), sc};
}

std::string histogram_svg(const std::string& title, const std::vector<HistogramSeries>& series,
                          std::size_t bins) {
  double lo = INFINITY, hi = -INFINITY;
  for (const auto& s : series)
    for (double v : s.values) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  if (!std::isfinite(lo)) lo = 0.0, hi = 1.0;
  if (hi <= lo) hi = lo + 1.0;
  const double W = 640, H = 400, left = 60, right = 20, top = 40, bottom = 50;
  const double pw = W - left - right, ph = H - top - bottom;
  std::vector<std::vector<double>> density;
  double peak = 0.0;
  for (const auto& s : series) {
    std::vector<double> h(bins, 0.0);
    for (double v : s.values) {
      auto b = static_cast<std::size_t>((v - lo) / (hi - lo) * static_cast<double>(bins));
      h[std::min(b, bins - 1)] += 1.0;
    }
    for (double& c : h) {
      c /= std::max<std::size_t>(s.values.size(), 1);
      peak = std::max(peak, c);
    }
    density.push_back(std::move(h));
  }
  if (peak <= 0.0) peak = 1.0;
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
     << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<text x=\"" << W / 2 << "\" y=\"20\" text-anchor=\"middle\">" << title << "</text>\n";
  os << "<line x1=\"" << left << "\" y1=\"" << top + ph << "\" x2=\"" << left + pw << "\" y2=\""
     << top + ph << "\" stroke=\"black\"/>\n";
  os << "<line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left << "\" y2=\"" << top + ph
     << "\" stroke=\"black\"/>\n";
  for (int k = 0; k <= 4; ++k) {
    const double x = left + pw * k / 4.0, v = lo + (hi - lo) * k / 4.0;
    os << "<text x=\"" << x << "\" y=\"" << top + ph + 18 << "\" text-anchor=\"middle\">"
       << format_double(std::round(v * 1000.0) / 1000.0) << "</text>\n";
    const double y = top + ph - ph * k / 4.0;
    os << "<text x=\"" << left - 6 << "\" y=\"" << y + 4 << "\" text-anchor=\"end\">"
       << format_double(std::round(peak * k / 4.0 * 1000.0) / 1000.0) << "</text>\n";
  }
  os << "<text x=\"" << left + pw / 2 << "\" y=\"" << H - 10
     << "\" text-anchor=\"middle\">score</text>\n";
  const double bw = pw / static_cast<double>(bins);
  for (std::size_t s = 0; s < series.size(); ++s) {
    for (std::size_t b = 0; b < bins; ++b) {
      const double h = ph * density[s][b] / peak;
      if (h <= 0.0) continue;
      os << "<rect x=\"" << left + bw * b << "\" y=\"" << top + ph - h << "\" width=\"" << bw
         << "\" height=\"" << h << "\" fill=\"" << series[s].colour
         << "\" fill-opacity=\"0.5\"/>\n";
    }
    os << "<rect x=\"" << left + pw - 110 << "\" y=\"" << top + 16 * s << "\" width=\"10\" "
       << "height=\"10\" fill=\"" << series[s].colour << "\"/>\n";
    os << "<text x=\"" << left + pw - 95 << "\" y=\"" << top + 16 * s + 10 << "\">"
       << series[s].label << " (n=" << series[s].values.size() << ")</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + path);
  os << text;
  if (!os) throw std::runtime_error("failed writing " + path);
}

std::string read_text(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path);
  std::ostringstream os;
  os << is.rdbuf();
  return os.str();
}

}  // namespace sfm
