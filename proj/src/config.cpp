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

#include "sfm/config.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "sfm/detect.hpp"

namespace sfm {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

/// Reads keys of one JSON object, remembering which were consumed so leftovers
/// can be reported as unknown.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) fail(path_.empty() ? "config" : path_, "expected an object");
  }

  std::string key_path(const std::string& key) const {
    return path_.empty() ? key : path_ + "." + key;
  }

  bool has(const std::string& key) const { return j_.contains(key); }

  const json* raw(const std::string& key) {
    used_.insert(key);
    const auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  template <class T>
  void get(const std::string& key, T& out) {
    const json* v = raw(key);
    if (!v) return;
    try {
      out = v->get<T>();
    } catch (const json::exception&) {
      fail(key_path(key), "has the wrong type");
    }
    check_value(key, out);
  }

  void get_size(const std::string& key, std::size_t& out) {
    const json* v = raw(key);
    if (!v) return;
    if (!v->is_number_integer() || v->get<long long>() < 0) {
      fail(key_path(key), "must be a non-negative integer");
    }
    out = v->get<std::size_t>();
  }

  Section child(const std::string& key) {
    const json* v = raw(key);
    static const json empty = json::object();
    return Section(v ? *v : empty, key_path(key));
  }

  template <class Parse, class T>
  void get_enum(const std::string& key, T& out, Parse parse) {
    const json* v = raw(key);
    if (!v) return;
    if (!v->is_string()) fail(key_path(key), "must be a string");
    try {
      out = parse(v->get<std::string>());
    } catch (const std::exception& e) {
      fail(key_path(key), e.what());
    }
  }

  void finish() const {
    for (const auto& [k, _] : j_.items()) {
      if (!used_.count(k)) throw ConfigError("unknown key '" + key_path(k) + "'");
    }
  }

  [[noreturn]] static void fail(const std::string& key, const std::string& why) {
    throw ConfigError("config key '" + key + "' " + why);
  }

 private:
  template <class T>
  void check_value(const std::string& key, const T& v) {
    if constexpr (std::is_floating_point_v<T>) {
      if (!std::isfinite(v)) fail(key_path(key), "must be finite");
    }
  }

  const json& j_;
  std::string path_;
  std::set<std::string> used_;
};

/// Wraps a validate() call so its message carries the section name.
template <class F>
void validated(const std::string& section, F&& f) {
  try {
    f();
  } catch (const ConfigError& e) {
    throw ConfigError(section + ": " + e.what());
  } catch (const std::invalid_argument& e) {
    throw ConfigError(section + ": " + e.what());
  }
}

SigmaShape parse_sigma_shape(const std::string& s) {
  if (s == "sinusoidal") return SigmaShape::sinusoidal;
  if (s == "constant") return SigmaShape::constant;
  throw ConfigError("unknown sigma shape '" + s + "'");
}

std::string to_string(SigmaShape s) {
  return s == SigmaShape::sinusoidal ? "sinusoidal" : "constant";
}

GenerateMode parse_generate_mode(const std::string& s) {
  if (s == "ode") return GenerateMode::ode;
  if (s == "sde") return GenerateMode::sde;
  throw ConfigError("unknown mode '" + s + "' (expected ode or sde)");
}

UqMethod parse_uq_method(const std::string& s) {
  for (UqMethod m : {UqMethod::avuq, UqMethod::mcd_iid, UqMethod::map, UqMethod::mcd_dfm}) {
    if (to_string(m) == s) return m;
  }
  throw ConfigError("unknown method '" + s + "' (expected avuq, mcd_iid, map or mcd_dfm)");
}

ErrorMetric parse_error_metric(const std::string& s) {
  if (s == "energy") return ErrorMetric::energy;
  if (s == "nearest_squared") return ErrorMetric::nearest_squared;
  throw ConfigError("unknown error metric '" + s + "'");
}

ScoreSign parse_score_sign(const std::string& s) {
  if (s == "negated") return ScoreSign::negated;
  if (s == "raw") return ScoreSign::raw;
  throw ConfigError("unknown score sign '" + s + "'");
}

std::string absolute(const std::string& p) {
  return p.empty() ? p : fs::absolute(fs::path(p)).lexically_normal().string();
}

void read_net(Section s, NetSettings& n) {
  s.get("hidden_widths", n.hidden_widths);
  s.get_size("time_embed_dim", n.time_embed_dim);
  s.get_size("condition_embed_dim", n.condition_embed_dim);
  s.get("dropout_rate", n.dropout_rate);
  s.finish();
}

json net_json(const NetSettings& n) {
  return {{"hidden_widths", n.hidden_widths},
          {"time_embed_dim", n.time_embed_dim},
          {"condition_embed_dim", n.condition_embed_dim},
          {"dropout_rate", n.dropout_rate}};
}

}  // namespace

std::string to_string(UqMethod m) {
  switch (m) {
    case UqMethod::avuq: return "avuq";
    case UqMethod::mcd_iid: return "mcd_iid";
    case UqMethod::map: return "map";
    case UqMethod::mcd_dfm: return "mcd_dfm";
  }
  return "?";
}

std::string to_string(ErrorMetric m) {
  return m == ErrorMetric::energy ? "energy" : "nearest_squared";
}

MlpConfig NetSettings::mlp(const DatasetSpec& data) const {
  MlpConfig c;
  c.input_dim = data.d;
  c.hidden_widths = hidden_widths;
  c.time_embed_dim = time_embed_dim;
  c.condition_count = data.net_condition_count();
  c.condition_embed_dim = condition_embed_dim;
  c.dropout_rate = dropout_rate;
  return c;
}

RunConfig parse_run_config(const json& j, bool need_dataset) {
  RunConfig cfg;
  Section root(j, "");
  root.get("seed", cfg.seed);
  root.get("output_dir", cfg.output_dir);
  if (cfg.output_dir.empty()) Section::fail("output_dir", "must not be empty");

  if (!root.has("dataset")) {
    if (need_dataset) throw ConfigError("config is missing the 'dataset' section");
  }
  {
    Section s = root.child("dataset");
    std::string path;
    s.get("path", path);
    if (!path.empty()) {
      if (!fs::exists(path)) throw ConfigError("dataset path '" + path + "' does not exist");
      cfg.dataset_path = absolute(path);
    }
    DatasetSpec& d = cfg.dataset;
    s.get_size("d", d.d);
    s.get_enum("family", d.family, parse_target_family);
    s.get_size("condition_count", d.condition_count);
    s.get("withheld", d.withheld);
    s.get_size("n_train", d.n_train);
    s.get_size("n_eval", d.n_eval);
    s.get("source_correlation", d.source_correlation);
    s.get_size("mixture_components", d.mixture_components);
    s.get("mixture_radius", d.mixture_radius);
    s.get("mixture_std", d.mixture_std);
    s.finish();
    d.seed = cfg.seed;
    validated("dataset", [&] { d.validate(); });
  }
  {
    Section s = root.child("sde");
    SdeConfig& c = cfg.sde;
    s.get_size("steps", c.steps);
    s.get("sigma_max", c.sigma_max);
    s.get_enum("sigma_shape", c.sigma_shape, parse_sigma_shape);
    s.get("guidance_alpha", c.guidance_alpha);
    s.get("drift_correction", c.drift_correction);
    s.finish();
    validated("sde", [&] { c.validate(); });
  }
  {
    Section s = root.child("interpolant");
    s.get("a", cfg.interpolant.a);
    s.get("t_min", cfg.interpolant.t_min);
    s.finish();
    cfg.interpolant.sigma_max = cfg.sde.sigma_max;
    validated("interpolant", [&] { cfg.interpolant.validate(); });
  }
  read_net(root.child("velocity_net"), cfg.velocity_net);
  read_net(root.child("score_net"), cfg.score_net);
  validated("velocity_net", [&] { cfg.velocity_net.mlp(cfg.dataset).validate(); });
  validated("score_net", [&] { cfg.score_net.mlp(cfg.dataset).validate(); });
  {
    Section s = root.child("train");
    TrainConfig& t = cfg.train;
    s.get("lambda", t.lambda);
    s.get("p_c", t.p_c);
    s.get_size("batch_size", t.batch_size);
    s.get_size("epochs", t.epochs);
    s.get("learning_rate", t.adam.learning_rate);
    s.get("beta1", t.adam.beta1);
    s.get("beta2", t.adam.beta2);
    s.get("eps", t.adam.eps);
    s.get("dropout", t.dropout);
    s.finish();
    t.seed = cfg.seed;
    validated("train", [&] { t.validate(); });
  }
  {
    Section s = root.child("generate");
    GenerateSettings& g = cfg.generate;
    s.get("checkpoint", g.checkpoint);
    g.checkpoint = absolute(g.checkpoint);
    if (const json* sc = s.raw("scenarios")) {
      if (!sc->is_array()) Section::fail("generate.scenarios", "must be an array");
      g.scenarios.clear();
      for (const auto& e : *sc) {
        if (!e.is_string()) Section::fail("generate.scenarios", "must hold strings");
        try {
          g.scenarios.push_back(parse_shift_kind(e.get<std::string>()));
        } catch (const std::exception& ex) {
          Section::fail("generate.scenarios", ex.what());
        }
      }
    }
    s.get("severities", g.severities);
    for (double v : g.severities) {
      if (!(v >= 0.0) || !std::isfinite(v)) Section::fail("generate.severities", "must be >= 0");
    }
    s.get_size("n", g.n);
    if (g.n < 1) Section::fail("generate.n", "must be >= 1");
    s.get_enum("mode", g.mode, parse_generate_mode);
    s.get_size("reference_n", g.reference_n);
    if (g.reference_n < cfg.dataset.d + 1) {
      Section::fail("generate.reference_n", "must exceed the dimension");
    }
    s.get("dump_trajectories", g.dump_trajectories);
    s.finish();
  }
  {
    Section s = root.child("uq");
    UqSettings& u = cfg.uq;
    s.get("checkpoint", u.checkpoint);
    u.checkpoint = absolute(u.checkpoint);
    s.get_enum("scenario", u.scenario, parse_shift_kind);
    s.get("severity", u.severity);
    if (u.severity < 0.0) Section::fail("uq.severity", "must be >= 0");
    s.get_enum("method", u.method, parse_uq_method);
    if (s.has("M")) {
      std::size_t m = 0;
      s.get_size("M", m);
      u.M = m;
    } else {
      s.raw("M");
    }
    s.get_size("K", u.K);
    s.get_size("n_id", u.n_id);
    s.get_size("n_ood", u.n_ood);
    s.get_enum("score_sign", u.score_sign, parse_score_sign);
    s.get_enum("error_metric", u.error_metric, parse_error_metric);
    s.get_size("reference_n", u.reference_n);
    s.finish();
    if (u.reference_n < 2) Section::fail("uq.reference_n", "must be >= 2");
  }
  {
    Section s = root.child("detect");
    s.get("runs", cfg.detect.runs);
    for (auto& r : cfg.detect.runs) r = absolute(r);
    s.get_enum("filter", cfg.detect.filter, parse_filter_mode);
    s.get("histograms", cfg.detect.histograms);
    s.finish();
  }
  {
    Section s = root.child("report");
    s.get("inputs", cfg.report.inputs);
    for (auto& r : cfg.report.inputs) r = absolute(r);
    s.finish();
  }
  root.finish();
  return cfg;
}

RunConfig load_run_config(const std::string& path, bool need_dataset) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config file '" + path + "'");
  json j;
  try {
    j = json::parse(is);
  } catch (const json::parse_error& e) {
    throw ConfigError("config file '" + path + "' is not valid JSON: " + e.what());
  }
  return parse_run_config(j, need_dataset);
}

json to_json(const RunConfig& c) {
  json dataset = {{"d", c.dataset.d},
                  {"family", to_string(c.dataset.family)},
                  {"condition_count", c.dataset.condition_count},
                  {"withheld", c.dataset.withheld},
                  {"n_train", c.dataset.n_train},
                  {"n_eval", c.dataset.n_eval},
                  {"source_correlation", c.dataset.source_correlation},
                  {"mixture_components", c.dataset.mixture_components},
                  {"mixture_radius", c.dataset.mixture_radius},
                  {"mixture_std", c.dataset.mixture_std}};
  if (c.dataset_path) dataset["path"] = *c.dataset_path;
  json scenarios = json::array();
  for (ShiftKind k : c.generate.scenarios) scenarios.push_back(to_string(k));
  json uq = {{"checkpoint", c.uq.checkpoint},
             {"scenario", to_string(c.uq.scenario)},
             {"severity", c.uq.severity},
             {"method", to_string(c.uq.method)},
             {"K", c.uq.K},
             {"n_id", c.uq.n_id},
             {"n_ood", c.uq.n_ood},
             {"score_sign", c.uq.score_sign == ScoreSign::negated ? "negated" : "raw"},
             {"error_metric", to_string(c.uq.error_metric)},
             {"reference_n", c.uq.reference_n}};
  if (c.uq.M) uq["M"] = *c.uq.M;
  return {{"seed", c.seed},
          {"output_dir", c.output_dir},
          {"dataset", dataset},
          {"interpolant", {{"a", c.interpolant.a}, {"t_min", c.interpolant.t_min}}},
          {"velocity_net", net_json(c.velocity_net)},
          {"score_net", net_json(c.score_net)},
          {"train",
           {{"lambda", c.train.lambda},
            {"p_c", c.train.p_c},
            {"batch_size", c.train.batch_size},
            {"epochs", c.train.epochs},
            {"learning_rate", c.train.adam.learning_rate},
            {"beta1", c.train.adam.beta1},
            {"beta2", c.train.adam.beta2},
            {"eps", c.train.adam.eps},
            {"dropout", c.train.dropout}}},
          {"sde",
           {{"steps", c.sde.steps},
            {"sigma_max", c.sde.sigma_max},
            {"sigma_shape", to_string(c.sde.sigma_shape)},
            {"guidance_alpha", c.sde.guidance_alpha},
            {"drift_correction", c.sde.drift_correction}}},
          {"generate",
           {{"checkpoint", c.generate.checkpoint},
            {"scenarios", scenarios},
            {"severities", c.generate.severities},
            {"n", c.generate.n},
            {"mode", c.generate.mode == GenerateMode::ode ? "ode" : "sde"},
            {"reference_n", c.generate.reference_n},
            {"dump_trajectories", c.generate.dump_trajectories}}},
          {"uq", uq},
          {"detect",
           {{"runs", c.detect.runs},
            {"filter", to_string(c.detect.filter)},
            {"histograms", c.detect.histograms}}},
          {"report", {{"inputs", c.report.inputs}}}};
}

}  // namespace sfm
