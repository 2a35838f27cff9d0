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

#include "sfm/cli.hpp"

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <limits>
#include <map>
#include <ostream>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "sfm/config.hpp"
#include "sfm/data.hpp"
#include "sfm/detect.hpp"
#include "sfm/eval.hpp"
#include "sfm/io.hpp"
#include "sfm/nets.hpp"
#include "sfm/posterior.hpp"
#include "sfm/sample.hpp"
#include "sfm/train.hpp"
#include "sfm/uq.hpp"

namespace sfm {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;
using Clock = std::chrono::steady_clock;

struct Context {
  RunConfig cfg;
  fs::path out_dir;
  std::ostream& out;
  std::ostream& err;

  RngStream root() const { return RngStream(cfg.seed, 0); }
  std::string path(const std::string& name) const { return (out_dir / name).string(); }
};

fs::path resolve_output_dir(const std::string& dir) {
  fs::path p(dir);
  if (p.is_relative()) {
    if (const char* root = std::getenv("SFMLAB_OUTPUT_ROOT"); root && *root) p = fs::path(root) / p;
  }
  return fs::absolute(p).lexically_normal();
}

std::uint64_t severity_key(double s) { return std::bit_cast<std::uint64_t>(s); }

std::string severity_text(double s) { return format_double(s); }

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

FieldPair load_matching_checkpoint(const std::string& path, const std::string& key,
                                   const DatasetSpec& spec) {
  if (path.empty()) throw ConfigError("config key '" + key + "' is required");
  if (!fs::exists(path)) throw ConfigError(key + ": checkpoint '" + path + "' does not exist");
  FieldPair nets = load_checkpoint(path);
  const MlpConfig& v = nets.velocity.config();
  if (v.input_dim != spec.d || v.condition_count != spec.net_condition_count()) {
    throw ConfigError(key + ": checkpoint was trained for d=" + std::to_string(v.input_dim) +
                      " with " + std::to_string(v.condition_count) +
                      " condition rows; dataset needs d=" + std::to_string(spec.d) + " and " +
                      std::to_string(spec.net_condition_count()));
  }
  return nets;
}

std::vector<std::int32_t> scenario_conditions(const DatasetSpec& spec, ShiftKind kind) {
  return kind == ShiftKind::unseen_condition ? spec.withheld : spec.training_conditions();
}

// ---------------------------------------------------------------- train

int cmd_train(Context& ctx) {
  const RunConfig& cfg = ctx.cfg;
  PairBatch pairs;
  if (cfg.dataset_path) {
    pairs = read_pairs_csv(*cfg.dataset_path);
    if (pairs.x0.cols() != cfg.dataset.d) {
      throw ConfigError("dataset: file has " + std::to_string(pairs.x0.cols()) +
                        " coordinates but dataset.d is " + std::to_string(cfg.dataset.d));
    }
    for (ConditionId c : pairs.conditions) {
      if (c.value() < 0 || static_cast<std::size_t>(c.value()) >= cfg.dataset.condition_count) {
        throw ConfigError("dataset: file uses condition " + std::to_string(c.value()) +
                          " outside dataset.condition_count");
      }
    }
  } else {
    pairs = make_dataset(cfg.dataset).train;
  }
  const auto t0 = Clock::now();
  FieldPair nets = initial_nets(cfg.velocity_net.mlp(cfg.dataset), cfg.score_net.mlp(cfg.dataset),
                                cfg.interpolant, cfg.seed);
  FitResult fitted = fit(pairs, std::move(nets), cfg.train);
  const double wall = seconds_since(t0);

  save_checkpoint(ctx.path("checkpoint.bin"), fitted.nets);
  CsvTable loss{{"epoch", "velocity_loss", "score_loss"}, {}};
  for (const LossRecord& r : fitted.history) {
    loss.rows.push_back({std::to_string(r.epoch), format_double(r.velocity_loss),
                         format_double(r.score_loss)});
  }
  write_csv(ctx.path("loss.csv"), loss);
  write_pairs_csv(ctx.path("dataset.csv"), pairs);
  json sidecar = {{"format_version", kCheckpointVersion},
                  {"seed", cfg.seed},
                  {"n_train", pairs.size()},
                  {"epochs", cfg.train.epochs},
                  {"lambda", cfg.train.lambda},
                  {"p_c", cfg.train.p_c},
                  {"velocity_parameters", fitted.nets.velocity.weights().size()},
                  {"score_parameters", fitted.nets.score.weights().size()},
                  {"train_seconds", wall}};
  if (!fitted.history.empty()) {
    sidecar["final_velocity_loss"] = fitted.history.back().velocity_loss;
    sidecar["final_score_loss"] = fitted.history.back().score_loss;
  }
  write_text(ctx.path("checkpoint.json"), sidecar.dump(2) + "\n");
  ctx.out << "trained " << cfg.train.epochs << " epochs on " << pairs.size() << " pairs in "
          << wall << " s; checkpoint " << ctx.path("checkpoint.bin") << "\n";
  return kExitOk;
}

// ------------------------------------------------------------- generate

int cmd_generate(Context& ctx) {
  const RunConfig& cfg = ctx.cfg;
  const GenerateSettings& g = cfg.generate;
  const DatasetSpec& spec = cfg.dataset;
  const FieldPair nets = load_matching_checkpoint(g.checkpoint, "generate.checkpoint", spec);
  const std::string method = g.mode == GenerateMode::ode ? "ode" : "sde";
  const std::size_t d = spec.d;

  CsvTable samples{{"scenario", "severity", "condition"}, {}};
  for (std::size_t j = 0; j < d; ++j) samples.header.push_back("c" + std::to_string(j));
  CsvTable metrics{{"scenario", "method", "severity", "frechet", "energy", "n_gen", "n_ref",
                    "seed"},
                   {}};
  if (g.dump_trajectories) fs::create_directories(ctx.out_dir / "trajectories");

  const RngStream data_root = ctx.root().split("data").split("generate");
  const RngStream sample_root = ctx.root().split("sample").split("generate");
  for (ShiftKind kind : g.scenarios) {
    for (double severity : g.severities) {
      const ShiftSpec shift{kind, severity};
      const PointSampler source = apply_shift(source_sampler(spec), shift);
      double frechet_sum = 0.0, energy_sum = 0.0;
      bool frechet_ok = g.n >= d + 1;
      std::size_t n_gen = 0, n_ref = 0;
      const auto conds = scenario_conditions(spec, kind);
      for (std::int32_t c : conds) {
        const std::uint64_t cu = static_cast<std::uint64_t>(c);
        RngStream xr = data_root.split(to_string(kind)).split(severity_key(severity)).split(cu);
        const Tensor x0 = source(xr, g.n);
        const std::vector<ConditionId> cid(g.n, ConditionId(c));
        const Dynamics dyn = net_dynamics(nets, cid, cfg.sde.guidance_alpha);
        Tensor x1;
        std::vector<NoisePath> paths;
        if (g.mode == GenerateMode::ode) {
          x1 = ode_terminals(dyn.velocity, x0, cfg.sde);
        } else {
          RngStream nr =
              sample_root.split(to_string(kind)).split(severity_key(severity)).split(cu);
          paths = iid_paths(nr, g.n, cfg.sde.steps, d);
          x1 = sde_terminals(dyn, x0, paths, cfg.sde);
        }
        for (std::size_t i = 0; i < g.n; ++i) {
          std::vector<std::string> row = {to_string(kind), severity_text(severity),
                                          std::to_string(c)};
          for (double v : x1.row(i)) row.push_back(format_double(v));
          samples.rows.push_back(std::move(row));
        }
        const Tensor ref = reference_targets(spec, c, g.reference_n);
        energy_sum += energy_distance(x1, ref);
        if (frechet_ok) frechet_sum += frechet(x1, ref).value;
        n_gen += g.n;
        n_ref += g.reference_n;

        if (g.dump_trajectories) {
          const Tensor first({1, d}, std::vector<double>(x0.row(0).begin(), x0.row(0).end()));
          const Dynamics one = net_dynamics(nets, {ConditionId(c)}, cfg.sde.guidance_alpha);
          const Trajectory traj = g.mode == GenerateMode::ode
                                      ? ode_solve(one.velocity, first, cfg.sde)
                                      : sde_solve(one, first, paths.front(), cfg.sde);
          std::ostringstream os;
          write_trajectory_csv(os, traj);
          write_text((ctx.out_dir / "trajectories" /
                      (to_string(kind) + "_" + severity_text(severity) + "_c" +
                       std::to_string(c) + ".csv"))
                         .string(),
                     os.str());
        }
      }
      const double nc = static_cast<double>(conds.size());
      metrics.rows.push_back({to_string(kind), method, severity_text(severity),
                              frechet_ok ? format_double(frechet_sum / nc) : std::string(),
                              format_double(energy_sum / nc), std::to_string(n_gen),
                              std::to_string(n_ref), std::to_string(cfg.seed)});
    }
  }
  write_csv(ctx.path("samples.csv"), samples);
  write_csv(ctx.path("metrics.csv"), metrics);
  ctx.out << "generated " << samples.rows.size() << " samples; " << metrics.rows.size()
          << " metric rows in " << ctx.path("metrics.csv") << "\n";
  return kExitOk;
}

// ------------------------------------------------------------------- uq

double nearest_squared(std::span<const double> x, const Tensor& ref) {
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t r = 0; r < ref.rows(); ++r) {
    double s = 0.0;
    for (std::size_t j = 0; j < x.size(); ++j) s += (x[j] - ref.at(r, j)) * (x[j] - ref.at(r, j));
    best = std::min(best, s);
  }
  return best;
}

int cmd_uq(Context& ctx) {
  const RunConfig& cfg = ctx.cfg;
  const UqSettings& u = cfg.uq;
  const DatasetSpec& spec = cfg.dataset;
  const FieldPair nets = load_matching_checkpoint(u.checkpoint, "uq.checkpoint", spec);

  if (u.K < 2 && u.method != UqMethod::mcd_dfm) {
    throw ConfigError("config key 'uq.K' must be >= 2 for method " + to_string(u.method));
  }
  if (u.method == UqMethod::avuq && u.K % 2 != 0) {
    throw ConfigError("config key 'uq.K' must be even for avuq (antithetic pairs), got " +
                      std::to_string(u.K));
  }
  std::size_t M = u.M.value_or(4);
  std::size_t K = u.K;
  if (u.method == UqMethod::map) {
    if (u.M) ctx.err << "warning: uq.M is ignored by method map (MAP has a single draw)\n";
    M = 1;
  }
  if (u.method == UqMethod::mcd_dfm) {
    if (M < 2) throw ConfigError("config key 'uq.M' must be >= 2 for mcd_dfm");
    K = 1;
  }
  if ((u.method == UqMethod::avuq || u.method == UqMethod::mcd_iid) && M < 1) {
    throw ConfigError("config key 'uq.M' must be >= 1");
  }

  const EvalPool pool = make_scenario_pool(spec, ShiftSpec{u.scenario, u.severity}, u.n_id,
                                           u.n_ood);
  const std::size_t n = pool.size();
  if (n == 0) throw ConfigError("uq: n_id + n_ood must be positive");
  const NetSimulator sim(nets, cfg.sde);
  const RngStream root = ctx.root();
  const auto mcd = McDropoutSampler::from(nets);

  CsvTable table{{"input_id", "condition", "mode", "M", "K", "aleatoric_trace", "epistemic_raw",
                  "epistemic_corrected", "score_aleatoric", "score_epistemic"},
                 {}};
  std::size_t negative_corrected = 0;
  const auto t0 = Clock::now();
  auto row = [&](std::size_t i, const std::string& mode, std::optional<double> a,
                 std::optional<double> er, std::optional<double> ec, std::optional<double> sa,
                 std::optional<double> se) {
    table.rows.push_back({pool.ids[i], std::to_string(pool.conditions[i].value()), mode,
                          std::to_string(M), std::to_string(K), format_optional(a),
                          format_optional(er), format_optional(ec), format_optional(sa),
                          format_optional(se)});
  };
  switch (u.method) {
    case UqMethod::avuq:
    case UqMethod::mcd_iid: {
      const UqBudget budget{M, K, u.method == UqMethod::avuq ? UqMode::antithetic : UqMode::iid};
      const auto reports =
          u.method == UqMethod::avuq
              ? avuq(sim, pool.x0, pool.conditions, mcd, budget, root, u.score_sign)
              : nested_uq(sim, pool.x0, pool.conditions, mcd, budget, root, u.score_sign);
      for (std::size_t i = 0; i < n; ++i) {
        const UqReport& r = reports[i];
        negative_corrected += r.corrected_negative ? 1 : 0;
        row(i, to_string(budget.mode), r.aleatoric_trace, r.epistemic_raw, r.epistemic_corrected,
            r.score_aleatoric, r.score_epistemic);
      }
      break;
    }
    case UqMethod::map: {
      const auto scores = map_aleatoric(sim, pool.x0, pool.conditions, K, root, u.score_sign);
      for (std::size_t i = 0; i < n; ++i) {
        row(i, "iid", scores[i].trace, std::nullopt, std::nullopt, scores[i].score, std::nullopt);
      }
      break;
    }
    case UqMethod::mcd_dfm: {
      const auto scores =
          mcd_dfm_epistemic(sim, pool.x0, pool.conditions, mcd, M, root, u.score_sign);
      for (std::size_t i = 0; i < n; ++i) {
        row(i, "ode", std::nullopt, scores[i].trace, std::nullopt, std::nullopt, scores[i].score);
      }
      break;
    }
  }
  const double wall = seconds_since(t0);
  const std::size_t expected = n * M * K;
  if (sim.solves() != expected) {
    throw std::runtime_error("solve counter " + std::to_string(sim.solves()) +
                             " differs from the expected " + std::to_string(expected));
  }
  write_csv(ctx.path("uq.csv"), table);

  // Generation error of one MAP SDE sample per input, against true targets.
  const NetSimulator label_sim(nets, cfg.sde);
  RngStream lr = root.split("sample").split("error");
  const auto paths = iid_paths(lr, n, cfg.sde.steps, spec.d);
  const Tensor gen = label_sim.sde_terminals(PosteriorDraw{}, pool.x0, pool.conditions, paths);
  std::map<std::int32_t, Tensor> refs;
  CsvTable labels{{"input_id", "label", "error_metric", "condition"}, {}};
  for (std::size_t i = 0; i < n; ++i) {
    const std::int32_t c = pool.conditions[i].value();
    if (!refs.count(c)) refs.emplace(c, reference_targets(spec, c, u.reference_n));
    const Tensor& ref = refs.at(c);
    double err_metric = 0.0;
    if (u.error_metric == ErrorMetric::energy) {
      const Tensor one({1, spec.d}, std::vector<double>(gen.row(i).begin(), gen.row(i).end()));
      err_metric = energy_distance(one, ref);
    } else {
      err_metric = nearest_squared(gen.row(i), ref);
    }
    labels.rows.push_back({pool.ids[i], to_string(pool.provenance[i]), format_double(err_metric),
                           std::to_string(c)});
  }
  write_csv(ctx.path("labels.csv"), labels);

  const json meta = {{"method", to_string(u.method)},
                     {"scenario", to_string(u.scenario)},
                     {"severity", u.severity},
                     {"seed", cfg.seed},
                     {"M", M},
                     {"K", K},
                     {"inputs", n},
                     {"solves", sim.solves()},
                     {"solves_per_input", sim.solves() / n},
                     {"expected_solves", expected},
                     {"negative_corrected_epistemic", negative_corrected},
                     {"wall_seconds", wall}};
  write_text(ctx.path("uq_meta.json"), meta.dump(2) + "\n");
  ctx.out << to_string(u.method) << ": " << n << " inputs, " << sim.solves() << " solves ("
          << sim.solves() / n << " per input) in " << wall << " s\n";
  return kExitOk;
}

// --------------------------------------------------------------- detect

struct RunScores {
  std::string scenario;
  std::string method;
  std::uint64_t seed = 0;
  std::vector<PoolEntry> pool;
  std::map<std::string, std::map<std::string, double>> scores;  // type -> id -> score
};

RunScores load_run(const fs::path& dir) {
  RunScores run;
  const json meta = json::parse(read_text((dir / "uq_meta.json").string()));
  run.method = meta.at("method").get<std::string>();
  run.scenario = meta.at("scenario").get<std::string>() + "@" +
                 format_double(meta.at("severity").get<double>());
  run.seed = meta.at("seed").get<std::uint64_t>();
  const CsvTable uq = read_csv((dir / "uq.csv").string());
  const CsvTable labels = read_csv((dir / "labels.csv").string());

  std::map<std::string, std::pair<Label, double>> by_id;
  const std::size_t lid = labels.column("input_id"), llab = labels.column("label"),
                    lerr = labels.column("error_metric");
  for (const auto& r : labels.rows) {
    by_id[r[lid]] = {parse_label(r[llab]), *parse_optional_double(r[lerr])};
  }
  const std::size_t uid = uq.column("input_id");
  std::vector<std::string> missing;
  std::set<std::string> seen;
  for (const auto& r : uq.rows) {
    seen.insert(r[uid]);
    if (!by_id.count(r[uid])) missing.push_back(r[uid]);
  }
  for (const auto& [id, _] : by_id) {
    if (!seen.count(id)) missing.push_back(id);
  }
  if (!missing.empty()) {
    std::string list;
    for (std::size_t i = 0; i < missing.size(); ++i) list += (i ? ", " : "") + missing[i];
    throw std::runtime_error("label join failed for " + dir.string() + "; missing ids: " + list);
  }
  for (const auto& r : uq.rows) {
    const auto& [label, err_metric] = by_id.at(r[uid]);
    run.pool.push_back(PoolEntry{r[uid], err_metric, label});
  }
  for (const char* type : {"aleatoric", "epistemic"}) {
    const std::size_t col = uq.column(std::string("score_") + type);
    std::map<std::string, double> s;
    for (const auto& r : uq.rows) {
      if (auto v = parse_optional_double(r[col])) s[r[uid]] = *v;
    }
    if (s.size() == uq.rows.size() && !s.empty()) run.scores[type] = std::move(s);
  }
  return run;
}

int cmd_detect(Context& ctx) {
  const DetectSettings& dset = ctx.cfg.detect;
  if (dset.runs.empty()) throw ConfigError("config key 'detect.runs' must list uq output dirs");
  CsvTable rows{{"scenario", "score_type", "filter_mode", "auroc", "aupr", "n_id", "n_ood",
                 "seed"},
                {}};
  using Key = std::tuple<std::string, std::string, std::string>;
  std::map<Key, std::pair<std::vector<double>, std::vector<double>>> grouped;
  const std::string mode = to_string(dset.filter);
  for (const std::string& dir : dset.runs) {
    const RunScores run = load_run(dir);
    const FilterResult kept = filter(run.pool, dset.filter);
    std::size_t n_id = 0, n_ood = 0;
    for (const PoolEntry& e : kept.kept) (e.provenance == Label::id ? n_id : n_ood)++;
    for (const auto& [type, score] : run.scores) {
      const std::string score_type = run.method + "_" + type;
      std::vector<LabeledScore> ls;
      for (const PoolEntry& e : kept.kept) {
        ls.push_back(LabeledScore{e.input_id, score.at(e.input_id), e.provenance, e.error_metric});
      }
      std::string auroc_cell, aupr_cell;
      if (n_id > 0 && n_ood > 0) {
        const double a = auroc(ls), p = aupr(ls);
        auroc_cell = format_double(a);
        aupr_cell = format_double(p);
        auto& g = grouped[Key{run.scenario, score_type, mode}];
        g.first.push_back(a);
        g.second.push_back(p);
      } else {
        ctx.err << "warning: " << dir << ": filter left a single class; metrics omitted\n";
      }
      rows.rows.push_back({run.scenario, score_type, mode, auroc_cell, aupr_cell,
                           std::to_string(n_id), std::to_string(n_ood), std::to_string(run.seed)});
      if (dset.histograms) {
        std::vector<double> id_s, ood_s;
        for (const LabeledScore& s : ls) (s.label == Label::id ? id_s : ood_s).push_back(s.anomaly_score);
        std::string name = "hist_" + run.scenario + "_" + score_type + "_seed" +
                           std::to_string(run.seed) + ".svg";
        std::replace(name.begin(), name.end(), '@', '_');
        write_text(ctx.path(name),
                   histogram_svg(run.scenario + " " + score_type + " (" + mode + ")",
                                 {{"ID", "#1f77b4", id_s}, {"OOD", "#d62728", ood_s}}));
      }
    }
  }
  write_csv(ctx.path("detect.csv"), rows);
  CsvTable summary{{"scenario", "score_type", "filter_mode", "auroc_mean", "auroc_se",
                    "aupr_mean", "aupr_se", "n_seeds"},
                   {}};
  for (const auto& [key, vals] : grouped) {
    const SeedSummary a = summarize_seeds(vals.first), p = summarize_seeds(vals.second);
    summary.rows.push_back({std::get<0>(key), std::get<1>(key), std::get<2>(key),
                            format_double(a.mean), format_optional(a.standard_error),
                            format_double(p.mean), format_optional(p.standard_error),
                            std::to_string(a.n)});
  }
  write_csv(ctx.path("detect_summary.csv"), summary);
  ctx.out << "detect: " << rows.rows.size() << " rows from " << dset.runs.size() << " runs\n";
  return kExitOk;
}

// --------------------------------------------------------------- report

int cmd_report(Context& ctx) {
  const auto& inputs = ctx.cfg.report.inputs;
  if (inputs.empty()) throw ConfigError("config key 'report.inputs' must list output dirs");
  using Key = std::tuple<std::string, std::string, std::string>;
  std::map<Key, std::pair<std::vector<double>, std::vector<double>>> gen;
  CsvTable detect_rows;
  for (const std::string& dir : inputs) {
    const fs::path p(dir);
    bool used = false;
    if (fs::exists(p / "metrics.csv")) {
      used = true;
      const CsvTable m = read_csv((p / "metrics.csv").string());
      const std::size_t sc = m.column("scenario"), me = m.column("method"),
                        sv = m.column("severity"), fr = m.column("frechet"),
                        en = m.column("energy");
      for (const auto& r : m.rows) {
        auto& g = gen[Key{r[sc], r[me], r[sv]}];
        if (auto f = parse_optional_double(r[fr])) g.first.push_back(*f);
        g.second.push_back(*parse_optional_double(r[en]));
      }
    }
    if (fs::exists(p / "detect_summary.csv")) {
      used = true;
      const CsvTable s = read_csv((p / "detect_summary.csv").string());
      if (detect_rows.header.empty()) detect_rows.header = s.header;
      if (s.header != detect_rows.header) {
        throw std::runtime_error("detect_summary.csv schema differs in " + dir);
      }
      for (const auto& r : s.rows) detect_rows.rows.push_back(r);
    }
    if (!used) throw std::runtime_error("no metrics.csv or detect_summary.csv in " + dir);
  }
  CsvTable gen_table{{"scenario", "method", "severity", "frechet_mean", "frechet_se",
                      "energy_mean", "energy_se", "n_seeds"},
                     {}};
  std::ostringstream md;
  md << "# sfmlab report\n\n";
  if (!gen.empty()) {
    md << "## Generation quality\n\n"
       << "| scenario | method | severity | Frechet | energy | seeds |\n"
       << "|---|---|---|---|---|---|\n";
  }
  auto pm = [](const SeedSummary& s) {
    std::ostringstream os;
    os.precision(4);
    os << s.mean;
    if (s.standard_error) os << " ± " << *s.standard_error;
    return os.str();
  };
  for (const auto& [key, vals] : gen) {
    const SeedSummary f = summarize_seeds(vals.first), e = summarize_seeds(vals.second);
    gen_table.rows.push_back({std::get<0>(key), std::get<1>(key), std::get<2>(key),
                              vals.first.empty() ? "" : format_double(f.mean),
                              format_optional(f.standard_error), format_double(e.mean),
                              format_optional(e.standard_error), std::to_string(e.n)});
    md << "| " << std::get<0>(key) << " | " << std::get<1>(key) << " | " << std::get<2>(key)
       << " | " << (vals.first.empty() ? "-" : pm(f)) << " | " << pm(e) << " | " << e.n
       << " |\n";
  }
  if (!detect_rows.rows.empty()) {
    md << "\n## Detection\n\n| ";
    for (const auto& h : detect_rows.header) md << h << " | ";
    md << "\n|";
    for (std::size_t i = 0; i < detect_rows.header.size(); ++i) md << "---|";
    md << "\n";
    for (const auto& r : detect_rows.rows) {
      md << "| ";
      for (const auto& c : r) md << (c.empty() ? "-" : c) << " | ";
      md << "\n";
    }
    write_csv(ctx.path("report_detect.csv"), detect_rows);
  }
  if (!gen.empty()) write_csv(ctx.path("report_generation.csv"), gen_table);
  write_text(ctx.path("report.md"), md.str());
  ctx.out << "report written to " << ctx.path("report.md") << "\n";
  return kExitOk;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"sfmlab: stochastic flow matching with uncertainty quantification"};
  app.require_subcommand(1);
  std::string config_path, output_dir;
  using Handler = std::function<int(Context&)>;
  const std::vector<std::tuple<std::string, std::string, Handler, bool>> commands = {
      {"train", "Fit velocity and score networks", cmd_train, true},
      {"generate", "Sample from a checkpoint and score against true targets", cmd_generate, true},
      {"uq", "Nested uncertainty estimates over a scenario pool", cmd_uq, true},
      {"detect", "AUROC/AUPR of uncertainty scores for unreliable generations", cmd_detect, false},
      {"report", "Aggregate metrics and detection summaries", cmd_report, false}};
  std::vector<CLI::App*> subs;
  for (const auto& [name, help, fn, _] : commands) {
    CLI::App* s = app.add_subcommand(name, help);
    s->add_option("-c,--config", config_path, "JSON run configuration")->required();
    s->add_option("-o,--output-dir", output_dir, "Override output_dir from the config");
    subs.push_back(s);
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitConfig;
  }
  try {
    for (std::size_t i = 0; i < subs.size(); ++i) {
      if (!subs[i]->parsed()) continue;
      const auto& [name, help, fn, need_dataset] = commands[i];
      RunConfig cfg = load_run_config(config_path, need_dataset);
      if (!output_dir.empty()) cfg.output_dir = output_dir;
      const fs::path dir = resolve_output_dir(cfg.output_dir);
      cfg.output_dir = dir.string();
      fs::create_directories(dir);
      write_text((dir / "config.json").string(), to_json(cfg).dump(2) + "\n");
      Context ctx{std::move(cfg), dir, out, err};
      return fn(ctx);
    }
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitRuntime;
}

}  // namespace sfm
