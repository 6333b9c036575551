// Copyright 2026 The reweight Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//    http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Experiment driver behind the `reweight` command line tool: flat JSON
// configs, trajectory/summary CSV files and the gen-data, run, sweep and
// verify commands.

#ifndef REWEIGHT_EXPERIMENT_HPP
#define REWEIGHT_EXPERIMENT_HPP

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <numeric>
#include <optional>
#include <ostream>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <variant>
#include <vector>

#include <json.hpp>

#include "reweight/diagnostics.hpp"
#include "reweight/errors.hpp"
#include "reweight/optim.hpp"
#include "reweight/oracle.hpp"
#include "reweight/problems.hpp"
#include "reweight/reweight_core.hpp"

namespace reweight {

// Largest power of ten at which Uniform converges on the default regression
// dataset (0.1 diverges on every seed).
inline constexpr double kCalibratedRegressionLr = 0.01;

enum class ProblemKind { Regression, Quadratic, Nonconvex };

inline std::string_view to_string(ProblemKind k) {
  switch (k) {
    case ProblemKind::Regression: return "regression";
    case ProblemKind::Quadratic: return "quadratic";
    case ProblemKind::Nonconvex: return "nonconvex";
  }
  return "?";
}

/// Every knob of a single run. Serialized as one flat JSON object.
struct ExperimentConfig {
  ProblemKind problem = ProblemKind::Regression;
  std::uint64_t seed = 0;

  RegressionSpec regression;
  std::size_t M = 64;  // quadratic / nonconvex sample count
  std::size_t d = 16;  // quadratic / nonconvex dimension
  double cond_max = 10.0;

  ReweightConfig reweight{Strategy::LinUpper, 1.0, TemperatureSchedule::constant(1.0), std::nullopt};
  StepSizeRule stepsize = StepSizeRule::fixed(kCalibratedRegressionLr);
  std::size_t batch_size = 128;
  std::size_t steps = 2000;
  bool momentum = false;

  // Sweep axes; empty means "the single value above".
  std::vector<Strategy> sweep_strategies;
  std::vector<double> sweep_r;
  std::vector<std::uint64_t> sweep_seeds;
};

namespace detail {

inline const std::set<std::string>& known_config_keys() {
  static const std::set<std::string> keys = {
      "problem", "seed", "p", "n", "m", "noise_c", "test_size", "M", "d", "cond_max",
      "strategy", "alpha", "r_schedule", "r", "r_final", "warmup_steps", "cap",
      "lr_rule", "lr", "L", "horizon_T", "batch_size", "steps", "momentum",
      "strategies", "r_values", "seeds"};
  return keys;
}

template <typename T>
T field(const nlohmann::json& j, const char* key, T fallback) {
  if (!j.contains(key) || j.at(key).is_null()) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError(std::string("config field '") + key + "' has the wrong type");
  }
}

inline std::size_t count_field(const nlohmann::json& j, const char* key, std::size_t fallback) {
  if (!j.contains(key)) return fallback;
  const auto& v = j.at(key);
  if (!v.is_number_integer() || v.get<long long>() < 0)
    throw ConfigError(std::string("config field '") + key + "' must be a nonnegative integer");
  return v.get<std::size_t>();
}

}  // namespace detail

/// Parse and validate a flat JSON config. Errors name the offending field.
inline ExperimentConfig parse_config(const nlohmann::json& j) {
  using detail::count_field;
  using detail::field;
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (!detail::known_config_keys().count(key)) throw ConfigError("unknown config field '" + key + "'");
    if (value.is_object()) throw ConfigError("config field '" + key + "' must not be nested");
  }

  ExperimentConfig c;
  const std::string problem = field<std::string>(j, "problem", "regression");
  if (problem == "regression") c.problem = ProblemKind::Regression;
  else if (problem == "quadratic") c.problem = ProblemKind::Quadratic;
  else if (problem == "nonconvex") c.problem = ProblemKind::Nonconvex;
  else throw ConfigError("config field 'problem': unknown problem '" + problem + "'");

  c.seed = field<std::uint64_t>(j, "seed", 0);
  c.regression.p = count_field(j, "p", c.regression.p);
  c.regression.n = count_field(j, "n", c.regression.n);
  c.regression.m = count_field(j, "m", c.regression.m);
  c.regression.noise_c = field<double>(j, "noise_c", c.regression.noise_c);
  c.regression.test_size = count_field(j, "test_size", c.regression.test_size);
  c.M = count_field(j, "M", c.M);
  c.d = count_field(j, "d", c.d);
  c.cond_max = field<double>(j, "cond_max", c.cond_max);

  try {
    c.reweight.strategy = parse_strategy(field<std::string>(j, "strategy", "linupper"));
  } catch (const ConfigError& e) {
    throw ConfigError(std::string("config field 'strategy': ") + e.what());
  }
  c.reweight.alpha = field<double>(j, "alpha", 1.0);
  const double r = field<double>(j, "r", 1.0);
  const std::string sched = field<std::string>(j, "r_schedule", "constant");
  if (sched == "constant") {
    c.reweight.schedule = TemperatureSchedule::constant(r);
  } else if (sched == "step_drop") {
    c.reweight.schedule = TemperatureSchedule::step_drop(r, field<double>(j, "r_final", 1.0),
                                                         count_field(j, "warmup_steps", 0));
  } else {
    throw ConfigError("config field 'r_schedule': expected constant or step_drop");
  }
  if (j.contains("cap") && !j.at("cap").is_null()) c.reweight.cap = field<double>(j, "cap", 0.0);

  const std::string rule = field<std::string>(j, "lr_rule", "fixed");
  const double L = field<double>(j, "L", 0.0);
  if (rule == "fixed") c.stepsize = StepSizeRule::fixed(field<double>(j, "lr", kCalibratedRegressionLr));
  else if (rule == "convex_theory") c.stepsize = StepSizeRule::convex_theory(L);
  else if (rule == "sqrt_horizon") c.stepsize = StepSizeRule::sqrt_horizon(count_field(j, "horizon_T", 1), L);
  else throw ConfigError("config field 'lr_rule': expected fixed, convex_theory or sqrt_horizon");

  c.batch_size = count_field(j, "batch_size", c.batch_size);
  c.steps = count_field(j, "steps", c.steps);
  c.momentum = field<bool>(j, "momentum", false);

  if (j.contains("strategies")) {
    for (const auto& s : field<std::vector<std::string>>(j, "strategies", {})) {
      try {
        c.sweep_strategies.push_back(parse_strategy(s));
      } catch (const ConfigError& e) {
        throw ConfigError(std::string("config field 'strategies': ") + e.what());
      }
    }
  }
  c.sweep_r = field<std::vector<double>>(j, "r_values", {});
  c.sweep_seeds = field<std::vector<std::uint64_t>>(j, "seeds", {});

  // Value checks that do not need the dataset.
  if (c.batch_size == 0) throw ConfigError("config field 'batch_size' must be positive");
  try {
    c.reweight.validate(c.batch_size);
  } catch (const ConfigError& e) {
    throw ConfigError(std::string("config fields 'alpha'/'r'/'r_final'/'cap': ") + e.what());
  }
  if (c.stepsize.kind == StepSizeRule::Kind::Fixed) {
    try {
      (void)c.stepsize.base_eta();
    } catch (const ConfigError&) {
      throw ConfigError("config field 'lr' must be a finite positive real");
    }
  }
  if (c.stepsize.kind == StepSizeRule::Kind::SqrtHorizon && c.stepsize.horizon_T == 0)
    throw ConfigError("config field 'horizon_T' must be positive");
  for (double v : c.sweep_r)
    if (!(v > 0.0)) throw ConfigError("config field 'r_values' must hold positive reals");
  const std::size_t population =
      c.problem == ProblemKind::Regression ? c.regression.n + c.regression.m : c.M;
  if (c.batch_size > population)
    throw ConfigError("config field 'batch_size' exceeds the dataset size " + std::to_string(population));
  if (c.problem == ProblemKind::Regression && (c.regression.p == 0 || c.regression.n == 0))
    throw ConfigError("config fields 'p' and 'n' must be positive");
  if (c.problem != ProblemKind::Regression && (c.M == 0 || c.d == 0))
    throw ConfigError("config fields 'M' and 'd' must be positive");
  if (c.problem == ProblemKind::Quadratic && !(c.cond_max >= 1.0))
    throw ConfigError("config field 'cond_max' must be >= 1");
  return c;
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("config file " + path.string() + " is not valid JSON: " + e.what());
  }
  return parse_config(j);
}

/// Fully resolved config as flat JSON; parse_config(to_json(c)) reproduces c.
inline nlohmann::json to_json(const ExperimentConfig& c) {
  nlohmann::json j;
  j["problem"] = std::string(to_string(c.problem));
  j["seed"] = c.seed;
  j["p"] = c.regression.p;
  j["n"] = c.regression.n;
  j["m"] = c.regression.m;
  j["noise_c"] = c.regression.noise_c;
  j["test_size"] = c.regression.test_size;
  j["M"] = c.M;
  j["d"] = c.d;
  j["cond_max"] = c.cond_max;
  j["strategy"] = std::string(to_string(c.reweight.strategy));
  j["alpha"] = c.reweight.alpha;
  const auto& s = c.reweight.schedule;
  j["r_schedule"] = s.kind == TemperatureSchedule::Kind::Constant ? "constant" : "step_drop";
  j["r"] = s.r_initial;
  j["r_final"] = s.r_final;
  j["warmup_steps"] = s.warmup_steps;
  j["cap"] = c.reweight.cap ? nlohmann::json(*c.reweight.cap) : nlohmann::json(nullptr);
  j["lr_rule"] = std::string(to_string(c.stepsize.kind));
  j["lr"] = c.stepsize.eta;
  j["L"] = c.stepsize.L;
  j["horizon_T"] = c.stepsize.horizon_T;
  j["batch_size"] = c.batch_size;
  j["steps"] = c.steps;
  j["momentum"] = c.momentum;
  std::vector<std::string> strategies;
  for (auto st : c.sweep_strategies) strategies.emplace_back(to_string(st));
  j["strategies"] = strategies;
  j["r_values"] = c.sweep_r;
  j["seeds"] = c.sweep_seeds;
  return j;
}

// ---------------------------------------------------------------------------
// CSV

namespace csv {

inline std::string number(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline std::string cell(const std::optional<double>& v) { return v ? number(*v) : std::string(); }

/// RFC 4180 quoting for free-form text.
inline std::string text(const std::string& s) {
  if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out += '"';
    out += ch;
  }
  return out + '"';
}

inline constexpr const char* kEol = "\r\n";

}  // namespace csv

inline constexpr const char* kTrajectoryHeader =
    "step,train_loss,test_loss,r,w_max,w_min,delta_t,mu_t,grad_gap,theta_dist_sq,delta_t_proxy";

inline void write_trajectory_csv(std::ostream& os, const Trajectory& traj) {
  os << kTrajectoryHeader << csv::kEol;
  for (const auto& r : traj.rows) {
    os << r.step << ',' << csv::number(r.train_loss) << ',' << csv::cell(r.test_loss) << ','
       << csv::cell(r.r_value) << ',' << csv::cell(r.w_max) << ',' << csv::cell(r.w_min) << ','
       << csv::cell(r.delta_t) << ',' << csv::cell(r.mu_t) << ',' << csv::cell(r.grad_gap) << ','
       << csv::cell(r.theta_dist_sq) << ',' << csv::cell(r.delta_t_proxy) << csv::kEol;
  }
}

// ---------------------------------------------------------------------------
// Runs

using AnyProblem = std::variant<RegressionProblem, QuadraticProblem, NonconvexProblem>;

inline AnyProblem make_problem(const ExperimentConfig& c) {
  switch (c.problem) {
    case ProblemKind::Regression:
      return RegressionProblem(gen_regression(c.regression, c.seed));
    case ProblemKind::Quadratic:
      return QuadraticProblem(gen_quadratic_suite(c.M, c.d, c.cond_max, c.seed));
    case ProblemKind::Nonconvex:
      return NonconvexProblem(gen_nonconvex(c.M, c.d, c.regression.noise_c, c.seed));
  }
  throw ConfigError("unknown problem kind");
}

/// Sampler stream derived from the run seed, distinct from the data stream.
inline std::uint64_t sampler_seed(std::uint64_t seed) { return seed ^ 0x9E3779B97F4A7C15ull; }

inline Trajectory run_experiment(const ExperimentConfig& c, const AnyProblem& problem,
                                 bool record_thetas = false) {
  TrainingOptions opts;
  opts.batch_size = c.batch_size;
  opts.steps = c.steps;
  opts.seed = sampler_seed(c.seed);
  opts.momentum = c.momentum;
  opts.record_thetas = record_thetas;
  return std::visit([&](const auto& p) { return run_training(p, c.reweight, c.stepsize, opts); },
                    problem);
}

inline Trajectory run_experiment(const ExperimentConfig& c, bool record_thetas = false) {
  return run_experiment(c, make_problem(c), record_thetas);
}

inline void write_metadata(const std::filesystem::path& path, const ExperimentConfig& c,
                           const nlohmann::json& extra) {
  nlohmann::json meta;
  meta["config"] = to_json(c);
  meta["seed"] = c.seed;
  for (const auto& [k, v] : extra.items()) meta[k] = v;
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << meta.dump(2) << '\n';
}

inline std::filesystem::path metadata_path(const std::filesystem::path& out) {
  return std::filesystem::path(out.string() + ".meta.json");
}

inline nlohmann::json run_summary(const Trajectory& t) {
  nlohmann::json j;
  j["status"] = std::string(to_string(t.status()));
  j["eta"] = t.eta;
  j["rows"] = t.rows.size();
  j["divergence_step"] = t.divergence_step ? nlohmann::json(*t.divergence_step) : nlohmann::json(nullptr);
  return j;
}

/// Exit status of `run`: 0 converged, 3 otherwise (diverged, unstable or stalled).
inline constexpr int kExitNotConverged = 3;

inline int cmd_gen_data(const ExperimentConfig& c, const std::filesystem::path& out_path,
                        std::ostream& log) {
  if (c.problem != ProblemKind::Regression)
    throw ConfigError("config field 'problem': gen-data supports the regression problem only");
  const RegressionDataset ds = gen_regression(c.regression, c.seed);
  std::ofstream out(out_path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + out_path.string());
  write_dataset_csv(out, ds);
  out.close();
  if (!out) throw std::runtime_error("failed writing " + out_path.string());
  write_metadata(metadata_path(out_path), c, {{"rows", ds.rows()}, {"columns", ds.features() + 2}});
  log << "wrote " << ds.rows() << " rows x " << ds.features() + 2 << " columns (" << ds.features()
      << " features, y, is_outlier) to " << out_path.string() << " with seed " << c.seed << '\n';
  return 0;
}

inline int cmd_run(const ExperimentConfig& c, const std::filesystem::path& out_path, std::ostream& log) {
  const Trajectory traj = run_experiment(c);
  std::ofstream out(out_path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + out_path.string());
  write_trajectory_csv(out, traj);
  out.close();
  write_metadata(metadata_path(out_path), c, run_summary(traj));
  log << to_string(c.reweight.strategy) << ": " << to_string(traj.status()) << " after "
      << traj.rows.size() - 1 << " steps, final train loss " << csv::number(traj.final_loss());
  if (traj.rows.back().test_loss) log << ", test loss " << csv::number(*traj.rows.back().test_loss);
  log << '\n';
  return traj.status() == RunStatus::Converged ? 0 : kExitNotConverged;
}

struct SweepCell {
  Strategy strategy = Strategy::Uniform;
  double r = 1.0;
  std::uint64_t seed = 0;
  std::string status;
  std::optional<double> final_test_loss;
  std::optional<double> auc;
  std::optional<double> final_train_loss;
  std::optional<double> max_w_max;
  std::string error;

  std::string file_stem() const {
    return std::string(to_string(strategy)) + "_r" + csv::number(r) + "_s" + std::to_string(seed);
  }
};

/// Area under the loss curve (test loss when available, else train loss), trapezoidal in steps.
inline double loss_auc(const Trajectory& t) {
  double acc = 0.0;
  for (std::size_t i = 1; i < t.rows.size(); ++i) {
    const auto& a = t.rows[i - 1];
    const auto& b = t.rows[i];
    const double va = a.test_loss.value_or(a.train_loss);
    const double vb = b.test_loss.value_or(b.train_loss);
    acc += 0.5 * (va + vb) * static_cast<double>(b.step - a.step);
  }
  return acc;
}

inline std::vector<SweepCell> sweep_cells(const ExperimentConfig& c) {
  const auto strategies = c.sweep_strategies.empty() ? std::vector<Strategy>{c.reweight.strategy}
                                                     : c.sweep_strategies;
  const auto rs = c.sweep_r.empty() ? std::vector<double>{c.reweight.schedule.r_initial} : c.sweep_r;
  const auto seeds = c.sweep_seeds.empty() ? std::vector<std::uint64_t>{c.seed} : c.sweep_seeds;
  std::vector<SweepCell> cells;
  for (auto s : strategies)
    for (double r : rs)
      for (auto seed : seeds) {
        SweepCell cell;
        cell.strategy = s;
        cell.r = r;
        cell.seed = seed;
        cells.push_back(std::move(cell));
      }
  return cells;
}

inline ExperimentConfig cell_config(const ExperimentConfig& base, const SweepCell& cell) {
  ExperimentConfig c = base;
  c.reweight.strategy = cell.strategy;
  c.reweight.schedule.r_initial = cell.r;
  if (c.reweight.schedule.kind == TemperatureSchedule::Kind::Constant) c.reweight.schedule.r_final = cell.r;
  c.seed = cell.seed;
  c.sweep_strategies.clear();
  c.sweep_r.clear();
  c.sweep_seeds.clear();
  return c;
}

/**
 * Run every strategy x r x seed cell, each writing its own trajectory and
 * metadata under `out_dir/cells/`, then write `summary.csv` (one row per cell)
 * and `summary_mean.csv` (one row per strategy x r). Failing cells are
 * recorded and the sweep continues.
 */
inline int cmd_sweep(const ExperimentConfig& base, const std::filesystem::path& out_dir,
                     unsigned threads, std::ostream& log) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir / "cells");
  std::vector<SweepCell> cells = sweep_cells(base);

  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    for (std::size_t i = next++; i < cells.size(); i = next++) {
      SweepCell& cell = cells[i];
      try {
        const ExperimentConfig c = cell_config(base, cell);
        const Trajectory traj = run_experiment(c);
        const fs::path csv_path = out_dir / "cells" / (cell.file_stem() + ".csv");
        std::ofstream out(csv_path, std::ios::binary);
        if (!out) throw std::runtime_error("cannot write " + csv_path.string());
        write_trajectory_csv(out, traj);
        write_metadata(metadata_path(csv_path), c, run_summary(traj));
        cell.status = std::string(to_string(traj.status()));
        cell.final_train_loss = traj.final_loss();
        cell.final_test_loss = traj.rows.back().test_loss;
        cell.auc = loss_auc(traj);
        double wmax = 0.0;
        for (const auto& r : traj.rows) wmax = std::max(wmax, r.w_max.value_or(0.0));
        cell.max_w_max = wmax;
      } catch (const std::exception& e) {
        cell.status = "error";
        cell.error = e.what();
      }
    }
  };
  const unsigned n = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(cells.size())));
  std::vector<std::thread> pool;
  for (unsigned t = 1; t < n; ++t) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();

  std::ofstream summary(out_dir / "summary.csv", std::ios::binary);
  summary << "strategy,r,seed,status,final_test_loss,auc_loss,final_train_loss,max_w_max,error" << csv::kEol;
  for (const auto& cell : cells) {
    summary << to_string(cell.strategy) << ',' << csv::number(cell.r) << ',' << cell.seed << ','
            << cell.status << ',' << csv::cell(cell.final_test_loss) << ',' << csv::cell(cell.auc) << ','
            << csv::cell(cell.final_train_loss) << ',' << csv::cell(cell.max_w_max) << ','
            << csv::text(cell.error) << csv::kEol;
  }

  struct Agg {
    std::size_t cells = 0, converged = 0, failed = 0;
    double test = 0.0, auc = 0.0;
    std::size_t with_test = 0;
  };
  std::vector<std::pair<std::pair<Strategy, double>, Agg>> groups;
  for (const auto& cell : cells) {
    auto key = std::make_pair(cell.strategy, cell.r);
    auto it = std::find_if(groups.begin(), groups.end(), [&](const auto& g) { return g.first == key; });
    if (it == groups.end()) it = groups.insert(groups.end(), {key, Agg{}});
    Agg& a = it->second;
    ++a.cells;
    if (cell.status == "converged") ++a.converged;
    if (cell.status == "error") ++a.failed;
    if (cell.final_test_loss) {
      a.test += *cell.final_test_loss;
      ++a.with_test;
    }
    if (cell.auc) a.auc += *cell.auc;
  }
  std::ofstream means(out_dir / "summary_mean.csv", std::ios::binary);
  means << "strategy,r,cells,converged,failed,mean_final_test_loss,mean_auc_loss" << csv::kEol;
  for (const auto& [key, a] : groups) {
    const std::size_t ok = a.cells - a.failed;
    means << to_string(key.first) << ',' << csv::number(key.second) << ',' << a.cells << ','
          << a.converged << ',' << a.failed << ','
          << (a.with_test ? csv::number(a.test / static_cast<double>(a.with_test)) : std::string()) << ','
          << (ok ? csv::number(a.auc / static_cast<double>(ok)) : std::string()) << csv::kEol;
    log << std::left << std::setw(10) << to_string(key.first) << " r=" << csv::number(key.second)
        << "  converged " << a.converged << '/' << a.cells;
    if (a.with_test) log << "  mean final test loss " << csv::number(a.test / static_cast<double>(a.with_test));
    log << '\n';
  }
  write_metadata(out_dir / "sweep.meta.json", base, {{"cells", cells.size()}, {"threads", n}});

  std::size_t failed = 0;
  for (const auto& cell : cells) failed += cell.status == "error";
  return failed == 0 ? 0 : 1;
}

// ---------------------------------------------------------------------------
// verify

struct VerifyOptions {
  // Test fixture: negate the analytic regression gradient. Must make verify fail.
  bool inject_wrong_sign_gradient = false;
  std::uint64_t seed = 20240601;
};

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string tolerance;
  std::string detail;
};

namespace detail {

inline CheckResult check_prop1_agreement(std::mt19937_64& rng) {
  std::uniform_int_distribution<std::size_t> bdist(2, 8);
  std::uniform_real_distribution<double> gap(-1.0, 1.0), rdist(0.1, 10.0);
  double worst = 0.0, worst_kkt = 0.0;
  for (int k = 0; k < 200; ++k) {
    const std::size_t b = bdist(rng);
    std::vector<double> h(b);
    for (auto& v : h) v = gap(rng);
    const double r = rdist(rng);
    const double cap = 2.0 / static_cast<double>(b);
    const WeightVector fast = capped_optimal_weights(h, r, cap);
    const WeightVector slow = oracle::brute_force_optimal_weights(h, r, cap);
    for (std::size_t i = 0; i < b; ++i) worst = std::max(worst, std::abs(fast[i] - slow[i]));
    worst_kkt = std::max(worst_kkt, oracle::kkt_residual(h, slow, r, cap));
  }
  return {"capped-optimal weights vs projected-descent oracle (200 instances)",
          worst <= 1e-6 && worst_kkt <= 1e-6, "max-norm 1e-6, KKT 1e-6",
          "max diff " + csv::number(worst) + ", max KKT residual " + csv::number(worst_kkt)};
}

inline CheckResult check_unregularized_limit(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> gap(-1.0, 1.0);
  double worst = 0.0;
  for (std::size_t b = 2; b <= 12; ++b) {
    std::vector<double> h(b);
    for (auto& v : h) v = gap(rng);
    const WeightVector w = capped_optimal_weights(h, 1e-6, 2.0 / static_cast<double>(b));
    std::vector<std::size_t> order(b);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](auto x, auto y) { return h[x] > h[y]; });
    const double cap = 2.0 / static_cast<double>(b);
    for (std::size_t k = 0; k < b; ++k) {
      double expect = k < b / 2 ? cap : 0.0;
      if (b % 2 == 1 && k == b / 2) expect = 1.0 - static_cast<double>(b / 2) * cap;
      worst = std::max(worst, std::abs(w[order[k]] - expect));
    }
  }
  return {"unregularized limit r=1e-6: 2/b on the top half", worst <= 1e-3, "1e-3",
          "max deviation " + csv::number(worst)};
}

template <typename GradFn>
CheckResult check_gradients(const char* name, std::mt19937_64& rng, std::size_t dim, std::size_t x_dim,
                            GradFn analytic_and_loss) {
  std::normal_distribution<double> normal(0.0, 1.0);
  double worst = 0.0;
  for (int k = 0; k < 100; ++k) {
    Vector theta(static_cast<Eigen::Index>(dim)), x(static_cast<Eigen::Index>(x_dim));
    for (auto& v : theta) v = 0.5 * normal(rng);
    for (auto& v : x) v = normal(rng);
    const double y = normal(rng);
    auto [analytic, loss_fn] = analytic_and_loss(theta, x, y);
    const Vector fd = oracle::finite_diff_grad(loss_fn, theta, 1e-5);
    worst = std::max(worst, oracle::relative_error(analytic, fd));
  }
  return {name, worst <= 1e-5, "relative 1e-5", "max relative error " + csv::number(worst)};
}

inline CheckResult check_delta_sign(std::uint64_t seed) {
  const QuadraticProblem problem(gen_quadratic_suite(64, 16, 10.0, seed));
  double worst_reweighted = -INFINITY, worst_uniform = 0.0;
  for (Strategy s : {Strategy::CappedOptimal, Strategy::LinUpper, Strategy::Uniform}) {
    ReweightConfig cfg{s, 1.0, TemperatureSchedule::constant(1.0), std::nullopt};
    TrainingOptions opts;
    opts.batch_size = 16;
    opts.steps = 500;
    opts.seed = seed;
    const Trajectory t = run_training(problem, cfg, StepSizeRule::convex_theory(), opts);
    for (const auto& r : t.rows) {
      if (!r.delta_t) continue;
      if (s == Strategy::Uniform) worst_uniform = std::max(worst_uniform, std::abs(*r.delta_t));
      else worst_reweighted = std::max(worst_reweighted, *r.delta_t);
    }
  }
  return {"delta_t sign on the interpolating quadratic suite (500 steps)",
          worst_reweighted <= 1e-12 && worst_uniform <= 1e-12, "1e-12",
          "max reweighted delta_t " + csv::number(worst_reweighted) + ", max uniform |delta_t| " +
              csv::number(worst_uniform)};
}

inline CheckResult check_cap(std::mt19937_64& rng) {
  std::uniform_int_distribution<std::size_t> bdist(1, 256);
  std::uniform_real_distribution<double> loss(0.0, 50.0), rdist(1e-3, 100.0);
  double worst = -INFINITY, worst_sum = 0.0;
  for (int k = 0; k < 1000; ++k) {
    const std::size_t b = bdist(rng);
    std::vector<double> f(b);
    for (auto& v : f) v = loss(rng);
    ReweightConfig cfg{Strategy::CappedOptimal, 1.0, TemperatureSchedule::constant(rdist(rng)), std::nullopt};
    const WeightVector w = compute_batch_weights(f, cfg, 0);
    worst = std::max(worst, w.max() - 2.0 / static_cast<double>(b));
    worst_sum = std::max(worst_sum, std::abs(w.sum() - 1.0));
  }
  return {"cap 2/b enforced on 1000 random batches", worst <= 1e-12 && worst_sum <= 1e-9,
          "cap 1e-12, simplex 1e-9",
          "max excess " + csv::number(worst) + ", max |sum-1| " + csv::number(worst_sum)};
}

}  // namespace detail

inline std::vector<CheckResult> run_verification(const VerifyOptions& opts = {}) {
  std::mt19937_64 rng(opts.seed);
  std::vector<CheckResult> out;
  out.push_back(detail::check_prop1_agreement(rng));
  out.push_back(detail::check_unregularized_limit(rng));
  const double sign = opts.inject_wrong_sign_gradient ? -1.0 : 1.0;
  out.push_back(detail::check_gradients("regression gradient vs central differences", rng, 9, 8,
      [sign](const Vector& theta, const Vector& x, double y) {
        const Eigen::Index p = x.size();
        const LossGrad lg = regression_loss_grad(theta.head(p), theta(p), x, y);
        auto fn = [x, y, p](const Vector& t) { return regression_loss_grad(t.head(p), t(p), x, y).loss; };
        return std::make_pair(Vector(sign * lg.grad), std::function<double(const Vector&)>(fn));
      }));
  out.push_back(detail::check_gradients("non-convex gradient vs central differences", rng, 8, 8,
      [](const Vector& theta, const Vector& x, double noise) {
        // Keep the residual O(1): far out the gradient underflows and a relative test is meaningless.
        const double y = x.dot(theta) + 0.5 * noise;
        const LossGrad lg = nonconvex_loss_grad(theta, x, y);
        auto fn = [x, y](const Vector& t) { return nonconvex_loss_grad(t, x, y).loss; };
        return std::make_pair(lg.grad, std::function<double(const Vector&)>(fn));
      }));
  out.push_back(detail::check_delta_sign(opts.seed));
  out.push_back(detail::check_cap(rng));
  return out;
}

inline int cmd_verify(std::ostream& log, const VerifyOptions& opts = {}) {
  const auto results = run_verification(opts);
  std::size_t failed = 0;
  for (const auto& r : results) {
    log << (r.passed ? "[PASS] " : "[FAIL] ") << r.name << " | tolerance " << r.tolerance << " | "
        << r.detail << '\n';
    failed += !r.passed;
  }
  log << (results.size() - failed) << '/' << results.size() << " checks passed\n";
  return failed == 0 ? 0 : 1;
}

}  // namespace reweight

#endif  // REWEIGHT_EXPERIMENT_HPP
