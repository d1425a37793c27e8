// Copyright 2026 The eifp-mpc Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef EIFP__CLI_HPP_
#define EIFP__CLI_HPP_

#include <algorithm>
#include <array>
#include <atomic>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "eifp/io.hpp"
#include "eifp/metrics.hpp"
#include "eifp/sim.hpp"

namespace eifp
{

namespace exit_code
{
inline constexpr int kOk = 0;
inline constexpr int kRunFailed = 1;  // collision or an agent that never arrived
inline constexpr int kUsage = 2;      // bad arguments, unreadable input
}  // namespace exit_code

/// Optional replacements for scenario defaults. Agent-level fields apply to
/// every agent.
struct ScenarioOverrides
{
  std::optional<double> dt, t_max, cone_aperture;
  std::optional<double> radius, v_min, v_max, omega_min, omega_max, safety_margin;
  std::optional<double> w_g, w_d, w_a, epsilon;
  std::optional<int> horizon, max_iterations;
  std::optional<std::array<double, 3>> q_weights;
  std::optional<std::array<double, 2>> r_weights;
  std::optional<double> convergence_tol, obstacle_clearance;
  std::optional<bool> obstacle_constraints;
  std::optional<int> max_vias, ghost_window;
  std::optional<double> ghost_horizon, d_thresh, heading_gain, lookahead_steps;
  std::optional<bool> safety_guard;
  std::optional<int> max_steps;
  std::optional<double> goal_tolerance;
};

inline void apply_overrides(ScenarioConfig & s, const ScenarioOverrides & o)
{
  auto set = [](auto & field, const auto & value) {
    if (value) {
      field = *value;
    }
  };
  set(s.world.dt, o.dt);
  set(s.world.t_max, o.t_max);
  set(s.world.cone_aperture, o.cone_aperture);
  for (auto & a : s.agents) {
    set(a.params.radius, o.radius);
    set(a.params.v_min, o.v_min);
    set(a.params.v_max, o.v_max);
    set(a.params.omega_min, o.omega_min);
    set(a.params.omega_max, o.omega_max);
    set(a.params.safety_margin, o.safety_margin);
  }
  set(s.weights.w_g, o.w_g);
  set(s.weights.w_d, o.w_d);
  set(s.weights.w_a, o.w_a);
  set(s.weights.epsilon, o.epsilon);
  set(s.mpc.horizon, o.horizon);
  set(s.mpc.max_iterations, o.max_iterations);
  set(s.mpc.q_weights, o.q_weights);
  set(s.mpc.r_weights, o.r_weights);
  set(s.mpc.convergence_tol, o.convergence_tol);
  set(s.mpc.obstacle_clearance, o.obstacle_clearance);
  set(s.mpc.obstacle_constraints, o.obstacle_constraints);
  set(s.planner.max_vias, o.max_vias);
  set(s.planner.ghost_window, o.ghost_window);
  if (o.ghost_horizon) {
    s.planner.ghost_horizon = o.ghost_horizon;
  }
  if (o.d_thresh) {
    s.planner.d_thresh = o.d_thresh;
  }
  set(s.planner.heading_gain, o.heading_gain);
  set(s.planner.lookahead_steps, o.lookahead_steps);
  set(s.planner.safety_guard, o.safety_guard);
  set(s.max_steps, o.max_steps);
  set(s.goal_tolerance, o.goal_tolerance);
}

struct RunManifest
{
  std::string scenario;  // builtin tag "A".."G" or a scenario file path
  std::optional<ControlMode> control_mode;  // defaults to the scenario's own
  int repetitions{1};
  std::filesystem::path output_dir{"out"};
  std::uint64_t seed_base{0};
  ScenarioOverrides overrides;
  int jobs{1};
  bool measure_time{true};
};

inline bool is_builtin_tag(const std::string & text)
{
  return text.size() == 1 && text[0] >= 'A' && text[0] <= 'G';
}

/// Scenario of repetition `seed`. Builtin layouts are regenerated per seed;
/// files keep their layout and only take the seed.
inline ScenarioConfig resolve_scenario(const RunManifest & m, std::uint64_t seed)
{
  ScenarioConfig s = is_builtin_tag(m.scenario) ? builtin_scenario(m.scenario[0], seed)
                                                : load_scenario_file(m.scenario);
  s.seed = seed;
  if (m.control_mode) {
    s.control_mode = *m.control_mode;
  }
  apply_overrides(s, m.overrides);
  validate(s);
  return s;
}

/// Runs `count` independent tasks on up to `jobs` threads. Results land in
/// their own slots, so the output does not depend on scheduling.
template <typename Result, typename Fn>
std::vector<Result> parallel_map(std::size_t count, int jobs, Fn && fn)
{
  std::vector<Result> out(count);
  std::vector<std::exception_ptr> errors(count);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < count; i = next++) {
      try {
        out[i] = fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const auto threads = static_cast<std::size_t>(std::clamp(jobs, 1, 256));
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < std::min(threads, count); ++t) {
    pool.emplace_back(worker);
  }
  worker();
  for (auto & th : pool) {
    th.join();
  }
  for (const auto & e : errors) {
    if (e) {
      std::rethrow_exception(e);
    }
  }
  return out;
}

struct BatchResult
{
  std::vector<ScenarioConfig> scenarios;
  std::vector<SimRecord> records;
  RunMetrics metrics;
  bool ok{true};
};

inline std::string run_file_stem(std::uint64_t seed) { return "seed_" + std::to_string(seed); }

/// Runs the manifest and writes its artifacts:
///   scenario.json           scenario of the first repetition
///   runs/seed_<s>.csv       trajectory log of each repetition
///   runs/seed_<s>.json      scenario of each repetition
///   metrics.csv             one aggregated row
///   summary.json            per-run and aggregated results
inline BatchResult run_batch(const RunManifest & m)
{
  BatchResult b;
  for (int r = 0; r < m.repetitions; ++r) {
    b.scenarios.push_back(resolve_scenario(m, m.seed_base + static_cast<std::uint64_t>(r)));
  }
  b.records = parallel_map<SimRecord>(
    b.scenarios.size(), m.jobs, [&](std::size_t i) { return run(b.scenarios[i], m.measure_time); });
  b.metrics = aggregate(b.records, b.scenarios.front());
  b.ok = b.metrics.collision_count == 0 && b.metrics.all_reached;

  namespace fs = std::filesystem;
  fs::create_directories(m.output_dir / "runs");
  auto write = [](const fs::path & p, const std::string & text) {
    std::ofstream out(p, std::ios::binary);
    out << text;
    if (!out) {
      throw IoError("cannot write '" + p.string() + "'");
    }
  };
  write(m.output_dir / "scenario.json", scenario_to_json(b.scenarios.front()).dump(2) + "\n");
  nlohmann::json runs = nlohmann::json::array();
  for (std::size_t i = 0; i < b.records.size(); ++i) {
    const auto & rec = b.records[i];
    const std::string stem = run_file_stem(rec.seed);
    write(m.output_dir / "runs" / (stem + ".csv"), trajectory_log_string(rec));
    write(m.output_dir / "runs" / (stem + ".json"), scenario_to_json(b.scenarios[i]).dump(2) + "\n");
    const RunMetrics one = aggregate(std::span(&rec, 1), b.scenarios[i]);
    runs.push_back({
      {"seed", rec.seed},
      {"log", "runs/" + stem + ".csv"},
      {"scenario", "runs/" + stem + ".json"},
      {"steps", rec.steps()},
      {"metrics", metrics_json(one)},
    });
  }
  const ScenarioConfig & first = b.scenarios.front();
  write(m.output_dir / "metrics.csv",
        std::string(kMetricsHeader) + "\n" + metrics_row(first.control_mode, b.metrics) + "\n");
  const nlohmann::json summary = {
    {"scenario", first.name},
    {"control_strategy", to_string(first.control_mode)},
    {"repetitions", m.repetitions},
    {"seed_base", m.seed_base},
    {"timing", m.measure_time},
    {"runs", runs},
    {"metrics", metrics_json(b.metrics)},
    {"success", b.ok},
  };
  write(m.output_dir / "summary.json", summary.dump(2) + "\n");
  return b;
}

/// Exit status: 0 when every run is collision-free and every agent arrives,
/// 1 otherwise, 2 for unusable input (nothing is written in that case).
inline int cmd_run(const RunManifest & m, std::ostream & err)
{
  if (m.repetitions < 1) {
    err << "error: repetitions must be at least 1\n";
    return exit_code::kUsage;
  }
  if (m.jobs < 1) {
    err << "error: jobs must be at least 1\n";
    return exit_code::kUsage;
  }
  try {
    // Resolve every repetition up front so bad input leaves no files behind.
    for (int r = 0; r < m.repetitions; ++r) {
      (void)resolve_scenario(m, m.seed_base + static_cast<std::uint64_t>(r));
    }
  } catch (const std::exception & e) {
    err << "error: " << e.what() << "\n";
    return exit_code::kUsage;
  }
  try {
    const BatchResult b = run_batch(m);
    if (!b.ok) {
      err << "run failed: " << b.metrics.collision_count << " collision event(s), "
          << (b.metrics.all_reached ? "all agents arrived" : "some agents did not arrive") << "\n";
      return exit_code::kRunFailed;
    }
    return exit_code::kOk;
  } catch (const IoError & e) {
    err << "error: " << e.what() << "\n";
    return exit_code::kUsage;
  } catch (const std::filesystem::filesystem_error & e) {
    err << "error: " << e.what() << "\n";
    return exit_code::kUsage;
  }
}

/// Runs tags x modes into <output>/<tag>_<mode>/ and writes the combined
/// table to <output>/table.csv, one row per cell in (tag, mode) order.
inline int cmd_sweep(
  const std::vector<std::string> & tags, const std::vector<ControlMode> & modes, const RunManifest & base,
  std::ostream & err)
{
  if (tags.empty() || modes.empty()) {
    err << "error: sweep needs at least one scenario and one mode\n";
    return exit_code::kUsage;
  }
  if (base.repetitions < 1) {
    err << "error: repetitions must be at least 1\n";
    return exit_code::kUsage;
  }
  std::vector<RunManifest> cells;
  for (const auto & tag : tags) {
    for (const auto mode : modes) {
      RunManifest m = base;
      m.scenario = tag;
      m.control_mode = mode;
      std::string dir = (is_builtin_tag(tag) ? tag : std::filesystem::path(tag).stem().string()) + "_" + to_string(mode);
      m.output_dir = base.output_dir / dir;
      cells.push_back(m);
    }
  }
  for (const auto & c : cells) {
    try {
      (void)resolve_scenario(c, c.seed_base);
    } catch (const std::exception & e) {
      err << "error: " << c.scenario << ": " << e.what() << "\n";
      return exit_code::kUsage;
    }
  }
  std::ostringstream table;
  table << kMetricsHeader << "\n";
  int status = exit_code::kOk;
  for (const auto & c : cells) {
    try {
      const BatchResult b = run_batch(c);
      table << metrics_row(*c.control_mode, b.metrics) << "\n";
      if (!b.ok) {
        err << "cell " << c.scenario << " " << to_string(*c.control_mode) << " failed\n";
        status = std::max(status, exit_code::kRunFailed);
      }
    } catch (const std::exception & e) {
      err << "cell " << c.scenario << " " << to_string(*c.control_mode) << ": " << e.what() << "\n";
      status = exit_code::kUsage;
    }
  }
  std::filesystem::create_directories(base.output_dir);
  std::ofstream out(base.output_dir / "table.csv", std::ios::binary);
  out << table.str();
  if (!out) {
    err << "error: cannot write table\n";
    return exit_code::kUsage;
  }
  return status;
}

/// Renders a trajectory log to SVG. `scenario_path` (optional) supplies goals
/// and radii.
inline int cmd_plot(
  const std::string & log_path, const std::string & output_path, const std::string & scenario_path,
  std::ostream & err)
{
  std::ifstream in(log_path);
  if (!in) {
    err << "error: cannot open log '" << log_path << "'\n";
    return exit_code::kUsage;
  }
  try {
    const auto rows = parse_trajectory_log(in);
    std::optional<ScenarioConfig> scenario;
    if (!scenario_path.empty()) {
      scenario = load_scenario_file(scenario_path);
    }
    const std::string svg = render_svg(rows, scenario ? &*scenario : nullptr);
    std::ofstream out(output_path, std::ios::binary);
    out << svg;
    if (!out) {
      err << "error: cannot write '" << output_path << "'\n";
      return exit_code::kUsage;
    }
    return exit_code::kOk;
  } catch (const LogParseError & e) {
    err << "error: " << log_path << ": " << e.what() << "\n";
    return exit_code::kUsage;
  } catch (const std::exception & e) {
    err << "error: " << e.what() << "\n";
    return exit_code::kUsage;
  }
}

/// Recomputes the aggregated metrics of a run directory from its logs and
/// per-run scenarios alone.
inline RunMetrics metrics_from_run_dir(const std::filesystem::path & dir)
{
  std::ifstream sin(dir / "summary.json");
  if (!sin) {
    throw IoError("cannot open '" + (dir / "summary.json").string() + "'");
  }
  const auto summary = nlohmann::json::parse(sin);
  std::vector<SimRecord> records;
  std::optional<ScenarioConfig> first;
  for (const auto & r : summary.at("runs")) {
    const ScenarioConfig s = load_scenario_file((dir / r.at("scenario").get<std::string>()).string());
    std::ifstream lin(dir / r.at("log").get<std::string>());
    if (!lin) {
      throw IoError("cannot open log for seed " + std::to_string(r.at("seed").get<std::uint64_t>()));
    }
    records.push_back(record_from_log(parse_trajectory_log(lin), s));
    if (!first) {
      first = s;
    }
  }
  if (!first) {
    throw IoError("summary lists no runs");
  }
  return aggregate(records, *first);
}

/// Prints the metrics row recomputed from a run directory.
inline int cmd_metrics(const std::filesystem::path & dir, std::ostream & out, std::ostream & err)
{
  try {
    const RunMetrics m = metrics_from_run_dir(dir);
    std::ifstream sin(dir / "summary.json");
    const auto summary = nlohmann::json::parse(sin);
    const ControlMode mode = parse_control_mode(summary.at("control_strategy").get<std::string>());
    out << kMetricsHeader << "\n" << metrics_row(mode, m) << "\n";
    return exit_code::kOk;
  } catch (const std::exception & e) {
    err << "error: " << e.what() << "\n";
    return exit_code::kUsage;
  }
}

/// Writes a builtin layout as a scenario file.
inline int cmd_export(const std::string & tag, std::uint64_t seed, const std::string & path, std::ostream & err)
{
  if (!is_builtin_tag(tag)) {
    err << "error: unknown setup '" << tag << "'\n";
    return exit_code::kUsage;
  }
  std::ofstream out(path, std::ios::binary);
  out << scenario_to_json(builtin_scenario(tag[0], seed)).dump(2) << "\n";
  if (!out) {
    err << "error: cannot write '" << path << "'\n";
    return exit_code::kUsage;
  }
  return exit_code::kOk;
}

}  // namespace eifp

#endif  // EIFP__CLI_HPP_
