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


// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// nonzero if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <unistd.h>
#include <vector>

#include "eifp/cli.hpp"
#include "oracles.hpp"

namespace
{

using eifp::ControlMode;

constexpr int kSeeds = 10;
const std::string kTags = "ABCDEFG";
const ControlMode kModes[] = {ControlMode::kEifp, ControlMode::kEifpMpc};

struct Cell
{
  std::vector<eifp::ScenarioConfig> scenarios;
  std::vector<eifp::SimRecord> records;
  eifp::RunMetrics metrics;
};

using Key = std::pair<char, ControlMode>;

int failures = 0;

void report(int id, bool pass, const std::string & name, const std::string & detail)
{
  std::printf("%s %2d %-22s %s\n", pass ? "PASS" : "FAIL", id, name.c_str(), detail.c_str());
  std::fflush(stdout);
  failures += pass ? 0 : 1;
}

std::string fmt(double x)
{
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.4g", x);
  return buf;
}

eifp::ScenarioConfig scenario_for(char tag, ControlMode mode, std::uint64_t seed)
{
  auto s = eifp::builtin_scenario(tag, seed);
  s.control_mode = mode;
  return s;
}

std::map<Key, Cell> run_all()
{
  std::map<Key, Cell> cells;
  for (const char tag : kTags) {
    for (const auto mode : kModes) {
      Cell & c = cells[{tag, mode}];
      for (int seed = 0; seed < kSeeds; ++seed) {
        c.scenarios.push_back(scenario_for(tag, mode, static_cast<std::uint64_t>(seed)));
        c.records.push_back(eifp::run(c.scenarios.back(), false));
      }
      c.metrics = eifp::aggregate(c.records, c.scenarios.front());
    }
  }
  return cells;
}

void criterion_safety(const std::map<Key, Cell> & cells)
{
  int collisions = 0;
  int unreached = 0;
  std::string where;
  for (const auto & [key, c] : cells) {
    for (const auto & r : c.records) {
      const int miss = static_cast<int>(std::count(r.reached.begin(), r.reached.end(), false));
      collisions += static_cast<int>(r.collisions.size());
      unreached += miss;
      if ((miss > 0 || !r.collisions.empty()) && where.empty()) {
        where = std::string(" first at ") + key.first + " " + eifp::to_string(key.second) + " seed " +
                std::to_string(r.seed);
      }
    }
  }
  report(1, collisions == 0 && unreached == 0, "safety",
         std::to_string(cells.size() * kSeeds) + " runs, " + std::to_string(collisions) + " collision events, " +
           std::to_string(unreached) + " agents short of goal" + where);
}

void criterion_setup_a(const std::map<Key, Cell> & cells)
{
  const double e = cells.at({'A', ControlMode::kEifp}).metrics.avg_oscillations;
  const double m = cells.at({'A', ControlMode::kEifpMpc}).metrics.avg_oscillations;
  report(2, e == 0.0 && m == 0.0, "setup A oscillations", "eIFP " + fmt(e) + ", eIFP-MPC " + fmt(m));
}

template <typename Pred>
void trend(int id, const std::string & name, const std::map<Key, Cell> & cells, const std::string & tags,
           double eifp::RunMetrics::*field, Pred ok, const std::string & relation)
{
  bool pass = true;
  std::string detail;
  for (const char tag : tags) {
    const double e = cells.at({tag, ControlMode::kEifp}).metrics.*field;
    const double m = cells.at({tag, ControlMode::kEifpMpc}).metrics.*field;
    const bool cell_ok = std::isfinite(e) && std::isfinite(m) && ok(m, e);
    pass = pass && cell_ok;
    detail += std::string(detail.empty() ? "" : "; ") + tag + ": " + fmt(m) + relation + fmt(e) +
              (cell_ok ? "" : " (violated)");
  }
  report(id, pass, name, "eIFP-MPC vs eIFP, " + detail);
}

void criterion_cpa()
{
  std::mt19937_64 rng(1001);
  int fails = 0;
  int approaching = 0;
  for (int i = 0; i < 10000; ++i) {
    const auto [a, b] = eifp::oracle::random_cpa_pair(rng, i);
    const auto r = eifp::compute_cpa(a, b);
    approaching += r.tcpa > 0.0;
    fails += eifp::oracle::check_cpa(a, b, r) != eifp::oracle::CpaVerdict::kPass;
  }
  report(6, fails == 0, "CPA oracle",
         "10000 pairs (" + std::to_string(approaching) + " approaching), " + std::to_string(fails) + " mismatches");
}

void criterion_geometry()
{
  std::mt19937_64 rng(1002);
  std::uniform_real_distribution<double> pos(-50.0, 50.0), unit(0.0, 1.0);
  int tangent_fails = 0;
  double worst_radial = 0.0, worst_angle = 0.0;
  for (int i = 0; i < 10000; ++i) {
    const eifp::Vec2 robot{pos(rng), pos(rng)};
    const double l = 0.1 + 10.0 * unit(rng);
    const double q = l * (1.001 + 20.0 * unit(rng));
    const eifp::Vec2 center = robot + eifp::unit_from_angle(7.0 * unit(rng)) * q;
    const auto t = eifp::tangent_points(robot, center, l);
    for (const auto & s : {t.s1, t.s2}) {
      const auto e = eifp::oracle::tangency_error(robot, center, l, s);
      worst_radial = std::max(worst_radial, e.radial / t.q);
      worst_angle = std::max(worst_angle, e.angle);
      tangent_fails += e.radial > 1e-9 * t.q || e.angle > 1e-9;
    }
  }
  int cone_fails = 0;
  double worst_lambda = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const auto c = eifp::oracle::random_cone_instance(rng);
    const auto got = eifp::cone_line_intersection(c.apex, c.aperture, c.origin, c.dir);
    const auto want = eifp::oracle::bisect_cone(c.apex, c.aperture, c.origin, c.dir, 21.0);
    if (!got || !want) {
      ++cone_fails;
      continue;
    }
    worst_lambda = std::max(worst_lambda, std::abs(*got - *want));
    cone_fails += std::abs(*got - *want) > 1e-8;
  }
  report(7, tangent_fails == 0 && cone_fails == 0, "geometry",
         "10000 tangents, worst radial " + fmt(worst_radial) + " Q, worst angle " + fmt(worst_angle) +
           " rad; 1000 cone lines, worst |dlambda| " + fmt(worst_lambda) + ", " +
           std::to_string(tangent_fails + cone_fails) + " failures");
}

void criterion_spline()
{
  std::mt19937_64 rng(1003);
  double worst_interp = 0.0, worst_c1 = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const auto w = eifp::oracle::random_waypoints(rng);
    const auto c = eifp::oracle::check_spline(eifp::fit_spline(w), w);
    worst_interp = std::max(worst_interp, c.interpolation);
    worst_c1 = std::max(worst_c1, c.c1_relative);
  }
  report(8, worst_interp <= 1e-9 && worst_c1 <= 1e-4, "spline",
         "1000 sets, worst knot miss " + fmt(worst_interp) + " cm, worst C1 mismatch " + fmt(worst_c1));
}

void criterion_mpc(const std::map<Key, Cell> & cells)
{
  // Bounds and descent over every step of every scenario run.
  long controls = 0, out_of_box = 0, solves = 0, ascents = 0;
  for (const auto & [key, c] : cells) {
    for (std::size_t r = 0; r < c.records.size(); ++r) {
      const auto & rec = c.records[r];
      for (std::size_t k = 0; k < rec.controls.size(); ++k) {
        for (std::size_t i = 0; i < rec.controls[k].size(); ++i) {
          const auto & p = c.scenarios[r].agents[i].params;
          const auto & u = rec.controls[k][i];
          ++controls;
          out_of_box += !(u.v >= p.v_min && u.v <= p.v_max && u.omega >= p.omega_min && u.omega <= p.omega_max);
          const auto & d = rec.diagnostics[k][i];
          if (d.mpc_cost) {
            ++solves;
            ascents += !d.mpc_zero_cost || !(*d.mpc_cost <= *d.mpc_zero_cost);
          }
        }
      }
    }
  }

  // Rollout consistency on random solves.
  std::mt19937_64 rng(1004);
  std::uniform_real_distribution<double> pos(-5.0, 5.0), ang(-3.0, 3.0), unit(0.0, 1.0);
  eifp::MpcConfig cfg;
  eifp::AgentParams params;
  int rollout_mismatch = 0;
  for (int i = 0; i < 500; ++i) {
    const eifp::RobotState x0{{pos(rng), pos(rng)}, ang(rng)};
    std::vector<eifp::ReferencePose> refs;
    eifp::Vec2 p = x0.position;
    double h = ang(rng);
    for (int k = 0; k < cfg.horizon; ++k) {
      h += 0.4 * (unit(rng) - 0.5);
      p += eifp::unit_from_angle(h) * (2.0 * unit(rng));
      refs.push_back({p, eifp::wrap_angle(h)});
    }
    const auto sol = eifp::solve_mpc(x0, refs, cfg, params, 1.0);
    rollout_mismatch += eifp::rollout(x0, sol.controls, 1.0) != sol.predicted_states;
    for (const auto & u : sol.controls) {
      ++controls;
      out_of_box += !(u.v >= params.v_min && u.v <= params.v_max && u.omega >= params.omega_min &&
                      u.omega <= params.omega_max);
    }
  }

  // Closed-loop tracking of a 50 cm straight line from an on-path start.
  const double dir = std::atan2(4.0, 3.0);
  const std::vector<eifp::Vec2> w{{0, 0}, {30, 40}};
  const auto traj = eifp::fit_spline(w);
  eifp::RobotState x{{0, 0}, dir};
  std::vector<eifp::ControlInput> warm;
  double lateral = 0.0;
  for (int k = 0; k < 45; ++k) {
    const auto refs = eifp::sample_reference(traj, params.v_max, 1.0, cfg.horizon, traj.project(x.position));
    const auto sol = eifp::solve_mpc(x, refs, cfg, params, 1.0, {}, warm);
    x = eifp::unicycle_step(x, eifp::apply_first(sol), 1.0);
    warm = eifp::shift_controls(sol.controls);
    if (k + 1 >= 5) {
      lateral = std::max(lateral, std::abs(eifp::unit_from_angle(dir).cross(x.position)));
    }
  }

  const bool pass = out_of_box == 0 && rollout_mismatch == 0 && lateral < 0.1 && ascents == 0 && solves > 0;
  report(9, pass, "MPC",
         std::to_string(controls) + " controls, " + std::to_string(out_of_box) + " out of bounds; " +
           std::to_string(rollout_mismatch) + "/500 rollout mismatches; lateral error " + fmt(lateral) +
           " cm; " + std::to_string(ascents) + "/" + std::to_string(solves) + " solves above the zero-control cost");
}

std::string read_file(const std::filesystem::path & p)
{
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void criterion_determinism(const std::map<Key, Cell> & cells)
{
  // Every scenario run again, four at a time, against the sequential pass.
  std::vector<const eifp::ScenarioConfig *> jobs;
  std::vector<const eifp::SimRecord *> first;
  for (const auto & [key, c] : cells) {
    for (std::size_t r = 0; r < c.records.size(); ++r) {
      jobs.push_back(&c.scenarios[r]);
      first.push_back(&c.records[r]);
    }
  }
  const auto again = eifp::parallel_map<std::string>(
    jobs.size(), 4, [&](std::size_t i) { return eifp::trajectory_log_string(eifp::run(*jobs[i], false)); });
  int differ = 0;
  for (std::size_t i = 0; i < jobs.size(); ++i) {
    differ += again[i] != eifp::trajectory_log_string(*first[i]);
  }

  // Batch files written with one and with four workers.
  namespace fs = std::filesystem;
  const fs::path root = fs::temp_directory_path() / ("eifp_acceptance_" + std::to_string(::getpid()));
  int file_differ = 0;
  int files = 0;
  for (const auto mode : kModes) {
    eifp::RunManifest m;
    m.scenario = "E";
    m.control_mode = mode;
    m.repetitions = 4;
    m.measure_time = false;
    m.jobs = 1;
    m.output_dir = root / "seq";
    eifp::run_batch(m);
    m.jobs = 4;
    m.output_dir = root / "par";
    eifp::run_batch(m);
    for (const auto & entry : fs::recursive_directory_iterator(root / "seq")) {
      if (entry.is_regular_file()) {
        ++files;
        file_differ += read_file(entry.path()) != read_file(root / "par" / fs::relative(entry.path(), root / "seq"));
      }
    }
    fs::remove_all(root);
  }
  report(10, differ == 0 && file_differ == 0, "determinism",
         std::to_string(jobs.size()) + " logs rerun in parallel, " + std::to_string(differ) + " differ; " +
           std::to_string(files) + " batch files, " + std::to_string(file_differ) + " differ");
}

void criterion_selection()
{
  std::mt19937_64 rng(1005);
  int mismatch = 0;
  for (int i = 0; i < 10000; ++i) {
    const auto c = eifp::oracle::random_candidates(rng);
    const auto got = eifp::select_viapoint(c);
    const auto want = eifp::oracle::exhaustive_select(c);
    if (got.has_value() != want.has_value()) {
      ++mismatch;
    } else if (got && (got->point != want->point || got->total_cost != want->total_cost ||
                       got->lambda != want->lambda || got->source_obstacle != want->source_obstacle ||
                       got->side != want->side)) {
      ++mismatch;
    }
  }
  std::uniform_real_distribution<double> scale(1e-3, 1e3), unit(0.0, 1.0);
  int moved = 0;
  for (int i = 0; i < 10000; ++i) {
    const auto inst = eifp::oracle::random_scoring_instance(rng);
    const eifp::CostWeights w{unit(rng), unit(rng), unit(rng), 1e-6};
    const double k = scale(rng);
    const eifp::CostWeights ws{w.w_g * k, w.w_d * k, w.w_a * k, w.epsilon};
    std::vector<eifp::ViaCandidate> a, b;
    for (std::size_t j = 0; j < inst.points.size(); ++j) {
      eifp::ViaCandidate v;
      v.point = inst.points[j];
      v.lambda = inst.lambdas[j];
      v.total_cost = eifp::via_cost(v.point, inst.ego, inst.goal, inst.ghosts, w).total;
      a.push_back(v);
      v.total_cost = eifp::via_cost(v.point, inst.ego, inst.goal, inst.ghosts, ws).total;
      b.push_back(v);
    }
    moved += eifp::select_viapoint(a)->point != eifp::select_viapoint(b)->point;
  }
  report(11, mismatch == 0 && moved == 0, "selection oracle",
         "10000 sets, " + std::to_string(mismatch) + " differ from the exhaustive argmin; 10000 rescaled sets, " +
           std::to_string(moved) + " changed choice");
}

}  // namespace

int main()
{
  const auto t0 = std::chrono::steady_clock::now();
  const auto cells = run_all();
  criterion_safety(cells);
  criterion_setup_a(cells);
  trend(3, "oscillation trend", cells, "EFG", &eifp::RunMetrics::avg_oscillations,
        [](double m, double e) { return m < e; }, " < ");
  trend(4, "path length trend", cells, "AEFG", &eifp::RunMetrics::avg_path_length,
        [](double m, double e) { return m <= 1.03 * e; }, " <= 1.03 x ");
  trend(5, "time-to-goal trend", cells, "EFG", &eifp::RunMetrics::avg_time_to_goal,
        [](double m, double e) { return m >= e; }, " >= ");
  criterion_cpa();
  criterion_geometry();
  criterion_spline();
  criterion_mpc(cells);
  criterion_determinism(cells);
  criterion_selection();
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::printf("%d of 11 criteria failed (%.1f s)\n", failures, secs);
  return failures == 0 ? 0 : 1;
}
