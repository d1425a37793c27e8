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

// eifp: run, sweep, plot and inspect multi-robot avoidance scenarios.

#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "eifp/cli.hpp"

namespace
{

void add_override_flags(CLI::App & app, eifp::ScenarioOverrides & o)
{
  auto * g = app.add_option_group("overrides", "Replace scenario defaults");
  g->add_option("--dt", o.dt, "Time step (s)");
  g->add_option("--t-max", o.t_max, "Forecast horizon (s)");
  g->add_option("--cone-aperture", o.cone_aperture, "Reachability cone aperture (cm/s)");
  g->add_option("--radius", o.radius, "Robot radius (cm), all agents");
  g->add_option("--v-min", o.v_min, "Minimum speed (cm/s), all agents");
  g->add_option("--v-max", o.v_max, "Maximum speed (cm/s), all agents");
  g->add_option("--omega-min", o.omega_min, "Minimum turn rate (rad/s), all agents");
  g->add_option("--omega-max", o.omega_max, "Maximum turn rate (rad/s), all agents");
  g->add_option("--safety-margin", o.safety_margin, "Safety margin (cm), all agents");
  g->add_option("--w-g", o.w_g, "Path length weight");
  g->add_option("--w-d", o.w_d, "Ghost distance weight");
  g->add_option("--w-a", o.w_a, "Ghost angle weight");
  g->add_option("--epsilon", o.epsilon, "Distance floor in the cost (cm)");
  g->add_option("--horizon", o.horizon, "MPC horizon (steps)");
  g->add_option("--q", o.q_weights, "MPC state weights: x y heading");
  g->add_option("--r", o.r_weights, "MPC input weights: v omega");
  g->add_option("--max-iterations", o.max_iterations, "MPC iteration cap");
  g->add_option("--convergence-tol", o.convergence_tol, "MPC relative cost decrease to stop");
  g->add_option("--clearance", o.obstacle_clearance, "MPC obstacle clearance (cm)");
  g->add_option("--mpc-obstacles", o.obstacle_constraints, "Enforce obstacle clearance inside the MPC (true/false)");
  g->add_option("--max-vias", o.max_vias, "Via-points per planning cycle");
  g->add_option("--ghost-window", o.ghost_window, "Ghost linearity window (steps)");
  g->add_option("--ghost-horizon", o.ghost_horizon, "Ghost extrapolation horizon (s)");
  g->add_option("--d-thresh", o.d_thresh, "Collision threshold (cm)");
  g->add_option("--heading-gain", o.heading_gain, "eIFP heading gain");
  g->add_option("--lookahead", o.lookahead_steps, "eIFP lookahead (strides)");
  g->add_option("--safety-guard", o.safety_guard, "Speed guard against neighbours (true/false)");
  g->add_option("--max-steps", o.max_steps, "Step limit per run");
  g->add_option("--goal-tolerance", o.goal_tolerance, "Arrival radius (cm)");
}

}  // namespace

int main(int argc, char ** argv)
{
  CLI::App app{"Decentralized multi-robot collision avoidance with via-point planning and MPC tracking"};
  app.require_subcommand(1);

  eifp::RunManifest manifest;
  std::string mode_text;
  bool no_timing = false;

  auto * run = app.add_subcommand("run", "Run one scenario for several seeds");
  run->add_option("-s,--scenario", manifest.scenario, "Builtin setup A-G or a scenario file")->required();
  run->add_option("-m,--mode", mode_text, "eIFP or eIFP-MPC (default: the scenario's)");
  run->add_option("-n,--reps", manifest.repetitions, "Repetitions");
  run->add_option("--seed", manifest.seed_base, "Seed of the first repetition");
  run->add_option("-o,--out", manifest.output_dir, "Output directory");
  run->add_option("-j,--jobs", manifest.jobs, "Parallel runs");
  run->add_flag("--no-timing", no_timing, "Record planning time as 0 (bit-reproducible logs)");
  add_override_flags(*run, manifest.overrides);

  std::vector<std::string> sweep_tags{"A", "B", "C", "D", "E", "F", "G"};
  std::vector<std::string> sweep_modes{"eIFP", "eIFP-MPC"};
  eifp::RunManifest sweep_manifest;
  bool sweep_no_timing = false;
  sweep_manifest.repetitions = 10;
  auto * sweep = app.add_subcommand("sweep", "Run setups x modes and write one combined table");
  sweep->add_option("-t,--tags", sweep_tags, "Builtin setups or scenario files");
  sweep->add_option("-m,--modes", sweep_modes, "Control modes");
  sweep->add_option("-n,--reps", sweep_manifest.repetitions, "Repetitions per cell");
  sweep->add_option("--seed", sweep_manifest.seed_base, "Seed of the first repetition");
  sweep->add_option("-o,--out", sweep_manifest.output_dir, "Output directory");
  sweep->add_option("-j,--jobs", sweep_manifest.jobs, "Parallel runs per cell");
  sweep->add_flag("--no-timing", sweep_no_timing, "Record planning time as 0");
  add_override_flags(*sweep, sweep_manifest.overrides);

  std::string plot_log, plot_out, plot_scenario;
  auto * plot = app.add_subcommand("plot", "Render a trajectory log as SVG");
  plot->add_option("log", plot_log, "Trajectory log")->required();
  plot->add_option("output", plot_out, "SVG file to write")->required();
  plot->add_option("--scenario", plot_scenario, "Scenario file for goals and radii");

  std::string metrics_dir;
  auto * metrics = app.add_subcommand("metrics", "Recompute the metrics row of a run directory from its logs");
  metrics->add_option("dir", metrics_dir, "Output directory of a run")->required();

  std::string export_tag, export_path;
  std::uint64_t export_seed = 0;
  auto * exp = app.add_subcommand("export", "Write a builtin setup as a scenario file");
  exp->add_option("tag", export_tag, "Builtin setup A-G")->required();
  exp->add_option("output", export_path, "Scenario file to write")->required();
  exp->add_option("--seed", export_seed, "Layout seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError & e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : eifp::exit_code::kUsage;
  }

  try {
    if (*run) {
      if (!mode_text.empty()) {
        manifest.control_mode = eifp::parse_control_mode(mode_text);
      }
      manifest.measure_time = !no_timing;
      return eifp::cmd_run(manifest, std::cerr);
    }
    if (*sweep) {
      std::vector<eifp::ControlMode> modes;
      for (const auto & m : sweep_modes) {
        modes.push_back(eifp::parse_control_mode(m));
      }
      sweep_manifest.measure_time = !sweep_no_timing;
      const int status = eifp::cmd_sweep(sweep_tags, modes, sweep_manifest, std::cerr);
      std::ifstream table(sweep_manifest.output_dir / "table.csv");
      if (status != eifp::exit_code::kUsage && table) {
        std::cout << table.rdbuf();
      }
      return status;
    }
    if (*plot) {
      return eifp::cmd_plot(plot_log, plot_out, plot_scenario, std::cerr);
    }
    if (*metrics) {
      return eifp::cmd_metrics(metrics_dir, std::cout, std::cerr);
    }
    if (*exp) {
      return eifp::cmd_export(export_tag, export_seed, export_path, std::cerr);
    }
  } catch (const eifp::ConfigError & e) {
    std::cerr << "error: " << e.what() << "\n";
    return eifp::exit_code::kUsage;
  }
  return eifp::exit_code::kUsage;
}
