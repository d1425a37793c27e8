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

#ifndef EIFP__SIM_HPP_
#define EIFP__SIM_HPP_

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <deque>
#include <numbers>
#include <optional>
#include <random>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "eifp/core_model.hpp"
#include "eifp/mpc.hpp"
#include "eifp/threat.hpp"
#include "eifp/trajectory.hpp"
#include "eifp/viapoint.hpp"

namespace eifp
{

class ConfigError : public std::runtime_error
{
public:
  explicit ConfigError(const std::string & what) : std::runtime_error(what) {}
};

enum class ControlMode { kEifp, kEifpMpc };

inline std::string to_string(ControlMode mode) { return mode == ControlMode::kEifp ? "eIFP" : "eIFP-MPC"; }

inline ControlMode parse_control_mode(const std::string & text)
{
  if (text == "eIFP") {
    return ControlMode::kEifp;
  }
  if (text == "eIFP-MPC") {
    return ControlMode::kEifpMpc;
  }
  throw ConfigError("unknown control mode '" + text + "'");
}

struct AgentSpec
{
  AgentId id{0};
  Vec2 start;
  Vec2 goal;
  AgentParams params;
};

/// Knobs of the plan-smooth-track cycle that are not part of the cost.
struct PlannerOptions
{
  int max_vias{3};
  int ghost_window{10};
  std::optional<double> ghost_horizon;     // defaults to world.t_max
  std::optional<double> d_thresh;          // defaults to 5 r + d_safety of the ego
  double heading_gain{2.0};                // eIFP proportional heading gain
  double lookahead_steps{1.0};             // eIFP lookahead, in v_max * dt
  bool safety_guard{true};
};

struct ScenarioConfig
{
  std::string name;
  std::vector<AgentSpec> agents;
  WorldParams world;
  CostWeights weights;
  MpcConfig mpc;
  PlannerOptions planner;
  ControlMode control_mode{ControlMode::kEifpMpc};
  std::uint64_t seed{0};
  int max_steps{2000};
  double goal_tolerance{0.5};
};

inline void validate(const ScenarioConfig & s)
{
  std::set<AgentId> ids;
  double max_radius = 0.0;
  double max_margin = 0.0;
  for (const auto & a : s.agents) {
    if (!ids.insert(a.id).second) {
      throw ConfigError("duplicate agent id " + std::to_string(a.id));
    }
    if (!a.params.valid()) {
      throw ConfigError("invalid params for agent " + std::to_string(a.id));
    }
    if (!a.start.finite() || !a.goal.finite()) {
      throw ConfigError("non-finite start or goal for agent " + std::to_string(a.id));
    }
    max_radius = std::max(max_radius, a.params.radius);
    max_margin = std::max(max_margin, a.params.safety_margin);
  }
  const double min_sep = 2.0 * max_radius + max_margin;
  for (std::size_t i = 0; i < s.agents.size(); ++i) {
    for (std::size_t j = i + 1; j < s.agents.size(); ++j) {
      if (distance(s.agents[i].start, s.agents[j].start) <= min_sep) {
        throw ConfigError("agents " + std::to_string(s.agents[i].id) + " and " +
                          std::to_string(s.agents[j].id) + " start too close");
      }
    }
  }
  if (!(s.goal_tolerance > 0.0)) {
    throw ConfigError("goal_tolerance must be positive");
  }
  if (!s.world.valid()) {
    throw ConfigError("invalid world params");
  }
  if (!s.mpc.valid()) {
    throw ConfigError("invalid mpc config");
  }
  if (s.max_steps < 0) {
    throw ConfigError("max_steps must be non-negative");
  }
  if (!(s.weights.epsilon > 0.0) || s.weights.w_g < 0.0 || s.weights.w_d < 0.0 || s.weights.w_a < 0.0) {
    throw ConfigError("invalid cost weights");
  }
}

namespace detail
{

// Uniform double in [0, 1) from the raw 64-bit engine output, so layouts do
// not depend on the standard library's distribution implementations.
inline double uniform01(std::mt19937_64 & rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

inline ScenarioConfig base_scenario(const std::string & name)
{
  ScenarioConfig s;
  s.name = name;
  s.world = WorldParams{};
  s.mpc.obstacle_clearance = collision_threshold(AgentParams{});
  return s;
}

inline void add_agent(ScenarioConfig & s, Vec2 start, Vec2 goal)
{
  AgentSpec a;
  a.id = static_cast<AgentId>(s.agents.size());
  a.start = start;
  a.goal = goal;
  s.agents.push_back(a);
}

}  // namespace detail

/// The seven built-in experiment layouts. `seed` only affects the randomized
/// placement of setup E.
inline ScenarioConfig builtin_scenario(char tag, std::uint64_t seed = 0)
{
  using detail::add_agent;
  constexpr double kPi = std::numbers::pi;
  ScenarioConfig s = detail::base_scenario(std::string("setup_") + tag);
  s.seed = seed;
  switch (tag) {
    case 'A':
      // Head-on pair mirrored across the horizontal axis.
      add_agent(s, {0.0, 18.0}, {0.0, -18.0});
      add_agent(s, {0.0, -18.0}, {0.0, 18.0});
      break;
    case 'B':
      // T junction: one from the top, two opposing from the sides.
      add_agent(s, {0.0, 20.0}, {0.0, -20.0});
      add_agent(s, {-20.0, 0.0}, {20.0, 0.0});
      add_agent(s, {20.0, 0.0}, {-20.0, 0.0});
      break;
    case 'C':
      for (int k = 0; k < 3; ++k) {
        const double a = kPi / 2.0 + k * 2.0 * kPi / 3.0;
        add_agent(s, unit_from_angle(a) * 20.0, unit_from_angle(a + kPi) * 20.0);
      }
      break;
    case 'D':
      add_agent(s, {20.0, 0.0}, {-20.0, 0.0});
      add_agent(s, {0.0, 20.0}, {0.0, -20.0});
      add_agent(s, {-20.0, 0.0}, {20.0, 0.0});
      add_agent(s, {0.0, -20.0}, {0.0, 20.0});
      break;
    case 'E': {
      // Five robots on an outer ring heading to an inner ring on the far
      // side. Angular gaps are at least 60 degrees.
      std::mt19937_64 rng(seed);
      constexpr int kCount = 5;
      constexpr double kMinGap = kPi / 3.0;
      std::vector<double> cuts;
      for (int i = 0; i < kCount - 1; ++i) {
        cuts.push_back(detail::uniform01(rng));
      }
      std::sort(cuts.begin(), cuts.end());
      const double slack = 2.0 * kPi - kCount * kMinGap;
      double angle = 2.0 * kPi * detail::uniform01(rng);
      double prev_cut = 0.0;
      for (int i = 0; i < kCount; ++i) {
        const double radius = 34.0 + 6.0 * detail::uniform01(rng);
        add_agent(s, unit_from_angle(angle) * radius, unit_from_angle(angle + kPi) * 10.0);
        const double cut = i < kCount - 1 ? cuts[static_cast<std::size_t>(i)] : 1.0;
        angle += kMinGap + slack * (cut - prev_cut);
        prev_cut = cut;
      }
      break;
    }
    case 'F':
      for (const double y : {-27.0, -9.0, 9.0, 27.0}) {
        add_agent(s, {-40.0, y}, {40.0, y});
      }
      for (const double x : {-31.5, -13.5, 4.5, 22.5}) {
        add_agent(s, {x, 40.0}, {x, -40.0});
      }
      for (const double x : {-22.5, -4.5, 13.5, 31.5}) {
        add_agent(s, {x, -40.0}, {x, 40.0});
      }
      s.max_steps = 10000;
      break;
    case 'G':
      for (const double y : {-31.5, -13.5, 4.5, 22.5}) {
        add_agent(s, {-40.0, y}, {40.0, y});
      }
      for (const double y : {-22.5, -4.5, 13.5, 31.5}) {
        add_agent(s, {40.0, y}, {-40.0, y});
      }
      for (const double x : {-31.5, -13.5, 4.5, 22.5}) {
        add_agent(s, {x, 40.0}, {x, -40.0});
      }
      for (const double x : {-22.5, -4.5, 13.5, 31.5}) {
        add_agent(s, {x, -40.0}, {x, 40.0});
      }
      s.max_steps = 10000;
      break;
    default:
      throw ConfigError(std::string("unknown setup tag '") + tag + "'");
  }
  return s;
}

struct CollisionEvent
{
  AgentId first{0};
  AgentId second{0};
  int step{0};
  double penetration{0.0};
};

struct AgentDiagnostics
{
  double planning_ms{0.0};
  bool planned{false};
  bool emergency{false};
  bool infeasible{false};
  bool planner_failed{false};
  bool guard_engaged{false};
  int threat_count{0};
  std::vector<Vec2> vias;
  std::optional<double> mpc_cost;
  std::optional<double> mpc_zero_cost;
};

/// Full trace of one run. states has one more entry than controls: states[k]
/// is the world before step k's controls are applied.
struct SimRecord
{
  std::string scenario_name;
  ControlMode control_mode{ControlMode::kEifpMpc};
  std::uint64_t seed{0};
  std::vector<AgentId> agent_ids;
  std::vector<std::vector<RobotState>> states;
  std::vector<std::vector<ControlInput>> controls;
  std::vector<std::vector<AgentDiagnostics>> diagnostics;
  std::vector<bool> reached;
  std::vector<std::optional<int>> arrival_step;
  std::vector<CollisionEvent> collisions;

  int steps() const { return static_cast<int>(controls.size()); }
  bool failed() const { return !collisions.empty(); }
};

/// Snapshot of every agent taken at the start of a step.
using WorldSnapshot = std::vector<KinematicSnapshot>;

/// What a single agent carries between its own planning cycles.
struct AgentMemory
{
  std::vector<ControlInput> warm_start;
};

struct AgentDecision
{
  ControlInput control;
  AgentDiagnostics diagnostics;
  AgentMemory memory;
};

inline WorldSnapshot take_snapshot(const ScenarioConfig & s, const std::vector<RobotState> & states)
{
  WorldSnapshot snap;
  snap.reserve(states.size());
  for (std::size_t i = 0; i < states.size(); ++i) {
    snap.push_back({s.agents[i].id, states[i].position, states[i].velocity(), s.agents[i].params.radius});
  }
  return snap;
}

/// Plan-smooth-track cycle of agent `index`. Reads only the current snapshot,
/// the observed snapshot history and the agent's own memory.
inline AgentDecision plan_agent(
  const ScenarioConfig & s, std::size_t index, const RobotState & self,
  const WorldSnapshot & snapshot, const std::deque<WorldSnapshot> & history,
  const AgentMemory & memory)
{
  const AgentSpec & spec = s.agents[index];
  const AgentParams & ego = spec.params;
  const double dt = s.world.dt;
  AgentDecision out;
  out.diagnostics.planned = true;

  std::vector<KinematicSnapshot> obstacles;
  std::vector<std::vector<KinematicSnapshot>> observed;
  for (std::size_t j = 0; j < snapshot.size(); ++j) {
    if (j == index) {
      continue;
    }
    obstacles.push_back(snapshot[j]);
    std::vector<KinematicSnapshot> h;
    for (const auto & past : history) {
      h.push_back(past[j]);
    }
    observed.push_back(std::move(h));
  }

  PlanningContext ctx;
  ctx.ego = ego;
  ctx.world = s.world;
  ctx.weights = s.weights;
  ctx.goal = spec.goal;
  ctx.ghosts = ghost_paths(observed, s.planner.ghost_horizon.value_or(s.world.t_max), s.planner.ghost_window);
  ctx.d_thresh = s.planner.d_thresh.value_or(collision_threshold(ego));

  const PlanResult plan = plan_via_points(self.position, self.heading, spec.id, obstacles, ctx, s.planner.max_vias);
  out.diagnostics.emergency = plan.emergency;
  out.diagnostics.infeasible = plan.infeasible;
  out.diagnostics.vias = plan.vias;
  for (const auto & t : plan.threats) {
    out.diagnostics.threat_count += t.is_collision ? 1 : 0;
  }

  const auto waypoints = build_waypoints(self.position, plan.vias, spec.goal);
  if (waypoints.size() < 2) {
    out.control = {0.0, 0.0};
    return out;
  }
  const ReferenceTrajectory traj = fit_spline(waypoints);
  const double progress = traj.project(self.position);
  const double dist_goal = distance(self.position, spec.goal);

  if (s.control_mode == ControlMode::kEifp) {
    // Pure pursuit on the spline at full speed: proportional heading control
    // towards the point `lookahead_steps` strides ahead of the projection.
    const double lookahead = s.planner.lookahead_steps * ego.v_max * dt;
    const double look = std::min(progress + lookahead, traj.total_length());
    const Vec2 target = traj.pose_at_arc_length(look).position;
    const double desired = std::atan2(target.y - self.position.y, target.x - self.position.x);
    const double err = wrap_angle(desired - self.heading);
    // Within a stride of the goal, stop at the closest approach along the
    // current heading; stepping the full distance can orbit the goal.
    double reach = dist_goal;
    if (dist_goal <= ego.v_max * dt) {
      reach = std::max(0.0, (spec.goal - self.position).dot(unit_from_angle(self.heading)));
    }
    const double v = std::min(ego.v_max, reach / dt);
    const double omega = std::clamp(s.planner.heading_gain * err, -std::abs(err) / dt, std::abs(err) / dt);
    out.control = clamp_controls({v, omega}, ego);
    return out;
  }

  const auto refs = sample_reference(traj, ego.v_max, dt, s.mpc.horizon, progress);
  std::vector<ObstacleTrack> tracks;
  if (s.mpc.obstacle_constraints) {
    for (const auto & o : obstacles) {
      ObstacleTrack t;
      for (int k = 0; k < s.mpc.horizon; ++k) {
        t.points.push_back(o.position + o.velocity * ((k + 1) * dt));
      }
      tracks.push_back(std::move(t));
    }
  }
  const MpcSolution sol = solve_mpc(self, refs, s.mpc, ego, dt, tracks, memory.warm_start);
  out.diagnostics.infeasible = out.diagnostics.infeasible || sol.infeasible;
  out.diagnostics.mpc_cost = sol.cost;
  if (!s.mpc.obstacle_constraints) {
    const std::vector<ControlInput> zero(static_cast<std::size_t>(s.mpc.horizon));
    out.diagnostics.mpc_zero_cost = mpc_cost(rollout(self, zero, dt), refs, zero, s.mpc);
  }
  out.control = clamp_controls(apply_first(sol), ego);
  out.memory.warm_start = shift_controls(sol.controls);
  return out;
}

/// Largest speed not above `u.v` whose end point keeps every other agent
/// clear. Agents listed earlier have priority: a later agent keeps room for
/// an earlier one moving at full speed during the same step, while an
/// earlier agent only has to clear the later one's current position. Either
/// way the pair stays apart, and the first agent of a tight cluster can
/// always leave it. Holding still is always admissible.
inline double guarded_speed(
  const ScenarioConfig & s, std::size_t index, const std::vector<RobotState> & states,
  const std::vector<bool> & parked, const ControlInput & u)
{
  const RobotState & me = states[index];
  const double dt = s.world.dt;
  auto admissible = [&](double v) {
    const Vec2 next = me.position + unit_from_angle(me.heading) * (v * dt);
    for (std::size_t j = 0; j < states.size(); ++j) {
      if (j == index) {
        continue;
      }
      const double reach = parked[j] || j > index ? 0.0 : s.agents[j].params.v_max * dt;
      const double need = s.agents[index].params.radius + s.agents[j].params.radius + reach;
      if (distance(next, states[j].position) < need) {
        return false;
      }
    }
    return true;
  };
  if (u.v <= 0.0 || admissible(u.v)) {
    return u.v;
  }
  constexpr int kSlices = 32;
  for (int k = kSlices - 1; k > 0; --k) {
    const double v = u.v * k / kSlices;
    if (admissible(v)) {
      return v;
    }
  }
  return 0.0;
}

/// Deterministic decentralized simulator.
class Simulator
{
public:
  /// With `measure_time` off every planning time is recorded as 0, which
  /// makes the whole record bit-reproducible.
  explicit Simulator(ScenarioConfig scenario, bool measure_time = true)
  : s_(std::move(scenario)), measure_time_(measure_time)
  {
    validate(s_);
    const std::size_t n = s_.agents.size();
    states_.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      const auto & a = s_.agents[i];
      states_[i].position = a.start;
      const Vec2 d = a.goal - a.start;
      states_[i].heading = d.squared_norm() > 0.0 ? std::atan2(d.y, d.x) : 0.0;
    }
    memory_.resize(n);
    record_.scenario_name = s_.name;
    record_.control_mode = s_.control_mode;
    record_.seed = s_.seed;
    for (const auto & a : s_.agents) {
      record_.agent_ids.push_back(a.id);
    }
    record_.reached.assign(n, false);
    record_.arrival_step.assign(n, std::nullopt);
    update_arrivals(0);
    record_.states.push_back(states_);
  }

  const ScenarioConfig & scenario() const { return s_; }
  const SimRecord & record() const { return record_; }
  const std::vector<RobotState> & states() const { return states_; }
  const std::deque<WorldSnapshot> & history() const { return history_; }
  const std::vector<AgentMemory> & memory() const { return memory_; }

  bool done() const
  {
    const bool all_reached = std::all_of(record_.reached.begin(), record_.reached.end(), [](bool r) { return r; });
    return all_reached || record_.steps() >= s_.max_steps;
  }

  /// Advances every agent by one step. All controls are computed from the
  /// same frozen snapshot before any state changes.
  void step()
  {
    const std::size_t n = states_.size();
    const int k = record_.steps();
    const WorldSnapshot snapshot = take_snapshot(s_, states_);
    history_.push_back(snapshot);
    while (history_.size() > static_cast<std::size_t>(s_.planner.ghost_window) + 1) {
      history_.pop_front();
    }

    std::vector<ControlInput> controls(n);
    std::vector<AgentDiagnostics> diags(n);
    for (std::size_t i = 0; i < n; ++i) {
      if (record_.reached[i]) {
        continue;
      }
      const auto t0 = std::chrono::steady_clock::now();
      try {
        AgentDecision d = plan_agent(s_, i, states_[i], snapshot, history_, memory_[i]);
        controls[i] = d.control;
        diags[i] = std::move(d.diagnostics);
        memory_[i] = std::move(d.memory);
      } catch (const std::exception &) {
        controls[i] = {0.0, 0.0};
        diags[i] = AgentDiagnostics{};
        diags[i].planned = true;
        diags[i].planner_failed = true;
        memory_[i] = AgentMemory{};
      }
      const auto t1 = std::chrono::steady_clock::now();
      diags[i].planning_ms = measure_time_ ? std::chrono::duration<double, std::milli>(t1 - t0).count() : 0.0;
    }

    if (s_.planner.safety_guard) {
      for (std::size_t i = 0; i < n; ++i) {
        if (record_.reached[i]) {
          continue;
        }
        const double v = guarded_speed(s_, i, states_, record_.reached, controls[i]);
        if (v != controls[i].v) {
          controls[i].v = v;
          diags[i].guard_engaged = true;
        }
      }
    }

    for (std::size_t i = 0; i < n; ++i) {
      if (record_.reached[i]) {
        states_[i].linear_velocity = 0.0;
        states_[i].angular_velocity = 0.0;
        continue;
      }
      controls[i] = clamp_controls(controls[i], s_.agents[i].params);
      states_[i] = unicycle_step(states_[i], controls[i], s_.world.dt);
    }

    detect_collisions(k + 1);
    update_arrivals(k + 1);
    record_.controls.push_back(controls);
    record_.diagnostics.push_back(std::move(diags));
    record_.states.push_back(states_);
  }

  SimRecord run()
  {
    while (!done()) {
      step();
    }
    return record_;
  }

private:
  void update_arrivals(int step_index)
  {
    for (std::size_t i = 0; i < states_.size(); ++i) {
      if (!record_.reached[i] && distance(states_[i].position, s_.agents[i].goal) <= s_.goal_tolerance) {
        record_.reached[i] = true;
        record_.arrival_step[i] = step_index;
        states_[i].linear_velocity = 0.0;
        states_[i].angular_velocity = 0.0;
      }
    }
  }

  void detect_collisions(int step_index)
  {
    for (std::size_t i = 0; i < states_.size(); ++i) {
      for (std::size_t j = i + 1; j < states_.size(); ++j) {
        const double contact = s_.agents[i].params.radius + s_.agents[j].params.radius;
        const double d = distance(states_[i].position, states_[j].position);
        if (d < contact) {
          record_.collisions.push_back({s_.agents[i].id, s_.agents[j].id, step_index, contact - d});
        }
      }
    }
  }

  ScenarioConfig s_;
  bool measure_time_{true};
  std::vector<RobotState> states_;
  std::vector<AgentMemory> memory_;
  std::deque<WorldSnapshot> history_;
  SimRecord record_;
};

inline SimRecord run(const ScenarioConfig & scenario, bool measure_time = true)
{
  return Simulator(scenario, measure_time).run();
}

}  // namespace eifp

#endif  // EIFP__SIM_HPP_
