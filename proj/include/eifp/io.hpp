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

#ifndef EIFP__IO_HPP_
#define EIFP__IO_HPP_

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "json.hpp"

#include "eifp/metrics.hpp"
#include "eifp/sim.hpp"

namespace eifp
{

class IoError : public std::runtime_error
{
public:
  explicit IoError(const std::string & what) : std::runtime_error(what) {}
};

/// Malformed trajectory log; `line` is 1-based.
class LogParseError : public std::runtime_error
{
public:
  LogParseError(std::size_t line, const std::string & what)
  : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line)
  {
  }
  std::size_t line() const { return line_; }

private:
  std::size_t line_;
};

/// Shortest text that parses back to the same double.
inline std::string format_double(double x)
{
  if (std::isnan(x)) {
    return "nan";
  }
  if (std::isinf(x)) {
    return x > 0 ? "inf" : "-inf";
  }
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, res.ptr);
}

inline std::optional<double> parse_double(std::string_view text)
{
  double x = 0.0;
  const auto res = std::from_chars(text.data(), text.data() + text.size(), x);
  if (res.ec != std::errc() || res.ptr != text.data() + text.size()) {
    return std::nullopt;
  }
  return x;
}

// ---------------------------------------------------------------- scenarios

namespace detail
{

using nlohmann::json;

inline json vec_json(const Vec2 & v) { return json::array({v.x, v.y}); }

inline Vec2 vec_from(const json & j, const std::string & what)
{
  if (!j.is_array() || j.size() != 2 || !j[0].is_number() || !j[1].is_number()) {
    throw ConfigError(what + " must be a [x, y] pair");
  }
  return {j[0].get<double>(), j[1].get<double>()};
}

template <typename T>
void read(const json & obj, const char * key, T & out)
{
  if (!obj.contains(key)) {
    return;
  }
  try {
    out = obj.at(key).get<T>();
  } catch (const json::exception &) {
    throw ConfigError(std::string("bad value for '") + key + "'");
  }
}

inline void read_optional(const json & obj, const char * key, std::optional<double> & out)
{
  if (!obj.contains(key)) {
    return;
  }
  const json & v = obj.at(key);
  if (v.is_null()) {
    out.reset();
  } else if (v.is_number()) {
    out = v.get<double>();
  } else {
    throw ConfigError(std::string("bad value for '") + key + "'");
  }
}

inline json optional_json(const std::optional<double> & v) { return v ? json(*v) : json(nullptr); }

inline const json & section(const json & root, const char * key)
{
  static const json kEmpty = json::object();
  if (!root.contains(key)) {
    return kEmpty;
  }
  if (!root.at(key).is_object()) {
    throw ConfigError(std::string("'") + key + "' must be an object");
  }
  return root.at(key);
}

}  // namespace detail

inline nlohmann::json scenario_to_json(const ScenarioConfig & s)
{
  using detail::json;
  json agents = json::array();
  for (const auto & a : s.agents) {
    agents.push_back({
      {"id", a.id},
      {"start", detail::vec_json(a.start)},
      {"goal", detail::vec_json(a.goal)},
      {"params",
       {{"radius", a.params.radius},
        {"v_min", a.params.v_min},
        {"v_max", a.params.v_max},
        {"omega_min", a.params.omega_min},
        {"omega_max", a.params.omega_max},
        {"safety_margin", a.params.safety_margin}}},
    });
  }
  return {
    {"name", s.name},
    {"control_mode", to_string(s.control_mode)},
    {"seed", s.seed},
    {"max_steps", s.max_steps},
    {"goal_tolerance", s.goal_tolerance},
    {"world", {{"dt", s.world.dt}, {"t_max", s.world.t_max}, {"cone_aperture", s.world.cone_aperture}}},
    {"weights", {{"w_g", s.weights.w_g}, {"w_d", s.weights.w_d}, {"w_a", s.weights.w_a}, {"epsilon", s.weights.epsilon}}},
    {"mpc",
     {{"horizon", s.mpc.horizon},
      {"q_weights", s.mpc.q_weights},
      {"r_weights", s.mpc.r_weights},
      {"max_iterations", s.mpc.max_iterations},
      {"convergence_tol", s.mpc.convergence_tol},
      {"obstacle_clearance", s.mpc.obstacle_clearance},
      {"obstacle_constraints", s.mpc.obstacle_constraints}}},
    {"planner",
     {{"max_vias", s.planner.max_vias},
      {"ghost_window", s.planner.ghost_window},
      {"ghost_horizon", detail::optional_json(s.planner.ghost_horizon)},
      {"d_thresh", detail::optional_json(s.planner.d_thresh)},
      {"heading_gain", s.planner.heading_gain},
      {"lookahead_steps", s.planner.lookahead_steps},
      {"safety_guard", s.planner.safety_guard}}},
    {"agents", agents},
  };
}

/// Missing keys keep their defaults; the result is validated.
inline ScenarioConfig scenario_from_json(const nlohmann::json & root)
{
  using detail::read;
  if (!root.is_object()) {
    throw ConfigError("scenario must be a JSON object");
  }
  ScenarioConfig s;
  read(root, "name", s.name);
  if (root.contains("control_mode")) {
    std::string mode;
    read(root, "control_mode", mode);
    s.control_mode = parse_control_mode(mode);
  }
  read(root, "seed", s.seed);
  read(root, "max_steps", s.max_steps);
  read(root, "goal_tolerance", s.goal_tolerance);

  const auto & w = detail::section(root, "world");
  read(w, "dt", s.world.dt);
  read(w, "t_max", s.world.t_max);
  read(w, "cone_aperture", s.world.cone_aperture);

  const auto & cw = detail::section(root, "weights");
  read(cw, "w_g", s.weights.w_g);
  read(cw, "w_d", s.weights.w_d);
  read(cw, "w_a", s.weights.w_a);
  read(cw, "epsilon", s.weights.epsilon);

  const auto & m = detail::section(root, "mpc");
  read(m, "horizon", s.mpc.horizon);
  read(m, "q_weights", s.mpc.q_weights);
  read(m, "r_weights", s.mpc.r_weights);
  read(m, "max_iterations", s.mpc.max_iterations);
  read(m, "convergence_tol", s.mpc.convergence_tol);
  read(m, "obstacle_clearance", s.mpc.obstacle_clearance);
  read(m, "obstacle_constraints", s.mpc.obstacle_constraints);

  const auto & p = detail::section(root, "planner");
  read(p, "max_vias", s.planner.max_vias);
  read(p, "ghost_window", s.planner.ghost_window);
  detail::read_optional(p, "ghost_horizon", s.planner.ghost_horizon);
  detail::read_optional(p, "d_thresh", s.planner.d_thresh);
  read(p, "heading_gain", s.planner.heading_gain);
  read(p, "lookahead_steps", s.planner.lookahead_steps);
  read(p, "safety_guard", s.planner.safety_guard);

  if (root.contains("agents")) {
    if (!root.at("agents").is_array()) {
      throw ConfigError("'agents' must be a list");
    }
    for (const auto & a : root.at("agents")) {
      if (!a.is_object() || !a.contains("start") || !a.contains("goal")) {
        throw ConfigError("each agent needs 'start' and 'goal'");
      }
      AgentSpec spec;
      spec.id = static_cast<AgentId>(s.agents.size());
      read(a, "id", spec.id);
      spec.start = detail::vec_from(a.at("start"), "start");
      spec.goal = detail::vec_from(a.at("goal"), "goal");
      const auto & ap = detail::section(a, "params");
      read(ap, "radius", spec.params.radius);
      read(ap, "v_min", spec.params.v_min);
      read(ap, "v_max", spec.params.v_max);
      read(ap, "omega_min", spec.params.omega_min);
      read(ap, "omega_max", spec.params.omega_max);
      read(ap, "safety_margin", spec.params.safety_margin);
      s.agents.push_back(spec);
    }
  }
  if (s.max_steps < 0 || s.mpc.max_iterations < 0 || s.planner.max_vias < 0 || s.planner.ghost_window < 0) {
    throw ConfigError("counts must be non-negative");
  }
  validate(s);
  return s;
}

inline ScenarioConfig load_scenario_file(const std::string & path)
{
  std::ifstream in(path);
  if (!in) {
    throw IoError("cannot open scenario file '" + path + "'");
  }
  nlohmann::json root;
  try {
    root = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception & e) {
    throw IoError("cannot parse scenario file '" + path + "': " + e.what());
  }
  try {
    return scenario_from_json(root);
  } catch (const ConfigError & e) {
    throw IoError("invalid scenario file '" + path + "': " + e.what());
  }
}

// ---------------------------------------------------------- trajectory logs

inline constexpr std::string_view kLogHeader = "step,agent_id,x,y,theta,v,omega,planning_ms";

struct LogRow
{
  int step{0};
  AgentId agent{0};
  double x{0.0};
  double y{0.0};
  double theta{0.0};
  double v{0.0};
  double omega{0.0};
  double planning_ms{0.0};
};

/// One row per (step, agent) for steps 0..T. v and omega are the controls
/// applied during that step; the final row of each agent carries zeros.
inline void write_trajectory_log(std::ostream & out, const SimRecord & rec)
{
  out << kLogHeader << '\n';
  const int steps = rec.steps();
  for (int k = 0; k <= steps; ++k) {
    const auto & states = rec.states[static_cast<std::size_t>(k)];
    for (std::size_t i = 0; i < rec.agent_ids.size(); ++i) {
      ControlInput u{0.0, 0.0};
      double ms = 0.0;
      if (k < steps) {
        u = rec.controls[static_cast<std::size_t>(k)][i];
        ms = rec.diagnostics[static_cast<std::size_t>(k)][i].planning_ms;
      }
      const auto & st = states[i];
      out << k << ',' << rec.agent_ids[i] << ',' << format_double(st.position.x) << ','
          << format_double(st.position.y) << ',' << format_double(st.heading) << ',' << format_double(u.v) << ','
          << format_double(u.omega) << ',' << format_double(ms) << '\n';
    }
  }
}

inline std::string trajectory_log_string(const SimRecord & rec)
{
  std::ostringstream os;
  write_trajectory_log(os, rec);
  return os.str();
}

/// Parses a log written by write_trajectory_log. Rows must be grouped by
/// step with the same agent order in every step.
inline std::vector<LogRow> parse_trajectory_log(std::istream & in)
{
  std::vector<LogRow> rows;
  std::string line;
  std::size_t lineno = 0;
  if (!std::getline(in, line)) {
    throw LogParseError(1, "empty log");
  }
  ++lineno;
  if (!line.empty() && line.back() == '\r') {
    line.pop_back();
  }
  if (line != kLogHeader) {
    throw LogParseError(lineno, "unexpected header");
  }
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') {
      line.pop_back();
    }
    if (line.empty()) {
      continue;
    }
    std::vector<std::string_view> fields;
    std::string_view rest(line);
    while (true) {
      const auto comma = rest.find(',');
      fields.push_back(rest.substr(0, comma));
      if (comma == std::string_view::npos) {
        break;
      }
      rest.remove_prefix(comma + 1);
    }
    if (fields.size() != 8) {
      throw LogParseError(lineno, "expected 8 fields, got " + std::to_string(fields.size()));
    }
    LogRow r;
    auto integer = [&](std::string_view f, int & out) {
      const auto res = std::from_chars(f.data(), f.data() + f.size(), out);
      if (res.ec != std::errc() || res.ptr != f.data() + f.size()) {
        throw LogParseError(lineno, "bad integer '" + std::string(f) + "'");
      }
    };
    auto real = [&](std::string_view f, double & out) {
      const auto v = parse_double(f);
      if (!v || !std::isfinite(*v)) {
        throw LogParseError(lineno, "bad number '" + std::string(f) + "'");
      }
      out = *v;
    };
    integer(fields[0], r.step);
    integer(fields[1], r.agent);
    real(fields[2], r.x);
    real(fields[3], r.y);
    real(fields[4], r.theta);
    real(fields[5], r.v);
    real(fields[6], r.omega);
    real(fields[7], r.planning_ms);
    if (r.step < 0) {
      throw LogParseError(lineno, "negative step");
    }
    if (!rows.empty() && r.step != rows.back().step && r.step != rows.back().step + 1) {
      throw LogParseError(lineno, "steps out of order");
    }
    if (rows.empty() && r.step != 0) {
      throw LogParseError(lineno, "log must start at step 0");
    }
    rows.push_back(r);
  }
  if (rows.empty()) {
    throw LogParseError(lineno, "log has no rows");
  }
  return rows;
}

/// Per-agent rows of a parsed log: agents in first-appearance order, each
/// with one row per step.
struct TrajectoryTable
{
  std::vector<AgentId> agents;
  std::vector<std::vector<LogRow>> by_step;  // [step][agent]
};

inline TrajectoryTable tabulate(const std::vector<LogRow> & rows)
{
  TrajectoryTable t;
  for (const auto & r : rows) {
    if (r.step != 0) {
      break;
    }
    if (std::find(t.agents.begin(), t.agents.end(), r.agent) != t.agents.end()) {
      throw IoError("agent " + std::to_string(r.agent) + " repeated in step 0");
    }
    t.agents.push_back(r.agent);
  }
  const std::size_t n = t.agents.size();
  if (rows.size() % n != 0) {
    throw IoError("log rows do not form complete steps");
  }
  for (std::size_t base = 0; base < rows.size(); base += n) {
    std::vector<LogRow> step(rows.begin() + static_cast<std::ptrdiff_t>(base),
                             rows.begin() + static_cast<std::ptrdiff_t>(base + n));
    for (std::size_t i = 0; i < n; ++i) {
      if (step[i].step != static_cast<int>(base / n) || step[i].agent != t.agents[i]) {
        throw IoError("log rows do not form complete steps");
      }
    }
    t.by_step.push_back(std::move(step));
  }
  return t;
}

/// Rebuilds a SimRecord from a log and the scenario it was produced from.
/// Arrivals, planning cycles and collisions are recomputed with the same
/// rules the simulator uses, so metrics of the result match the original.
inline SimRecord record_from_log(const std::vector<LogRow> & rows, const ScenarioConfig & s)
{
  const TrajectoryTable t = tabulate(rows);
  const std::size_t n = t.agents.size();
  if (n != s.agents.size()) {
    throw IoError("log has " + std::to_string(n) + " agents, scenario has " + std::to_string(s.agents.size()));
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (t.agents[i] != s.agents[i].id) {
      throw IoError("log agent order differs from the scenario");
    }
  }
  SimRecord rec;
  rec.scenario_name = s.name;
  rec.control_mode = s.control_mode;
  rec.seed = s.seed;
  rec.agent_ids = t.agents;
  rec.reached.assign(n, false);
  rec.arrival_step.assign(n, std::nullopt);
  const int steps = static_cast<int>(t.by_step.size()) - 1;
  for (int k = 0; k <= steps; ++k) {
    const auto & row = t.by_step[static_cast<std::size_t>(k)];
    std::vector<RobotState> states(n);
    for (std::size_t i = 0; i < n; ++i) {
      states[i].position = {row[i].x, row[i].y};
      states[i].heading = row[i].theta;
      if (k > 0 && !rec.reached[i]) {
        const auto & u = rec.controls.back()[i];
        states[i].linear_velocity = u.v;
        states[i].angular_velocity = u.omega;
      }
    }
    if (k > 0) {
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
          const double contact = s.agents[i].params.radius + s.agents[j].params.radius;
          const double d = distance(states[i].position, states[j].position);
          if (d < contact) {
            rec.collisions.push_back({s.agents[i].id, s.agents[j].id, k, contact - d});
          }
        }
      }
    }
    for (std::size_t i = 0; i < n; ++i) {
      if (!rec.reached[i] && distance(states[i].position, s.agents[i].goal) <= s.goal_tolerance) {
        rec.reached[i] = true;
        rec.arrival_step[i] = k;
        states[i].linear_velocity = 0.0;
        states[i].angular_velocity = 0.0;
      }
    }
    rec.states.push_back(std::move(states));
    if (k < steps) {
      std::vector<ControlInput> controls(n);
      std::vector<AgentDiagnostics> diags(n);
      for (std::size_t i = 0; i < n; ++i) {
        controls[i] = {row[i].v, row[i].omega};
        diags[i].planning_ms = row[i].planning_ms;
        diags[i].planned = !rec.reached[i];
      }
      rec.controls.push_back(std::move(controls));
      rec.diagnostics.push_back(std::move(diags));
    }
  }
  return rec;
}

// ------------------------------------------------------------ metric tables

inline constexpr std::string_view kMetricsHeader =
  "control_strategy,num_robots,avg_planning_ms,avg_oscillations,avg_path_cm,avg_time_to_goal_s,collisions,all_reached";

inline std::string metrics_row(ControlMode mode, const RunMetrics & m)
{
  std::ostringstream os;
  os << to_string(mode) << ',' << m.num_robots << ',' << format_double(m.avg_planning_time_ms) << ','
     << format_double(m.avg_oscillations) << ',' << format_double(m.avg_path_length) << ','
     << format_double(m.avg_time_to_goal) << ',' << m.collision_count << ',' << (m.all_reached ? "true" : "false");
  return os.str();
}

inline nlohmann::json metrics_json(const RunMetrics & m)
{
  auto num = [](double x) { return std::isfinite(x) ? nlohmann::json(x) : nlohmann::json(nullptr); };
  return {
    {"num_robots", m.num_robots},
    {"avg_planning_ms", num(m.avg_planning_time_ms)},
    {"avg_oscillations", num(m.avg_oscillations)},
    {"avg_path_cm", num(m.avg_path_length)},
    {"avg_time_to_goal_s", num(m.avg_time_to_goal)},
    {"collisions", m.collision_count},
    {"all_reached", m.all_reached},
  };
}

/// Inverse of metrics_json; null stands for NaN.
inline RunMetrics metrics_from_json(const nlohmann::json & j)
{
  auto num = [&](const char * key) {
    const auto & v = j.at(key);
    return v.is_null() ? std::numeric_limits<double>::quiet_NaN() : v.get<double>();
  };
  RunMetrics m;
  m.num_robots = j.at("num_robots").get<int>();
  m.avg_planning_time_ms = num("avg_planning_ms");
  m.avg_oscillations = num("avg_oscillations");
  m.avg_path_length = num("avg_path_cm");
  m.avg_time_to_goal = num("avg_time_to_goal_s");
  m.collision_count = j.at("collisions").get<int>();
  m.all_reached = j.at("all_reached").get<bool>();
  return m;
}

// --------------------------------------------------------------------- plots

/// SVG rendering of a trajectory log: one polyline per agent, a circle marker
/// at each start and a square at each goal, and the agent's disc at its final
/// pose. Goals and radii come from `scenario` when given, otherwise the final
/// position and the default radius are used.
inline std::string render_svg(const std::vector<LogRow> & rows, const ScenarioConfig * scenario = nullptr)
{
  const TrajectoryTable t = tabulate(rows);
  const std::size_t n = t.agents.size();
  auto goal_of = [&](std::size_t i) {
    if (scenario != nullptr && i < scenario->agents.size()) {
      return scenario->agents[i].goal;
    }
    const auto & last = t.by_step.back()[i];
    return Vec2{last.x, last.y};
  };
  auto radius_of = [&](std::size_t i) {
    return scenario != nullptr && i < scenario->agents.size() ? scenario->agents[i].params.radius
                                                              : AgentParams{}.radius;
  };

  double lo_x = std::numeric_limits<double>::infinity(), lo_y = lo_x;
  double hi_x = -lo_x, hi_y = -lo_x;
  auto extend = [&](double x, double y, double pad) {
    lo_x = std::min(lo_x, x - pad);
    lo_y = std::min(lo_y, y - pad);
    hi_x = std::max(hi_x, x + pad);
    hi_y = std::max(hi_y, y + pad);
  };
  for (const auto & step : t.by_step) {
    for (std::size_t i = 0; i < n; ++i) {
      extend(step[i].x, step[i].y, radius_of(i));
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    const Vec2 g = goal_of(i);
    extend(g.x, g.y, radius_of(i));
  }
  const double margin = 2.0;
  lo_x -= margin;
  lo_y -= margin;
  hi_x += margin;
  hi_y += margin;
  const double width = hi_x - lo_x;
  const double height = hi_y - lo_y;
  const double scale = 800.0 / std::max(width, height);
  // y grows upwards in the world and downwards in SVG.
  auto px = [&](double x) { return format_double(std::round((x - lo_x) * scale * 100.0) / 100.0); };
  auto py = [&](double y) { return format_double(std::round((hi_y - y) * scale * 100.0) / 100.0); };
  auto colour = [](std::size_t i, std::size_t count) {
    const double hue = 360.0 * static_cast<double>(i) / static_cast<double>(std::max<std::size_t>(count, 1));
    return "hsl(" + std::to_string(static_cast<int>(hue)) + ",70%,40%)";
  };

  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << px(hi_x) << "\" height=\"" << py(lo_y)
     << "\" viewBox=\"0 0 " << px(hi_x) << ' ' << py(lo_y) << "\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  for (std::size_t i = 0; i < n; ++i) {
    const std::string c = colour(i, n);
    os << "<polyline class=\"path\" data-agent=\"" << t.agents[i] << "\" fill=\"none\" stroke=\"" << c
       << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t k = 0; k < t.by_step.size(); ++k) {
      const auto & r = t.by_step[k][i];
      os << (k ? " " : "") << px(r.x) << ',' << py(r.y);
    }
    os << "\"/>\n";
  }
  for (std::size_t i = 0; i < n; ++i) {
    const std::string c = colour(i, n);
    const auto & first = t.by_step.front()[i];
    const auto & last = t.by_step.back()[i];
    const Vec2 g = goal_of(i);
    const double mark = 4.0;
    os << "<circle class=\"start\" data-agent=\"" << t.agents[i] << "\" cx=\"" << px(first.x) << "\" cy=\""
       << py(first.y) << "\" r=\"" << format_double(mark) << "\" fill=\"" << c << "\"/>\n";
    os << "<rect class=\"goal\" data-agent=\"" << t.agents[i] << "\" x=\""
       << format_double(std::stod(px(g.x)) - mark) << "\" y=\"" << format_double(std::stod(py(g.y)) - mark)
       << "\" width=\"" << format_double(2 * mark) << "\" height=\"" << format_double(2 * mark)
       << "\" fill=\"none\" stroke=\"" << c << "\"/>\n";
    os << "<circle class=\"body\" data-agent=\"" << t.agents[i] << "\" cx=\"" << px(last.x) << "\" cy=\""
       << py(last.y) << "\" r=\"" << format_double(radius_of(i) * scale) << "\" fill=\"" << c
       << "\" fill-opacity=\"0.3\" stroke=\"" << c << "\"/>\n";
  }
  os << "</svg>\n";
  return os.str();
}

}  // namespace eifp

#endif  // EIFP__IO_HPP_
