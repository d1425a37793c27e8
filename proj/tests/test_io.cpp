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


#include <cmath>
#include <limits>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "eifp/io.hpp"
#include "eifp/metrics.hpp"

namespace
{

int count(const std::string & text, const std::string & needle)
{
  int n = 0;
  for (auto pos = text.find(needle); pos != std::string::npos; pos = text.find(needle, pos + 1)) {
    ++n;
  }
  return n;
}

TEST(Numbers, ShortestRoundTrip)
{
  std::mt19937_64 rng(71);
  std::uniform_real_distribution<double> u(-1e6, 1e6);
  for (int i = 0; i < 10000; ++i) {
    const double x = u(rng) * std::pow(10.0, static_cast<int>(rng() % 20) - 10);
    ASSERT_EQ(*eifp::parse_double(eifp::format_double(x)), x);
  }
  EXPECT_EQ(eifp::format_double(1.5), "1.5");
  EXPECT_EQ(eifp::format_double(std::numeric_limits<double>::quiet_NaN()), "nan");
  EXPECT_FALSE(eifp::parse_double("1.5x").has_value());
  EXPECT_FALSE(eifp::parse_double("").has_value());
}

TEST(ScenarioJson, RoundTripEveryField)
{
  auto s = eifp::builtin_scenario('E', 4);
  s.control_mode = eifp::ControlMode::kEifp;
  s.world.t_max = 7.5;
  s.weights.w_d = 0.125;
  s.mpc.horizon = 7;
  s.mpc.q_weights = {1, 2, 3};
  s.mpc.obstacle_constraints = true;
  s.planner.ghost_horizon = 4.0;
  s.planner.heading_gain = 1.5;
  s.planner.safety_guard = false;
  s.max_steps = 123;
  s.goal_tolerance = 0.25;
  s.agents[2].params.v_max = 0.9;
  const auto back = eifp::scenario_from_json(eifp::scenario_to_json(s));
  EXPECT_EQ(eifp::scenario_to_json(back), eifp::scenario_to_json(s));
  EXPECT_EQ(back.name, s.name);
  EXPECT_EQ(back.seed, 4u);
  EXPECT_EQ(back.control_mode, eifp::ControlMode::kEifp);
  EXPECT_EQ(back.agents.size(), 5u);
  EXPECT_EQ(back.agents[2].params.v_max, 0.9);
  EXPECT_EQ(back.agents[3].start, s.agents[3].start);
  EXPECT_EQ(*back.planner.ghost_horizon, 4.0);
  EXPECT_FALSE(back.planner.d_thresh.has_value());
  EXPECT_EQ(back.mpc.q_weights, s.mpc.q_weights);
  EXPECT_TRUE(back.mpc.obstacle_constraints);
  EXPECT_FALSE(back.planner.safety_guard);
  EXPECT_EQ(back.max_steps, 123);
}

TEST(ScenarioJson, MissingKeysKeepDefaults)
{
  const auto j = nlohmann::json::parse(R"({"name": "x", "agents": [
    {"id": 0, "start": [0, 0], "goal": [10, 0]}, {"id": 1, "start": [0, 10], "goal": [10, 10]}]})");
  const auto s = eifp::scenario_from_json(j);
  EXPECT_EQ(s.agents.size(), 2u);
  EXPECT_EQ(s.world.dt, 1.0);
  EXPECT_EQ(s.agents[1].params.v_max, 1.1);
  EXPECT_EQ(s.max_steps, 2000);
}

TEST(ScenarioJson, InvalidRejected)
{
  auto j = eifp::scenario_to_json(eifp::builtin_scenario('A'));
  j["goal_tolerance"] = -1.0;
  EXPECT_THROW(eifp::scenario_from_json(j), eifp::ConfigError);
  j = eifp::scenario_to_json(eifp::builtin_scenario('A'));
  j["control_mode"] = "fast";
  EXPECT_THROW(eifp::scenario_from_json(j), eifp::ConfigError);
  j = eifp::scenario_to_json(eifp::builtin_scenario('A'));
  j["agents"][0]["start"] = "nowhere";
  EXPECT_THROW(eifp::scenario_from_json(j), eifp::ConfigError);
  EXPECT_THROW(eifp::load_scenario_file("/nonexistent/scenario.json"), eifp::IoError);
}

TEST(TrajectoryLog, HeaderAndShape)
{
  auto s = eifp::builtin_scenario('A');
  s.max_steps = 5;
  const auto rec = eifp::run(s, false);
  const std::string log = eifp::trajectory_log_string(rec);
  EXPECT_EQ(log.substr(0, log.find('\n')), eifp::kLogHeader);
  EXPECT_EQ(count(log, "\n"), 1 + 6 * 2);
}

TEST(TrajectoryLog, ReplayClosure)
{
  for (const char tag : {'A', 'E'}) {
    for (const auto mode : {eifp::ControlMode::kEifp, eifp::ControlMode::kEifpMpc}) {
      auto s = eifp::builtin_scenario(tag, 2);
      s.control_mode = mode;
      const auto rec = eifp::run(s, true);
      std::istringstream in(eifp::trajectory_log_string(rec));
      const auto back = eifp::record_from_log(eifp::parse_trajectory_log(in), s);
      EXPECT_EQ(back.states.size(), rec.states.size());
      EXPECT_EQ(back.arrival_step, rec.arrival_step);
      const auto a = eifp::aggregate(std::vector{rec}, s);
      const auto b = eifp::aggregate(std::vector{back}, s);
      EXPECT_EQ(eifp::metrics_row(mode, a), eifp::metrics_row(mode, b));
    }
  }
}

TEST(TrajectoryLog, MalformedLineNumbered)
{
  std::istringstream in(std::string(eifp::kLogHeader) + "\n0,0,1,2,0,1,0,0\n0,1,1,2,0\n");
  try {
    eifp::parse_trajectory_log(in);
    FAIL() << "no error";
  } catch (const eifp::LogParseError & e) {
    EXPECT_EQ(e.line(), 3u);
  }
  std::istringstream bad_number(std::string(eifp::kLogHeader) + "\n0,0,1,abc,0,1,0,0\n");
  EXPECT_THROW(eifp::parse_trajectory_log(bad_number), eifp::LogParseError);
  std::istringstream bad_order(std::string(eifp::kLogHeader) + "\n0,0,1,2,0,1,0,0\n2,0,1,2,0,1,0,0\n");
  EXPECT_THROW(eifp::parse_trajectory_log(bad_order), eifp::LogParseError);
}

TEST(TrajectoryLog, EmptyRejected)
{
  std::istringstream empty("");
  EXPECT_THROW(eifp::parse_trajectory_log(empty), eifp::LogParseError);
  std::istringstream header_only(std::string(eifp::kLogHeader) + "\n");
  EXPECT_THROW(eifp::parse_trajectory_log(header_only), eifp::LogParseError);
}

TEST(MetricsTable, HeaderAndRow)
{
  EXPECT_EQ(
    eifp::kMetricsHeader,
    "control_strategy,num_robots,avg_planning_ms,avg_oscillations,avg_path_cm,avg_time_to_goal_s,collisions,all_reached");
  eifp::RunMetrics m;
  m.num_robots = 2;
  m.avg_oscillations = 0.5;
  m.avg_path_length = 37.5;
  m.avg_time_to_goal = 35;
  EXPECT_EQ(eifp::metrics_row(eifp::ControlMode::kEifpMpc, m), "eIFP-MPC,2,0,0.5,37.5,35,0,true");
  m.avg_path_length = std::numeric_limits<double>::quiet_NaN();
  const auto back = eifp::metrics_from_json(eifp::metrics_json(m));
  EXPECT_TRUE(std::isnan(back.avg_path_length));
  EXPECT_EQ(back.avg_time_to_goal, 35.0);
}

TEST(Svg, TwoAgents)
{
  auto s = eifp::builtin_scenario('A');
  const auto rec = eifp::run(s, false);
  std::istringstream in(eifp::trajectory_log_string(rec));
  const std::string svg = eifp::render_svg(eifp::parse_trajectory_log(in), &s);
  EXPECT_EQ(count(svg, "<polyline"), 2);
  EXPECT_EQ(count(svg, "class=\"start\"") + count(svg, "class=\"goal\""), 4);
  EXPECT_EQ(count(svg, "class=\"body\""), 2);
  EXPECT_EQ(svg.rfind("</svg>"), svg.size() - 7);
}

TEST(Svg, SixteenAgents)
{
  auto s = eifp::builtin_scenario('G');
  s.max_steps = 20;
  const auto rec = eifp::run(s, false);
  std::istringstream in(eifp::trajectory_log_string(rec));
  const std::string svg = eifp::render_svg(eifp::parse_trajectory_log(in));
  EXPECT_EQ(count(svg, "<polyline"), 16);
  for (int id = 0; id < 16; ++id) {
    EXPECT_EQ(count(svg, "class=\"path\" data-agent=\"" + std::to_string(id) + "\""), 1);
  }
}

}  // namespace
