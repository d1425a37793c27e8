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

#ifndef EIFP__METRICS_HPP_
#define EIFP__METRICS_HPP_

#include <cmath>
#include <limits>
#include <numbers>
#include <span>
#include <stdexcept>
#include <vector>

#include "eifp/core_model.hpp"
#include "eifp/sim.hpp"

namespace eifp
{

struct OscillationOptions
{
  double threshold_deg{120.0};
  double min_displacement{1e-3};  // cm
};

/// Counts abrupt direction changes. Consecutive displacements that point the
/// same way are merged first, displacements shorter than min_displacement
/// are dropped, and a turn sharper than the threshold is an event. A run of
/// sharp turns in the same rotational sense (a fast spin) is one event;
/// alternating or exact reversals each count.
inline int oscillation_count(std::span<const Vec2> positions, const OscillationOptions & opt = {})
{
  std::vector<Vec2> steps;
  for (std::size_t i = 1; i < positions.size(); ++i) {
    const Vec2 d = positions[i] - positions[i - 1];
    if (d.squared_norm() == 0.0) {
      continue;
    }
    if (!steps.empty()) {
      const Vec2 & last = steps.back();
      const bool same_direction =
        last.dot(d) > 0.0 && std::abs(last.cross(d)) <= 1e-12 * last.norm() * d.norm();
      if (same_direction) {
        steps.back() += d;
        continue;
      }
    }
    steps.push_back(d);
  }
  std::vector<Vec2> moves;
  for (const auto & d : steps) {
    if (d.norm() > opt.min_displacement) {
      moves.push_back(d);
    }
  }

  const double cos_threshold = std::cos(opt.threshold_deg * std::numbers::pi / 180.0);
  int events = 0;
  int previous_sense = 0;  // 0: previous turn did not qualify
  for (std::size_t i = 1; i < moves.size(); ++i) {
    const Vec2 & a = moves[i - 1];
    const Vec2 & b = moves[i];
    const double c = a.dot(b) / (a.norm() * b.norm());
    if (c < cos_threshold) {
      const double cr = a.cross(b);
      const int sense = cr > 0.0 ? 1 : (cr < 0.0 ? -1 : 2);
      const bool continues_spin = previous_sense != 0 && previous_sense != 2 && sense == previous_sense;
      if (!continues_spin) {
        ++events;
      }
      previous_sense = sense;
    } else {
      previous_sense = 0;
    }
  }
  return events;
}

inline double path_length(std::span<const Vec2> positions)
{
  double total = 0.0;
  for (std::size_t i = 1; i < positions.size(); ++i) {
    total += distance(positions[i], positions[i - 1]);
  }
  return total;
}

struct RunMetrics
{
  double avg_planning_time_ms{0.0};
  double avg_oscillations{0.0};
  double avg_path_length{0.0};
  double avg_time_to_goal{0.0};
  int collision_count{0};
  bool all_reached{true};
  int num_robots{0};
};

/// Positions of agent `agent` from step 0 through `last_step` inclusive.
inline std::vector<Vec2> agent_positions(const SimRecord & record, std::size_t agent, int last_step)
{
  std::vector<Vec2> out;
  for (int k = 0; k <= last_step && k < static_cast<int>(record.states.size()); ++k) {
    out.push_back(record.states[static_cast<std::size_t>(k)][agent].position);
  }
  return out;
}

/// Per-agent metrics averaged over agents, then over runs. Agents that never
/// arrive count towards oscillations and planning time only, and clear
/// all_reached.
inline RunMetrics aggregate(
  std::span<const SimRecord> records, const ScenarioConfig & scenario, const OscillationOptions & opt = {})
{
  if (records.empty()) {
    throw std::invalid_argument("aggregate: no records");
  }
  RunMetrics m;
  m.num_robots = static_cast<int>(scenario.agents.size());
  double planning_sum = 0.0;
  double osc_sum = 0.0;
  double path_sum = 0.0;
  double time_sum = 0.0;
  int path_runs = 0;
  for (const auto & rec : records) {
    const std::size_t n = rec.agent_ids.size();
    double cycles_ms = 0.0;
    long cycles = 0;
    for (const auto & step : rec.diagnostics) {
      for (const auto & d : step) {
        if (d.planned) {
          cycles_ms += d.planning_ms;
          ++cycles;
        }
      }
    }
    planning_sum += cycles > 0 ? cycles_ms / static_cast<double>(cycles) : 0.0;

    double osc = 0.0;
    double path = 0.0;
    double time = 0.0;
    int reached = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const int last = rec.arrival_step[i].value_or(rec.steps());
      const auto pos = agent_positions(rec, i, last);
      osc += oscillation_count(pos, opt);
      if (rec.reached[i]) {
        path += path_length(pos);
        time += *rec.arrival_step[i] * scenario.world.dt;
        ++reached;
      } else {
        m.all_reached = false;
      }
    }
    osc_sum += n > 0 ? osc / static_cast<double>(n) : 0.0;
    if (reached > 0) {
      path_sum += path / reached;
      time_sum += time / reached;
      ++path_runs;
    }
    m.collision_count += static_cast<int>(rec.collisions.size());
  }
  const double runs = static_cast<double>(records.size());
  m.avg_planning_time_ms = planning_sum / runs;
  m.avg_oscillations = osc_sum / runs;
  if (path_runs > 0) {
    m.avg_path_length = path_sum / path_runs;
    m.avg_time_to_goal = time_sum / path_runs;
  } else {
    m.avg_path_length = std::numeric_limits<double>::quiet_NaN();
    m.avg_time_to_goal = std::numeric_limits<double>::quiet_NaN();
  }
  return m;
}

}  // namespace eifp

#endif  // EIFP__METRICS_HPP_
