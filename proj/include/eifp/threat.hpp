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

#ifndef EIFP__THREAT_HPP_
#define EIFP__THREAT_HPP_

#include <algorithm>
#include <optional>
#include <span>
#include <vector>

#include "eifp/core_model.hpp"

namespace eifp
{

using AgentId = int;

/// Position, velocity and disc radius of one agent at a single instant.
struct KinematicSnapshot
{
  AgentId id{0};
  Vec2 position;
  Vec2 velocity;
  double radius{0.0};

  /// Constant-velocity extrapolation.
  KinematicSnapshot advanced(double t) const
  {
    KinematicSnapshot out = *this;
    out.position = position + velocity * t;
    return out;
  }
};

struct CpaResult
{
  double tcpa{0.0};  // s, may be negative for diverging agents
  double dcpa{0.0};  // cm
};

struct ThreatAssessment
{
  AgentId obstacle_id{0};
  double tcpa{0.0};
  double dcpa{0.0};
  bool is_collision{false};
  std::optional<int> rank;  // set only for flagged threats, 0 = most imminent
};

/// Closest point of approach under constant velocities. Symmetric in its
/// arguments; TCPA keeps its sign.
inline CpaResult compute_cpa(const KinematicSnapshot & robot, const KinematicSnapshot & obstacle)
{
  if (!robot.position.finite() || !robot.velocity.finite() || !obstacle.position.finite() ||
      !obstacle.velocity.finite()) {
    throw ModelError("compute_cpa: non-finite snapshot");
  }
  const Vec2 r = obstacle.position - robot.position;
  const Vec2 v_rel = obstacle.velocity - robot.velocity;
  const double v_rel_sq = v_rel.squared_norm();
  if (v_rel_sq == 0.0) {
    return {0.0, r.norm()};
  }
  const double tcpa = -r.dot(v_rel) / v_rel_sq;
  // r + tcpa * v_rel is the separation at tcpa; same value as differencing
  // the two extrapolated positions, but free of cancellation in the positions.
  const double dcpa = (r + v_rel * tcpa).norm();
  return {tcpa, dcpa};
}

/// Planning distance below which a forecast approach counts as a threat:
/// 5 r_robot + d_safety, taken literally.
inline double collision_threshold(const AgentParams & ego) { return 5.0 * ego.radius + ego.safety_margin; }

/// One assessment per obstacle, in input order. Flagged threats carry a rank
/// by ascending TCPA, ties by ascending id. `threshold_override` replaces
/// collision_threshold(ego) when set.
inline std::vector<ThreatAssessment> assess_threats(
  const KinematicSnapshot & robot, const AgentParams & ego, const WorldParams & world,
  std::span<const KinematicSnapshot> obstacles, std::optional<double> threshold_override = {})
{
  const double d_thresh = threshold_override.value_or(collision_threshold(ego));
  std::vector<ThreatAssessment> out;
  out.reserve(obstacles.size());
  for (const auto & obstacle : obstacles) {
    const CpaResult cpa = compute_cpa(robot, obstacle);
    ThreatAssessment a;
    a.obstacle_id = obstacle.id;
    a.tcpa = cpa.tcpa;
    a.dcpa = cpa.dcpa;
    a.is_collision = cpa.dcpa <= d_thresh && cpa.tcpa > 0.0 && cpa.tcpa < world.t_max;
    out.push_back(a);
  }

  std::vector<std::size_t> flagged;
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (out[i].is_collision) {
      flagged.push_back(i);
    }
  }
  std::sort(flagged.begin(), flagged.end(), [&](std::size_t a, std::size_t b) {
    if (out[a].tcpa != out[b].tcpa) {
      return out[a].tcpa < out[b].tcpa;
    }
    return out[a].obstacle_id < out[b].obstacle_id;
  });
  for (std::size_t r = 0; r < flagged.size(); ++r) {
    out[flagged[r]].rank = static_cast<int>(r);
  }
  return out;
}

/// Flagged threats only, most imminent first.
inline std::vector<ThreatAssessment> ranked_threats(std::span<const ThreatAssessment> all)
{
  std::vector<ThreatAssessment> out;
  for (const auto & a : all) {
    if (a.is_collision) {
      out.push_back(a);
    }
  }
  std::sort(out.begin(), out.end(), [](const auto & a, const auto & b) { return *a.rank < *b.rank; });
  return out;
}

}  // namespace eifp

#endif  // EIFP__THREAT_HPP_
