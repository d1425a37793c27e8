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

#ifndef EIFP__VIAPOINT_HPP_
#define EIFP__VIAPOINT_HPP_

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <set>
#include <span>
#include <stdexcept>
#include <tuple>
#include <vector>

#include "eifp/core_model.hpp"
#include "eifp/threat.hpp"

namespace eifp
{

/// The robot sits inside (or on) the inflated disc of an obstacle.
class InsideInflationError : public std::runtime_error
{
public:
  InsideInflationError() : std::runtime_error("robot inside inflated obstacle") {}
};

/// A candidate coincides with the robot, so its heading is undefined.
class DegenerateCandidateError : public std::runtime_error
{
public:
  DegenerateCandidateError() : std::runtime_error("candidate coincides with robot position") {}
};

struct TangentPair
{
  Vec2 s1;             // alpha - theta side (right of the robot->obstacle ray)
  Vec2 s2;             // alpha + theta side (left)
  double alpha{0.0};   // bearing robot -> obstacle center
  double theta{0.0};   // half-angle subtended by the inflated disc
  double m{0.0};       // robot -> contact length
  double l{0.0};       // inflated radius
  double q{0.0};       // robot -> center distance
};

/// Tangent contacts from `robot_pos` to the disc of radius `inflated_radius`
/// around `center`. Throws InsideInflationError when the robot is not
/// strictly outside the disc.
inline TangentPair tangent_points(const Vec2 & robot_pos, const Vec2 & center, double inflated_radius)
{
  if (!robot_pos.finite() || !center.finite() || !std::isfinite(inflated_radius)) {
    throw ModelError("tangent_points: non-finite input");
  }
  TangentPair t;
  t.l = inflated_radius;
  t.q = distance(robot_pos, center);
  if (t.q <= t.l) {
    throw InsideInflationError();
  }
  t.alpha = std::atan2(center.y - robot_pos.y, center.x - robot_pos.x);
  t.theta = std::asin(t.l / t.q);
  t.m = std::sqrt((t.q - t.l) * (t.q + t.l));
  t.s1 = robot_pos + unit_from_angle(t.alpha - t.theta) * t.m;
  t.s2 = robot_pos + unit_from_angle(t.alpha + t.theta) * t.m;
  return t;
}

/// Inflated radius L = r_robot + r_obstacle + d_safety.
inline double inflated_radius(const AgentParams & ego, double obstacle_radius)
{
  return ego.radius + obstacle_radius + ego.safety_margin;
}

inline TangentPair tangent_points(
  const Vec2 & robot_pos, const KinematicSnapshot & obstacle, const AgentParams & ego)
{
  return tangent_points(robot_pos, obstacle.position, inflated_radius(ego, obstacle.radius));
}

/// A point in (x, y, t) space.
struct SpaceTime
{
  Vec2 xy;
  double t{0.0};
};

struct ConeIntersection
{
  std::optional<double> lambda;
  bool degenerate{false};  // the line lies on the cone surface
};

/// Intersects the line origin + lambda * dir with the cone
/// |xy - apex|^2 = aperture^2 t^2 and reports the smallest lambda > 0 whose
/// time coordinate is also positive.
inline ConeIntersection cone_line_intersection_diag(
  const Vec2 & apex, double aperture, const SpaceTime & origin, const SpaceTime & dir)
{
  const double dx = origin.xy.x - apex.x;
  const double dy = origin.xy.y - apex.y;
  const double r2 = aperture * aperture;
  const double a = dir.xy.squared_norm() - r2 * dir.t * dir.t;
  const double b = 2.0 * (dx * dir.xy.x + dy * dir.xy.y - r2 * origin.t * dir.t);
  const double c = dx * dx + dy * dy - r2 * origin.t * origin.t;

  ConeIntersection out;
  double roots[2];
  int n_roots = 0;
  if (a == 0.0) {
    if (b == 0.0) {
      out.degenerate = (c == 0.0);
      return out;
    }
    roots[n_roots++] = -c / b;
  } else {
    const double disc = b * b - 4.0 * a * c;
    if (disc < 0.0) {
      return out;
    }
    const double sq = std::sqrt(disc);
    const double q = -0.5 * (b + std::copysign(sq, b));
    if (q == 0.0) {
      // b == 0 and c == 0: the only root is lambda = 0.
      roots[n_roots++] = 0.0;
    } else {
      roots[n_roots++] = q / a;
      roots[n_roots++] = c / q;
    }
  }
  std::optional<double> best;
  for (int i = 0; i < n_roots; ++i) {
    const double lambda = roots[i];
    const double z = origin.t + lambda * dir.t;
    if (lambda > 0.0 && z > 0.0 && std::isfinite(lambda) && (!best || lambda < *best)) {
      best = lambda;
    }
  }
  out.lambda = best;
  return out;
}

inline std::optional<double> cone_line_intersection(
  const Vec2 & apex, double aperture, const SpaceTime & origin, const SpaceTime & dir)
{
  return cone_line_intersection_diag(apex, aperture, origin, dir).lambda;
}

/// A neighbor's extrapolated straight-line intent.
struct GhostPath
{
  AgentId agent{0};
  Vec2 start;
  Vec2 ghost_goal;
  double linearity{1.0};

  /// Static or zero-weight ghosts take no part in the interaction terms.
  bool active() const { return linearity > 0.0 && !(ghost_goal == start); }
};

/// Ratio of net displacement to travelled arc length; 1 for fewer than two
/// samples, 0 when the agent has not moved at all.
inline double linearity_score(std::span<const Vec2> positions)
{
  if (positions.size() < 2) {
    return 1.0;
  }
  double arc = 0.0;
  for (std::size_t i = 1; i < positions.size(); ++i) {
    arc += distance(positions[i], positions[i - 1]);
  }
  if (arc <= 0.0) {
    return 0.0;
  }
  return std::clamp(distance(positions.back(), positions.front()) / arc, 0.0, 1.0);
}

/// Builds one ghost path per neighbor. Each history holds that neighbor's
/// observed snapshots, oldest first; only the last `window` displacements
/// feed the linearity score.
inline std::vector<GhostPath> ghost_paths(
  std::span<const std::vector<KinematicSnapshot>> histories, double ghost_horizon, int window = 10)
{
  std::vector<GhostPath> out;
  out.reserve(histories.size());
  for (const auto & history : histories) {
    if (history.empty()) {
      continue;
    }
    const KinematicSnapshot & now = history.back();
    const std::size_t n = std::min<std::size_t>(history.size(), static_cast<std::size_t>(window) + 1);
    std::vector<Vec2> recent;
    recent.reserve(n);
    for (std::size_t i = history.size() - n; i < history.size(); ++i) {
      recent.push_back(history[i].position);
    }
    GhostPath g;
    g.agent = now.id;
    g.start = now.position;
    g.ghost_goal = now.position + now.velocity * ghost_horizon;
    g.linearity = linearity_score(recent);
    out.push_back(g);
  }
  return out;
}

struct CostWeights
{
  double w_g{1.0};
  double w_d{0.5};
  double w_a{0.5};
  double epsilon{1e-6};  // cm
};

struct CostTerms
{
  double length_term{0.0};
  double distance_term{0.0};
  double angle_term{0.0};
  double total{0.0};
};

inline double point_line_distance(const Vec2 & p, const Vec2 & a, const Vec2 & b)
{
  const Vec2 d = b - a;
  return std::abs(d.cross(p - a)) / d.norm();
}

inline double point_segment_distance(const Vec2 & p, const Vec2 & a, const Vec2 & b)
{
  const Vec2 d = b - a;
  const double len_sq = d.squared_norm();
  if (len_sq == 0.0) {
    return distance(p, a);
  }
  const double s = std::clamp((p - a).dot(d) / len_sq, 0.0, 1.0);
  return distance(p, a + d * s);
}

/// Normalized detour length plus ghost proximity and ghost misalignment
/// penalties.
inline CostTerms via_cost(
  const Vec2 & candidate, const Vec2 & ego_pos, const Vec2 & goal, std::span<const GhostPath> ghosts,
  const CostWeights & weights)
{
  const Vec2 heading = candidate - ego_pos;
  const double heading_norm = heading.norm();
  if (!(heading_norm > 1e-12)) {
    throw DegenerateCandidateError();
  }
  CostTerms t;
  t.length_term = (heading_norm + distance(candidate, goal)) / (distance(ego_pos, goal) + weights.epsilon);
  for (const auto & g : ghosts) {
    if (!g.active()) {
      continue;
    }
    const double d = std::max(point_line_distance(candidate, g.start, g.ghost_goal), weights.epsilon);
    t.distance_term += g.linearity / d;
    const Vec2 ghost_dir = g.ghost_goal - g.start;
    const double phi = 1.0 - heading.dot(ghost_dir) / (heading_norm * ghost_dir.norm());
    t.angle_term += g.linearity * phi;
  }
  t.total = weights.w_g * t.length_term + weights.w_d * t.distance_term + weights.w_a * t.angle_term;
  return t;
}

enum class TangentSide { kRight = 0, kLeft = 1, kEmergency = 2 };

struct ViaCandidate
{
  Vec2 point;
  double lambda{0.0};
  double eta_time{0.0};
  AgentId source_obstacle{0};
  TangentSide side{TangentSide::kRight};
  CostTerms cost_terms;
  double total_cost{0.0};
};

/// Relative tolerance under which two costs (or two lambdas) count as tied.
inline constexpr double kSelectionTieTolerance = 1e-9;

/// Cost argmin. Ties (within kSelectionTieTolerance relative) go to the
/// smaller lambda, then the right-hand tangent, then the smaller obstacle id,
/// then the lexicographically smaller point.
inline std::optional<ViaCandidate> select_viapoint(std::span<const ViaCandidate> candidates)
{
  if (candidates.empty()) {
    return std::nullopt;
  }
  double min_cost = std::numeric_limits<double>::infinity();
  for (const auto & c : candidates) {
    min_cost = std::min(min_cost, c.total_cost);
  }
  const double cost_band = min_cost + kSelectionTieTolerance * std::abs(min_cost);
  double min_lambda = std::numeric_limits<double>::infinity();
  for (const auto & c : candidates) {
    if (c.total_cost <= cost_band) {
      min_lambda = std::min(min_lambda, c.lambda);
    }
  }
  const double lambda_band = min_lambda + kSelectionTieTolerance * std::abs(min_lambda);
  const ViaCandidate * best = nullptr;
  auto key = [](const ViaCandidate & c) {
    return std::make_tuple(static_cast<int>(c.side), c.source_obstacle, c.point.x, c.point.y);
  };
  for (const auto & c : candidates) {
    if (c.total_cost > cost_band || c.lambda > lambda_band) {
      continue;
    }
    if (best == nullptr || key(c) < key(*best)) {
      best = &c;
    }
  }
  return *best;
}

struct CandidateSet
{
  std::vector<ViaCandidate> candidates;
  bool emergency{false};
  bool ghost_filter_relaxed{false};
  int discarded_by_ghosts{0};
};

/// Inputs shared by every candidate evaluation in one planning cycle.
struct PlanningContext
{
  AgentParams ego;
  WorldParams world;
  CostWeights weights;
  Vec2 goal;
  std::vector<GhostPath> ghosts;
  double d_thresh{0.0};
};

/// Via-point candidates around one threatening obstacle, seen from `from`.
/// Each tangent contact is carried along with the obstacle's velocity and
/// intersected with the reachable-position cone rooted at `from`. Candidates
/// too close to another agent's ghost path are discarded unless that would
/// leave none. An inflated-disc penetration yields a single emergency escape.
inline CandidateSet generate_candidates(
  const Vec2 & from, double heading, const KinematicSnapshot & obstacle, const PlanningContext & ctx)
{
  CandidateSet set;
  const double l = inflated_radius(ctx.ego, obstacle.radius);
  const double q = distance(from, obstacle.position);
  if (q <= l) {
    Vec2 away = from - obstacle.position;
    away = q > 0.0 ? away / q : -unit_from_angle(heading);
    ViaCandidate c;
    c.point = from + away * (l - q + ctx.ego.safety_margin);
    c.source_obstacle = obstacle.id;
    c.side = TangentSide::kEmergency;
    c.lambda = (l - q + ctx.ego.safety_margin) / ctx.world.cone_aperture;
    c.eta_time = c.lambda;
    c.cost_terms = via_cost(c.point, from, ctx.goal, ctx.ghosts, ctx.weights);
    c.total_cost = c.cost_terms.total;
    set.candidates.push_back(c);
    set.emergency = true;
    return set;
  }

  const TangentPair tp = tangent_points(from, obstacle.position, l);
  std::vector<ViaCandidate> all;
  for (const auto & [contact, side] :
       {std::pair{tp.s1, TangentSide::kRight}, std::pair{tp.s2, TangentSide::kLeft}}) {
    const auto lambda = cone_line_intersection(
      from, ctx.world.cone_aperture, SpaceTime{contact, 0.0}, SpaceTime{obstacle.velocity, 1.0});
    // A via-point reached only after the forecast horizon cannot resolve a
    // threat inside it.
    if (!lambda || *lambda > ctx.world.t_max) {
      continue;
    }
    ViaCandidate c;
    c.point = contact + obstacle.velocity * *lambda;
    c.lambda = *lambda;
    c.eta_time = *lambda;
    c.source_obstacle = obstacle.id;
    c.side = side;
    if (distance(c.point, from) <= 1e-12) {
      continue;
    }
    c.cost_terms = via_cost(c.point, from, ctx.goal, ctx.ghosts, ctx.weights);
    c.total_cost = c.cost_terms.total;
    all.push_back(c);
  }

  for (const auto & c : all) {
    bool too_close = false;
    for (const auto & g : ctx.ghosts) {
      if (g.agent == obstacle.id || !g.active()) {
        continue;
      }
      if (point_segment_distance(c.point, g.start, g.ghost_goal) < ctx.d_thresh) {
        too_close = true;
        break;
      }
    }
    if (too_close) {
      ++set.discarded_by_ghosts;
    } else {
      set.candidates.push_back(c);
    }
  }
  if (set.candidates.empty() && !all.empty()) {
    set.candidates = all;
    set.ghost_filter_relaxed = true;
  }
  return set;
}

struct PlanResult
{
  std::vector<Vec2> vias;
  std::vector<ThreatAssessment> threats;  // first-pass assessment
  bool emergency{false};
  bool infeasible{false};
  bool ghost_filter_relaxed{false};
};

/// One planning cycle: resolve the most imminent threat of the straight
/// route to the goal with a via-point, then re-check the remaining leg from
/// that via-point (with obstacles advanced to its arrival time) and repeat,
/// up to `max_vias` via-points.
inline PlanResult plan_via_points(
  const Vec2 & position, double heading, AgentId ego_id, std::span<const KinematicSnapshot> obstacles,
  const PlanningContext & ctx, int max_vias = 3)
{
  PlanResult result;
  Vec2 from = position;
  double t_offset = 0.0;
  std::set<AgentId> resolved;
  for (int depth = 0; depth < max_vias; ++depth) {
    const Vec2 to_goal = ctx.goal - from;
    const double dist_goal = to_goal.norm();
    if (dist_goal <= 1e-9) {
      break;
    }
    KinematicSnapshot robot;
    robot.id = ego_id;
    robot.position = from;
    robot.velocity = to_goal * (ctx.ego.v_max / dist_goal);
    robot.radius = ctx.ego.radius;

    std::vector<KinematicSnapshot> forecast;
    forecast.reserve(obstacles.size());
    for (const auto & o : obstacles) {
      if (!resolved.contains(o.id)) {
        forecast.push_back(o.advanced(t_offset));
      }
    }
    const auto assessed = assess_threats(robot, ctx.ego, ctx.world, forecast, ctx.d_thresh);
    if (depth == 0) {
      result.threats = assessed;
    }
    const auto ranked = ranked_threats(assessed);
    if (ranked.empty()) {
      break;
    }
    auto find = [&](AgentId id) {
      return std::find_if(forecast.begin(), forecast.end(), [&](const auto & o) { return o.id == id; });
    };
    auto top = find(ranked.front().obstacle_id);
    // Already inside some threat's inflated disc: escape the deepest one
    // before anything else, or a tangent around another agent can lead
    // straight back into it.
    double deepest = -1.0;
    for (const auto & t : ranked) {
      const auto o = find(t.obstacle_id);
      const double depth_in = inflated_radius(ctx.ego, o->radius) - distance(from, o->position);
      if (depth_in >= 0.0 && depth_in > deepest) {
        deepest = depth_in;
        top = o;
      }
    }
    const CandidateSet set = generate_candidates(from, heading, *top, ctx);
    result.ghost_filter_relaxed = result.ghost_filter_relaxed || set.ghost_filter_relaxed;
    if (set.emergency) {
      result.vias.push_back(set.candidates.front().point);
      result.emergency = true;
      break;
    }
    const auto chosen = select_viapoint(set.candidates);
    if (!chosen) {
      result.infeasible = true;
      break;
    }
    result.vias.push_back(chosen->point);
    resolved.insert(top->id);
    t_offset += chosen->eta_time;
    heading = std::atan2(chosen->point.y - from.y, chosen->point.x - from.x);
    from = chosen->point;
  }
  return result;
}

}  // namespace eifp

#endif  // EIFP__VIAPOINT_HPP_
