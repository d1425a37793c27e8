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

#ifndef EIFP__TRAJECTORY_HPP_
#define EIFP__TRAJECTORY_HPP_

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <stdexcept>
#include <vector>

#include "eifp/core_model.hpp"

namespace eifp
{

class DegeneratePathError : public std::runtime_error
{
public:
  DegeneratePathError() : std::runtime_error("fewer than two distinct waypoints") {}
};

inline constexpr double kWaypointMergeDistance = 1e-6;  // cm

/// [start, vias..., goal] with consecutive near-duplicates merged. A single
/// remaining point means the path is degenerate and the tracker should hold.
inline std::vector<Vec2> build_waypoints(const Vec2 & start, std::span<const Vec2> vias, const Vec2 & goal)
{
  std::vector<Vec2> out{start};
  auto push = [&](const Vec2 & p) {
    if (distance(p, out.back()) >= kWaypointMergeDistance) {
      out.push_back(p);
    }
  };
  for (const auto & v : vias) {
    push(v);
  }
  push(goal);
  return out;
}

/// Natural cubic spline through (knots[i], values[i]).
class NaturalCubicSpline
{
public:
  NaturalCubicSpline() = default;

  NaturalCubicSpline(std::vector<double> knots, std::vector<double> values)
  : t_(std::move(knots)), y_(std::move(values)), m_(t_.size(), 0.0)
  {
    const std::size_t n = t_.size();
    if (n < 3) {
      return;
    }
    // Tridiagonal system for interior second derivatives (Thomas algorithm).
    std::vector<double> diag(n, 0.0), rhs(n, 0.0), upper(n, 0.0);
    for (std::size_t i = 1; i + 1 < n; ++i) {
      const double h0 = t_[i] - t_[i - 1];
      const double h1 = t_[i + 1] - t_[i];
      diag[i] = 2.0 * (h0 + h1);
      upper[i] = h1;
      rhs[i] = 6.0 * ((y_[i + 1] - y_[i]) / h1 - (y_[i] - y_[i - 1]) / h0);
    }
    for (std::size_t i = 2; i + 1 < n; ++i) {
      const double lower = t_[i] - t_[i - 1];
      const double w = lower / diag[i - 1];
      diag[i] -= w * upper[i - 1];
      rhs[i] -= w * rhs[i - 1];
    }
    for (std::size_t i = n - 2; i >= 1; --i) {
      m_[i] = (rhs[i] - upper[i] * m_[i + 1]) / diag[i];
    }
  }

  double value(double t) const
  {
    const std::size_t i = interval(t);
    const double h = t_[i + 1] - t_[i];
    const double a = t_[i + 1] - t;
    const double b = t - t_[i];
    return m_[i] * a * a * a / (6.0 * h) + m_[i + 1] * b * b * b / (6.0 * h) +
           (y_[i] / h - m_[i] * h / 6.0) * a + (y_[i + 1] / h - m_[i + 1] * h / 6.0) * b;
  }

  double derivative(double t) const
  {
    const std::size_t i = interval(t);
    const double h = t_[i + 1] - t_[i];
    const double a = t_[i + 1] - t;
    const double b = t - t_[i];
    return -m_[i] * a * a / (2.0 * h) + m_[i + 1] * b * b / (2.0 * h) - (y_[i] / h - m_[i] * h / 6.0) +
           (y_[i + 1] / h - m_[i + 1] * h / 6.0);
  }

  double second_derivative(double t) const
  {
    const std::size_t i = interval(t);
    const double h = t_[i + 1] - t_[i];
    return (m_[i] * (t_[i + 1] - t) + m_[i + 1] * (t - t_[i])) / h;
  }

private:
  std::size_t interval(double t) const
  {
    const auto it = std::upper_bound(t_.begin(), t_.end(), t);
    const auto idx = static_cast<std::size_t>(std::max<std::ptrdiff_t>(it - t_.begin() - 1, 0));
    return std::min(idx, t_.size() - 2);
  }

  std::vector<double> t_;
  std::vector<double> y_;
  std::vector<double> m_;
};

struct PathPoint
{
  Vec2 position;
  Vec2 tangent;  // d position / d t
};

struct ReferencePose
{
  Vec2 position;
  double heading{0.0};
};

/// Spline-smoothed path over t in [0, 1], immutable after construction.
class ReferenceTrajectory
{
public:
  ReferenceTrajectory(std::vector<Vec2> waypoints, std::vector<double> knots)
  : waypoints_(std::move(waypoints)), knots_(std::move(knots))
  {
    std::vector<double> xs, ys;
    for (const auto & p : waypoints_) {
      xs.push_back(p.x);
      ys.push_back(p.y);
    }
    sx_ = NaturalCubicSpline(knots_, xs);
    sy_ = NaturalCubicSpline(knots_, ys);
    build_arc_table();
  }

  const std::vector<Vec2> & waypoints() const { return waypoints_; }
  const std::vector<double> & knots() const { return knots_; }
  double total_length() const { return total_length_; }

  PathPoint evaluate(double t) const
  {
    t = std::clamp(t, 0.0, 1.0);
    return {{sx_.value(t), sy_.value(t)}, {sx_.derivative(t), sy_.derivative(t)}};
  }

  Vec2 second_derivative(double t) const
  {
    t = std::clamp(t, 0.0, 1.0);
    return {sx_.second_derivative(t), sy_.second_derivative(t)};
  }

  double arc_length_at(double t) const
  {
    t = std::clamp(t, 0.0, 1.0);
    const double f = t * static_cast<double>(arc_.size() - 1);
    const auto i = std::min(static_cast<std::size_t>(f), arc_.size() - 2);
    const double frac = f - static_cast<double>(i);
    return arc_[i] + frac * (arc_[i + 1] - arc_[i]);
  }

  double param_at_arc_length(double s) const
  {
    if (s <= 0.0) {
      return 0.0;
    }
    if (s >= total_length_) {
      return 1.0;
    }
    const auto it = std::upper_bound(arc_.begin(), arc_.end(), s);
    const auto i = static_cast<std::size_t>(it - arc_.begin() - 1);
    const double seg = arc_[i + 1] - arc_[i];
    const double frac = seg > 0.0 ? (s - arc_[i]) / seg : 0.0;
    return (static_cast<double>(i) + frac) / static_cast<double>(arc_.size() - 1);
  }

  /// Arc length of the point on the path closest to `p`: coarse scan, then
  /// ternary refinement inside the best bracket.
  double project(const Vec2 & p) const
  {
    constexpr int kCoarse = 256;
    auto dist_sq = [&](double t) { return (evaluate(t).position - p).squared_norm(); };
    int best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (int i = 0; i <= kCoarse; ++i) {
      const double d = dist_sq(static_cast<double>(i) / kCoarse);
      if (d < best_d) {
        best_d = d;
        best = i;
      }
    }
    double lo = static_cast<double>(std::max(best - 1, 0)) / kCoarse;
    double hi = static_cast<double>(std::min(best + 1, kCoarse)) / kCoarse;
    for (int it = 0; it < 60; ++it) {
      const double m1 = lo + (hi - lo) / 3.0;
      const double m2 = hi - (hi - lo) / 3.0;
      if (dist_sq(m1) <= dist_sq(m2)) {
        hi = m2;
      } else {
        lo = m1;
      }
    }
    // Ternary search stalls near sqrt(eps) on a flat minimum; polish the
    // stationarity condition with Newton steps kept inside the bracket.
    const double a = static_cast<double>(std::max(best - 1, 0)) / kCoarse;
    const double b = static_cast<double>(std::min(best + 1, kCoarse)) / kCoarse;
    double t = 0.5 * (lo + hi);
    for (int it = 0; it < 8; ++it) {
      const PathPoint pp = evaluate(t);
      const Vec2 r = pp.position - p;
      const double g = r.dot(pp.tangent);
      const double h = pp.tangent.squared_norm() + r.dot(second_derivative(t));
      if (!(h > 0.0)) {
        break;
      }
      const double next = std::clamp(t - g / h, a, b);
      if (dist_sq(next) > dist_sq(t)) {
        break;
      }
      const bool done = std::abs(next - t) <= 1e-15;
      t = next;
      if (done) {
        break;
      }
    }
    return arc_length_at(t);
  }

  ReferencePose pose_at_arc_length(double s) const
  {
    const PathPoint pp = evaluate(param_at_arc_length(s));
    return {pp.position, std::atan2(pp.tangent.y, pp.tangent.x)};
  }

private:
  // Polyline arc-length table on a uniform t grid, doubled from 128 samples
  // until the total changes by less than 1e-6 relative.
  void build_arc_table()
  {
    auto table = [&](std::size_t n) {
      std::vector<double> arc(n + 1, 0.0);
      Vec2 prev = evaluate(0.0).position;
      for (std::size_t i = 1; i <= n; ++i) {
        const Vec2 p = evaluate(static_cast<double>(i) / static_cast<double>(n)).position;
        arc[i] = arc[i - 1] + distance(p, prev);
        prev = p;
      }
      return arc;
    };
    std::size_t n = 128;
    arc_ = table(n);
    while (n < (1u << 16)) {
      auto finer = table(2 * n);
      const double prev = arc_.back();
      arc_ = std::move(finer);
      n *= 2;
      if (std::abs(arc_.back() - prev) <= 1e-6 * std::max(arc_.back(), 1e-12)) {
        break;
      }
    }
    total_length_ = arc_.back();
  }

  std::vector<Vec2> waypoints_;
  std::vector<double> knots_;
  NaturalCubicSpline sx_;
  NaturalCubicSpline sy_;
  std::vector<double> arc_;
  double total_length_{0.0};
};

/// Fits independent natural cubic splines to x and y over chord-length knots
/// normalized to [0, 1].
inline ReferenceTrajectory fit_spline(std::span<const Vec2> waypoints)
{
  std::vector<Vec2> pts;
  for (const auto & p : waypoints) {
    if (!p.finite()) {
      throw ModelError("fit_spline: non-finite waypoint");
    }
    if (pts.empty() || distance(p, pts.back()) >= kWaypointMergeDistance) {
      pts.push_back(p);
    }
  }
  if (pts.size() < 2) {
    throw DegeneratePathError();
  }
  std::vector<double> knots(pts.size(), 0.0);
  for (std::size_t i = 1; i < pts.size(); ++i) {
    knots[i] = knots[i - 1] + distance(pts[i], pts[i - 1]);
  }
  const double chord = knots.back();
  for (auto & k : knots) {
    k /= chord;
  }
  knots.back() = 1.0;
  return ReferenceTrajectory(std::move(pts), std::move(knots));
}

/// `horizon` poses spaced speed * dt apart in arc length, starting one
/// spacing past `progress`; saturates at the path end.
inline std::vector<ReferencePose> sample_reference(
  const ReferenceTrajectory & traj, double speed, double dt, int horizon, double progress = 0.0)
{
  std::vector<ReferencePose> out;
  out.reserve(static_cast<std::size_t>(std::max(horizon, 0)));
  for (int k = 0; k < horizon; ++k) {
    const double s = std::min(progress + (k + 1) * speed * dt, traj.total_length());
    out.push_back(traj.pose_at_arc_length(s));
  }
  return out;
}

}  // namespace eifp

#endif  // EIFP__TRAJECTORY_HPP_
