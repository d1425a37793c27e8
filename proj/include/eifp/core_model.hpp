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

#ifndef EIFP__CORE_MODEL_HPP_
#define EIFP__CORE_MODEL_HPP_

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace eifp
{

/// Raised when a kinematic or geometric routine receives non-finite input.
class ModelError : public std::runtime_error
{
public:
  explicit ModelError(const std::string & what) : std::runtime_error(what) {}
};

/// Planar vector. Positions in cm, velocities in cm/s.
struct Vec2
{
  double x{0.0};
  double y{0.0};

  constexpr Vec2 operator+(const Vec2 & o) const { return {x + o.x, y + o.y}; }
  constexpr Vec2 operator-(const Vec2 & o) const { return {x - o.x, y - o.y}; }
  constexpr Vec2 operator-() const { return {-x, -y}; }
  constexpr Vec2 operator*(double s) const { return {x * s, y * s}; }
  constexpr Vec2 operator/(double s) const { return {x / s, y / s}; }
  constexpr Vec2 & operator+=(const Vec2 & o)
  {
    x += o.x;
    y += o.y;
    return *this;
  }
  constexpr bool operator==(const Vec2 &) const = default;

  constexpr double dot(const Vec2 & o) const { return x * o.x + y * o.y; }
  constexpr double cross(const Vec2 & o) const { return x * o.y - y * o.x; }
  constexpr double squared_norm() const { return x * x + y * y; }
  double norm() const { return std::hypot(x, y); }
  bool finite() const { return std::isfinite(x) && std::isfinite(y); }
};

constexpr Vec2 operator*(double s, const Vec2 & v) { return v * s; }

inline double distance(const Vec2 & a, const Vec2 & b) { return (a - b).norm(); }

inline Vec2 unit_from_angle(double angle) { return {std::cos(angle), std::sin(angle)}; }

/// Normalizes an angle into (-pi, pi].
inline double wrap_angle(double angle)
{
  constexpr double kPi = std::numbers::pi;
  double wrapped = std::remainder(angle, 2.0 * kPi);
  if (wrapped <= -kPi) {
    wrapped += 2.0 * kPi;
  }
  return wrapped;
}

struct ControlInput
{
  double v{0.0};      // cm/s
  double omega{0.0};  // rad/s

  constexpr bool operator==(const ControlInput &) const = default;
};

struct RobotState
{
  Vec2 position;
  double heading{0.0};           // rad, (-pi, pi]
  double linear_velocity{0.0};   // cm/s
  double angular_velocity{0.0};  // rad/s

  constexpr bool operator==(const RobotState &) const = default;

  /// World-frame velocity implied by the last commanded speed and the heading.
  Vec2 velocity() const { return unit_from_angle(heading) * linear_velocity; }
};

struct AgentParams
{
  double radius{1.0};          // cm
  double v_min{0.0};           // cm/s
  double v_max{1.1};           // cm/s
  double omega_min{-std::numbers::pi};
  double omega_max{std::numbers::pi};
  double safety_margin{1.5};   // cm

  bool valid() const
  {
    return radius > 0.0 && safety_margin >= 0.0 && v_min <= v_max && omega_min <= omega_max;
  }
};

struct WorldParams
{
  double dt{1.0};             // s
  double t_max{10.0};         // s, forecast horizon
  double cone_aperture{1.1};  // cm/s

  bool valid() const { return dt > 0.0 && t_max > 0.0 && cone_aperture > 0.0; }
};

/// Saturates each control component to the agent's box. Idempotent.
inline ControlInput clamp_controls(const ControlInput & u, const AgentParams & params)
{
  return {
    std::clamp(u.v, params.v_min, params.v_max),
    std::clamp(u.omega, params.omega_min, params.omega_max)};
}

/// One explicit-Euler step of the unicycle. Position advances along the
/// heading held at the start of the step; the heading is wrapped afterwards.
inline RobotState unicycle_step(const RobotState & state, const ControlInput & u, double dt)
{
  if (!state.position.finite() || !std::isfinite(state.heading) || !std::isfinite(u.v) ||
      !std::isfinite(u.omega) || !std::isfinite(dt)) {
    throw ModelError("unicycle_step: non-finite state or control");
  }
  if (dt <= 0.0) {
    throw ModelError("unicycle_step: dt must be positive");
  }
  RobotState next;
  next.position = {
    state.position.x + u.v * std::cos(state.heading) * dt,
    state.position.y + u.v * std::sin(state.heading) * dt};
  next.heading = wrap_angle(state.heading + u.omega * dt);
  next.linear_velocity = u.v;
  next.angular_velocity = u.omega;
  return next;
}

}  // namespace eifp

#endif  // EIFP__CORE_MODEL_HPP_
