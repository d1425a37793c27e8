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

#ifndef EIFP__MPC_HPP_
#define EIFP__MPC_HPP_

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "eifp/core_model.hpp"
#include "eifp/trajectory.hpp"

namespace eifp
{

struct MpcConfig
{
  int horizon{10};
  std::array<double, 3> q_weights{10.0, 10.0, 1.0};  // x, y, heading
  std::array<double, 2> r_weights{1.0, 0.5};         // v, omega
  int max_iterations{50};
  double convergence_tol{1e-6};  // relative cost decrease
  double obstacle_clearance{6.5};  // cm
  bool obstacle_constraints{false};

  bool valid() const
  {
    auto nonneg = [](double w) { return w >= 0.0; };
    auto pos = [](double w) { return w > 0.0; };
    return horizon >= 1 && std::all_of(q_weights.begin(), q_weights.end(), nonneg) &&
           std::all_of(r_weights.begin(), r_weights.end(), nonneg) &&
           std::any_of(q_weights.begin(), q_weights.end(), pos) &&
           std::any_of(r_weights.begin(), r_weights.end(), pos) && max_iterations >= 0;
  }
};

struct MpcSolution
{
  std::vector<ControlInput> controls;
  std::vector<RobotState> predicted_states;
  double cost{0.0};
  bool converged{false};
  bool infeasible{false};
  int iterations_used{0};
};

/// Forecast positions of one moving obstacle; points[k] is matched against
/// predicted_states[k].
struct ObstacleTrack
{
  std::vector<Vec2> points;
};

/// Predicted states after each control; states[k] follows controls[0..k].
inline std::vector<RobotState> rollout(
  const RobotState & current, std::span<const ControlInput> controls, double dt)
{
  std::vector<RobotState> states;
  states.reserve(controls.size());
  RobotState s = current;
  for (const auto & u : controls) {
    s = unicycle_step(s, u, dt);
    states.push_back(s);
  }
  return states;
}

/// Quadratic tracking-plus-effort cost with the heading error wrapped into
/// (-pi, pi].
inline double mpc_cost(
  std::span<const RobotState> states, std::span<const ReferencePose> refs,
  std::span<const ControlInput> controls, const MpcConfig & cfg)
{
  if (states.size() != refs.size() || states.size() != controls.size()) {
    throw std::invalid_argument("mpc_cost: length mismatch");
  }
  double cost = 0.0;
  for (std::size_t k = 0; k < states.size(); ++k) {
    const double ex = states[k].position.x - refs[k].position.x;
    const double ey = states[k].position.y - refs[k].position.y;
    const double eh = wrap_angle(states[k].heading - refs[k].heading);
    cost += cfg.q_weights[0] * ex * ex + cfg.q_weights[1] * ey * ey + cfg.q_weights[2] * eh * eh;
    cost += cfg.r_weights[0] * controls[k].v * controls[k].v +
            cfg.r_weights[1] * controls[k].omega * controls[k].omega;
  }
  return cost;
}

namespace detail
{

struct MpcProblem
{
  RobotState current;
  std::span<const ReferencePose> refs;
  const MpcConfig * cfg;
  const AgentParams * params;
  double dt;
  std::span<const ObstacleTrack> obstacles;
  double penalty;  // 0 disables the clearance hinge
};

inline std::vector<ControlInput> unpack(const Eigen::VectorXd & z)
{
  std::vector<ControlInput> u(static_cast<std::size_t>(z.size() / 2));
  for (std::size_t k = 0; k < u.size(); ++k) {
    u[k] = {z[2 * k], z[2 * k + 1]};
  }
  return u;
}

inline double clearance_penalty(const MpcProblem & p, std::span<const RobotState> states)
{
  if (p.penalty <= 0.0) {
    return 0.0;
  }
  double total = 0.0;
  for (const auto & track : p.obstacles) {
    for (std::size_t k = 0; k < states.size() && k < track.points.size(); ++k) {
      const double gap = p.cfg->obstacle_clearance - distance(states[k].position, track.points[k]);
      if (gap > 0.0) {
        total += p.penalty * gap * gap;
      }
    }
  }
  return total;
}

inline double max_violation(const MpcProblem & p, std::span<const RobotState> states)
{
  double worst = 0.0;
  for (const auto & track : p.obstacles) {
    for (std::size_t k = 0; k < states.size() && k < track.points.size(); ++k) {
      worst = std::max(worst, p.cfg->obstacle_clearance - distance(states[k].position, track.points[k]));
    }
  }
  return worst;
}

inline double objective(const MpcProblem & p, const Eigen::VectorXd & z)
{
  const auto u = unpack(z);
  const auto states = rollout(p.current, u, p.dt);
  return mpc_cost(states, p.refs, u, *p.cfg) + clearance_penalty(p, states);
}

// Residuals and Jacobian of the least-squares form of the objective.
inline void linearize(
  const MpcProblem & p, const Eigen::VectorXd & z, Eigen::VectorXd & res, Eigen::MatrixXd & jac)
{
  const int n = p.cfg->horizon;
  const auto u = unpack(z);
  const auto states = rollout(p.current, u, p.dt);
  const double dt = p.dt;

  // Unwrapped headings theta_0..theta_{n-1} seen by each control.
  std::vector<double> theta(static_cast<std::size_t>(n));
  double th = p.current.heading;
  for (int k = 0; k < n; ++k) {
    theta[static_cast<std::size_t>(k)] = th;
    th += u[static_cast<std::size_t>(k)].omega * dt;
  }

  std::size_t n_hinge = 0;
  if (p.penalty > 0.0) {
    for (const auto & track : p.obstacles) {
      n_hinge += std::min(track.points.size(), static_cast<std::size_t>(n));
    }
  }
  const int rows = 5 * n + static_cast<int>(n_hinge);
  res.setZero(rows);
  jac.setZero(rows, 2 * n);

  const std::array<double, 3> sq{
    std::sqrt(p.cfg->q_weights[0]), std::sqrt(p.cfg->q_weights[1]), std::sqrt(p.cfg->q_weights[2])};
  const std::array<double, 2> sr{std::sqrt(p.cfg->r_weights[0]), std::sqrt(p.cfg->r_weights[1])};

  // Position sensitivities of predicted state k with respect to each control.
  Eigen::MatrixXd dx = Eigen::MatrixXd::Zero(n, 2 * n);
  Eigen::MatrixXd dy = Eigen::MatrixXd::Zero(n, 2 * n);
  for (int k = 0; k < n; ++k) {
    for (int i = 0; i <= k; ++i) {
      const double c = std::cos(theta[static_cast<std::size_t>(i)]);
      const double s = std::sin(theta[static_cast<std::size_t>(i)]);
      const double v = u[static_cast<std::size_t>(i)].v;
      dx(k, 2 * i) = c * dt;
      dy(k, 2 * i) = s * dt;
      // theta_i depends on omega_j for every j < i.
      for (int j = 0; j < i; ++j) {
        dx(k, 2 * j + 1) += -v * s * dt * dt;
        dy(k, 2 * j + 1) += v * c * dt * dt;
      }
    }
  }

  for (int k = 0; k < n; ++k) {
    const auto & st = states[static_cast<std::size_t>(k)];
    const auto & ref = p.refs[static_cast<std::size_t>(k)];
    res[3 * k] = sq[0] * (st.position.x - ref.position.x);
    res[3 * k + 1] = sq[1] * (st.position.y - ref.position.y);
    res[3 * k + 2] = sq[2] * wrap_angle(st.heading - ref.heading);
    jac.row(3 * k) = sq[0] * dx.row(k);
    jac.row(3 * k + 1) = sq[1] * dy.row(k);
    for (int j = 0; j <= k; ++j) {
      jac(3 * k + 2, 2 * j + 1) = sq[2] * dt;
    }
    const auto & uk = u[static_cast<std::size_t>(k)];
    res[3 * n + 2 * k] = sr[0] * uk.v;
    res[3 * n + 2 * k + 1] = sr[1] * uk.omega;
    jac(3 * n + 2 * k, 2 * k) = sr[0];
    jac(3 * n + 2 * k + 1, 2 * k + 1) = sr[1];
  }

  if (p.penalty > 0.0) {
    const double sp = std::sqrt(p.penalty);
    int row = 5 * n;
    for (const auto & track : p.obstacles) {
      for (int k = 0; k < n && k < static_cast<int>(track.points.size()); ++k, ++row) {
        const Vec2 diff = states[static_cast<std::size_t>(k)].position - track.points[static_cast<std::size_t>(k)];
        const double d = diff.norm();
        const double gap = p.cfg->obstacle_clearance - d;
        if (gap <= 0.0 || d == 0.0) {
          continue;
        }
        res[row] = sp * gap;
        jac.row(row) = -sp * (diff.x / d * dx.row(k) + diff.y / d * dy.row(k));
      }
    }
  }
}

inline Eigen::VectorXd project(const MpcProblem & p, Eigen::VectorXd z)
{
  for (Eigen::Index k = 0; k < z.size() / 2; ++k) {
    z[2 * k] = std::clamp(z[2 * k], p.params->v_min, p.params->v_max);
    z[2 * k + 1] = std::clamp(z[2 * k + 1], p.params->omega_min, p.params->omega_max);
  }
  return z;
}

struct DescentResult
{
  Eigen::VectorXd z;
  double cost{0.0};
  bool converged{false};
  int iterations{0};
};

// Projected Gauss-Newton with Levenberg damping and backtracking. Variables
// pinned at a bound with the gradient pointing outward are held fixed for the
// Newton step. The cost never increases.
inline DescentResult descend(const MpcProblem & p, Eigen::VectorXd z)
{
  const int nz = static_cast<int>(z.size());
  DescentResult out;
  out.z = z;
  out.cost = objective(p, z);
  double damping = 1e-6;
  Eigen::VectorXd res;
  Eigen::MatrixXd jac;
  for (int it = 0; it < p.cfg->max_iterations; ++it) {
    out.iterations = it + 1;
    linearize(p, out.z, res, jac);
    const Eigen::VectorXd grad = jac.transpose() * res;
    std::vector<int> free_idx;
    for (int i = 0; i < nz; ++i) {
      const bool is_v = (i % 2) == 0;
      const double lo = is_v ? p.params->v_min : p.params->omega_min;
      const double hi = is_v ? p.params->v_max : p.params->omega_max;
      const bool pinned_lo = out.z[i] <= lo && grad[i] > 0.0;
      const bool pinned_hi = out.z[i] >= hi && grad[i] < 0.0;
      if (!(pinned_lo || pinned_hi)) {
        free_idx.push_back(i);
      }
    }
    if (free_idx.empty()) {
      out.converged = true;
      break;
    }
    const int nf = static_cast<int>(free_idx.size());
    Eigen::MatrixXd jf(jac.rows(), nf);
    Eigen::VectorXd gf(nf);
    for (int c = 0; c < nf; ++c) {
      jf.col(c) = jac.col(free_idx[static_cast<std::size_t>(c)]);
      gf[c] = grad[free_idx[static_cast<std::size_t>(c)]];
    }
    if (gf.norm() <= 1e-12) {
      out.converged = true;
      break;
    }

    bool improved = false;
    double new_cost = out.cost;
    Eigen::VectorXd new_z = out.z;
    for (int attempt = 0; attempt < 8 && !improved; ++attempt) {
      Eigen::MatrixXd h = jf.transpose() * jf;
      h.diagonal().array() += damping * (1.0 + h.diagonal().array());
      const Eigen::VectorXd step = h.ldlt().solve(-gf);
      double alpha = 1.0;
      for (int ls = 0; ls < 12; ++ls, alpha *= 0.5) {
        Eigen::VectorXd trial = out.z;
        for (int c = 0; c < nf; ++c) {
          trial[free_idx[static_cast<std::size_t>(c)]] += alpha * step[c];
        }
        trial = project(p, trial);
        const double c_trial = objective(p, trial);
        if (c_trial < out.cost) {
          new_cost = c_trial;
          new_z = trial;
          improved = true;
          break;
        }
      }
      if (improved) {
        damping = std::max(damping * 0.3, 1e-9);
      } else {
        damping *= 10.0;
      }
    }
    if (!improved) {
      out.converged = true;
      break;
    }
    const double decrease = out.cost - new_cost;
    out.z = new_z;
    out.cost = new_cost;
    if (decrease <= p.cfg->convergence_tol * std::max(out.cost, 1e-12)) {
      out.converged = true;
      break;
    }
  }
  return out;
}

inline Eigen::VectorXd pack(std::span<const ControlInput> u)
{
  Eigen::VectorXd z(static_cast<Eigen::Index>(2 * u.size()));
  for (std::size_t k = 0; k < u.size(); ++k) {
    z[static_cast<Eigen::Index>(2 * k)] = u[k].v;
    z[static_cast<Eigen::Index>(2 * k + 1)] = u[k].omega;
  }
  return z;
}

// Feed-forward guess: speed from reference spacing, turn rate from the
// heading change between consecutive reference poses.
inline std::vector<ControlInput> nominal_guess(const MpcProblem & p)
{
  std::vector<ControlInput> u;
  Vec2 prev_pos = p.current.position;
  double prev_heading = p.current.heading;
  for (const auto & ref : p.refs) {
    ControlInput c{
      distance(ref.position, prev_pos) / p.dt, wrap_angle(ref.heading - prev_heading) / p.dt};
    u.push_back(clamp_controls(c, *p.params));
    prev_pos = ref.position;
    prev_heading = ref.heading;
  }
  return u;
}

}  // namespace detail

/// Receding-horizon tracking solve. The returned controls respect the input
/// box, predicted_states is their exact rollout, and the cost is no larger
/// than that of the zero sequence or of `warm_start`. With obstacle
/// constraints enabled the clearance is enforced by an escalating exterior
/// penalty; if it cannot be met the 1e3-weighted soft solution is returned
/// with `infeasible` set.
inline MpcSolution solve_mpc(
  const RobotState & current, std::span<const ReferencePose> refs, const MpcConfig & cfg,
  const AgentParams & params, double dt, std::span<const ObstacleTrack> moving_obstacles = {},
  std::span<const ControlInput> warm_start = {})
{
  if (cfg.horizon < 1) {
    throw std::invalid_argument("solve_mpc: horizon must be at least 1");
  }
  if (static_cast<int>(refs.size()) != cfg.horizon) {
    throw std::invalid_argument("solve_mpc: reference length must equal the horizon");
  }
  for (const auto & r : refs) {
    if (!r.position.finite() || !std::isfinite(r.heading)) {
      throw ModelError("solve_mpc: non-finite reference");
    }
  }
  if (!current.position.finite() || !std::isfinite(current.heading)) {
    throw ModelError("solve_mpc: non-finite state");
  }

  detail::MpcProblem p{current, refs, &cfg, &params, dt, moving_obstacles, 0.0};
  const bool constrained = cfg.obstacle_constraints && !moving_obstacles.empty();

  std::vector<Eigen::VectorXd> starts;
  starts.push_back(Eigen::VectorXd::Zero(2 * cfg.horizon));
  if (static_cast<int>(warm_start.size()) == cfg.horizon) {
    starts.push_back(detail::project(p, detail::pack(warm_start)));
  }
  starts.push_back(detail::pack(detail::nominal_guess(p)));

  auto solve_at = [&](double penalty, std::span<const Eigen::VectorXd> seeds) {
    p.penalty = penalty;
    std::size_t best = 0;
    double best_cost = detail::objective(p, seeds[0]);
    for (std::size_t i = 1; i < seeds.size(); ++i) {
      const double c = detail::objective(p, seeds[i]);
      if (c < best_cost) {
        best_cost = c;
        best = i;
      }
    }
    return detail::descend(p, seeds[best]);
  };

  auto finish = [&](const detail::DescentResult & r, bool converged, bool infeasible) {
    MpcSolution sol;
    sol.controls = detail::unpack(r.z);
    sol.predicted_states = rollout(current, sol.controls, dt);
    sol.cost = r.cost;
    sol.converged = converged;
    sol.infeasible = infeasible;
    sol.iterations_used = r.iterations;
    return sol;
  };

  if (!constrained) {
    const auto r = solve_at(0.0, starts);
    return finish(r, r.converged, false);
  }

  constexpr double kSoftPenalty = 1e3;
  constexpr double kFeasibleTol = 1e-6;
  const auto soft = solve_at(kSoftPenalty, starts);
  int total_iterations = soft.iterations;
  auto soft_states = rollout(current, detail::unpack(soft.z), dt);
  if (detail::max_violation(p, soft_states) <= kFeasibleTol) {
    auto sol = finish(soft, soft.converged, false);
    sol.iterations_used = total_iterations;
    return sol;
  }
  for (const double penalty : {1e5, 1e7}) {
    std::vector<Eigen::VectorXd> seeds = starts;
    seeds.push_back(soft.z);
    const auto hard = solve_at(penalty, seeds);
    total_iterations += hard.iterations;
    const auto states = rollout(current, detail::unpack(hard.z), dt);
    if (detail::max_violation(p, states) <= kFeasibleTol) {
      auto sol = finish(hard, hard.converged, false);
      sol.iterations_used = total_iterations;
      return sol;
    }
  }
  auto sol = finish(soft, false, true);
  sol.iterations_used = total_iterations;
  return sol;
}

inline ControlInput apply_first(const MpcSolution & solution)
{
  if (solution.controls.empty()) {
    throw std::invalid_argument("apply_first: empty solution");
  }
  return solution.controls.front();
}

/// Shifts a control sequence one step forward, repeating its last entry.
inline std::vector<ControlInput> shift_controls(std::span<const ControlInput> controls)
{
  if (controls.empty()) {
    return {};
  }
  std::vector<ControlInput> out(controls.begin() + 1, controls.end());
  out.push_back(controls.back());
  return out;
}

}  // namespace eifp

#endif  // EIFP__MPC_HPP_
