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


#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "eifp/trajectory.hpp"
#include "oracles.hpp"

namespace
{

using eifp::Vec2;

TEST(Waypoints, WithVia)
{
  const std::vector<Vec2> vias{{1, 1}};
  EXPECT_EQ(eifp::build_waypoints({0, 0}, vias, {2, 0}), (std::vector<Vec2>{{0, 0}, {1, 1}, {2, 0}}));
}

TEST(Waypoints, Direct) { EXPECT_EQ(eifp::build_waypoints({0, 0}, {}, {5, 0}), (std::vector<Vec2>{{0, 0}, {5, 0}})); }

TEST(Waypoints, DuplicateMerged)
{
  const std::vector<Vec2> vias{{0, 0}, {1, 0}};
  EXPECT_EQ(eifp::build_waypoints({0, 0}, vias, {1, 0}), (std::vector<Vec2>{{0, 0}, {1, 0}}));
  const std::vector<Vec2> near{{0.5e-6, 0}};
  EXPECT_EQ(eifp::build_waypoints({0, 0}, near, {1, 0}).size(), 2u);
}

TEST(Waypoints, DegenerateSinglePoint)
{
  const auto w = eifp::build_waypoints({2, 2}, {}, {2, 2});
  EXPECT_EQ(w.size(), 1u);
  EXPECT_THROW(eifp::fit_spline(w), eifp::DegeneratePathError);
}

TEST(Spline, CollinearIsStraight)
{
  const std::vector<Vec2> w{{0, 0}, {1, 0}, {2, 0}};
  const auto t = eifp::fit_spline(w);
  EXPECT_NEAR(t.evaluate(0.5).position.x, 1.0, 1e-12);
  EXPECT_NEAR(t.evaluate(0.5).position.y, 0.0, 1e-12);
  EXPECT_NEAR(t.evaluate(0.25).position.x, 0.5, 1e-12);
  EXPECT_NEAR(t.total_length(), 2.0, 1e-9);
}

TEST(Spline, TwoPointsLinear)
{
  const std::vector<Vec2> w{{0, 0}, {2, 0}};
  const auto t = eifp::fit_spline(w);
  EXPECT_NEAR(t.total_length(), 2.0, 1e-12);
  EXPECT_NEAR(t.evaluate(0.3).position.x, 0.6, 1e-12);
}

TEST(Spline, ArcAtLeastChordSum)
{
  const std::vector<Vec2> w{{0, 0}, {1, 1}, {2, 0}};
  const auto t = eifp::fit_spline(w);
  EXPECT_NEAR(t.evaluate(0.5).position.x, 1.0, 1e-12);
  EXPECT_NEAR(t.evaluate(0.5).position.y, 1.0, 1e-12);
  EXPECT_GE(t.total_length(), 2.0 * std::sqrt(2.0));
  // Dense polyline oracle.
  double arc = 0.0;
  Vec2 prev = t.evaluate(0.0).position;
  for (int i = 1; i <= 200000; ++i) {
    const Vec2 p = t.evaluate(i / 200000.0).position;
    arc += distance(p, prev);
    prev = p;
  }
  EXPECT_NEAR(t.total_length(), arc, 1e-5 * arc);
}

TEST(Spline, NaturalEnds)
{
  const std::vector<Vec2> w{{0, 0}, {3, 4}, {5, -1}, {9, 2}};
  const auto t = eifp::fit_spline(w);
  EXPECT_NEAR(t.second_derivative(0.0).norm(), 0.0, 1e-9);
  EXPECT_NEAR(t.second_derivative(1.0).norm(), 0.0, 1e-9);
}

TEST(Spline, ChordLengthKnots)
{
  const std::vector<Vec2> w{{0, 0}, {3, 4}, {3, 5}};
  const auto t = eifp::fit_spline(w);
  ASSERT_EQ(t.knots().size(), 3u);
  EXPECT_NEAR(t.knots()[1], 5.0 / 6.0, 1e-15);
  EXPECT_EQ(t.knots().back(), 1.0);
}

TEST(Spline, RejectsNonFinite)
{
  const std::vector<Vec2> w{{0, 0}, {NAN, 1}};
  EXPECT_THROW(eifp::fit_spline(w), eifp::ModelError);
}

TEST(Spline, InterpolationAndC1)
{
  std::mt19937_64 rng(41);
  for (int i = 0; i < 200; ++i) {
    const auto w = eifp::oracle::random_waypoints(rng);
    const auto t = eifp::fit_spline(w);
    const auto c = eifp::oracle::check_spline(t, w);
    ASSERT_LE(c.interpolation, 1e-9) << "set " << i;
    ASSERT_LE(c.c1_relative, 1e-4) << "set " << i;
  }
}

TEST(Spline, SecondDerivativeContinuousAtKnots)
{
  std::mt19937_64 rng(43);
  for (int i = 0; i < 100; ++i) {
    const auto w = eifp::oracle::random_waypoints(rng);
    const auto t = eifp::fit_spline(w);
    for (std::size_t k = 1; k + 1 < t.knots().size(); ++k) {
      const Vec2 a = t.second_derivative(t.knots()[k] - 1e-9);
      const Vec2 b = t.second_derivative(t.knots()[k] + 1e-9);
      ASSERT_LE(distance(a, b), 1e-4 * (1.0 + a.norm()));
    }
  }
}

TEST(Spline, ArcLengthRoundTrip)
{
  const std::vector<Vec2> w{{0, 0}, {4, 3}, {8, -2}};
  const auto t = eifp::fit_spline(w);
  for (double s = 0.0; s <= t.total_length(); s += 0.37) {
    EXPECT_NEAR(t.arc_length_at(t.param_at_arc_length(s)), s, 1e-9 * (1.0 + s));
  }
}

TEST(Spline, ProjectFindsNearest)
{
  const std::vector<Vec2> w{{0, 0}, {10, 0}};
  const auto t = eifp::fit_spline(w);
  EXPECT_NEAR(t.project({3.3, 2.0}), 3.3, 1e-9);
  EXPECT_NEAR(t.project({-4, 1}), 0.0, 1e-9);
  EXPECT_NEAR(t.project({14, 1}), 10.0, 1e-9);
}

TEST(SampleReference, UniformSteps)
{
  const std::vector<Vec2> w{{0, 0}, {10, 0}};
  const auto t = eifp::fit_spline(w);
  const auto r = eifp::sample_reference(t, 1.0, 1.0, 3, 0.0);
  ASSERT_EQ(r.size(), 3u);
  for (int k = 0; k < 3; ++k) {
    EXPECT_NEAR(r[k].position.x, k + 1.0, 1e-9);
    EXPECT_NEAR(r[k].position.y, 0.0, 1e-12);
    EXPECT_NEAR(r[k].heading, 0.0, 1e-12);
  }
}

TEST(SampleReference, SaturatesAtGoal)
{
  const std::vector<Vec2> w{{0, 0}, {10, 0}};
  const auto t = eifp::fit_spline(w);
  const auto r = eifp::sample_reference(t, 1.0, 1.0, 3, 9.5);
  for (const auto & p : r) {
    EXPECT_NEAR(p.position.x, 10.0, 1e-12);
    EXPECT_NEAR(p.heading, 0.0, 1e-12);
  }
}

TEST(SampleReference, HeadingsRotateSmoothly)
{
  const std::vector<Vec2> w{{0, 0}, {1, 1}, {1, 3}};
  const auto t = eifp::fit_spline(w);
  const auto r = eifp::sample_reference(t, 0.2, 1.0, 20, 0.0);
  for (std::size_t k = 1; k < r.size(); ++k) {
    EXPECT_LE(std::abs(eifp::wrap_angle(r[k].heading - r[k - 1].heading)), 1.0);
  }
}

TEST(SampleReference, MonotoneProgress)
{
  std::mt19937_64 rng(47);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int i = 0; i < 100; ++i) {
    const auto w = eifp::oracle::random_waypoints(rng);
    const auto t = eifp::fit_spline(w);
    const double start = unit(rng) * t.total_length();
    const double speed = 0.5 + unit(rng);
    const auto r = eifp::sample_reference(t, speed, 1.0, 15, start);
    double prev = start;
    Vec2 prev_pos = t.pose_at_arc_length(start).position;
    for (std::size_t k = 0; k < r.size(); ++k) {
      const double s = std::min(start + (k + 1.0) * speed, t.total_length());
      ASSERT_GE(s, prev);
      ASSERT_EQ(r[k].position, t.pose_at_arc_length(s).position);
      // Chord never exceeds the arc between samples.
      ASSERT_LE(distance(r[k].position, prev_pos), speed * (1.0 + 1e-3));
      prev = s;
      prev_pos = r[k].position;
    }
  }
}

}  // namespace
