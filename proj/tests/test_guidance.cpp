// Copyright 2026 The TrajFlow Authors
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

#include <gtest/gtest.h>

#include <cmath>
#include <functional>

#include "test_support.hpp"

namespace trajflow {
namespace {

using testing::random_state;
using testing::rel_err;

constexpr double kH = 1e-6;

// Central difference of f along entry (row, col) of s.
double central_difference(const std::function<double(const State&)>& f, State s, int row, int col) {
  const double saved = s(row, col);
  s(row, col) = saved + kH;
  const double up = f(s);
  s(row, col) = saved - kH;
  const double down = f(s);
  return (up - down) / (2 * kH);
}

State line_state(int t, const Vec3& from, const Vec3& to) {
  State s = State::Zero(t, kFrameDim);
  for (int j = 0; j < t; ++j) {
    const double a = static_cast<double>(j) / (t - 1);
    s.row(j).head<3>() = ((1 - a) * from + a * to).transpose();
    s.row(j).tail<6>() = Rot6::identity().a.transpose();
  }
  return s;
}

// ---------------------------------------------------------------------------
// Collision cost

TEST(CollisionCost, ZeroWhenOutsideMargin) {
  const std::vector<FixtureBox> boxes{FixtureBox(Vec3(0, 0, 0), Vec3(0.2, 0.2, 0.2))};
  const State s = line_state(10, Vec3(1, 1, 1), Vec3(2, 1, 1));
  const CostTerm c = collision_cost(s, boxes, 0.05, 2);
  EXPECT_EQ(c.value, 0.0);
  EXPECT_EQ(c.grad.cwiseAbs().maxCoeff(), 0.0);
}

TEST(CollisionCost, SingleViolationArithmetic) {
  const std::vector<FixtureBox> boxes{FixtureBox(Vec3(0, 0, 0), Vec3(0.2, 0.2, 0.2))};
  State s = line_state(6, Vec3(2, 0, 0), Vec3(3, 0, 0));
  s.row(4).head<3>() << 0.12, 0, 0;  // d = 0.02
  const CostTerm c = collision_cost(s, boxes, 0.05, 2);
  EXPECT_NEAR(c.value, 0.03, 1e-15);
  EXPECT_TRUE(c.grad.row(4).head<3>().isApprox(Eigen::RowVector3d(-1, 0, 0)));
}

TEST(CollisionCost, IgnoresHistoryFrames) {
  const std::vector<FixtureBox> boxes{FixtureBox(Vec3(0, 0, 0), Vec3(0.2, 0.2, 0.2))};
  State s = line_state(6, Vec3(2, 0, 0), Vec3(3, 0, 0));
  s.row(1).head<3>() << 0, 0, 0;
  EXPECT_EQ(collision_cost(s, boxes, 0.05, 2).value, 0.0);
}

TEST(CollisionCost, GradientMatchesFiniteDifferences) {
  Rng rng = make_rng(31);
  const int t = 12;
  const int h = 3;
  const double eps = 0.05;
  int instances = 0;
  int entries = 0;
  while (instances < 100) {
    std::vector<FixtureBox> boxes{testing::random_box(rng), testing::random_box(rng)};
    State s = random_state(rng, t, 0.3);
    // Pull a few frames into the margin band so the cost is active.
    for (int j = h; j < t; j += 2) {
      s.row(j).head<3>() = (boxes[0].center() + testing::random_vec(rng, -0.2, 0.2)).transpose();
    }
    auto f = [&](const State& x) { return collision_cost(x, boxes, eps, h).value; };
    const CostTerm c = collision_cost(s, boxes, eps, h);
    if (c.value == 0.0) continue;
    bool any = false;
    for (int j = h; j < t; ++j) {
      const Vec3 p = s.row(j).head<3>().transpose();
      // Tie sets: margin kink, box surface, medial planes, fixture ties.
      const double d0 = obb_sdf(p, boxes[0]);
      const double d1 = obb_sdf(p, boxes[1]);
      const double d = std::min(d0, d1);
      const FixtureBox& nearest = d0 <= d1 ? boxes[0] : boxes[1];
      const Vec3 q = nearest.to_local(p).cwiseAbs() - nearest.half_extents();
      Vec3 sorted = q;
      std::sort(sorted.data(), sorted.data() + 3);
      if (std::abs(d - eps) < 1e-4 || std::abs(d) < 1e-4 || std::abs(d0 - d1) < 1e-4 ||
          (q.maxCoeff() < 0 && sorted[2] - sorted[1] < 1e-4) || q.cwiseAbs().minCoeff() < 1e-4) {
        continue;
      }
      for (int k = 0; k < 3; ++k) {
        const double fd = central_difference(f, s, j, k);
        EXPECT_LT(rel_err(c.grad(j, k), fd), 1e-5) << "frame " << j << " axis " << k;
        ++entries;
        any = true;
      }
    }
    if (any) ++instances;
  }
  EXPECT_GE(entries, 300);
}

// ---------------------------------------------------------------------------
// Rotation cost

TEST(RotationCost, ConstantRateIsNearZero) {
  State s = State::Zero(10, kFrameDim);
  for (int j = 0; j < 10; ++j) s.row(j).tail<6>() = matrix_to_rot6(axis_angle(Vec3::UnitZ(), 0.0)).a.transpose() +
                                                   j * Eigen::Matrix<double, 1, 6>::Constant(0.1);
  const CostTerm c = rotation_cost(s, 2);
  // Seven terms, each 1 - n^2 / (n^2 + cosine_eps) with n^2 = 0.06.
  EXPECT_NEAR(c.value, 7 * (1.0 - 0.06 / (0.06 + 1e-8)), 1e-12);
}

TEST(RotationCost, ReversalTermIsTwo) {
  State s = State::Zero(5, kFrameDim);
  Eigen::Matrix<double, 1, 6> step = Eigen::Matrix<double, 1, 6>::Constant(0.2);
  s.row(1).tail<6>() = step;
  s.row(2).tail<6>() = 2 * step;
  s.row(3).tail<6>() = step;  // reversal between (1->2) and (2->3)
  s.row(4).tail<6>() = 0 * step;
  // H = 2: terms j = 2 and 3; j = 2 reverses, j = 3 continues.
  const CostTerm c = rotation_cost(s, 2);
  EXPECT_NEAR(c.value, 2.0, 1e-7);
}

TEST(RotationCost, ZeroIncrementCostsOneWithoutGradient) {
  State s = State::Zero(4, kFrameDim);
  s.row(3).tail<6>() = Eigen::Matrix<double, 1, 6>::Constant(1.0);
  const CostTerm c = rotation_cost(s, 1);
  // j = 1: both increments zero; j = 2: previous increment zero.
  EXPECT_EQ(c.value, 2.0);
  EXPECT_EQ(c.grad.cwiseAbs().maxCoeff(), 0.0);
}

TEST(RotationCost, GradientMatchesFiniteDifferences) {
  Rng rng = make_rng(32);
  const int t = 10;
  const int h = 3;
  for (int instance = 0; instance < 100; ++instance) {
    const State s = random_state(rng, t);
    auto f = [&](const State& x) { return rotation_cost(x, h).value; };
    const CostTerm c = rotation_cost(s, h);
    for (int probe = 0; probe < 5; ++probe) {
      const int j = uniform_int(rng, h - 1, t - 1);
      const int k = uniform_int(rng, 3, 8);
      EXPECT_LT(rel_err(c.grad(j, k), central_difference(f, s, j, k)), 1e-5);
    }
    EXPECT_EQ(c.grad.leftCols<3>().cwiseAbs().maxCoeff(), 0.0);
  }
}

// ---------------------------------------------------------------------------
// Velocity cost

TEST(VelocityCost, UniformMotionIsFree) {
  const State s = line_state(10, Vec3(0, 0, 0), Vec3(1, 2, 3));
  EXPECT_NEAR(velocity_cost(s, 2, 0.05).value, 0.0, 1e-9);
}

TEST(VelocityCost, SingleVelocityStep) {
  // Positions 0,0,0,1,2 along x with dt = 1: one velocity change of 1.
  State s = State::Zero(5, kFrameDim);
  s(3, 0) = 1;
  s(4, 0) = 2;
  EXPECT_DOUBLE_EQ(velocity_cost(s, 1, 1.0).value, 1.0);
}

TEST(VelocityCost, GradientMatchesFiniteDifferences) {
  Rng rng = make_rng(33);
  const int t = 10;
  const int h = 3;
  for (int instance = 0; instance < 100; ++instance) {
    const State s = random_state(rng, t, 0.2);
    auto f = [&](const State& x) { return velocity_cost(x, h, 0.05).value; };
    const CostTerm c = velocity_cost(s, h, 0.05);
    for (int probe = 0; probe < 5; ++probe) {
      const int j = uniform_int(rng, h, t - 1);
      const int k = uniform_int(rng, 0, 2);
      EXPECT_LT(rel_err(c.grad(j, k), central_difference(f, s, j, k)), 1e-5);
    }
    EXPECT_EQ(c.grad.rightCols<6>().cwiseAbs().maxCoeff(), 0.0);
  }
}

// ---------------------------------------------------------------------------
// Total cost and the refinement loop

TEST(TotalCost, DecompositionIdentity) {
  Rng rng = make_rng(34);
  GuidanceConfig cfg;
  cfg.lambda_rot = 1.7;
  cfg.lambda_vel = 0.3;
  for (int i = 0; i < 50; ++i) {
    const std::vector<FixtureBox> boxes{testing::random_box(rng)};
    const State s = random_state(rng, 12, 0.3);
    const CostReport r = total_cost(s, boxes, cfg, 3).report;
    EXPECT_NEAR(r.j_total, r.j_coll + cfg.lambda_rot * r.j_rot + cfg.lambda_vel * r.j_vel, 1e-12);
  }
}

TEST(TotalCost, GradientMatchesFiniteDifferences) {
  Rng rng = make_rng(35);
  GuidanceConfig cfg;
  int checked = 0;
  while (checked < 100) {
    const std::vector<FixtureBox> boxes{FixtureBox(Vec3::Zero(), Vec3(0.3, 0.3, 0.3))};
    const State s = random_state(rng, 12, 0.3);
    auto f = [&](const State& x) { return total_cost(x, boxes, cfg, 3).report.j_total; };
    const TotalCost c = total_cost(s, boxes, cfg, 3);
    const int j = uniform_int(rng, 3, 11);
    const int k = uniform_int(rng, 0, 8);
    const Vec3 p = s.row(j).head<3>().transpose();
    const double d = obb_sdf(p, boxes[0]);
    const Vec3 q = boxes[0].to_local(p).cwiseAbs() - boxes[0].half_extents();
    if (std::abs(d - cfg.epsilon) < 1e-4 || std::abs(d) < 1e-4 || q.cwiseAbs().minCoeff() < 1e-4) continue;
    EXPECT_LT(rel_err(c.grad(j, k), central_difference(f, s, j, k)), 1e-5);
    ++checked;
  }
}

TEST(TotalCost, HistoryFramesNeverMatter) {
  Rng rng = make_rng(36);
  const GuidanceConfig cfg;
  const std::vector<FixtureBox> boxes{testing::random_box(rng)};
  const State x_t = random_state(rng, 12, 0.3);
  const State v0 = random_state(rng, 12, 0.3);
  const State hist = random_state(rng, 3, 0.3);
  State x_perturbed = x_t;
  x_perturbed.topRows(3) += random_state(rng, 3, 1.0);
  const auto a = guided_velocity(x_t, v0, cfg, boxes, 0.05, hist);
  const auto b = guided_velocity(x_perturbed, v0, cfg, boxes, 0.05, hist);
  EXPECT_EQ(a.trace.front().j_total, b.trace.front().j_total);
  EXPECT_EQ(a.velocity.bottomRows(9), b.velocity.bottomRows(9));
  EXPECT_EQ(a.velocity.topRows(3), v0.topRows(3));
}

TEST(GuidedVelocity, ZeroStepsIsIdentity) {
  Rng rng = make_rng(37);
  GuidanceConfig cfg;
  cfg.k_steps = 0;
  const std::vector<FixtureBox> boxes{FixtureBox(Vec3::Zero(), Vec3(1, 1, 1))};
  const State x = random_state(rng, 12, 0.3);
  const State v0 = random_state(rng, 12);
  const auto r = guided_velocity(x, v0, cfg, boxes, 0.05, x.topRows(3));
  EXPECT_EQ(r.velocity, v0);
  EXPECT_EQ(r.trace.size(), 1u);
}

TEST(GuidedVelocity, NoActiveCostIsIdentity) {
  GuidanceConfig cfg;
  cfg.lambda_rot = 0.0;
  cfg.lambda_vel = 0.0;
  const std::vector<FixtureBox> boxes{FixtureBox(Vec3(5, 5, 5), Vec3(0.1, 0.1, 0.1))};
  Rng rng = make_rng(38);
  const State x = random_state(rng, 12, 0.3);
  const State v0 = random_state(rng, 12, 0.3);
  const auto r = guided_velocity(x, v0, cfg, boxes, 0.05, x.topRows(3));
  EXPECT_EQ(r.velocity, v0);
  EXPECT_EQ(r.trace.size(), 51u);
}

TEST(GuidedVelocity, NonFiniteCostAbortsWithDiagnostic) {
  Rng rng = make_rng(39);
  const GuidanceConfig cfg;
  const std::vector<FixtureBox> boxes{FixtureBox(Vec3::Zero(), Vec3(1, 1, 1))};
  State x = random_state(rng, 12, 0.3);
  x(7, 0) = std::numeric_limits<double>::infinity();
  const State v0 = State::Zero(12, kFrameDim);
  const auto r = guided_velocity(x, v0, cfg, boxes, 0.05, x.topRows(3));
  EXPECT_TRUE(r.aborted);
  EXPECT_EQ(r.velocity, v0);
  EXPECT_NE(r.diagnostic.find("non-finite"), std::string::npos);
}

// Plain gradient descent is not guaranteed monotone; at least 95 of 100
// colliding instances must not increase the collision cost.
TEST(GuidedVelocity, CollisionCostDescendsOnColliders) {
  Rng rng = make_rng(40);
  const GuidanceConfig cfg;
  const int t = kDefaultTrajLen;
  const int h = 24;
  int non_increasing = 0;
  int strictly = 0;
  for (int instance = 0; instance < 100; ++instance) {
    const FixtureBox box(testing::random_vec(rng, -0.1, 0.1), testing::random_vec(rng, 0.1, 0.3),
                         matrix_to_rot6(axis_angle(Vec3::UnitZ(), uniform(rng, 0, 3.14))));
    const std::vector<FixtureBox> boxes{box};
    State x = line_state(t, Vec3(-0.6, uniform(rng, -0.05, 0.05), 0.0), Vec3(0.6, uniform(rng, -0.05, 0.05), 0.0));
    for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] += 0.01 * standard_normal(rng);
    const State v0 = random_state(rng, t, 0.1);
    const auto r = guided_velocity(x, v0, cfg, boxes, 0.05, x.topRows(h));
    ASSERT_GT(r.trace.front().j_coll, 0.0);
    if (r.trace.back().j_coll <= r.trace.front().j_coll) ++non_increasing;
    if (r.trace.back().j_coll < r.trace.front().j_coll) ++strictly;
  }
  RecordProperty("non_increasing", non_increasing);
  EXPECT_GE(non_increasing, 95);
  EXPECT_GE(strictly, 95);
}

TEST(Guidance, ConfigValidation) {
  GuidanceConfig cfg;
  cfg.k_steps = -1;
  EXPECT_THROW(validate(cfg), Error);
  cfg = {};
  cfg.alpha = 0.0;
  EXPECT_THROW(validate(cfg), Error);
  cfg = {};
  cfg.lambda_vel = -1.0;
  EXPECT_THROW(validate(cfg), Error);
  EXPECT_NO_THROW(validate(GuidanceConfig{}));
}

TEST(Guidance, TraceCsvHasOneRowPerStep) {
  std::vector<CostReport> trace(3);
  const std::string csv = trace_to_csv(trace);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 4);
  EXPECT_EQ(csv.rfind("step,j_coll", 0), 0u);
}

}  // namespace
}  // namespace trajflow
