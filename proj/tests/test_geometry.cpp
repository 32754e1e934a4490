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
#include <numbers>

#include "test_support.hpp"

namespace trajflow {
namespace {

using testing::random_box;
using testing::random_rotation;
using testing::random_vec;

// Distance to a dense grid of surface samples (spacing <= 2 mm).
double sampled_surface_distance(const Vec3& p, const FixtureBox& box, double spacing = 0.002) {
  const Vec3 half = box.half_extents();
  const Vec3 q = box.to_local(p);
  double best = std::numeric_limits<double>::infinity();
  for (int axis = 0; axis < 3; ++axis) {
    const int u = (axis + 1) % 3;
    const int v = (axis + 2) % 3;
    const int nu = static_cast<int>(std::ceil(2 * half[u] / spacing));
    const int nv = static_cast<int>(std::ceil(2 * half[v] / spacing));
    for (double side : {-1.0, 1.0}) {
      for (int i = 0; i <= nu; ++i) {
        for (int j = 0; j <= nv; ++j) {
          Vec3 s;
          s[axis] = side * half[axis];
          s[u] = -half[u] + 2 * half[u] * i / nu;
          s[v] = -half[v] + 2 * half[v] * j / nv;
          best = std::min(best, (s - q).squaredNorm());
        }
      }
    }
  }
  return std::sqrt(best);
}

TEST(Rot6, IdentityEmbedding) {
  EXPECT_TRUE(rot6_to_matrix(Rot6::identity()).isApprox(RotMat::Identity(), 0.0));
}

TEST(Rot6, GramSchmidtExample) {
  const RotMat m = rot6_to_matrix(Rot6(2, 0, 0, 1, 1, 0));
  EXPECT_TRUE(m.isApprox(RotMat::Identity(), 1e-15));
}

TEST(Rot6, DegenerateInputsThrow) {
  EXPECT_THROW(rot6_to_matrix(Rot6(0, 0, 0, 0, 1, 0)), Error);
  EXPECT_THROW(rot6_to_matrix(Rot6(1, 0, 0, 2, 0, 0)), Error);
  try {
    rot6_to_matrix(Rot6(1, 2, 3, 2, 4, 6));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kDegenerateRotation);
  }
}

TEST(Rot6, RoundTripThousandRotations) {
  Rng rng = make_rng(11);
  for (int i = 0; i < 1000; ++i) {
    const RotMat r = random_rotation(rng);
    const RotMat back = rot6_to_matrix(matrix_to_rot6(r));
    EXPECT_LE((back - r).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(Rot6, GramSchmidtAlwaysYieldsRotation) {
  Rng rng = make_rng(12);
  for (int i = 0; i < 1000; ++i) {
    Vec6 a;
    for (int k = 0; k < 6; ++k) a[k] = standard_normal(rng);
    EXPECT_TRUE(is_rotation(rot6_to_matrix(Rot6(a)), 1e-12));
  }
}

TEST(Geodesic, KnownAngles) {
  const RotMat r = axis_angle(Vec3::UnitZ(), 0.7);
  EXPECT_NEAR(geodesic_distance(RotMat::Identity(), r), 0.7, 1e-12);
  EXPECT_NEAR(geodesic_distance(RotMat::Identity(), axis_angle(Vec3::UnitX(), std::numbers::pi)), std::numbers::pi,
              1e-7);
  EXPECT_EQ(geodesic_distance(r, r), 0.0);
}

TEST(Geodesic, MatchesTraceFormula) {
  Rng rng = make_rng(14);
  for (int i = 0; i < 1000; ++i) {
    const RotMat a = random_rotation(rng);
    const RotMat b = random_rotation(rng);
    const double c = ((a.transpose() * b).trace() - 1.0) / 2.0;
    EXPECT_NEAR(geodesic_distance(a, b), std::acos(std::clamp(c, -1.0, 1.0)), 1e-6);
  }
}

TEST(Geodesic, SymmetricAndBiInvariant) {
  Rng rng = make_rng(13);
  for (int i = 0; i < 200; ++i) {
    const RotMat a = random_rotation(rng);
    const RotMat b = random_rotation(rng);
    const RotMat g = random_rotation(rng);
    EXPECT_NEAR(geodesic_distance(a, b), geodesic_distance(b, a), 1e-12);
    EXPECT_NEAR(geodesic_distance(g * a, g * b), geodesic_distance(a, b), 1e-7);
  }
}

TEST(FixtureBox, RejectsNonPositiveSize) {
  EXPECT_THROW(FixtureBox(Vec3::Zero(), Vec3(1, 0, 1)), Error);
  EXPECT_THROW(FixtureBox(Vec3::Zero(), Vec3(1, -1, 1)), Error);
}

TEST(ObbSdf, AxisAlignedExamples) {
  const FixtureBox box(Vec3::Zero(), Vec3(2, 2, 2));
  EXPECT_DOUBLE_EQ(obb_sdf(Vec3(2, 0, 0), box), 1.0);
  EXPECT_DOUBLE_EQ(obb_sdf(Vec3(0, 0, 0), box), -1.0);
  EXPECT_DOUBLE_EQ(obb_sdf(Vec3(2, 2, 0), box), std::sqrt(2.0));
  EXPECT_DOUBLE_EQ(obb_sdf(Vec3(1, 0.3, 0.2), box), 0.0);
}

TEST(ObbSdf, DenseSurfaceOracle) {
  Rng rng = make_rng(21);
  int checked = 0;
  while (checked < 1000) {
    const FixtureBox box = random_box(rng);
    const Vec3 p = box.center() + random_vec(rng, -0.4, 0.4);
    const double oracle = sampled_surface_distance(p, box);
    if (oracle < 0.01) continue;
    const double d = obb_sdf(p, box);
    EXPECT_NEAR(std::abs(d), oracle, 0.002);
    EXPECT_EQ(d < 0.0, box.contains(p));
    ++checked;
  }
}

TEST(ObbSdf, RigidTransformInvariance) {
  Rng rng = make_rng(22);
  for (int i = 0; i < 200; ++i) {
    const FixtureBox box = random_box(rng);
    const Vec3 p = random_vec(rng, -1, 1);
    const RotMat g = random_rotation(rng);
    const Vec3 t = random_vec(rng, -1, 1);
    const FixtureBox moved(g * box.center() + t, box.size(), matrix_to_rot6(g * box.axes()));
    EXPECT_NEAR(obb_sdf(g * p + t, moved), obb_sdf(p, box), 1e-12);
  }
}

TEST(ObbSdf, GradientMatchesFiniteDifferences) {
  Rng rng = make_rng(23);
  const double h = 1e-6;
  int checked = 0;
  while (checked < 200) {
    const FixtureBox box = random_box(rng);
    const Vec3 p = box.center() + random_vec(rng, -0.4, 0.4);
    // Skip points near the medial tie set or the surface.
    const Vec3 d = box.to_local(p).cwiseAbs() - box.half_extents();
    Vec3 sorted = d;
    std::sort(sorted.data(), sorted.data() + 3);
    if (std::abs(obb_sdf(p, box)) < 1e-3 || (d.maxCoeff() < 0 && sorted[2] - sorted[1] < 1e-3) ||
        (d.cwiseAbs().minCoeff() < 1e-3)) {
      continue;
    }
    const Vec3 g = obb_sdf_gradient(p, box);
    for (int k = 0; k < 3; ++k) {
      Vec3 hi = p;
      Vec3 lo = p;
      hi[k] += h;
      lo[k] -= h;
      const double fd = (obb_sdf(hi, box) - obb_sdf(lo, box)) / (2 * h);
      EXPECT_LT(testing::rel_err(g[k], fd), 1e-5) << "axis " << k;
    }
    EXPECT_NEAR(g.norm(), 1.0, 1e-12);
    ++checked;
  }
}

TEST(ObbSdf, InteriorTieResolvesToLowestAxis) {
  const FixtureBox box(Vec3::Zero(), Vec3(2, 2, 2));
  EXPECT_TRUE(obb_sdf_gradient(Vec3(0, 0, 0), box).isApprox(Vec3(1, 0, 0)));
  EXPECT_TRUE(obb_sdf_gradient(Vec3(0, 0.5, 0.5), box).isApprox(Vec3(0, 1, 0)));
}

TEST(MinFixtureSdf, LowestIndexOnTies) {
  std::vector<FixtureBox> boxes{FixtureBox(Vec3(1, 0, 0), Vec3(1, 1, 1)), FixtureBox(Vec3(-1, 0, 0), Vec3(1, 1, 1))};
  const auto n = min_fixture_sdf(Vec3::Zero(), boxes);
  EXPECT_EQ(n.index, 0);
  EXPECT_DOUBLE_EQ(n.distance, 0.5);
  const auto empty = min_fixture_sdf(Vec3::Zero(), {});
  EXPECT_EQ(empty.index, -1);
  EXPECT_TRUE(std::isinf(empty.distance));
}

TEST(FixtureBox, TopOfRotatedBox) {
  const FixtureBox flat(Vec3(0, 0, 1), Vec3(1, 1, 0.4));
  EXPECT_DOUBLE_EQ(flat.top(), 1.2);
  const FixtureBox yawed(Vec3(0, 0, 1), Vec3(1, 2, 0.4), matrix_to_rot6(axis_angle(Vec3::UnitZ(), 0.5)));
  EXPECT_NEAR(yawed.top(), 1.2, 1e-15);
}

}  // namespace
}  // namespace trajflow
