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

#ifndef TRAJFLOW_GEOMETRY_HPP
#define TRAJFLOW_GEOMETRY_HPP

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <span>
#include <string>

#include <Eigen/Core>
#include <Eigen/Geometry>

#include "trajflow/error.hpp"

namespace trajflow {

using Vec3 = Eigen::Vector3d;
using Vec6 = Eigen::Matrix<double, 6, 1>;
using Vec9 = Eigen::Matrix<double, 9, 1>;
using RotMat = Eigen::Matrix3d;

/// Continuous 6D rotation embedding: the first two columns of a rotation
/// matrix stacked. Raw network outputs are not normalized.
struct Rot6 {
  Vec6 a = (Vec6() << 1, 0, 0, 0, 1, 0).finished();

  Rot6() = default;
  explicit Rot6(const Vec6& v) : a(v) {}
  Rot6(double a0, double a1, double a2, double a3, double a4, double a5) {
    a << a0, a1, a2, a3, a4, a5;
  }

  static Rot6 identity() { return Rot6{}; }

  bool operator==(const Rot6& other) const { return a == other.a; }
};

inline bool is_rotation(const RotMat& m, double tol = 1e-9) {
  return (m.transpose() * m - RotMat::Identity()).cwiseAbs().maxCoeff() <= tol &&
         std::abs(m.determinant() - 1.0) <= tol;
}

/// Gram-Schmidt: col1 = normalize(a[0:3]), col2 = normalize of a[3:6] with its
/// col1 component removed, col3 = col1 x col2.
inline RotMat rot6_to_matrix(const Rot6& r) {
  if (!r.a.allFinite()) fail(ErrorKind::kDegenerateRotation, "non-finite rotation entries");
  const Vec3 a1 = r.a.head<3>();
  const Vec3 a2 = r.a.tail<3>();
  const double n1 = a1.norm();
  if (n1 <= 1e-12) fail(ErrorKind::kDegenerateRotation, "first column has zero norm");
  const Vec3 c1 = a1 / n1;
  const Vec3 u2 = a2 - a2.dot(c1) * c1;
  const double n2 = u2.norm();
  if (n2 <= 1e-12) fail(ErrorKind::kDegenerateRotation, "columns are parallel");
  const Vec3 c2 = u2 / n2;
  RotMat m;
  m.col(0) = c1;
  m.col(1) = c2;
  m.col(2) = c1.cross(c2);
  return m;
}

inline Rot6 matrix_to_rot6(const RotMat& m) {
  Vec6 v;
  v.head<3>() = m.col(0);
  v.tail<3>() = m.col(1);
  return Rot6(v);
}

/// Angle of R1^T R2 in [0, pi], via the chord |R1 - R2|_F = 2 sqrt(2) sin(angle / 2).
/// Equal to arccos((tr(R1^T R2) - 1) / 2) but exact at zero.
inline double geodesic_distance(const RotMat& r1, const RotMat& r2) {
  const double chord = (r1 - r2).norm() / (2.0 * std::numbers::sqrt2);
  return 2.0 * std::asin(std::min(chord, 1.0));
}

inline double geodesic_distance(const Rot6& r1, const Rot6& r2) {
  return geodesic_distance(rot6_to_matrix(r1), rot6_to_matrix(r2));
}

/// Oriented bounding box of a static fixture. `size` holds full side
/// lengths; the orthonormalized rotation is cached at construction.
class FixtureBox {
 public:
  FixtureBox(const Vec3& center, const Vec3& size, const Rot6& rotation = Rot6::identity())
      : center_(center), size_(size), rotation_(rotation), axes_(rot6_to_matrix(rotation)) {
    if (!center.allFinite() || !size.allFinite() || (size.array() <= 0.0).any()) {
      fail(ErrorKind::kValidation, "fixture size must be finite and strictly positive");
    }
  }

  const Vec3& center() const { return center_; }
  const Vec3& size() const { return size_; }
  const Rot6& rotation() const { return rotation_; }
  const RotMat& axes() const { return axes_; }
  Vec3 half_extents() const { return 0.5 * size_; }

  /// Point expressed in the box frame.
  Vec3 to_local(const Vec3& p) const { return axes_.transpose() * (p - center_); }

  bool contains(const Vec3& p) const {
    const Vec3 q = to_local(p);
    return (q.cwiseAbs().array() < half_extents().array()).all();
  }

  double top() const {
    // Highest z of any corner.
    return center_.z() + 0.5 * (axes_.row(2).cwiseAbs() * size_).value();
  }

  FixtureBox translated(const Vec3& offset) const {
    return FixtureBox(center_ + offset, size_, rotation_);
  }

 private:
  Vec3 center_;
  Vec3 size_;
  Rot6 rotation_;
  RotMat axes_;
};

/// Exact Euclidean signed distance to an oriented box; negative inside.
inline double obb_sdf(const Vec3& p, const FixtureBox& box) {
  const Vec3 q = box.to_local(p);
  const Vec3 d = q.cwiseAbs() - box.half_extents();
  return d.cwiseMax(0.0).norm() + std::min(d.maxCoeff(), 0.0);
}

/// Analytic gradient of obb_sdf with respect to p. Interior ties between
/// faces resolve to the lowest axis index.
inline Vec3 obb_sdf_gradient(const Vec3& p, const FixtureBox& box) {
  const Vec3 q = box.to_local(p);
  const Vec3 d = q.cwiseAbs() - box.half_extents();
  Vec3 local = Vec3::Zero();
  if (d.maxCoeff() > 0.0) {
    const Vec3 outside = d.cwiseMax(0.0);
    const double n = outside.norm();
    for (int i = 0; i < 3; ++i) {
      if (outside[i] > 0.0) local[i] = (q[i] < 0.0 ? -1.0 : 1.0) * outside[i] / n;
    }
  } else {
    int k = 0;
    for (int i = 1; i < 3; ++i) {
      if (d[i] > d[k]) k = i;
    }
    local[k] = q[k] < 0.0 ? -1.0 : 1.0;
  }
  return box.axes() * local;
}

/// Smallest SDF over all fixtures and the index attaining it (lowest index on
/// ties). Returns +inf and index -1 for an empty fixture list.
struct NearestFixture {
  double distance = std::numeric_limits<double>::infinity();
  int index = -1;
};

inline NearestFixture min_fixture_sdf(const Vec3& p, std::span<const FixtureBox> fixtures) {
  NearestFixture best;
  for (std::size_t i = 0; i < fixtures.size(); ++i) {
    const double d = obb_sdf(p, fixtures[i]);
    if (d < best.distance) {
      best.distance = d;
      best.index = static_cast<int>(i);
    }
  }
  return best;
}

/// Rotation by `angle` radians about a (not necessarily unit) axis.
inline RotMat axis_angle(const Vec3& axis, double angle) {
  return Eigen::AngleAxisd(angle, axis.normalized()).toRotationMatrix();
}

}  // namespace trajflow

#endif  // TRAJFLOW_GEOMETRY_HPP
