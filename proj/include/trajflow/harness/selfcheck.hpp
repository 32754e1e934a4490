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

#ifndef TRAJFLOW_HARNESS_SELFCHECK_HPP
#define TRAJFLOW_HARNESS_SELFCHECK_HPP

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "trajflow/flow.hpp"
#include "trajflow/geometry.hpp"
#include "trajflow/guidance.hpp"
#include "trajflow/metrics.hpp"
#include "trajflow/nn/velocity_field.hpp"
#include "trajflow/rng.hpp"

namespace trajflow::harness {

// ---------------------------------------------------------------------------
// Random instances

inline RotMat random_rotation(Rng& rng) {
  Eigen::Quaterniond q;
  q.w() = standard_normal(rng);
  q.x() = standard_normal(rng);
  q.y() = standard_normal(rng);
  q.z() = standard_normal(rng);
  return q.normalized().toRotationMatrix();
}

inline Vec3 random_vec(Rng& rng, double lo, double hi) {
  Vec3 v;
  v.x() = uniform(rng, lo, hi);
  v.y() = uniform(rng, lo, hi);
  v.z() = uniform(rng, lo, hi);
  return v;
}

inline FixtureBox random_box(Rng& rng) {
  const Vec3 center = random_vec(rng, -0.5, 0.5);
  const Vec3 size = random_vec(rng, 0.05, 0.3);
  return FixtureBox(center, size, matrix_to_rot6(random_rotation(rng)));
}

inline State random_state(Rng& rng, int t, double scale = 1.0) {
  State s(t, kFrameDim);
  for (Eigen::Index i = 0; i < s.size(); ++i) s.data()[i] = scale * standard_normal(rng);
  return s;
}

/// |a - b| / max(|a|, |b|, floor).
inline double rel_err(double a, double b, double floor) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

/// Distance from p to a grid of surface samples with spacing <= `spacing`.
inline double sampled_surface_distance(const Vec3& p, const FixtureBox& box, double spacing = 0.002) {
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

/// Minimum over monotone couplings of the maximum pairwise distance,
/// by exhaustive recursion.
inline double brute_force_frechet(std::span<const Vec3> a, std::span<const Vec3> b, std::size_t i = 0,
                                  std::size_t j = 0) {
  const double here = trajflow::detail::euclidean(a[i], b[j]);
  if (i + 1 == a.size() && j + 1 == b.size()) return here;
  double best = std::numeric_limits<double>::infinity();
  if (i + 1 < a.size()) best = std::min(best, brute_force_frechet(a, b, i + 1, j));
  if (j + 1 < b.size()) best = std::min(best, brute_force_frechet(a, b, i, j + 1));
  if (i + 1 < a.size() && j + 1 < b.size()) best = std::min(best, brute_force_frechet(a, b, i + 1, j + 1));
  return std::max(here, best);
}

// ---------------------------------------------------------------------------
// Checks

inline constexpr double kFdStep = 1e-6;
inline constexpr double kGradTolerance = 1e-5;
/// Relative-error floors. Cost terms are O(1) with O(1) gradients; the
/// network loss sums many O(1) terms, so its finite differences carry
/// ~1e-10 of round-off and entries below 1e-4 are compared absolutely.
inline constexpr double kCostFloor = 1e-6;
inline constexpr double kNetworkFloor = 1e-4;

struct CheckResult {
  std::string name;
  bool passed = true;
  int instances = 0;
  int entries = 0;
  double worst = 0.0;
  double tolerance = 0.0;
  /// First failing instance, replayable via (name, seed, instance).
  nlohmann::json failure;
};

/// Test hook: lets a caller perturb an analytic result before comparison.
struct CheckHooks {
  std::function<void(const std::string& check, State& grad)> corrupt_cost_gradient;
  std::function<void(nn::Gradients& grads)> corrupt_network_gradient;
};

inline std::uint64_t instance_seed(std::uint64_t seed, std::string_view check, int instance) {
  return splitmix64(stream_seed(seed, check) ^ static_cast<std::uint64_t>(instance));
}

inline nlohmann::json state_json(const State& s) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index j = 0; j < s.rows(); ++j) {
    std::vector<double> r(kFrameDim);
    for (int c = 0; c < kFrameDim; ++c) r[c] = s(j, c);
    rows.push_back(r);
  }
  return rows;
}

inline nlohmann::json box_json(const FixtureBox& b) {
  return {{"center", {b.center().x(), b.center().y(), b.center().z()}},
          {"size", {b.size().x(), b.size().y(), b.size().z()}},
          {"rot6", std::vector<double>(b.rotation().a.data(), b.rotation().a.data() + 6)}};
}

namespace detail {

inline double central_difference(const std::function<double(const State&)>& f, State s, int row, int col) {
  const double saved = s(row, col);
  s(row, col) = saved + kFdStep;
  const double up = f(s);
  s(row, col) = saved - kFdStep;
  const double down = f(s);
  return (up - down) / (2 * kFdStep);
}

inline void record(CheckResult& r, double err, const std::function<nlohmann::json()>& describe) {
  r.worst = std::max(r.worst, err);
  ++r.entries;
  if (!(err < r.tolerance) && r.passed) {
    r.passed = false;
    r.failure = describe();
  }
}

inline bool near_sdf_ties(const Vec3& p, const FixtureBox& box, double tol) {
  const Vec3 q = box.to_local(p).cwiseAbs() - box.half_extents();
  Vec3 sorted = q;
  std::sort(sorted.data(), sorted.data() + 3);
  return (q.maxCoeff() < 0 && sorted[2] - sorted[1] < tol) || q.cwiseAbs().minCoeff() < tol;
}

}  // namespace detail

/// Collision cost gradient. Excluded tie sets: the margin kink (d = eps),
/// the box surface, medial planes inside a box, face/edge boundaries
/// outside it, and equal distance to two fixtures.
inline void collision_instance(CheckResult& r, std::uint64_t seed, int instance, const CheckHooks& hooks) {
  Rng rng = make_rng(instance_seed(seed, r.name, instance));
  const int t = 12;
  const int h = 3;
  const double eps = 0.05;
  const std::vector<FixtureBox> boxes{random_box(rng), random_box(rng)};
  State s = random_state(rng, t, 0.3);
  for (int j = h; j < t; j += 2) s.row(j).head<3>() = (boxes[0].center() + random_vec(rng, -0.2, 0.2)).transpose();
  auto f = [&](const State& x) { return collision_cost(x, boxes, eps, h).value; };
  CostTerm c = collision_cost(s, boxes, eps, h);
  if (hooks.corrupt_cost_gradient) hooks.corrupt_cost_gradient(r.name, c.grad);
  for (int j = h; j < t; ++j) {
    const Vec3 p = s.row(j).head<3>().transpose();
    const double d0 = obb_sdf(p, boxes[0]);
    const double d1 = obb_sdf(p, boxes[1]);
    const double d = std::min(d0, d1);
    const FixtureBox& nearest = d0 <= d1 ? boxes[0] : boxes[1];
    if (std::abs(d - eps) < 1e-4 || std::abs(d) < 1e-4 || std::abs(d0 - d1) < 1e-4 ||
        detail::near_sdf_ties(p, nearest, 1e-4)) {
      continue;
    }
    for (int k = 0; k < 3; ++k) {
      const double fd = detail::central_difference(f, s, j, k);
      detail::record(r, rel_err(c.grad(j, k), fd, kCostFloor), [&] {
        return nlohmann::json{{"instance", instance}, {"frame", j}, {"component", k}, {"analytic", c.grad(j, k)},
                              {"numeric", fd}, {"history_len", h}, {"epsilon", eps},
                              {"state", state_json(s)}, {"fixtures", {box_json(boxes[0]), box_json(boxes[1])}}};
      });
    }
  }
}

inline void rotation_instance(CheckResult& r, std::uint64_t seed, int instance, const CheckHooks& hooks) {
  Rng rng = make_rng(instance_seed(seed, r.name, instance));
  const int t = 10;
  const int h = 3;
  const State s = random_state(rng, t);
  auto f = [&](const State& x) { return rotation_cost(x, h).value; };
  CostTerm c = rotation_cost(s, h);
  if (hooks.corrupt_cost_gradient) hooks.corrupt_cost_gradient(r.name, c.grad);
  for (int probe = 0; probe < 5; ++probe) {
    const int j = uniform_int(rng, h - 1, t - 1);
    const int k = uniform_int(rng, 3, 8);
    const double fd = detail::central_difference(f, s, j, k);
    detail::record(r, rel_err(c.grad(j, k), fd, kCostFloor), [&] {
      return nlohmann::json{{"instance", instance}, {"frame", j},      {"component", k},
                            {"analytic", c.grad(j, k)}, {"numeric", fd}, {"history_len", h},
                            {"state", state_json(s)}};
    });
  }
}

inline void velocity_instance(CheckResult& r, std::uint64_t seed, int instance, const CheckHooks& hooks) {
  Rng rng = make_rng(instance_seed(seed, r.name, instance));
  const int t = 10;
  const int h = 3;
  const double dt = kDefaultFrameDt;
  const State s = random_state(rng, t, 0.2);
  auto f = [&](const State& x) { return velocity_cost(x, h, dt).value; };
  CostTerm c = velocity_cost(s, h, dt);
  if (hooks.corrupt_cost_gradient) hooks.corrupt_cost_gradient(r.name, c.grad);
  for (int probe = 0; probe < 5; ++probe) {
    const int j = uniform_int(rng, h, t - 1);
    const int k = uniform_int(rng, 0, 2);
    const double fd = detail::central_difference(f, s, j, k);
    detail::record(r, rel_err(c.grad(j, k), fd, kCostFloor), [&] {
      return nlohmann::json{{"instance", instance}, {"frame", j},      {"component", k},
                            {"analytic", c.grad(j, k)}, {"numeric", fd}, {"history_len", h},
                            {"frame_dt", dt},           {"state", state_json(s)}};
    });
  }
}

/// Small network used for the backward check.
inline nn::NetConfig check_net_config() {
  nn::NetConfig c;
  c.traj_len = 8;
  c.history_len = 3;
  c.hidden_dim = 12;
  c.n_blocks = 2;
  c.cond_dim = 10;
  c.time_emb_dim = 8;
  c.point_feat_dim = 5;
  c.embed_dim = 6;
  c.category_dim = 4;
  c.category_vocab = 16;
  c.max_fixtures = 4;
  c.knn = 3;
  c.seed = 7;
  return c;
}

/// Every parameter tensor and one input entry are probed per instance with
/// a random linear read-out of the batched output as the scalar loss.
inline void network_instance(CheckResult& r, std::uint64_t seed, int instance, const CheckHooks& hooks) {
  Rng rng = make_rng(instance_seed(seed, r.name, instance));
  const nn::NetConfig cfg = check_net_config();
  nn::VelocityField field(cfg);
  for (auto& t : field.params().tensors()) {
    for (Eigen::Index i = 0; i < t.value.size(); ++i) t.value.data()[i] = 0.3 * standard_normal(rng);
  }
  const int batch = 3;
  std::vector<nn::ConditioningInput> inputs;
  for (int b = 0; b < batch; ++b) {
    SceneSpec scene;
    const int nf = b % 3 == 2 ? 0 : 3 + b;
    for (int i = 0; i < nf; ++i) scene.fixtures.push_back(random_box(rng));
    scene.point_cloud.resize(9, 3);
    for (Eigen::Index i = 0; i < scene.point_cloud.size(); ++i) scene.point_cloud.data()[i] = uniform(rng, -1, 1);
    scene.category_id = uniform_int(rng, 0, cfg.category_vocab - 1);
    scene.goal_pose.position = random_vec(rng, -1, 1);
    scene.goal_pose.rotation = matrix_to_rot6(random_rotation(rng));
    FrameList hist(cfg.history_len);
    for (auto& fr : hist) {
      fr.position = random_vec(rng, -0.5, 0.5);
      fr.rotation = matrix_to_rot6(random_rotation(rng));
    }
    inputs.push_back(nn::make_conditioning_input(scene, hist, cfg));
  }
  std::vector<const nn::ConditioningInput*> ptrs;
  for (const auto& in : inputs) ptrs.push_back(&in);
  Eigen::MatrixXd x = Eigen::MatrixXd::NullaryExpr(cfg.state_width(), batch, [&] { return standard_normal(rng); });
  Eigen::VectorXd t(batch);
  for (int b = 0; b < batch; ++b) t[b] = uniform(rng, 0.0, 1.0);
  const double scale = 1.0 / (cfg.state_width() * batch);
  const Eigen::MatrixXd w =
      Eigen::MatrixXd::NullaryExpr(cfg.state_width(), batch, [&] { return scale * standard_normal(rng); });
  auto loss = [&](const Eigen::MatrixXd& xin) {
    return field.forward(xin, t, field.encode(ptrs)).cwiseProduct(w).sum();
  };

  nn::EncoderCache ec;
  nn::TrunkCache tc;
  field.forward(x, t, field.encode(ptrs, &ec), &tc);
  nn::Gradients g = nn::Gradients::zeros_like(field.params());
  Eigen::MatrixXd dx;
  Eigen::MatrixXd du;
  field.backward(tc, w, g, &dx, &du);
  field.backward_encoder(ec, du, g);
  if (hooks.corrupt_network_gradient) hooks.corrupt_network_gradient(g);

  for (std::size_t ti = 0; ti < field.params().size(); ++ti) {
    auto& tensor = field.params()[static_cast<int>(ti)];
    const Eigen::Index k = uniform_int(rng, 0, static_cast<int>(tensor.value.size()) - 1);
    const double saved = tensor.value.data()[k];
    tensor.value.data()[k] = saved + kFdStep;
    const double up = loss(x);
    tensor.value.data()[k] = saved - kFdStep;
    const double down = loss(x);
    tensor.value.data()[k] = saved;
    const double fd = (up - down) / (2 * kFdStep);
    const double an = g.g[ti].data()[k];
    detail::record(r, rel_err(an, fd, kNetworkFloor), [&] {
      return nlohmann::json{{"instance", instance}, {"tensor", tensor.name}, {"entry", k},
                            {"analytic", an},       {"numeric", fd}};
    });
  }
  const Eigen::Index row = uniform_int(rng, 0, cfg.state_width() - 1);
  const int col = uniform_int(rng, 0, batch - 1);
  Eigen::MatrixXd xp = x;
  xp(row, col) += kFdStep;
  const double up = loss(xp);
  xp(row, col) -= 2 * kFdStep;
  const double down = loss(xp);
  const double fd = (up - down) / (2 * kFdStep);
  detail::record(r, rel_err(dx(row, col), fd, kNetworkFloor), [&] {
    return nlohmann::json{{"instance", instance}, {"tensor", "input"}, {"entry", row}, {"column", col},
                          {"analytic", dx(row, col)}, {"numeric", fd}};
  });
}

/// SDF against the dense-surface oracle for a point at least 1 cm from the
/// surface; also the sign.
inline void sdf_instance(CheckResult& r, std::uint64_t seed, int instance, const CheckHooks&) {
  Rng rng = make_rng(instance_seed(seed, r.name, instance));
  for (int attempt = 0; attempt < 1000; ++attempt) {
    const FixtureBox box = random_box(rng);
    const Vec3 p = box.center() + random_vec(rng, -0.4, 0.4);
    const double oracle = sampled_surface_distance(p, box);
    if (oracle < 0.01) continue;
    const double d = obb_sdf(p, box);
    const bool sign_ok = (d < 0.0) == box.contains(p);
    const double err = sign_ok ? std::abs(std::abs(d) - oracle) : std::numeric_limits<double>::infinity();
    detail::record(r, err, [&] {
      return nlohmann::json{{"instance", instance}, {"point", {p.x(), p.y(), p.z()}}, {"box", box_json(box)},
                            {"sdf", d}, {"oracle_distance", oracle}, {"inside", box.contains(p)}};
    });
    return;
  }
  fail(ErrorKind::kValidation, "sdf check could not draw a point away from the surface");
}

inline void frechet_instance(CheckResult& r, std::uint64_t seed, int instance, const CheckHooks&) {
  Rng rng = make_rng(instance_seed(seed, r.name, instance));
  const int n = uniform_int(rng, 1, 6);
  const int m = uniform_int(rng, 1, 6);
  std::vector<Vec3> a(n);
  std::vector<Vec3> b(m);
  for (auto& p : a) p = random_vec(rng, -1, 1);
  for (auto& p : b) p = random_vec(rng, -1, 1);
  const double dp = discrete_frechet(a, b);
  const double brute = brute_force_frechet(a, b);
  const double err = dp == brute ? 0.0 : std::abs(dp - brute) + std::numeric_limits<double>::min();
  detail::record(r, err, [&] {
    nlohmann::json ja = nlohmann::json::array();
    nlohmann::json jb = nlohmann::json::array();
    for (const auto& p : a) ja.push_back({p.x(), p.y(), p.z()});
    for (const auto& p : b) jb.push_back({p.x(), p.y(), p.z()});
    return nlohmann::json{{"instance", instance}, {"a", ja}, {"b", jb}, {"dp", dp}, {"brute_force", brute}};
  });
}

inline void rot6_instance(CheckResult& r, std::uint64_t seed, int instance, const CheckHooks&) {
  Rng rng = make_rng(instance_seed(seed, r.name, instance));
  const RotMat m = random_rotation(rng);
  const RotMat back = rot6_to_matrix(matrix_to_rot6(m));
  double err = (back - m).cwiseAbs().maxCoeff();
  Vec6 raw;
  for (int k = 0; k < 6; ++k) raw[k] = standard_normal(rng);
  if (!is_rotation(rot6_to_matrix(Rot6(raw)), 1e-12)) err = std::numeric_limits<double>::infinity();
  detail::record(r, err, [&] {
    return nlohmann::json{{"instance", instance},
                          {"matrix", std::vector<double>(m.data(), m.data() + 9)},
                          {"raw_rot6", std::vector<double>(raw.data(), raw.data() + 6)}};
  });
}

struct CheckSpec {
  std::string name;
  int instances;
  double tolerance;
  void (*run)(CheckResult&, std::uint64_t, int, const CheckHooks&);
};

/// The release-gate suite. Tolerances: gradients 1e-5 relative, SDF 2 mm,
/// Fréchet bit-exact, Rot6 round trip 1e-12.
inline const std::vector<CheckSpec>& check_suite() {
  static const std::vector<CheckSpec> suite{
      {"sdf_oracle", 1000, 0.002, sdf_instance},
      {"grad_collision", 100, kGradTolerance, collision_instance},
      {"grad_rotation", 100, kGradTolerance, rotation_instance},
      {"grad_velocity", 100, kGradTolerance, velocity_instance},
      {"grad_network", 100, kGradTolerance, network_instance},
      {"frechet_brute_force", 500, std::numeric_limits<double>::min(), frechet_instance},
      {"rot6_round_trip", 1000, 1e-12, rot6_instance},
  };
  return suite;
}

inline const CheckSpec& find_check(const std::string& name) {
  for (const auto& c : check_suite()) {
    if (c.name == name) return c;
  }
  fail(ErrorKind::kValidation, "unknown check '" + name + "'");
}

/// Runs one check over all its instances (or only `only`). Collision
/// instances that land entirely in tie sets are skipped and replaced.
inline CheckResult run_check(const CheckSpec& spec, std::uint64_t seed, const CheckHooks& hooks = {},
                             std::optional<int> only = std::nullopt) {
  CheckResult r;
  r.name = spec.name;
  r.tolerance = spec.tolerance;
  if (only) {
    spec.run(r, seed, *only, hooks);
    r.instances = r.entries > 0 ? 1 : 0;
    return r;
  }
  for (int i = 0; r.instances < spec.instances; ++i) {
    const int before = r.entries;
    spec.run(r, seed, i, hooks);
    if (r.entries > before) ++r.instances;
    if (i > 100 * spec.instances) fail(ErrorKind::kValidation, spec.name + ": too many degenerate instances");
  }
  return r;
}

inline nlohmann::json to_json(const CheckResult& r) {
  nlohmann::json j{{"name", r.name},     {"passed", r.passed}, {"instances", r.instances},
                   {"entries", r.entries}, {"worst", r.worst},  {"tolerance", r.tolerance}};
  if (!r.passed) j["failure"] = r.failure;
  return j;
}

}  // namespace trajflow::harness

#endif  // TRAJFLOW_HARNESS_SELFCHECK_HPP
