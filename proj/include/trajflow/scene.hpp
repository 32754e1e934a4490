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

#ifndef TRAJFLOW_SCENE_HPP
#define TRAJFLOW_SCENE_HPP

#include <algorithm>
#include <numeric>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include "trajflow/geometry.hpp"
#include "trajflow/trajectory.hpp"

namespace trajflow {

inline constexpr int kDefaultCategoryVocab = 16;
inline constexpr int kDefaultMaxFixtures = 50;
inline constexpr int kDefaultKnn = 8;

using PointCloud = Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor>;

struct SceneSpec {
  std::vector<FixtureBox> fixtures;
  PointCloud point_cloud;
  int category_id = 0;
  TrajectoryFrame goal_pose;
  std::string prompt;
};

inline void validate(const SceneSpec& scene, int category_vocab = kDefaultCategoryVocab) {
  if (scene.point_cloud.rows() < 1) fail(ErrorKind::kValidation, "scene point cloud is empty");
  if (!scene.point_cloud.allFinite()) fail(ErrorKind::kValidation, "scene point cloud has non-finite entries");
  if (scene.category_id < 0 || scene.category_id >= category_vocab) {
    fail(ErrorKind::kValidation, "category_id " + std::to_string(scene.category_id) +
                                     " outside vocabulary of " + std::to_string(category_vocab));
  }
  if (!scene.goal_pose.to_vec().allFinite()) fail(ErrorKind::kValidation, "goal pose is not finite");
}

/// Per-point coordinates with their D-dimensional features.
struct ScenePointFeatures {
  PointCloud coords;
  Eigen::MatrixXd feats;  // N x D
};

/// Up to m fixtures ordered by signed distance from ref_point; ties keep the
/// lower index first.
inline std::vector<int> nearest_fixture_indices(std::span<const FixtureBox> fixtures,
                                                const Vec3& ref_point, int m) {
  std::vector<std::pair<double, int>> keyed;
  keyed.reserve(fixtures.size());
  for (std::size_t i = 0; i < fixtures.size(); ++i) {
    keyed.emplace_back(obb_sdf(ref_point, fixtures[i]), static_cast<int>(i));
  }
  std::sort(keyed.begin(), keyed.end());
  const auto take = std::min<std::size_t>(static_cast<std::size_t>(std::max(m, 0)), keyed.size());
  std::vector<int> out;
  out.reserve(take);
  for (std::size_t i = 0; i < take; ++i) out.push_back(keyed[i].second);
  return out;
}

inline std::vector<FixtureBox> select_nearest_fixtures(const SceneSpec& scene, const Vec3& ref_point,
                                                       int m) {
  if (m < 1) fail(ErrorKind::kValidation, "fixture selection needs m >= 1");
  std::vector<FixtureBox> out;
  for (int i : nearest_fixture_indices(scene.fixtures, ref_point, m)) out.push_back(scene.fixtures[i]);
  return out;
}

/// Aggregated inverse-distance weights: entry i is the total weight point i
/// receives across all centers, so the propagated feature is feats^T * w.
/// Each center distributes unit mass over its k nearest points with
/// weights proportional to 1/|c - p|^2; a point within 1e-9 of a center
/// takes that center's whole mass.
inline Eigen::VectorXd propagation_weights(const PointCloud& coords, const PointCloud& centers, int k) {
  const Eigen::Index n = coords.rows();
  if (k < 1 || k > n) {
    fail(ErrorKind::kValidation, "k=" + std::to_string(k) + " must lie in [1, " + std::to_string(n) + "]");
  }
  if (centers.rows() < 1) fail(ErrorKind::kValidation, "no centers to propagate to");
  Eigen::VectorXd weights = Eigen::VectorXd::Zero(n);
  std::vector<std::pair<double, Eigen::Index>> dist(static_cast<std::size_t>(n));
  for (Eigen::Index t = 0; t < centers.rows(); ++t) {
    const Vec3 c = centers.row(t).transpose();
    for (Eigen::Index i = 0; i < n; ++i) {
      dist[i] = {(coords.row(i).transpose() - c).squaredNorm(), i};
    }
    std::partial_sort(dist.begin(), dist.begin() + k, dist.end());
    if (dist[0].first < 1e-18) {
      weights[dist[0].second] += 1.0;
      continue;
    }
    double total = 0.0;
    for (int i = 0; i < k; ++i) total += 1.0 / dist[i].first;
    for (int i = 0; i < k; ++i) weights[dist[i].second] += (1.0 / dist[i].first) / total;
  }
  return weights;
}

/// Sum over centers of the inverse-distance-weighted average of the k
/// nearest point features.
inline Eigen::VectorXd propagate_point_features(const ScenePointFeatures& pf, const PointCloud& centers,
                                                int k) {
  if (pf.coords.rows() != pf.feats.rows()) {
    fail(ErrorKind::kShapeMismatch, "coords and feats row counts differ");
  }
  return pf.feats.transpose() * propagation_weights(pf.coords, centers, k);
}

inline PointCloud history_positions(const FrameList& history) {
  PointCloud c(static_cast<Eigen::Index>(history.size()), 3);
  for (std::size_t i = 0; i < history.size(); ++i) c.row(i) = history[i].position.transpose();
  return c;
}

inline SceneSpec apply(const NormalizationTransform& tf, const SceneSpec& scene) {
  SceneSpec out = scene;
  for (auto& f : out.fixtures) f = FixtureBox(tf.apply(f.center()), f.size(), f.rotation());
  out.point_cloud = ((scene.point_cloud.rowwise() - tf.offset.transpose()) / tf.scale).eval();
  out.goal_pose.position = tf.apply(scene.goal_pose.position);
  return out;
}

inline SceneSpec invert(const NormalizationTransform& tf, const SceneSpec& scene) {
  SceneSpec out = scene;
  for (auto& f : out.fixtures) f = FixtureBox(tf.invert(f.center()), f.size(), f.rotation());
  out.point_cloud = ((scene.point_cloud * tf.scale).rowwise() + tf.offset.transpose()).eval();
  out.goal_pose.position = tf.invert(scene.goal_pose.position);
  return out;
}

/// Normalization about the history centroid; translation-only at the
/// default scale of 1. Applies to the trajectory, fixture centers, goal and
/// point cloud.
inline std::tuple<Trajectory, SceneSpec, NormalizationTransform> normalize(const Trajectory& traj,
                                                                           const SceneSpec& scene,
                                                                           double scale = 1.0) {
  if (traj.frames.empty()) fail(ErrorKind::kEmptyTrajectory, "cannot normalize an empty trajectory");
  if (!(scale > 0.0)) fail(ErrorKind::kValidation, "normalization scale must be > 0");
  NormalizationTransform tf;
  tf.offset = history_centroid(traj.frames, std::clamp(traj.history_len, 1, traj.length()));
  tf.scale = scale;
  return {tf.apply(traj), apply(tf, scene), tf};
}

// ---------------------------------------------------------------------------
// Scene JSON: fixtures (center/size/rot6), point cloud, category, goal, prompt.

inline nlohmann::json to_json(const SceneSpec& scene) {
  nlohmann::json fixtures = nlohmann::json::array();
  for (const auto& f : scene.fixtures) {
    fixtures.push_back({{"center", {f.center().x(), f.center().y(), f.center().z()}},
                        {"size", {f.size().x(), f.size().y(), f.size().z()}},
                        {"rot6", std::vector<double>(f.rotation().a.data(), f.rotation().a.data() + 6)}});
  }
  nlohmann::json cloud = nlohmann::json::array();
  for (Eigen::Index i = 0; i < scene.point_cloud.rows(); ++i) {
    cloud.push_back({scene.point_cloud(i, 0), scene.point_cloud(i, 1), scene.point_cloud(i, 2)});
  }
  return {{"fixtures", fixtures},
          {"point_cloud", cloud},
          {"category_id", scene.category_id},
          {"goal_pose", frame_to_json(scene.goal_pose)},
          {"prompt", scene.prompt}};
}

namespace detail {
template <int N>
Eigen::Matrix<double, N, 1> fixed_vec(const nlohmann::json& j, const std::string& where) {
  if (!j.is_array() || j.size() != N) {
    fail(ErrorKind::kParseError, where + ": expected " + std::to_string(N) + " numbers");
  }
  Eigen::Matrix<double, N, 1> v;
  for (int i = 0; i < N; ++i) {
    if (!j[i].is_number()) fail(ErrorKind::kParseError, where + ": entry " + std::to_string(i) + " is not a number");
    v[i] = j[i].get<double>();
  }
  return v;
}
}  // namespace detail

inline SceneSpec scene_from_json(const nlohmann::json& j) {
  for (const char* key : {"fixtures", "point_cloud", "category_id", "goal_pose"}) {
    if (!j.contains(key)) fail(ErrorKind::kParseError, std::string("scene missing field '") + key + "'");
  }
  SceneSpec scene;
  const auto& fx = j["fixtures"];
  for (std::size_t i = 0; i < fx.size(); ++i) {
    const std::string where = "fixture " + std::to_string(i);
    if (!fx[i].contains("center") || !fx[i].contains("size") || !fx[i].contains("rot6")) {
      fail(ErrorKind::kParseError, where + ": needs center, size and rot6");
    }
    try {
      scene.fixtures.emplace_back(detail::fixed_vec<3>(fx[i]["center"], where + " center"),
                                  detail::fixed_vec<3>(fx[i]["size"], where + " size"),
                                  Rot6(detail::fixed_vec<6>(fx[i]["rot6"], where + " rot6")));
    } catch (const Error& e) {
      if (e.kind() == ErrorKind::kParseError) throw;
      fail(ErrorKind::kParseError, where + ": " + e.what());
    }
  }
  const auto& cloud = j["point_cloud"];
  scene.point_cloud.resize(static_cast<Eigen::Index>(cloud.size()), 3);
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    scene.point_cloud.row(i) = detail::fixed_vec<3>(cloud[i], "point " + std::to_string(i)).transpose();
  }
  if (!j["category_id"].is_number_integer()) fail(ErrorKind::kParseError, "category_id must be an integer");
  scene.category_id = j["category_id"].get<int>();
  scene.goal_pose = frame_from_json(j["goal_pose"], "goal_pose");
  if (j.contains("prompt") && j["prompt"].is_string()) scene.prompt = j["prompt"].get<std::string>();
  return scene;
}

inline SceneSpec load_scene(const std::filesystem::path& path) {
  try {
    return scene_from_json(read_json_file(path));
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::kParseError) fail(ErrorKind::kParseError, path.string() + ": " + e.what());
    throw;
  }
}

inline void save_scene(const SceneSpec& scene, const std::filesystem::path& path) {
  write_json_file(path, to_json(scene));
}

}  // namespace trajflow

#endif  // TRAJFLOW_SCENE_HPP
