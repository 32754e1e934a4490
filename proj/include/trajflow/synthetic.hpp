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

#ifndef TRAJFLOW_SYNTHETIC_HPP
#define TRAJFLOW_SYNTHETIC_HPP

#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

#include "trajflow/geometry.hpp"
#include "trajflow/rng.hpp"
#include "trajflow/scene.hpp"
#include "trajflow/trajectory.hpp"

namespace trajflow {

/// Desk-scale pick-and-place scene generator configuration.
struct SyntheticDatasetConfig {
  int n_scenes = 2000;
  int n_fixtures_min = 2;
  int n_fixtures_max = 6;
  Vec3 workspace_min = Vec3(0.0, 0.0, 0.0);
  Vec3 workspace_max = Vec3(1.2, 0.8, 0.8);
  int traj_len = kDefaultTrajLen;
  double frame_dt = kDefaultFrameDt;
  double history_ratio = kDefaultHistoryRatio;
  std::uint64_t seed = 0;
  double clearance = 0.05;
  int n_points = 512;
  int category_vocab = kDefaultCategoryVocab;
};

inline void validate(const SyntheticDatasetConfig& cfg) {
  if ((cfg.workspace_max - cfg.workspace_min).minCoeff() <= 0.0) {
    fail(ErrorKind::kValidation, "workspace bounds are degenerate (min must be < max on every axis)");
  }
  if (!(cfg.clearance >= 0.0)) fail(ErrorKind::kValidation, "clearance must be >= 0");
  if (cfg.n_fixtures_min < 1 || cfg.n_fixtures_min > cfg.n_fixtures_max) {
    fail(ErrorKind::kValidation, "fixture count range must satisfy 1 <= min <= max");
  }
  if (cfg.n_scenes < 0) fail(ErrorKind::kValidation, "n_scenes must be >= 0");
  if (cfg.traj_len < 4) fail(ErrorKind::kValidation, "trajectories need at least 4 frames");
  if (!(cfg.frame_dt > 0.0)) fail(ErrorKind::kValidation, "frame_dt must be positive");
  if (cfg.n_points < 1) fail(ErrorKind::kValidation, "n_points must be >= 1");
  if (cfg.category_vocab < 1) fail(ErrorKind::kValidation, "category_vocab must be >= 1");
  history_length(cfg.traj_len, cfg.history_ratio);
}

inline const std::array<const char*, 16>& category_names() {
  static const std::array<const char*, 16> names = {
      "mug", "bowl", "knife", "spoon", "plate", "bottle", "jar", "pan",
      "box", "cup", "fork", "lid", "board", "kettle", "sponge", "tin"};
  return names;
}

/// Extra apex height a category adds on top of the obstacle clearance.
inline double category_apex_bias(int category) { return 0.03 * (category % 4); }

/// Largest tilt (radians) of the start/goal orientations for a category.
inline double category_rotation_range(int category) {
  return std::numbers::pi / 8.0 * (1.0 + (category / 4) % 4);
}

/// Quintic minimum-jerk phase on [0, 1].
inline double min_jerk_phase(double tau) {
  const double t3 = tau * tau * tau;
  return t3 * (10.0 - 15.0 * tau + 6.0 * tau * tau);
}

namespace detail {

inline Vec3 sample_on_surface(const FixtureBox& box, Rng& rng) {
  const Vec3 s = box.size();
  const std::array<double, 3> face_area = {s.y() * s.z(), s.x() * s.z(), s.x() * s.y()};
  const double total = face_area[0] + face_area[1] + face_area[2];
  double pick = uniform(rng, 0.0, total);
  int axis = 0;
  while (axis < 2 && pick > face_area[axis]) {
    pick -= face_area[axis];
    ++axis;
  }
  Vec3 local;
  for (int i = 0; i < 3; ++i) local[i] = uniform(rng, -0.5, 0.5) * s[i];
  local[axis] = (uniform(rng, 0.0, 1.0) < 0.5 ? -0.5 : 0.5) * s[axis];
  return box.center() + box.axes() * local;
}

inline double surface_area(const FixtureBox& box) {
  const Vec3 s = box.size();
  return 2.0 * (s.x() * s.y() + s.y() * s.z() + s.x() * s.z());
}

inline double footprint_radius(const Vec3& size) { return 0.5 * std::hypot(size.x(), size.y()); }

struct PathShape {
  Vec3 start;
  Vec3 goal;
  double lift = 0.0;
};

inline Vec3 path_position(const PathShape& path, double s) {
  Vec3 p = path.start + s * (path.goal - path.start);
  p.z() += 4.0 * path.lift * s * (1.0 - s);
  return p;
}

inline double path_apex(const PathShape& path) {
  double apex = -std::numeric_limits<double>::infinity();
  for (int i = 0; i <= 200; ++i) apex = std::max(apex, path_position(path, i / 200.0).z());
  return apex;
}

inline RotMat random_orientation(Rng& rng, double max_tilt) {
  const double yaw = uniform(rng, -std::numbers::pi, std::numbers::pi);
  Vec3 axis;
  for (int i = 0; i < 3; ++i) axis[i] = standard_normal(rng);
  if (axis.norm() < 1e-9) axis = Vec3::UnitX();
  const double tilt = uniform(rng, 0.0, max_tilt);
  return axis_angle(Vec3::UnitZ(), yaw) * axis_angle(axis, tilt);
}

}  // namespace detail

struct GeneratedSample {
  SceneSpec scene;
  Trajectory trajectory;
};

/// One scene plus a collision-free pick-and-place trajectory. Every frame
/// keeps at least `clearance` signed distance from every fixture.
inline GeneratedSample generate_synthetic_scene(const SyntheticDatasetConfig& cfg, Rng& rng) {
  validate(cfg);
  constexpr int kMaxAttempts = 200;
  const Vec3 lo = cfg.workspace_min;
  const Vec3 hi = cfg.workspace_max;
  const double hover = cfg.clearance + 0.02;
  const int history = history_length(cfg.traj_len, cfg.history_ratio);

  for (int scene_attempt = 0; scene_attempt < kMaxAttempts; ++scene_attempt) {
    const int category = uniform_int(rng, 0, cfg.category_vocab - 1);
    const int n_fix = uniform_int(rng, cfg.n_fixtures_min, cfg.n_fixtures_max);

    std::vector<FixtureBox> fixtures;
    bool packed = true;
    for (int f = 0; f < n_fix && packed; ++f) {
      bool placed = false;
      for (int attempt = 0; attempt < kMaxAttempts && !placed; ++attempt) {
        // Draws are sequenced explicitly; argument evaluation order is unspecified.
        Vec3 size;
        size.x() = uniform(rng, 0.10, 0.30);
        size.y() = uniform(rng, 0.10, 0.30);
        size.z() = uniform(rng, 0.05, 0.30);
        const double yaw = uniform(rng, 0.0, std::numbers::pi);
        const double r = detail::footprint_radius(size);
        if (hi.x() - lo.x() <= 2 * r || hi.y() - lo.y() <= 2 * r || hi.z() - lo.z() <= size.z()) continue;
        Vec3 center;
        center.x() = uniform(rng, lo.x() + r, hi.x() - r);
        center.y() = uniform(rng, lo.y() + r, hi.y() - r);
        center.z() = lo.z() + 0.5 * size.z();
        bool clear = true;
        for (const auto& other : fixtures) {
          const double gap = (center - other.center()).head<2>().norm();
          if (gap < r + detail::footprint_radius(other.size()) + 0.02) {
            clear = false;
            break;
          }
        }
        if (!clear) continue;
        fixtures.emplace_back(center, size, matrix_to_rot6(axis_angle(Vec3::UnitZ(), yaw)));
        placed = true;
      }
      packed = placed;
    }
    // A crowded layout is redrawn from scratch.
    if (!packed) continue;

    auto point_on_top = [&](const FixtureBox& box) {
      Vec3 local = Vec3::Zero();
      local.x() = uniform(rng, -0.3, 0.3) * box.size().x();
      local.y() = uniform(rng, -0.3, 0.3) * box.size().y();
      Vec3 p = box.center() + box.axes() * local;
      p.z() = box.top() + hover;
      return p;
    };

    const int start_fix = uniform_int(rng, 0, n_fix - 1);
    detail::PathShape path;
    path.start = point_on_top(fixtures[start_fix]);
    if (n_fix >= 2) {
      int goal_fix = uniform_int(rng, 0, n_fix - 2);
      if (goal_fix >= start_fix) ++goal_fix;
      path.goal = point_on_top(fixtures[goal_fix]);
    } else {
      bool found = false;
      for (int attempt = 0; attempt < kMaxAttempts && !found; ++attempt) {
        Vec3 g;
        g.x() = uniform(rng, lo.x() + 0.05, hi.x() - 0.05);
        g.y() = uniform(rng, lo.y() + 0.05, hi.y() - 0.05);
        g.z() = lo.z() + hover;
        if (min_fixture_sdf(g, fixtures).distance >= hover && (g - path.start).head<2>().norm() > 0.2) {
          path.goal = g;
          found = true;
        }
      }
      if (!found) continue;
    }
    if ((path.goal - path.start).head<2>().norm() < 0.15) continue;

    double max_top = lo.z();
    for (const auto& f : fixtures) max_top = std::max(max_top, f.top());
    const double apex_target = max_top + cfg.clearance + category_apex_bias(category);

    const double max_tilt = category_rotation_range(category);
    const RotMat r_start = detail::random_orientation(rng, max_tilt);
    const RotMat r_goal = detail::random_orientation(rng, max_tilt);
    const Eigen::Quaterniond q_start(r_start);
    const Eigen::Quaterniond q_goal(r_goal);

    // Smallest lift (1 cm steps) reaching the apex target, then raised in
    // 2 cm steps until every frame keeps the clearance.
    path.lift = 0.0;
    while (detail::path_apex(path) < apex_target) path.lift += 0.01;

    std::vector<double> phases(cfg.traj_len);
    for (int i = 0; i < cfg.traj_len; ++i) phases[i] = min_jerk_phase(static_cast<double>(i) / (cfg.traj_len - 1));

    bool ok = false;
    for (int bump = 0; bump < 50 && detail::path_apex(path) <= hi.z(); ++bump) {
      ok = true;
      for (double s : phases) {
        if (min_fixture_sdf(detail::path_position(path, s), fixtures).distance < cfg.clearance) {
          ok = false;
          break;
        }
      }
      if (ok) break;
      path.lift += 0.02;
    }
    if (!ok) continue;

    Trajectory traj;
    traj.frame_dt = cfg.frame_dt;
    traj.history_len = history;
    traj.frames.reserve(cfg.traj_len);
    for (double s : phases) {
      const RotMat r = q_start.slerp(s, q_goal).toRotationMatrix();
      traj.frames.push_back(TrajectoryFrame{detail::path_position(path, s), matrix_to_rot6(r)});
    }

    SceneSpec scene;
    scene.fixtures = fixtures;
    scene.category_id = category;
    scene.goal_pose = traj.frames.back();
    scene.prompt = std::string("move the ") + category_names()[category % 16] + " to the other fixture";

    std::vector<double> cumulative;
    double total = 0.0;
    for (const auto& f : fixtures) {
      total += detail::surface_area(f);
      cumulative.push_back(total);
    }
    scene.point_cloud.resize(cfg.n_points, 3);
    for (int i = 0; i < cfg.n_points; ++i) {
      const double pick = uniform(rng, 0.0, total);
      std::size_t f = 0;
      while (f + 1 < cumulative.size() && pick > cumulative[f]) ++f;
      scene.point_cloud.row(i) = detail::sample_on_surface(fixtures[f], rng).transpose();
    }
    return {std::move(scene), std::move(traj)};
  }
  fail(ErrorKind::kGenerationFailed, "no valid scene after " + std::to_string(kMaxAttempts) + " attempts");
}

/// Dataset split; each split draws scene seeds from its own named stream so
/// held-out and stress scenes never reuse a training seed.
enum class Split { kTrain, kHeldOut, kStress };

inline std::string_view to_string(Split split) {
  switch (split) {
    case Split::kTrain: return "train";
    case Split::kHeldOut: return "heldout";
    case Split::kStress: return "stress";
  }
  return "train";
}

inline Split split_from_string(std::string_view s) {
  if (s == "train") return Split::kTrain;
  if (s == "heldout") return Split::kHeldOut;
  if (s == "stress") return Split::kStress;
  fail(ErrorKind::kValidation, "unknown split '" + std::string(s) + "'");
}

inline std::uint64_t scene_seed(std::uint64_t root, Split split, int index) {
  return stream_seed(stream_seed(root, "data"), to_string(split)) ^ static_cast<std::uint64_t>(index);
}

/// Adds one thin wall across the straight segment from the last history
/// position to the goal, reaching 1 to 3 cm above that segment where it
/// crosses. Samples that cut straight to the goal collide; the ground truth
/// collides only where its arc stays low over the crossing.
inline SceneSpec add_distractor(const SceneSpec& scene, const Trajectory& traj, const Vec3& floor_min, Rng& rng) {
  const Vec3 from = traj.frames[traj.history_len - 1].position;
  const Vec3 to = scene.goal_pose.position;
  Vec3 dir = to - from;
  dir.z() = 0.0;
  if (dir.norm() < 1e-6) dir = Vec3::UnitX();
  dir.normalize();
  const double along = uniform(rng, 0.4, 0.6);
  const Vec3 crossing = from + along * (to - from);
  const double thickness = uniform(rng, 0.04, 0.06);
  const double width = uniform(rng, 0.16, 0.24);
  const RotMat axes = axis_angle(Vec3::UnitZ(), std::atan2(dir.y(), dir.x()));
  const double top = crossing.z() + uniform(rng, 0.01, 0.03);
  const double height = top - floor_min.z();
  SceneSpec out = scene;
  out.fixtures.emplace_back(Vec3(crossing.x(), crossing.y(), floor_min.z() + 0.5 * height),
                            Vec3(thickness, width, height), matrix_to_rot6(axes));
  return out;
}

/// Scene `index` of a split, deterministic in (cfg.seed, split, index).
inline GeneratedSample generate_indexed(const SyntheticDatasetConfig& cfg, Split split, int index) {
  Rng rng = make_rng(scene_seed(cfg.seed, split, index));
  GeneratedSample sample = generate_synthetic_scene(cfg, rng);
  if (split == Split::kStress) {
    sample.scene = add_distractor(sample.scene, sample.trajectory, cfg.workspace_min, rng);
  }
  return sample;
}

// ---------------------------------------------------------------------------
// Dataset on disk: <dir>/index.json + scenes/<id>.json + trajectories/<id>.json

struct DatasetEntry {
  std::string id;
  SceneSpec scene;
  Trajectory trajectory;
};

inline std::string scene_id(int index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "scene_%05d", index);
  return buf;
}

inline nlohmann::json to_json(const SyntheticDatasetConfig& cfg) {
  return {{"n_scenes", cfg.n_scenes},
          {"n_fixtures", {cfg.n_fixtures_min, cfg.n_fixtures_max}},
          {"workspace_min", {cfg.workspace_min.x(), cfg.workspace_min.y(), cfg.workspace_min.z()}},
          {"workspace_max", {cfg.workspace_max.x(), cfg.workspace_max.y(), cfg.workspace_max.z()}},
          {"T", cfg.traj_len},
          {"dt", cfg.frame_dt},
          {"history_ratio", cfg.history_ratio},
          {"seed", cfg.seed},
          {"clearance", cfg.clearance},
          {"n_points", cfg.n_points}};
}

inline void write_dataset(const std::filesystem::path& dir, const std::vector<DatasetEntry>& entries,
                          const nlohmann::json& meta = nlohmann::json::object()) {
  nlohmann::json index = nlohmann::json::array();
  for (const auto& e : entries) {
    const std::string scene_rel = "scenes/" + e.id + ".json";
    const std::string traj_rel = "trajectories/" + e.id + ".json";
    save_scene(e.scene, dir / scene_rel);
    save_trajectory(e.trajectory, dir / traj_rel);
    index.push_back({{"id", e.id}, {"scene", scene_rel}, {"trajectory", traj_rel}});
  }
  write_json_file(dir / "index.json", {{"meta", meta}, {"entries", index}});
}

inline std::vector<DatasetEntry> read_dataset(const std::filesystem::path& dir) {
  const auto index = read_json_file(dir / "index.json");
  if (!index.contains("entries") || !index["entries"].is_array()) {
    fail(ErrorKind::kParseError, (dir / "index.json").string() + ": missing entries array");
  }
  std::vector<DatasetEntry> out;
  for (const auto& e : index["entries"]) {
    DatasetEntry entry;
    entry.id = e.at("id").get<std::string>();
    entry.scene = load_scene(dir / e.at("scene").get<std::string>());
    if (e.contains("trajectory")) entry.trajectory = load_trajectory(dir / e.at("trajectory").get<std::string>());
    out.push_back(std::move(entry));
  }
  return out;
}

}  // namespace trajflow

#endif  // TRAJFLOW_SYNTHETIC_HPP
