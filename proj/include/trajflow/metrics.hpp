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

#ifndef TRAJFLOW_METRICS_HPP
#define TRAJFLOW_METRICS_HPP

#include <algorithm>
#include <cmath>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "trajflow/geometry.hpp"
#include "trajflow/scene.hpp"
#include "trajflow/trajectory.hpp"

namespace trajflow {

// All metrics compare generated frames only: rows [H, T).

namespace detail {

inline void check_comparable(const Trajectory& pred, const Trajectory& gt) {
  if (pred.length() != gt.length() || pred.history_len != gt.history_len) {
    fail(ErrorKind::kLengthMismatch, "prediction (T=" + std::to_string(pred.length()) + ", H=" +
                                         std::to_string(pred.history_len) + ") vs ground truth (T=" +
                                         std::to_string(gt.length()) + ", H=" + std::to_string(gt.history_len) + ")");
  }
  if (gt.future_len() < 1) fail(ErrorKind::kEmptyTrajectory, "no future frames to compare");
}

inline double euclidean(const Vec3& a, const Vec3& b) {
  const double dx = a.x() - b.x();
  const double dy = a.y() - b.y();
  const double dz = a.z() - b.z();
  return std::sqrt(dx * dx + dy * dy + dz * dz);
}

}  // namespace detail

inline double ade(const Trajectory& pred, const Trajectory& gt) {
  detail::check_comparable(pred, gt);
  double sum = 0.0;
  for (int j = gt.history_len; j < gt.length(); ++j) {
    sum += detail::euclidean(pred.frames[j].position, gt.frames[j].position);
  }
  return sum / gt.future_len();
}

inline double fde(const Trajectory& pred, const Trajectory& gt) {
  detail::check_comparable(pred, gt);
  return detail::euclidean(pred.frames.back().position, gt.frames.back().position);
}

/// Discrete Frechet distance between two point sequences.
inline double discrete_frechet(std::span<const Vec3> a, std::span<const Vec3> b) {
  if (a.empty() || b.empty()) fail(ErrorKind::kEmptyTrajectory, "Frechet distance of an empty sequence");
  const std::size_t n = a.size();
  const std::size_t m = b.size();
  std::vector<double> dp(n * m);
  auto at = [&](std::size_t i, std::size_t j) -> double& { return dp[i * m + j]; };
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      const double d = detail::euclidean(a[i], b[j]);
      if (i == 0 && j == 0) {
        at(i, j) = d;
      } else if (i == 0) {
        at(i, j) = std::max(d, at(i, j - 1));
      } else if (j == 0) {
        at(i, j) = std::max(d, at(i - 1, j));
      } else {
        at(i, j) = std::max(d, std::min({at(i - 1, j), at(i, j - 1), at(i - 1, j - 1)}));
      }
    }
  }
  return at(n - 1, m - 1);
}

inline std::vector<Vec3> future_positions(const Trajectory& traj) {
  std::vector<Vec3> out;
  for (int j = traj.history_len; j < traj.length(); ++j) out.push_back(traj.frames[j].position);
  return out;
}

inline double discrete_frechet(const Trajectory& pred, const Trajectory& gt) {
  detail::check_comparable(pred, gt);
  const auto a = future_positions(pred);
  const auto b = future_positions(gt);
  return discrete_frechet(a, b);
}

/// Mean per-frame rotation angle between prediction and ground truth.
inline double geodesic_metric(const Trajectory& pred, const Trajectory& gt) {
  detail::check_comparable(pred, gt);
  double sum = 0.0;
  for (int j = gt.history_len; j < gt.length(); ++j) {
    try {
      sum += geodesic_distance(pred.frames[j].rotation, gt.frames[j].rotation);
    } catch (const Error& e) {
      fail(ErrorKind::kDegenerateRotation, "frame " + std::to_string(j) + ": " + e.what());
    }
  }
  return sum / gt.future_len();
}

/// Smallest fixture SDF over the generated frames.
inline double min_future_sdf(const Trajectory& traj, std::span<const FixtureBox> fixtures) {
  double lowest = std::numeric_limits<double>::infinity();
  for (int j = traj.history_len; j < traj.length(); ++j) {
    lowest = std::min(lowest, min_fixture_sdf(traj.frames[j].position, fixtures).distance);
  }
  return lowest;
}

/// A trajectory collides when any generated frame has fixture SDF below
/// `threshold` (0 = strictly inside; raise it to model object extent).
inline bool collides(const Trajectory& traj, const SceneSpec& scene, double threshold = 0.0) {
  return min_future_sdf(traj, scene.fixtures) < threshold;
}

inline double collision_rate(std::span<const Trajectory> preds, std::span<const SceneSpec> scenes,
                             double threshold = 0.0) {
  if (preds.size() != scenes.size()) {
    fail(ErrorKind::kBatchMismatch, std::to_string(preds.size()) + " trajectories vs " +
                                        std::to_string(scenes.size()) + " scenes");
  }
  if (preds.empty()) return 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) hits += collides(preds[i], scenes[i], threshold) ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(preds.size());
}

struct TrajectoryMetrics {
  std::string id;
  double ade = 0.0;
  double fde = 0.0;
  double frechet = 0.0;
  double geodesic = 0.0;
  double min_sdf = 0.0;
  bool collided = false;
};

struct MetricReport {
  double ade = 0.0;
  double fde = 0.0;
  double frechet = 0.0;
  double geodesic = 0.0;
  double collision_rate = 0.0;
  int n_trajectories = 0;
  std::vector<TrajectoryMetrics> rows;
};

struct EvalConfig {
  double collision_threshold = 0.0;
};

inline TrajectoryMetrics evaluate_one(const Trajectory& pred, const Trajectory& gt, const SceneSpec& scene,
                                      const EvalConfig& cfg, std::string id = {}) {
  TrajectoryMetrics m;
  m.id = std::move(id);
  m.ade = ade(pred, gt);
  m.fde = fde(pred, gt);
  m.frechet = discrete_frechet(pred, gt);
  m.geodesic = geodesic_metric(pred, gt);
  m.min_sdf = min_future_sdf(pred, scene.fixtures);
  m.collided = m.min_sdf < cfg.collision_threshold;
  return m;
}

/// Batch means of the per-trajectory metrics plus the collision rate.
/// Aggregation runs in id order so the result does not depend on input order.
inline MetricReport evaluate_batch(std::span<const Trajectory> preds, std::span<const Trajectory> gts,
                                   std::span<const SceneSpec> scenes, const EvalConfig& cfg,
                                   std::span<const std::string> ids = {}) {
  if (preds.size() != gts.size() || preds.size() != scenes.size() || (!ids.empty() && ids.size() != preds.size())) {
    fail(ErrorKind::kBatchMismatch, "batch sizes differ: " + std::to_string(preds.size()) + " predictions, " +
                                        std::to_string(gts.size()) + " ground truths, " +
                                        std::to_string(scenes.size()) + " scenes");
  }
  MetricReport report;
  report.n_trajectories = static_cast<int>(preds.size());
  for (std::size_t i = 0; i < preds.size(); ++i) {
    report.rows.push_back(evaluate_one(preds[i], gts[i], scenes[i], cfg, ids.empty() ? std::to_string(i) : ids[i]));
  }
  if (!ids.empty()) {
    std::stable_sort(report.rows.begin(), report.rows.end(),
                     [](const auto& a, const auto& b) { return a.id < b.id; });
  }
  if (report.rows.empty()) return report;
  int hits = 0;
  for (const auto& r : report.rows) {
    report.ade += r.ade;
    report.fde += r.fde;
    report.frechet += r.frechet;
    report.geodesic += r.geodesic;
    hits += r.collided ? 1 : 0;
  }
  const double n = static_cast<double>(report.rows.size());
  report.ade /= n;
  report.fde /= n;
  report.frechet /= n;
  report.geodesic /= n;
  report.collision_rate = hits / n;
  return report;
}

inline nlohmann::json to_json(const MetricReport& r) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& m : r.rows) {
    rows.push_back({{"id", m.id},
                    {"ade", m.ade},
                    {"fde", m.fde},
                    {"frechet", m.frechet},
                    {"geodesic", m.geodesic},
                    {"min_sdf", m.min_sdf},
                    {"collided", m.collided}});
  }
  return {{"ade", r.ade},
          {"fde", r.fde},
          {"frechet", r.frechet},
          {"geodesic", r.geodesic},
          {"collision_rate", r.collision_rate},
          {"n_trajectories", r.n_trajectories},
          {"trajectories", rows}};
}

inline MetricReport metric_report_from_json(const nlohmann::json& j) {
  MetricReport r;
  r.ade = j.at("ade").get<double>();
  r.fde = j.at("fde").get<double>();
  r.frechet = j.at("frechet").get<double>();
  r.geodesic = j.at("geodesic").get<double>();
  r.collision_rate = j.at("collision_rate").get<double>();
  r.n_trajectories = j.at("n_trajectories").get<int>();
  if (j.contains("trajectories")) {
    for (const auto& row : j["trajectories"]) {
      TrajectoryMetrics m;
      m.id = row.at("id").get<std::string>();
      m.ade = row.at("ade").get<double>();
      m.fde = row.at("fde").get<double>();
      m.frechet = row.at("frechet").get<double>();
      m.geodesic = row.at("geodesic").get<double>();
      // min_sdf is +inf for fixture-free scenes, which JSON stores as null.
      m.min_sdf = row.at("min_sdf").is_number() ? row["min_sdf"].get<double>()
                                                 : std::numeric_limits<double>::infinity();
      m.collided = row.at("collided").get<bool>();
      r.rows.push_back(m);
    }
  }
  return r;
}

/// One row per trajectory, then an aggregate footer row with id "mean".
inline std::string to_csv(const MetricReport& r) {
  std::ostringstream out;
  out.precision(17);
  out << "id,ade,fde,frechet,geodesic,min_sdf,collided\n";
  for (const auto& m : r.rows) {
    out << m.id << ',' << m.ade << ',' << m.fde << ',' << m.frechet << ',' << m.geodesic << ',' << m.min_sdf << ','
        << (m.collided ? 1 : 0) << '\n';
  }
  out << "mean," << r.ade << ',' << r.fde << ',' << r.frechet << ',' << r.geodesic << ",," << r.collision_rate
      << '\n';
  return out.str();
}

}  // namespace trajflow

#endif  // TRAJFLOW_METRICS_HPP
