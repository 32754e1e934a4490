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

#ifndef TRAJFLOW_TRAJECTORY_HPP
#define TRAJFLOW_TRAJECTORY_HPP

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "trajflow/error.hpp"
#include "trajflow/geometry.hpp"

namespace trajflow {

inline constexpr int kFrameDim = 9;
inline constexpr double kDefaultHistoryRatio = 0.3;
inline constexpr int kDefaultTrajLen = 80;
inline constexpr double kDefaultFrameDt = 0.05;

/// T x 9 state matrix, one frame per row: [position(3) | rot6(6)].
using State = Eigen::Matrix<double, Eigen::Dynamic, kFrameDim, Eigen::RowMajor>;

struct TrajectoryFrame {
  Vec3 position = Vec3::Zero();
  Rot6 rotation;

  Vec9 to_vec() const {
    Vec9 v;
    v.head<3>() = position;
    v.tail<6>() = rotation.a;
    return v;
  }

  static TrajectoryFrame from_vec(const Vec9& v) {
    return TrajectoryFrame{v.head<3>(), Rot6(Vec6(v.tail<6>()))};
  }

  bool operator==(const TrajectoryFrame& o) const {
    return position == o.position && rotation == o.rotation;
  }
};

using FrameList = std::vector<TrajectoryFrame>;

struct Trajectory {
  FrameList frames;
  int history_len = 1;
  double frame_dt = kDefaultFrameDt;

  int length() const { return static_cast<int>(frames.size()); }
  int future_len() const { return length() - history_len; }

  bool operator==(const Trajectory& o) const {
    return frames == o.frames && history_len == o.history_len && frame_dt == o.frame_dt;
  }
};

inline void validate(const Trajectory& traj) {
  const int t = traj.length();
  if (traj.history_len < 1 || traj.history_len >= t) {
    fail(ErrorKind::kValidation, "history length " + std::to_string(traj.history_len) +
                                     " outside [1, " + std::to_string(t) + ")");
  }
  if (!(traj.frame_dt > 0.0) || !std::isfinite(traj.frame_dt)) {
    fail(ErrorKind::kValidation, "frame_dt must be positive");
  }
  for (int i = 0; i < t; ++i) {
    if (!traj.frames[i].to_vec().allFinite()) {
      fail(ErrorKind::kValidation, "frame " + std::to_string(i) + " has non-finite entries");
    }
  }
}

inline State to_state(const FrameList& frames) {
  State s(static_cast<Eigen::Index>(frames.size()), kFrameDim);
  for (std::size_t i = 0; i < frames.size(); ++i) s.row(i) = frames[i].to_vec().transpose();
  return s;
}

inline State to_state(const Trajectory& traj) { return to_state(traj.frames); }

inline FrameList to_frames(const State& s) {
  FrameList frames(static_cast<std::size_t>(s.rows()));
  for (Eigen::Index i = 0; i < s.rows(); ++i) {
    frames[i] = TrajectoryFrame::from_vec(s.row(i).transpose());
  }
  return frames;
}

/// Number of history frames for a trajectory of length t at the given ratio.
inline int history_length(int t, double ratio) {
  if (!(ratio > 0.0 && ratio < 1.0)) {
    fail(ErrorKind::kInvalidSplit, "ratio must lie in (0, 1)");
  }
  const int h = static_cast<int>(std::lround(ratio * t));
  if (h < 1 || h >= t) {
    fail(ErrorKind::kInvalidSplit, "split boundary " + std::to_string(h) + " for T=" +
                                       std::to_string(t) + " leaves an empty part");
  }
  return h;
}

inline std::pair<FrameList, FrameList> split_history(const Trajectory& traj, double ratio) {
  const int h = history_length(traj.length(), ratio);
  FrameList history(traj.frames.begin(), traj.frames.begin() + h);
  FrameList future(traj.frames.begin() + h, traj.frames.end());
  return {std::move(history), std::move(future)};
}

/// Positions map as p -> (p - offset) / scale; rotations untouched.
struct NormalizationTransform {
  Vec3 offset = Vec3::Zero();
  double scale = 1.0;

  Vec3 apply(const Vec3& p) const { return (p - offset) / scale; }
  Vec3 invert(const Vec3& p) const { return p * scale + offset; }

  Trajectory apply(Trajectory traj) const {
    for (auto& f : traj.frames) f.position = apply(f.position);
    return traj;
  }
  Trajectory invert(Trajectory traj) const {
    for (auto& f : traj.frames) f.position = invert(f.position);
    return traj;
  }
};

inline Vec3 history_centroid(const FrameList& frames, int history_len) {
  Vec3 c = Vec3::Zero();
  for (int i = 0; i < history_len; ++i) c += frames[i].position;
  return c / static_cast<double>(history_len);
}

// ---------------------------------------------------------------------------
// JSON serialization: {"T":int,"H":int,"dt":float,"frames":[[9 floats]...]}

inline nlohmann::json frame_to_json(const TrajectoryFrame& f) {
  const Vec9 v = f.to_vec();
  return nlohmann::json(std::vector<double>(v.data(), v.data() + kFrameDim));
}

inline TrajectoryFrame frame_from_json(const nlohmann::json& j, const std::string& where) {
  if (!j.is_array() || j.size() != kFrameDim) {
    fail(ErrorKind::kParseError, where + ": expected " + std::to_string(kFrameDim) +
                                     " values, got " + std::to_string(j.is_array() ? j.size() : 0));
  }
  Vec9 v;
  for (int k = 0; k < kFrameDim; ++k) {
    if (!j[k].is_number()) fail(ErrorKind::kParseError, where + ": field " + std::to_string(k) + " is not a number");
    v[k] = j[k].get<double>();
  }
  return TrajectoryFrame::from_vec(v);
}

inline nlohmann::json to_json(const Trajectory& traj) {
  nlohmann::json frames = nlohmann::json::array();
  for (const auto& f : traj.frames) frames.push_back(frame_to_json(f));
  return {{"T", traj.length()}, {"H", traj.history_len}, {"dt", traj.frame_dt}, {"frames", frames}};
}

inline Trajectory trajectory_from_json(const nlohmann::json& j) {
  for (const char* key : {"T", "H", "dt", "frames"}) {
    if (!j.contains(key)) fail(ErrorKind::kParseError, std::string("missing field '") + key + "'");
  }
  if (!j["T"].is_number_integer() || !j["H"].is_number_integer()) {
    fail(ErrorKind::kParseError, "T and H must be integers");
  }
  if (!j["dt"].is_number()) fail(ErrorKind::kParseError, "dt must be a number");
  if (!j["frames"].is_array()) fail(ErrorKind::kParseError, "frames must be an array");
  Trajectory traj;
  const int t = j["T"].get<int>();
  traj.history_len = j["H"].get<int>();
  traj.frame_dt = j["dt"].get<double>();
  const auto& rows = j["frames"];
  if (static_cast<int>(rows.size()) != t) {
    fail(ErrorKind::kParseError, "header says T=" + std::to_string(t) + " but " +
                                     std::to_string(rows.size()) + " rows present");
  }
  traj.frames.reserve(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    traj.frames.push_back(frame_from_json(rows[i], "row " + std::to_string(i)));
  }
  try {
    validate(traj);
  } catch (const Error& e) {
    fail(ErrorKind::kParseError, e.what());
  }
  return traj;
}

inline nlohmann::json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::kIoError, "cannot open " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    fail(ErrorKind::kParseError, path.string() + ": " + e.what());
  }
}

inline void write_text_file(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::kIoError, "cannot write " + path.string());
  out << text;
  if (!out) fail(ErrorKind::kIoError, "write failed for " + path.string());
}

inline void write_json_file(const std::filesystem::path& path, const nlohmann::json& j) {
  write_text_file(path, j.dump(1) + "\n");
}

inline Trajectory load_trajectory(const std::filesystem::path& path) {
  const auto j = read_json_file(path);
  try {
    return trajectory_from_json(j);
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::kParseError) {
      fail(ErrorKind::kParseError, path.string() + ": " + e.what());
    }
    throw;
  }
}

inline void save_trajectory(const Trajectory& traj, const std::filesystem::path& path) {
  write_json_file(path, to_json(traj));
}

}  // namespace trajflow

#endif  // TRAJFLOW_TRAJECTORY_HPP
