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

#include <fstream>
#include <sstream>

#include "test_support.hpp"

namespace trajflow {
namespace {

double min_sdf_all_frames(const GeneratedSample& s) {
  double lowest = std::numeric_limits<double>::infinity();
  for (const auto& f : s.trajectory.frames) lowest = std::min(lowest, min_fixture_sdf(f.position, s.scene.fixtures).distance);
  return lowest;
}

TEST(MinJerk, Endpoints) {
  EXPECT_EQ(min_jerk_phase(0.0), 0.0);
  EXPECT_EQ(min_jerk_phase(1.0), 1.0);
  EXPECT_DOUBLE_EQ(min_jerk_phase(0.5), 0.5);
}

TEST(Generator, DeterministicPerSeed) {
  SyntheticDatasetConfig cfg;
  const auto a = generate_indexed(cfg, Split::kTrain, 7);
  const auto b = generate_indexed(cfg, Split::kTrain, 7);
  EXPECT_EQ(a.trajectory, b.trajectory);
  EXPECT_EQ(a.scene.point_cloud, b.scene.point_cloud);
  const auto c = generate_indexed(cfg, Split::kHeldOut, 7);
  EXPECT_NE(a.trajectory.frames[0].position, c.trajectory.frames[0].position);
}

TEST(Generator, TrajectoriesKeepClearance) {
  SyntheticDatasetConfig cfg;
  for (int i = 0; i < 200; ++i) {
    const auto s = generate_indexed(cfg, Split::kTrain, i);
    ASSERT_EQ(s.trajectory.length(), 80);
    EXPECT_EQ(s.trajectory.history_len, 24);
    EXPECT_GE(min_sdf_all_frames(s), cfg.clearance) << "scene " << i;
    EXPECT_EQ(s.scene.goal_pose, s.trajectory.frames.back());
    EXPECT_EQ(s.scene.point_cloud.rows(), cfg.n_points);
    for (const auto& f : s.trajectory.frames) EXPECT_TRUE(is_rotation(rot6_to_matrix(f.rotation), 1e-9));
  }
}

TEST(Generator, SingleFixtureAtZeroClearance) {
  SyntheticDatasetConfig cfg;
  cfg.n_fixtures_min = 1;
  cfg.n_fixtures_max = 1;
  cfg.clearance = 0.0;
  for (int i = 0; i < 50; ++i) {
    const auto s = generate_indexed(cfg, Split::kTrain, i);
    ASSERT_EQ(s.scene.fixtures.size(), 1u);
    EXPECT_GE(min_sdf_all_frames(s), 0.0);
  }
}

TEST(Generator, RejectsInvertedWorkspace) {
  SyntheticDatasetConfig cfg;
  cfg.workspace_min.x() = 2.0;
  EXPECT_THROW(validate(cfg), Error);
  Rng rng = make_rng(1);
  EXPECT_THROW(generate_synthetic_scene(cfg, rng), Error);
}

TEST(Distractor, IntersectsTheStraightHistoryToGoalLine) {
  SyntheticDatasetConfig cfg;
  int gt_hits = 0;
  for (int i = 0; i < 100; ++i) {
    const auto s = generate_indexed(cfg, Split::kStress, i);
    ASSERT_GE(s.scene.fixtures.size(), 2u);
    const FrameList hist(s.trajectory.frames.begin(), s.trajectory.frames.begin() + s.trajectory.history_len);
    const Trajectory line = straight_line_baseline(hist, s.scene.goal_pose, cfg.traj_len, cfg.frame_dt);
    EXPECT_TRUE(collides(line, s.scene)) << "scene " << i;
    gt_hits += collides(s.trajectory, s.scene) ? 1 : 0;
  }
  // Arcs that rise over the crossing clear the wall; low arcs do not.
  EXPECT_GT(gt_hits, 0);
  EXPECT_LT(gt_hits, 100);
}

TEST(Dataset, WriteReadRoundTrip) {
  SyntheticDatasetConfig cfg;
  std::vector<DatasetEntry> entries;
  for (int i = 0; i < 3; ++i) {
    auto s = generate_indexed(cfg, Split::kTrain, i);
    entries.push_back({scene_id(i), s.scene, s.trajectory});
  }
  const auto dir = testing::temp_dir("dataset");
  write_dataset(dir, entries, to_json(cfg));
  const auto back = read_dataset(dir);
  ASSERT_EQ(back.size(), 3u);
  EXPECT_EQ(back[2].id, "scene_00002");
  EXPECT_EQ(back[2].trajectory, entries[2].trajectory);
  EXPECT_EQ(back[2].scene.point_cloud, entries[2].scene.point_cloud);
}

TEST(Split, NamesRoundTrip) {
  for (auto s : {Split::kTrain, Split::kHeldOut, Split::kStress}) EXPECT_EQ(split_from_string(to_string(s)), s);
  EXPECT_THROW(split_from_string("test"), Error);
}

}  // namespace
}  // namespace trajflow
