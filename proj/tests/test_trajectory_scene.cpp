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

#include "test_support.hpp"

namespace trajflow {
namespace {

Trajectory random_traj(Rng& rng, int t, int h) {
  Trajectory out;
  out.history_len = h;
  for (int i = 0; i < t; ++i) {
    out.frames.push_back(
        TrajectoryFrame{testing::random_vec(rng, -1, 1), matrix_to_rot6(testing::random_rotation(rng))});
  }
  return out;
}

TEST(HistoryLength, DefaultSplit) {
  EXPECT_EQ(history_length(80, 0.3), 24);
  EXPECT_EQ(history_length(10, 0.3), 3);
}

TEST(HistoryLength, EmptyPartThrows) {
  try {
    history_length(2, 0.1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kInvalidSplit);
  }
  EXPECT_THROW(history_length(10, 0.0), Error);
  EXPECT_THROW(history_length(10, 1.0), Error);
}

TEST(SplitHistory, PartsConcatenateToInput) {
  Rng rng = make_rng(61);
  const Trajectory t = random_traj(rng, 80, 24);
  const auto [hist, fut] = split_history(t, 0.3);
  EXPECT_EQ(hist.size(), 24u);
  EXPECT_EQ(fut.size(), 56u);
  FrameList joined = hist;
  joined.insert(joined.end(), fut.begin(), fut.end());
  EXPECT_EQ(joined, t.frames);
}

TEST(State, RoundTrip) {
  Rng rng = make_rng(62);
  const Trajectory t = random_traj(rng, 10, 3);
  EXPECT_EQ(to_frames(to_state(t)), t.frames);
  EXPECT_EQ(to_state(t).row(2).head<3>().transpose(), t.frames[2].position);
}

TEST(Trajectory, ValidateRejectsBadHistory) {
  Rng rng = make_rng(63);
  Trajectory t = random_traj(rng, 5, 5);
  EXPECT_THROW(validate(t), Error);
  t.history_len = 2;
  EXPECT_NO_THROW(validate(t));
  t.frames[1].position.x() = std::nan("");
  EXPECT_THROW(validate(t), Error);
}

TEST(TrajectoryJson, RoundTripIsBitExact) {
  Rng rng = make_rng(64);
  const Trajectory t = random_traj(rng, 12, 4);
  const auto dir = testing::temp_dir("traj_json");
  save_trajectory(t, dir / "t.json");
  EXPECT_EQ(load_trajectory(dir / "t.json"), t);
}

TEST(TrajectoryJson, MalformedRowIsNamed) {
  nlohmann::json j = {{"T", 2}, {"H", 1}, {"dt", 0.05}, {"frames", {{0, 0, 0, 1, 0, 0, 0, 1, 0}, {1, 2}}}};
  try {
    trajectory_from_json(j);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kParseError);
    EXPECT_NE(std::string(e.what()).find("1"), std::string::npos);
  }
}

TEST(Normalization, ApplyInvertRoundTrip) {
  Rng rng = make_rng(65);
  const Trajectory t = random_traj(rng, 10, 3);
  SceneSpec scene;
  scene.fixtures = {testing::random_box(rng)};
  scene.point_cloud = PointCloud::Random(5, 3);
  scene.goal_pose = t.frames.back();
  const auto [nt, ns, tf] = normalize(t, scene);
  EXPECT_NEAR(history_centroid(nt.frames, 3).norm(), 0.0, 1e-15);
  const Trajectory back = tf.invert(nt);
  for (int i = 0; i < 10; ++i) {
    EXPECT_LT((back.frames[i].position - t.frames[i].position).norm(), 1e-15);
    EXPECT_EQ(back.frames[i].rotation, t.frames[i].rotation);
  }
  // Signed distances are translation invariant.
  EXPECT_NEAR(obb_sdf(nt.frames[5].position, ns.fixtures[0]), obb_sdf(t.frames[5].position, scene.fixtures[0]),
              1e-12);
  const SceneSpec sb = invert(tf, ns);
  EXPECT_LT((sb.point_cloud - scene.point_cloud).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Normalization, ScaleDividesPositionsOnly) {
  Rng rng = make_rng(66);
  const Trajectory t = random_traj(rng, 10, 3);
  SceneSpec scene;
  scene.fixtures = {testing::random_box(rng)};
  scene.point_cloud = PointCloud::Random(5, 3);
  scene.goal_pose = t.frames.back();
  const auto [nt, ns, tf] = normalize(t, scene, 0.1);
  EXPECT_EQ(tf.scale, 0.1);
  const Vec3 c = history_centroid(t.frames, 3);
  for (int i = 0; i < 10; ++i) {
    EXPECT_LT((nt.frames[i].position - (t.frames[i].position - c) / 0.1).norm(), 1e-12);
    EXPECT_EQ(nt.frames[i].rotation, t.frames[i].rotation);
  }
  EXPECT_LT((ns.goal_pose.position - (scene.goal_pose.position - c) / 0.1).norm(), 1e-12);
  EXPECT_THROW(normalize(t, scene, 0.0), Error);
}

TEST(NearestFixtures, OrderAndTies) {
  const std::vector<FixtureBox> boxes{FixtureBox(Vec3(2, 0, 0), Vec3(1, 1, 1)), FixtureBox(Vec3(-2, 0, 0), Vec3(1, 1, 1)),
                                      FixtureBox(Vec3(1, 0, 0), Vec3(1, 1, 1))};
  EXPECT_EQ(nearest_fixture_indices(boxes, Vec3::Zero(), 5), (std::vector<int>{2, 0, 1}));
  EXPECT_EQ(nearest_fixture_indices(boxes, Vec3::Zero(), 2), (std::vector<int>{2, 0}));
}

// Brute force: for each center, weights over its k nearest points.
Eigen::VectorXd propagate_oracle(const ScenePointFeatures& pf, const PointCloud& centers, int k) {
  Eigen::VectorXd out = Eigen::VectorXd::Zero(pf.feats.cols());
  for (Eigen::Index c = 0; c < centers.rows(); ++c) {
    std::vector<std::pair<double, Eigen::Index>> d;
    for (Eigen::Index i = 0; i < pf.coords.rows(); ++i) d.emplace_back((pf.coords.row(i) - centers.row(c)).norm(), i);
    std::sort(d.begin(), d.end());
    double total = 0.0;
    for (int i = 0; i < k; ++i) total += 1.0 / (d[i].first * d[i].first);
    for (int i = 0; i < k; ++i) {
      out += (1.0 / (d[i].first * d[i].first) / total) * pf.feats.row(d[i].second).transpose();
    }
  }
  return out;
}

TEST(Propagation, MatchesBruteForce) {
  Rng rng = make_rng(66);
  for (int trial = 0; trial < 50; ++trial) {
    ScenePointFeatures pf;
    pf.coords = PointCloud::NullaryExpr(30, 3, [&] { return uniform(rng, -1, 1); });
    pf.feats = Eigen::MatrixXd::NullaryExpr(30, 4, [&] { return standard_normal(rng); });
    const PointCloud centers = PointCloud::NullaryExpr(5, 3, [&] { return uniform(rng, -1, 1); });
    const Eigen::VectorXd got = propagate_point_features(pf, centers, 6);
    EXPECT_LT((got - propagate_oracle(pf, centers, 6)).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(Propagation, CoincidentPointTakesFullWeight) {
  ScenePointFeatures pf;
  pf.coords = PointCloud::Zero(3, 3);
  pf.coords.row(1) << 1, 0, 0;
  pf.coords.row(2) << 0, 1, 0;
  pf.feats = Eigen::MatrixXd::Identity(3, 3);
  PointCloud c(1, 3);
  c << 1, 0, 0;
  EXPECT_TRUE(propagate_point_features(pf, c, 3).isApprox(Eigen::Vector3d(0, 1, 0)));
  EXPECT_THROW(propagation_weights(pf.coords, c, 4), Error);
}

TEST(SceneJson, RoundTrip) {
  Rng rng = make_rng(67);
  SceneSpec s;
  s.fixtures = {testing::random_box(rng), testing::random_box(rng)};
  s.point_cloud = PointCloud::NullaryExpr(7, 3, [&] { return standard_normal(rng); });
  s.category_id = 5;
  s.goal_pose = TrajectoryFrame{Vec3(1, 2, 3), matrix_to_rot6(testing::random_rotation(rng))};
  s.prompt = "move the cup";
  const auto dir = testing::temp_dir("scene_json");
  save_scene(s, dir / "s.json");
  const SceneSpec b = load_scene(dir / "s.json");
  ASSERT_EQ(b.fixtures.size(), 2u);
  EXPECT_EQ(b.fixtures[1].center(), s.fixtures[1].center());
  EXPECT_EQ(b.fixtures[1].rotation(), s.fixtures[1].rotation());
  EXPECT_EQ(b.point_cloud, s.point_cloud);
  EXPECT_EQ(b.category_id, 5);
  EXPECT_EQ(b.goal_pose, s.goal_pose);
  EXPECT_EQ(b.prompt, s.prompt);
}

TEST(SceneValidation, RejectsBadCategory) {
  SceneSpec s;
  s.point_cloud = PointCloud::Zero(1, 3);
  s.category_id = 16;
  EXPECT_THROW(validate(s, 16), Error);
  s.category_id = 15;
  EXPECT_NO_THROW(validate(s, 16));
}

TEST(Rng, StreamsAreIndependentAndStable) {
  EXPECT_NE(stream_seed(1, "data"), stream_seed(1, "noise"));
  EXPECT_EQ(stream_seed(1, "data"), stream_seed(1, "data"));
  Rng a = make_rng(3);
  Rng b = make_rng(3);
  EXPECT_EQ(a(), b());
}

}  // namespace
}  // namespace trajflow
