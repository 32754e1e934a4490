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

#include <numeric>

#include "test_support.hpp"

namespace trajflow {
namespace {

using testing::random_state;
using testing::tiny_net;

SyntheticDatasetConfig short_dataset() {
  SyntheticDatasetConfig cfg;
  cfg.traj_len = 8;
  cfg.n_points = 32;
  return cfg;
}

std::vector<PreparedSample> prepared(const nn::NetConfig& nc, int n, Split split = Split::kTrain) {
  std::vector<PreparedSample> out;
  for (int i = 0; i < n; ++i) {
    const auto s = generate_indexed(short_dataset(), split, i);
    out.push_back(prepare_sample(s.trajectory, s.scene, nc));
  }
  return out;
}

// Small network whose trunk is wider than the generated state (6 x 9).
nn::NetConfig overfit_net() {
  auto nc = tiny_net(8, 2);
  nc.hidden_dim = 64;
  nc.position_scale = 0.1;
  return nc;
}

FrameList history_of(const Trajectory& t) {
  return FrameList(t.frames.begin(), t.frames.begin() + t.history_len);
}

TEST(FlowSchedule, DefaultTwentySteps) {
  const FlowSchedule s;
  EXPECT_EQ(s.n_steps, 20);
  EXPECT_EQ(s.dt(), 1.0 / 20);
  EXPECT_EQ(s.time_at(0), 1.0);
  EXPECT_EQ(s.time_at(19), 1.0 / 20);
  EXPECT_THROW(validate(FlowSchedule{0}), Error);
}

TEST(Interpolate, EndpointsAreBitExact) {
  Rng rng = make_rng(71);
  const State a = random_state(rng, 6);
  const State b = random_state(rng, 6);
  EXPECT_EQ(interpolate(a, b, 0.0), a);
  EXPECT_EQ(interpolate(a, b, 1.0), b);
}

TEST(Interpolate, ArithmeticAndLinearity) {
  const State zero = State::Zero(4, kFrameDim);
  const State one = State::Ones(4, kFrameDim);
  EXPECT_TRUE(interpolate(zero, one, 0.3).isApprox(State::Constant(4, kFrameDim, 0.3), 1e-15));
  Rng rng = make_rng(72);
  const State a = random_state(rng, 6);
  const State b = random_state(rng, 6);
  EXPECT_TRUE((interpolate(a, b, 0.37) + interpolate(b, a, 0.37)).isApprox(a + b, 1e-14));
  EXPECT_THROW(interpolate(a, random_state(rng, 5), 0.5), Error);
  EXPECT_THROW(interpolate(a, b, 1.5), Error);
}

TEST(FmLoss, PerfectPredictionIsZero) {
  Rng rng = make_rng(73);
  const State x0 = random_state(rng, 6);
  const State x1 = random_state(rng, 6);
  const LossResult l = fm_loss(x1 - x0, x0, x1, future_mask(6, 2));
  EXPECT_EQ(l.loss, 0.0);
  EXPECT_EQ(l.grad.cwiseAbs().maxCoeff(), 0.0);
}

TEST(FmLoss, SingleEntryOffByOne) {
  const State x0 = State::Zero(4, kFrameDim);
  const State x1 = State::Zero(4, kFrameDim);
  State pred = State::Zero(4, kFrameDim);
  pred(3, 5) = 1.0;
  const double n = 2 * kFrameDim;
  const LossResult l = fm_loss(pred, x0, x1, future_mask(4, 2));
  EXPECT_DOUBLE_EQ(l.loss, 1.0 / n);
  EXPECT_DOUBLE_EQ(l.grad(3, 5), 1.0 / n);
  EXPECT_EQ(l.grad.cwiseAbs().sum(), 1.0 / n);
}

TEST(FmLoss, HistoryExcludedAndEmptyMaskThrows) {
  const State z = State::Zero(4, kFrameDim);
  State pred = z;
  pred(0, 0) = 10.0;
  EXPECT_EQ(fm_loss(pred, z, z, future_mask(4, 2)).loss, 0.0);
  try {
    fm_loss(pred, z, z, std::vector<bool>(4, false));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kEmptyMask);
  }
}

TEST(FmLoss, PositionAndRotationWeighEqually) {
  const State z = State::Zero(4, kFrameDim);
  State pos = z;
  State rot = z;
  pos(2, 1) = 0.7;
  rot(2, 6) = 0.7;
  EXPECT_EQ(fm_loss(pos, z, z, future_mask(4, 1)).loss, fm_loss(rot, z, z, future_mask(4, 1)).loss);
}

TEST(FmLoss, SubgradientMatchesFiniteDifferences) {
  Rng rng = make_rng(74);
  const auto mask = future_mask(6, 2);
  for (int trial = 0; trial < 100; ++trial) {
    const State x0 = random_state(rng, 6);
    const State x1 = random_state(rng, 6);
    State pred = random_state(rng, 6);
    const LossResult l = fm_loss(pred, x0, x1, mask);
    const int j = uniform_int(rng, 0, 5);
    const int c = uniform_int(rng, 0, 8);
    const double saved = pred(j, c);
    pred(j, c) = saved + 1e-6;
    const double up = fm_loss(pred, x0, x1, mask).loss;
    pred(j, c) = saved - 1e-6;
    const double down = fm_loss(pred, x0, x1, mask).loss;
    EXPECT_NEAR(l.grad(j, c), (up - down) / 2e-6, 1e-8);
  }
}

TEST(TrainEpoch, ZeroHeadFirstBatchLossIsMeanDisplacement) {
  const auto nc = tiny_net(8, 2);
  const auto data = prepared(nc, 5);
  nn::VelocityField field(nc);
  TrainConfig tc;
  tc.batch_size = 5;
  // Replay the epoch's draws.
  Rng rng = make_rng(epoch_seed(tc.seed, 0));
  std::vector<std::size_t> order(5);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);
  double expected = 0.0;
  for (std::size_t i = 0; i < 5; ++i) {
    uniform(rng, 0.0, 1.0);
    State x1(8, kFrameDim);
    for (Eigen::Index k = 0; k < x1.size(); ++k) x1.data()[k] = standard_normal(rng);
    expected += (x1 - data[order[i]].x0).bottomRows(6).cwiseAbs().mean();
  }
  expected /= 5;
  const EpochStats st = train_epoch(field, data, tc, 0);
  EXPECT_NEAR(st.first_batch_loss, expected, 1e-14);
  EXPECT_EQ(st.n_batches, 1);
}

TEST(TrainEpoch, OverfitsSingleRepeatedSample) {
  const auto nc = overfit_net();
  auto one = prepared(nc, 1);
  const std::vector<PreparedSample> data(16, one[0]);
  nn::VelocityField field(nc);
  TrainConfig tc;
  tc.lr = 3e-3;
  tc.batch_size = 16;
  std::vector<double> losses;
  for (int e = 0; e < 50; ++e) losses.push_back(train_epoch(field, data, tc, e).mean_loss);
  const double head = std::accumulate(losses.begin(), losses.begin() + 10, 0.0) / 10;
  const double tail = std::accumulate(losses.end() - 10, losses.end(), 0.0) / 10;
  EXPECT_LT(losses.back(), losses.front());
  EXPECT_LT(tail, head);
}

TEST(TrainEpoch, SameSeedIsBitwiseIdentical) {
  const auto nc = tiny_net(8, 2);
  const auto data = prepared(nc, 10);
  TrainConfig tc;
  tc.batch_size = 4;
  nn::VelocityField a(nc);
  nn::VelocityField b(nc);
  for (int e = 0; e < 3; ++e) {
    EXPECT_EQ(train_epoch(a, data, tc, e).mean_loss, train_epoch(b, data, tc, e).mean_loss);
  }
  for (std::size_t i = 0; i < a.params().size(); ++i) {
    EXPECT_EQ(a.params()[static_cast<int>(i)].value, b.params()[static_cast<int>(i)].value);
  }
}

TEST(TrainEpoch, ResumeMatchesUninterruptedRun) {
  const auto nc = tiny_net(8, 2);
  const auto data = prepared(nc, 10);
  TrainConfig tc;
  tc.batch_size = 4;
  nn::VelocityField straight(nc);
  train_epoch(straight, data, tc, 0);
  train_epoch(straight, data, tc, 1);

  nn::VelocityField first(nc);
  train_epoch(first, data, tc, 0);
  const auto dir = testing::temp_dir("resume");
  nn::save_checkpoint(first, 1, dir / "ck.bin");
  std::int64_t done = 0;
  nn::VelocityField resumed = nn::load_checkpoint(dir / "ck.bin", &done);
  EXPECT_EQ(done, 1);
  EXPECT_EQ(resumed.params().step(), 3);
  train_epoch(resumed, data, tc, done);
  EXPECT_EQ(resumed.params().step(), 6);
  for (std::size_t i = 0; i < straight.params().size(); ++i) {
    EXPECT_EQ(straight.params()[static_cast<int>(i)].value, resumed.params()[static_cast<int>(i)].value);
  }
}

TEST(TrainEpoch, NonFiniteGradientNamesBatch) {
  const auto nc = tiny_net(8, 2);
  const auto data = prepared(nc, 10);
  TrainConfig tc;
  tc.batch_size = 4;
  nn::VelocityField field(nc);
  auto hook = [](int batch, nn::Gradients& g) {
    if (batch == 1) g.g[0](0, 0) = std::nan("");
  };
  try {
    train_epoch(field, data, tc, 0, hook);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kNonFiniteGradient);
    EXPECT_NE(std::string(e.what()).find("batch 1"), std::string::npos);
  }
}

TEST(Sample, ZeroFieldLeavesGaussianDrawUntouched) {
  const auto nc = tiny_net(8, 2);
  nn::VelocityField field(nc);
  field.set_zero();
  const auto s = generate_indexed(short_dataset(), Split::kHeldOut, 0);
  Rng rng = make_rng(5);
  const SampleResult r = sample(field, s.scene, history_of(s.trajectory), FlowSchedule{}, nullptr, rng);
  EXPECT_EQ(r.final_state, r.initial_state);
  Rng replay = make_rng(5);
  for (int j = 2; j < 8; ++j) {
    for (int c = 0; c < kFrameDim; ++c) EXPECT_EQ(r.initial_state(j, c), standard_normal(replay));
  }
}

TEST(Sample, HistoryIsVerbatimAndRunsAreDeterministic) {
  const auto nc = tiny_net(8, 2);
  nn::VelocityField field(nc);
  Rng init = make_rng(9);
  for (auto& t : field.params().tensors()) t.value = t.value.unaryExpr([&](double) { return 0.1 * standard_normal(init); });
  const auto s = generate_indexed(short_dataset(), Split::kHeldOut, 1);
  const FrameList hist = history_of(s.trajectory);
  Rng a = make_rng(3);
  Rng b = make_rng(3);
  const GuidanceConfig g;
  const auto ra = sample(field, s.scene, hist, FlowSchedule{}, &g, a);
  const auto rb = sample(field, s.scene, hist, FlowSchedule{}, &g, b);
  EXPECT_EQ(ra.trajectory, rb.trajectory);
  for (int j = 0; j < 2; ++j) EXPECT_EQ(ra.trajectory.frames[j], hist[j]);
  EXPECT_EQ(ra.guidance_traces.size(), 20u);
}

TEST(Sample, ZeroInnerStepsEqualsUnguided) {
  const auto nc = tiny_net(8, 2);
  nn::VelocityField field(nc);
  Rng init = make_rng(10);
  for (auto& t : field.params().tensors()) t.value = t.value.unaryExpr([&](double) { return 0.1 * standard_normal(init); });
  const auto s = generate_indexed(short_dataset(), Split::kStress, 2);
  GuidanceConfig g;
  g.k_steps = 0;
  Rng a = make_rng(4);
  Rng b = make_rng(4);
  const auto guided = sample(field, s.scene, history_of(s.trajectory), FlowSchedule{}, &g, a);
  const auto plain = sample(field, s.scene, history_of(s.trajectory), FlowSchedule{}, nullptr, b);
  EXPECT_EQ(guided.trajectory, plain.trajectory);
  EXPECT_EQ(guided.initial_state, plain.initial_state);
}

TEST(Sample, ZeroInnerStepsEqualsUnguidedAtNonUnitScale) {
  auto nc = tiny_net(8, 2);
  nc.position_scale = 0.1;
  nn::VelocityField field(nc);
  Rng init = make_rng(11);
  for (auto& t : field.params().tensors()) t.value = t.value.unaryExpr([&](double) { return 0.1 * standard_normal(init); });
  const auto s = generate_indexed(short_dataset(), Split::kStress, 3);
  GuidanceConfig g;
  g.k_steps = 0;
  Rng a = make_rng(5);
  Rng b = make_rng(5);
  const auto guided = sample(field, s.scene, history_of(s.trajectory), FlowSchedule{}, &g, a);
  const auto plain = sample(field, s.scene, history_of(s.trajectory), FlowSchedule{}, nullptr, b);
  EXPECT_EQ(guided.trajectory, plain.trajectory);
}

TEST(Sample, ScaleMapsNetworkUnitsToMetres) {
  // A zero field returns the noise draw; in metres it is scaled by the
  // position scale about the history centroid.
  auto nc = tiny_net(8, 2);
  nc.position_scale = 0.1;
  nn::VelocityField field(nc);
  const auto s = generate_indexed(short_dataset(), Split::kTrain, 1);
  const FrameList hist = history_of(s.trajectory);
  Rng rng = make_rng(6);
  const auto r = sample(field, s.scene, hist, FlowSchedule{}, nullptr, rng);
  const Vec3 c = history_centroid(hist, nc.history_len);
  for (int j = nc.history_len; j < nc.traj_len; ++j) {
    const Vec3 expected = c + 0.1 * r.initial_state.row(j).head<3>().transpose();
    EXPECT_LT((r.trajectory.frames[j].position - expected).norm(), 1e-12);
  }
}

TEST(TrainConfig, CosineDecayEndpoints) {
  TrainConfig tc;
  tc.lr = 1e-3;
  tc.epochs = 40;
  EXPECT_EQ(tc.lr_at(0), 1e-3);
  EXPECT_EQ(tc.lr_at(39), 1e-3);
  tc.lr_final = 1e-5;
  EXPECT_DOUBLE_EQ(tc.lr_at(0), 1e-3);
  EXPECT_DOUBLE_EQ(tc.lr_at(39), 1e-5);
  EXPECT_NEAR(tc.lr_at(19), 0.5 * (1e-3 + 1e-5), 1e-4);
  for (int e = 1; e < 40; ++e) EXPECT_LT(tc.lr_at(e), tc.lr_at(e - 1));
  tc.lr_final = 2e-3;
  EXPECT_THROW(validate(tc), Error);
}

TEST(Baseline, StraightLineEndsAtGoal) {
  const auto s = generate_indexed(SyntheticDatasetConfig{}, Split::kHeldOut, 3);
  const FrameList hist = history_of(s.trajectory);
  const Trajectory b = straight_line_baseline(hist, s.scene.goal_pose, 80);
  ASSERT_EQ(b.length(), 80);
  EXPECT_LT((b.frames.back().position - s.scene.goal_pose.position).norm(), 1e-15);
  EXPECT_LT(geodesic_distance(b.frames.back().rotation, s.scene.goal_pose.rotation), 1e-7);
  const Vec3 mid = b.frames[52].position;
  const Vec3 expected = hist.back().position + (29.0 / 56.0) * (s.scene.goal_pose.position - hist.back().position);
  EXPECT_LT((mid - expected).norm(), 1e-15);
}

// ADE on the training trajectory falls as a one-sample model trains.
TEST(Sample, OneSampleModelConvergesToItsTrajectory) {
  const auto nc = overfit_net();
  const auto s = generate_indexed(short_dataset(), Split::kTrain, 0);
  const PreparedSample p = prepare_sample(s.trajectory, s.scene, nc);
  const std::vector<PreparedSample> data(16, p);
  nn::VelocityField field(nc);
  TrainConfig tc;
  tc.lr = 3e-3;
  tc.batch_size = 16;
  std::vector<double> ades;
  for (int e = 0; e <= 600; ++e) {
    if (e % 150 == 0) {
      Rng rng = make_rng(99);
      ades.push_back(ade(sample(field, s.scene, history_of(s.trajectory), FlowSchedule{}, nullptr, rng).trajectory,
                         s.trajectory));
    }
    if (e < 600) train_epoch(field, data, tc, e);
  }
  EXPECT_LT(ades.back(), 0.25 * ades.front());
  EXPECT_LT(ades.back(), 0.05);
}

}  // namespace
}  // namespace trajflow
