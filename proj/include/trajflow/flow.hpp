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

#ifndef TRAJFLOW_FLOW_HPP
#define TRAJFLOW_FLOW_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numbers>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Geometry>

#include "trajflow/guidance.hpp"
#include "trajflow/nn/velocity_field.hpp"
#include "trajflow/rng.hpp"
#include "trajflow/scene.hpp"
#include "trajflow/trajectory.hpp"

namespace trajflow {

// Flow time runs from noise (t = 1) to data (t = 0).

struct FlowSchedule {
  int n_steps = 20;

  double dt() const { return 1.0 / n_steps; }
  /// Flow time at the start of Euler step i.
  double time_at(int i) const { return static_cast<double>(n_steps - i) / n_steps; }
};

inline void validate(const FlowSchedule& s) {
  if (s.n_steps < 1) fail(ErrorKind::kValidation, "n_steps must be >= 1");
}

struct TrainConfig {
  double lr = 1e-4;
  /// Cosine decay target reached at the last epoch; negative keeps lr fixed.
  double lr_final = -1.0;
  int batch_size = 32;
  int epochs = 100;
  std::uint64_t seed = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double weight_decay = 0.01;
  double position_weight = 1.0;
  double rotation_weight = 1.0;

  double lr_at(std::int64_t epoch) const {
    if (lr_final < 0.0 || epochs <= 1) return lr;
    const double phase = std::clamp(static_cast<double>(epoch) / (epochs - 1), 0.0, 1.0);
    return lr_final + 0.5 * (lr - lr_final) * (1.0 + std::cos(std::numbers::pi * phase));
  }
  nn::AdamWConfig adamw(std::int64_t epoch = 0) const { return {lr_at(epoch), beta1, beta2, weight_decay, 1e-8}; }
};

inline void validate(const TrainConfig& c) {
  if (!(c.lr > 0.0)) fail(ErrorKind::kValidation, "lr must be > 0");
  if (c.lr_final > c.lr) fail(ErrorKind::kValidation, "lr_final must not exceed lr");
  if (c.batch_size < 1) fail(ErrorKind::kValidation, "batch_size must be >= 1");
  if (c.epochs < 0) fail(ErrorKind::kValidation, "epochs must be >= 0");
  if (!(c.beta1 > 0.0 && c.beta1 < 1.0) || !(c.beta2 > 0.0 && c.beta2 < 1.0)) {
    fail(ErrorKind::kValidation, "betas must lie in (0, 1)");
  }
  if (!(c.weight_decay >= 0.0)) fail(ErrorKind::kValidation, "weight_decay must be >= 0");
  if (!(c.position_weight > 0.0) || !(c.rotation_weight > 0.0)) {
    fail(ErrorKind::kValidation, "loss weights must be > 0");
  }
}

inline State interpolate(const State& x0, const State& x1, double t) {
  if (x0.rows() != x1.rows()) {
    fail(ErrorKind::kShapeMismatch, "interpolate: " + std::to_string(x0.rows()) + " vs " +
                                        std::to_string(x1.rows()) + " frames");
  }
  if (!(t >= 0.0 && t <= 1.0)) fail(ErrorKind::kShapeMismatch, "flow time outside [0, 1]");
  if (t == 0.0) return x0;
  if (t == 1.0) return x1;
  return (1.0 - t) * x0 + t * x1;
}

struct LossResult {
  double loss = 0.0;
  State grad;  // d loss / d pred_v
};

/// Weighted L1 mean over masked frames of pred_v - (x1 - x0).
inline LossResult fm_loss(const State& pred_v, const State& x0, const State& x1, const std::vector<bool>& mask,
                          double position_weight = 1.0, double rotation_weight = 1.0) {
  if (pred_v.rows() != x0.rows() || x0.rows() != x1.rows() ||
      static_cast<Eigen::Index>(mask.size()) != x0.rows()) {
    fail(ErrorKind::kShapeMismatch, "fm_loss operands disagree in frame count");
  }
  const auto frames = std::count(mask.begin(), mask.end(), true);
  if (frames == 0) fail(ErrorKind::kEmptyMask, "fm_loss mask selects no frames");
  const double count = static_cast<double>(frames) * kFrameDim;
  LossResult out{0.0, State::Zero(x0.rows(), kFrameDim)};
  for (Eigen::Index j = 0; j < x0.rows(); ++j) {
    if (!mask[j]) continue;
    for (int c = 0; c < kFrameDim; ++c) {
      const double w = c < 3 ? position_weight : rotation_weight;
      const double r = pred_v(j, c) - (x1(j, c) - x0(j, c));
      out.loss += w * std::abs(r);
      out.grad(j, c) = r > 0.0 ? w / count : (r < 0.0 ? -w / count : 0.0);
    }
  }
  out.loss /= count;
  return out;
}

inline std::vector<bool> future_mask(int traj_len, int history_len) {
  std::vector<bool> mask(traj_len, false);
  for (int j = history_len; j < traj_len; ++j) mask[j] = true;
  return mask;
}

// ---------------------------------------------------------------------------
// Training

/// A training pair in normalized coordinates with its precomputed
/// conditioning input.
struct PreparedSample {
  State x0;
  nn::ConditioningInput cond;
};

inline PreparedSample prepare_sample(const Trajectory& traj, const SceneSpec& scene, const nn::NetConfig& cfg) {
  validate(traj);
  if (traj.length() != cfg.traj_len || traj.history_len != cfg.history_len) {
    fail(ErrorKind::kShapeMismatch, "trajectory (T=" + std::to_string(traj.length()) + ", H=" +
                                        std::to_string(traj.history_len) + ") vs network (T=" +
                                        std::to_string(cfg.traj_len) + ", H=" + std::to_string(cfg.history_len) +
                                        ")");
  }
  const auto [ntraj, nscene, tf] = normalize(traj, scene, cfg.position_scale);
  const FrameList history(ntraj.frames.begin(), ntraj.frames.begin() + traj.history_len);
  return {to_state(ntraj), nn::make_conditioning_input(nscene, history, cfg)};
}

struct EpochStats {
  double mean_loss = 0.0;
  double first_batch_loss = 0.0;
  int n_batches = 0;
};

/// Test hook: called with (batch index, gradients) before the optimizer step.
using GradientHook = std::function<void(int, nn::Gradients&)>;

inline std::uint64_t epoch_seed(std::uint64_t seed, std::int64_t epoch) {
  return stream_seed(seed, "noise") ^ splitmix64(static_cast<std::uint64_t>(epoch) + 1);
}

/// One pass over the shuffled dataset. The noise stream depends only on
/// (cfg.seed, epoch), so a resumed run replays exactly.
inline EpochStats train_epoch(nn::VelocityField& field, std::span<const PreparedSample> data, const TrainConfig& cfg,
                              std::int64_t epoch, const GradientHook& hook = {}) {
  if (data.empty()) fail(ErrorKind::kValidation, "training set is empty");
  const nn::NetConfig& nc = field.config();
  const int h = nc.history_len;
  const int width = nc.state_width();
  const auto mask = future_mask(nc.traj_len, h);
  Rng rng = make_rng(epoch_seed(cfg.seed, epoch));

  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);

  EpochStats stats;
  double total = 0.0;
  for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
    const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
    const int b = static_cast<int>(stop - start);
    std::vector<const nn::ConditioningInput*> conds(b);
    std::vector<State> x1s(b);
    Eigen::MatrixXd x(width, b);
    Eigen::VectorXd t(b);
    for (int i = 0; i < b; ++i) {
      const PreparedSample& s = data[order[start + i]];
      conds[i] = &s.cond;
      t[i] = uniform(rng, 0.0, 1.0);
      State x1(nc.traj_len, kFrameDim);
      for (Eigen::Index k = 0; k < x1.size(); ++k) x1.data()[k] = standard_normal(rng);
      State xt = interpolate(s.x0, x1, t[i]);
      xt.topRows(h) = s.x0.topRows(h);
      x.col(i) = Eigen::Map<const Eigen::VectorXd>(xt.data(), width);
      x1s[i] = std::move(x1);
    }

    nn::EncoderCache enc_cache;
    nn::TrunkCache trunk_cache;
    const Eigen::MatrixXd u = field.encode(conds, &enc_cache);
    const Eigen::MatrixXd v = field.forward(x, t, u, &trunk_cache);

    Eigen::MatrixXd dout(width, b);
    double batch_loss = 0.0;
    for (int i = 0; i < b; ++i) {
      const PreparedSample& s = data[order[start + i]];
      State pred(nc.traj_len, kFrameDim);
      Eigen::Map<Eigen::VectorXd>(pred.data(), width) = v.col(i);
      const LossResult l = fm_loss(pred, s.x0, x1s[i], mask, cfg.position_weight, cfg.rotation_weight);
      batch_loss += l.loss;
      dout.col(i) = Eigen::Map<const Eigen::VectorXd>(l.grad.data(), width) / static_cast<double>(b);
    }
    batch_loss /= b;

    nn::Gradients grads = nn::Gradients::zeros_like(field.params());
    Eigen::MatrixXd du;
    field.backward(trunk_cache, dout, grads, nullptr, &du);
    field.backward_encoder(enc_cache, du, grads);
    if (hook) hook(stats.n_batches, grads);
    try {
      nn::adamw_step(field.params(), grads, cfg.adamw(epoch));
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::kNonFiniteGradient) throw;
      fail(ErrorKind::kNonFiniteGradient, "batch " + std::to_string(stats.n_batches) + ": " + e.what());
    }

    if (stats.n_batches == 0) stats.first_batch_loss = batch_loss;
    total += batch_loss;
    ++stats.n_batches;
  }
  stats.mean_loss = total / stats.n_batches;
  return stats;
}

// ---------------------------------------------------------------------------
// Sampling

struct SampleResult {
  Trajectory trajectory;
  /// Normalized state at flow time 1 and at flow time 0.
  State initial_state;
  State final_state;
  /// One inner-loop cost trace per Euler step (empty without guidance).
  std::vector<std::vector<CostReport>> guidance_traces;
  std::vector<std::string> diagnostics;
};

/// Euler integration from noise to data with history inpainting and optional
/// guidance. Noise is drawn for the generated frames only, row by row.
/// Guidance sees metric positions about the history centroid, so cost
/// thresholds and step sizes do not depend on the network position scale.
inline SampleResult sample(const nn::VelocityField& field, const SceneSpec& scene, const FrameList& history,
                           const FlowSchedule& schedule, const GuidanceConfig* guidance, Rng& rng,
                           double frame_dt = kDefaultFrameDt) {
  validate(schedule);
  if (guidance != nullptr) validate(*guidance);
  const nn::NetConfig& nc = field.config();
  const int h = nc.history_len;
  if (static_cast<int>(history.size()) != h) {
    fail(ErrorKind::kShapeMismatch, "history has " + std::to_string(history.size()) + " frames, network expects " +
                                        std::to_string(h));
  }
  NormalizationTransform tf;
  tf.offset = history_centroid(history, h);
  tf.scale = nc.position_scale;
  const SceneSpec nscene = apply(tf, scene);
  const std::vector<FixtureBox> metric_fixtures = apply(NormalizationTransform{tf.offset, 1.0}, scene).fixtures;
  auto to_metric = [&](State m, double factor) {
    m.leftCols(3) *= factor;
    return m;
  };
  FrameList nhist = history;
  for (auto& f : nhist) f.position = tf.apply(f.position);
  const State hist_state = to_state(nhist);
  const Eigen::VectorXd u = field.encode_one(nn::make_conditioning_input(nscene, nhist, nc));

  State x(nc.traj_len, kFrameDim);
  x.topRows(h) = hist_state;
  for (Eigen::Index j = h; j < x.rows(); ++j) {
    for (int c = 0; c < kFrameDim; ++c) x(j, c) = standard_normal(rng);
  }

  SampleResult out;
  out.initial_state = x;
  const double dt = schedule.dt();
  for (int i = 0; i < schedule.n_steps; ++i) {
    x.topRows(h) = hist_state;
    State v = field.velocity(x, schedule.time_at(i), u);
    if (guidance != nullptr) {
      const double s = nc.position_scale;
      const State v_metric = to_metric(v, s);
      GuidanceResult g = guided_velocity(to_metric(x, s), v_metric, *guidance, metric_fixtures, dt,
                                         to_metric(hist_state, s));
      if (g.aborted) out.diagnostics.push_back("step " + std::to_string(i) + ": " + g.diagnostic);
      out.guidance_traces.push_back(std::move(g.trace));
      // Only the correction is rescaled, so K = 0 leaves v bit-identical.
      v += to_metric(g.velocity - v_metric, 1.0 / s);
    }
    x -= dt * v;
    x.topRows(h) = hist_state;
  }
  out.final_state = x;

  out.trajectory.history_len = h;
  out.trajectory.frame_dt = frame_dt;
  out.trajectory.frames = history;
  for (Eigen::Index j = h; j < x.rows(); ++j) {
    TrajectoryFrame f = TrajectoryFrame::from_vec(x.row(j).transpose());
    f.position = tf.invert(f.position);
    out.trajectory.frames.push_back(f);
  }
  return out;
}

/// Straight line from the last history position to the goal with slerped
/// rotations; frame T-1 lands on the goal.
inline Trajectory straight_line_baseline(const FrameList& history, const TrajectoryFrame& goal, int traj_len,
                                         double frame_dt = kDefaultFrameDt) {
  const int h = static_cast<int>(history.size());
  if (h < 1 || h >= traj_len) fail(ErrorKind::kInvalidSplit, "baseline needs 1 <= H < T");
  const TrajectoryFrame& last = history.back();
  const Eigen::Quaterniond q0(rot6_to_matrix(last.rotation));
  const Eigen::Quaterniond q1(rot6_to_matrix(goal.rotation));
  Trajectory out;
  out.history_len = h;
  out.frame_dt = frame_dt;
  out.frames = history;
  const int n = traj_len - h;
  for (int k = 1; k <= n; ++k) {
    const double s = static_cast<double>(k) / n;
    out.frames.push_back(TrajectoryFrame{last.position + s * (goal.position - last.position),
                                         matrix_to_rot6(q0.slerp(s, q1).toRotationMatrix())});
  }
  return out;
}

}  // namespace trajflow

#endif  // TRAJFLOW_FLOW_HPP
