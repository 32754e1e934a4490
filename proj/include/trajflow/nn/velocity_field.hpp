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

#ifndef TRAJFLOW_NN_VELOCITY_FIELD_HPP
#define TRAJFLOW_NN_VELOCITY_FIELD_HPP

#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "trajflow/nn/parameter_store.hpp"
#include "trajflow/rng.hpp"
#include "trajflow/scene.hpp"
#include "trajflow/trajectory.hpp"

namespace trajflow::nn {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

struct NetConfig {
  int traj_len = kDefaultTrajLen;
  int history_len = 24;
  int hidden_dim = 256;
  int n_blocks = 4;
  int cond_dim = 192;
  int time_emb_dim = 64;
  int point_feat_dim = 32;
  int embed_dim = 64;
  int category_dim = 16;
  int category_vocab = kDefaultCategoryVocab;
  int max_fixtures = kDefaultMaxFixtures;
  int knn = kDefaultKnn;
  /// Network positions are metric positions about the history centroid
  /// divided by this factor.
  double position_scale = 1.0;
  std::uint64_t seed = 0;

  int state_width() const { return traj_len * kFrameDim; }
  int history_width() const { return history_len * kFrameDim; }
  /// [F_traj | F_p | F_g | F_b | F_s | F_goal]
  int concat_dim() const { return 3 * embed_dim + 2 * point_feat_dim + category_dim; }
  int film_input_dim() const { return cond_dim + time_emb_dim; }

  bool operator==(const NetConfig&) const = default;
};

inline void validate(const NetConfig& c) {
  for (int v : {c.traj_len, c.history_len, c.hidden_dim, c.n_blocks, c.cond_dim, c.time_emb_dim, c.point_feat_dim,
                c.embed_dim, c.category_dim, c.category_vocab, c.max_fixtures, c.knn}) {
    if (v <= 0) fail(ErrorKind::kValidation, "network dimensions must all be positive");
  }
  if (c.history_len >= c.traj_len) fail(ErrorKind::kValidation, "history_len must be < traj_len");
  if (!(c.position_scale > 0.0) || !std::isfinite(c.position_scale)) {
    fail(ErrorKind::kValidation, "position_scale must be positive and finite");
  }
  if (c.time_emb_dim % 2 != 0 || c.time_emb_dim < 4) {
    fail(ErrorKind::kValidation, "time_emb_dim must be even and >= 4");
  }
}

// ---------------------------------------------------------------------------
// Elementwise pieces

inline constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)

/// tanh-approximated GELU.
inline double gelu(double x) { return 0.5 * x * (1.0 + std::tanh(kGeluC * (x + 0.044715 * x * x * x))); }

inline double gelu_grad(double x) {
  const double th = std::tanh(kGeluC * (x + 0.044715 * x * x * x));
  return 0.5 * (1.0 + th) + 0.5 * x * (1.0 - th * th) * kGeluC * (1.0 + 3.0 * 0.044715 * x * x);
}

inline MatrixXd gelu(const MatrixXd& x) { return x.unaryExpr([](double v) { return gelu(v); }); }
inline MatrixXd gelu_grad(const MatrixXd& x) { return x.unaryExpr([](double v) { return gelu_grad(v); }); }

/// Sinusoidal embedding with frequencies spaced geometrically over [1, 1e4].
inline VectorXd time_embedding(double t, int dim) {
  const int half = dim / 2;
  VectorXd e(dim);
  for (int k = 0; k < half; ++k) {
    const double freq = std::pow(1e4, static_cast<double>(k) / (half - 1));
    e[k] = std::sin(freq * t);
    e[half + k] = std::cos(freq * t);
  }
  return e;
}

// ---------------------------------------------------------------------------
// Conditioning inputs

/// Everything the encoder reads from a (normalized) scene and history.
/// Propagation weights do not depend on parameters, so they are computed
/// once here.
struct ConditioningInput {
  VectorXd history;             // H*9, frame-major
  Eigen::Matrix<double, 9, 1> goal;
  int category = 0;
  MatrixXd fixtures;            // 12 x M: center, size, rot6
  MatrixXd points;              // 3 x N
  VectorXd point_weights;       // N
};

inline ConditioningInput make_conditioning_input(const SceneSpec& scene, const FrameList& history,
                                                 const NetConfig& cfg) {
  if (static_cast<int>(history.size()) != cfg.history_len) {
    fail(ErrorKind::kShapeMismatch, "history has " + std::to_string(history.size()) + " frames, network expects " +
                                        std::to_string(cfg.history_len));
  }
  validate(scene, cfg.category_vocab);
  ConditioningInput in;
  in.history.resize(cfg.history_width());
  for (int i = 0; i < cfg.history_len; ++i) in.history.segment<kFrameDim>(i * kFrameDim) = history[i].to_vec();
  in.goal = scene.goal_pose.to_vec();
  in.category = scene.category_id;
  const auto picked = nearest_fixture_indices(scene.fixtures, history.back().position, cfg.max_fixtures);
  in.fixtures.resize(12, static_cast<Index>(picked.size()));
  for (std::size_t i = 0; i < picked.size(); ++i) {
    const auto& f = scene.fixtures[picked[i]];
    in.fixtures.col(i) << f.center(), f.size(), f.rotation().a;
  }
  in.points = scene.point_cloud.transpose();
  const int k = std::min<int>(cfg.knn, static_cast<int>(scene.point_cloud.rows()));
  in.point_weights = propagation_weights(scene.point_cloud, history_positions(history), k);
  return in;
}

// ---------------------------------------------------------------------------
// Network

struct EncoderCache {
  int batch = 0;
  MatrixXd hist, goal;
  std::vector<int> category;
  MatrixXd points, pt_pre, pt_act, pt_feat;
  std::vector<Index> pt_offset;
  std::vector<const VectorXd*> pt_weights;
  MatrixXd fix, fx_pre, fx_act;
  std::vector<Index> fx_offset;
  MatrixXd goal_pre, goal_act;
  MatrixXd concat;
};

struct TrunkCache {
  MatrixXd x;     // state_width x B
  MatrixXd film;  // (cond + time) x B
  std::vector<MatrixXd> h, z, gamma, pre;
};

/// FiLM-conditioned residual velocity field v(x, t, u) over the flattened
/// trajectory, plus the conditioning encoder producing u. Forward and
/// backward passes are batched column-wise and hand-differentiated.
class VelocityField {
 public:
  explicit VelocityField(const NetConfig& cfg) : cfg_(cfg) {
    validate(cfg_);
    build();
    initialize(cfg_.seed);
  }

  const NetConfig& config() const { return cfg_; }
  ParameterStore& params() { return store_; }
  const ParameterStore& params() const { return store_; }

  /// Uniform +-1/sqrt(fan_in) weights, zero biases, unit FiLM scale bias and
  /// a zero output head (the initial field is identically zero).
  void initialize(std::uint64_t seed) {
    Rng rng = make_rng(stream_seed(seed, "init"));
    for (auto& t : store_.tensors()) {
      t.m.setZero();
      t.v.setZero();
      const bool is_bias = t.value.cols() == 1 && t.name != "enc.category.table";
      if (is_bias) {
        t.value.setZero();
        continue;
      }
      const double bound = 1.0 / std::sqrt(static_cast<double>(t.value.cols()));
      for (Index j = 0; j < t.value.cols(); ++j) {
        for (Index i = 0; i < t.value.rows(); ++i) t.value(i, j) = uniform(rng, -bound, bound);
      }
    }
    for (const auto& b : blocks_) store_[b.gamma_b].value.setOnes();
    store_[out_w_].value.setZero();
    store_[out_b_].value.setZero();
    store_.set_step(0);
  }

  void set_zero() {
    for (auto& t : store_.tensors()) t.value.setZero();
  }

  // -- encoder -------------------------------------------------------------

  MatrixXd encode(std::span<const ConditioningInput* const> inputs, EncoderCache* cache = nullptr) const {
    EncoderCache local;
    EncoderCache& c = cache ? *cache : local;
    const int b = static_cast<int>(inputs.size());
    c.batch = b;
    c.hist.resize(cfg_.history_width(), b);
    c.goal.resize(9, b);
    c.category.assign(b, 0);
    c.pt_offset.assign(b + 1, 0);
    c.fx_offset.assign(b + 1, 0);
    c.pt_weights.assign(b, nullptr);
    for (int i = 0; i < b; ++i) {
      const auto& in = *inputs[i];
      if (in.history.size() != cfg_.history_width()) {
        fail(ErrorKind::kShapeMismatch, "conditioning history width " + std::to_string(in.history.size()) +
                                            " vs expected " + std::to_string(cfg_.history_width()));
      }
      if (in.category < 0 || in.category >= cfg_.category_vocab) {
        fail(ErrorKind::kShapeMismatch, "category " + std::to_string(in.category) + " outside vocabulary");
      }
      if (in.points.cols() < 1 || in.point_weights.size() != in.points.cols()) {
        fail(ErrorKind::kShapeMismatch, "point cloud and propagation weights disagree");
      }
      c.hist.col(i) = in.history;
      c.goal.col(i) = in.goal;
      c.category[i] = in.category;
      c.pt_offset[i + 1] = c.pt_offset[i] + in.points.cols();
      c.fx_offset[i + 1] = c.fx_offset[i] + in.fixtures.cols();
      c.pt_weights[i] = &in.point_weights;
    }
    c.points.resize(3, c.pt_offset[b]);
    c.fix.resize(12, c.fx_offset[b]);
    for (int i = 0; i < b; ++i) {
      c.points.middleCols(c.pt_offset[i], inputs[i]->points.cols()) = inputs[i]->points;
      if (inputs[i]->fixtures.cols() > 0) c.fix.middleCols(c.fx_offset[i], inputs[i]->fixtures.cols()) = inputs[i]->fixtures;
    }

    const int e = cfg_.embed_dim;
    const int d = cfg_.point_feat_dim;
    c.concat.resize(cfg_.concat_dim(), b);
    // F_traj
    c.concat.topRows(e) = (W(traj_w_) * c.hist).colwise() + V(traj_b_);
    // per-point features, then F_p (propagated) and F_g (mean)
    c.pt_pre = (W(pt_w1_) * c.points).colwise() + V(pt_b1_);
    c.pt_act = gelu(c.pt_pre);
    c.pt_feat = (W(pt_w2_) * c.pt_act).colwise() + V(pt_b2_);
    for (int i = 0; i < b; ++i) {
      const Index n = c.pt_offset[i + 1] - c.pt_offset[i];
      const auto seg = c.pt_feat.middleCols(c.pt_offset[i], n);
      c.concat.col(i).segment(e, d) = seg * (*c.pt_weights[i]);
      c.concat.col(i).segment(e + d, d) = seg.rowwise().mean();
    }
    // F_b: mean-pooled fixture embeddings
    c.fx_pre = (W(fx_w1_) * c.fix).colwise() + V(fx_b1_);
    c.fx_act = gelu(c.fx_pre);
    const MatrixXd fx_out = (W(fx_w2_) * c.fx_act).colwise() + V(fx_b2_);
    for (int i = 0; i < b; ++i) {
      const Index m = c.fx_offset[i + 1] - c.fx_offset[i];
      if (m == 0) {
        c.concat.col(i).segment(e + 2 * d, e).setZero();
      } else {
        c.concat.col(i).segment(e + 2 * d, e) = fx_out.middleCols(c.fx_offset[i], m).rowwise().mean();
      }
    }
    // F_s: category embedding
    for (int i = 0; i < b; ++i) {
      c.concat.col(i).segment(2 * e + 2 * d, cfg_.category_dim) = W(cat_table_).col(c.category[i]);
    }
    // F_goal
    c.goal_pre = (W(goal_w1_) * c.goal).colwise() + V(goal_b1_);
    c.goal_act = gelu(c.goal_pre);
    c.concat.bottomRows(e) = (W(goal_w2_) * c.goal_act).colwise() + V(goal_b2_);

    return (W(cond_w_) * c.concat).colwise() + V(cond_b_);
  }

  void backward_encoder(const EncoderCache& c, const MatrixXd& du, Gradients& grads) const {
    const int b = c.batch;
    const int e = cfg_.embed_dim;
    const int d = cfg_.point_feat_dim;
    grads.g[cond_w_] += du * c.concat.transpose();
    grads.g[cond_b_] += du.rowwise().sum();
    const MatrixXd dcat = W(cond_w_).transpose() * du;

    const auto d_traj = dcat.topRows(e);
    grads.g[traj_w_] += d_traj * c.hist.transpose();
    grads.g[traj_b_] += d_traj.rowwise().sum();

    MatrixXd d_feat(d, c.pt_feat.cols());
    for (int i = 0; i < b; ++i) {
      const Index n = c.pt_offset[i + 1] - c.pt_offset[i];
      const VectorXd d_prop = dcat.col(i).segment(e, d);
      const VectorXd d_mean = dcat.col(i).segment(e + d, d) / static_cast<double>(n);
      d_feat.middleCols(c.pt_offset[i], n) =
          (d_prop * c.pt_weights[i]->transpose()).colwise() + d_mean;
    }
    grads.g[pt_w2_] += d_feat * c.pt_act.transpose();
    grads.g[pt_b2_] += d_feat.rowwise().sum();
    const MatrixXd d_pt_pre = (W(pt_w2_).transpose() * d_feat).cwiseProduct(gelu_grad(c.pt_pre));
    grads.g[pt_w1_] += d_pt_pre * c.points.transpose();
    grads.g[pt_b1_] += d_pt_pre.rowwise().sum();

    if (c.fix.cols() > 0) {
      MatrixXd d_fx_out(e, c.fix.cols());
      for (int i = 0; i < b; ++i) {
        const Index m = c.fx_offset[i + 1] - c.fx_offset[i];
        if (m == 0) continue;
        const VectorXd g = dcat.col(i).segment(e + 2 * d, e) / static_cast<double>(m);
        d_fx_out.middleCols(c.fx_offset[i], m) = g.replicate(1, m);
      }
      grads.g[fx_w2_] += d_fx_out * c.fx_act.transpose();
      grads.g[fx_b2_] += d_fx_out.rowwise().sum();
      const MatrixXd d_fx_pre = (W(fx_w2_).transpose() * d_fx_out).cwiseProduct(gelu_grad(c.fx_pre));
      grads.g[fx_w1_] += d_fx_pre * c.fix.transpose();
      grads.g[fx_b1_] += d_fx_pre.rowwise().sum();
    }

    for (int i = 0; i < b; ++i) {
      grads.g[cat_table_].col(c.category[i]) += dcat.col(i).segment(2 * e + 2 * d, cfg_.category_dim);
    }

    const auto d_goal = dcat.bottomRows(e);
    grads.g[goal_w2_] += d_goal * c.goal_act.transpose();
    grads.g[goal_b2_] += d_goal.rowwise().sum();
    const MatrixXd d_goal_pre = (W(goal_w2_).transpose() * d_goal).cwiseProduct(gelu_grad(c.goal_pre));
    grads.g[goal_w1_] += d_goal_pre * c.goal.transpose();
    grads.g[goal_b1_] += d_goal_pre.rowwise().sum();
  }

  // -- trunk ---------------------------------------------------------------

  /// x: state_width x B (flattened frame-major states), t: B flow times,
  /// u: cond_dim x B. Returns the velocity, state_width x B.
  MatrixXd forward(const MatrixXd& x, const VectorXd& t, const MatrixXd& u, TrunkCache* cache = nullptr) const {
    const Index b = x.cols();
    if (x.rows() != cfg_.state_width() || t.size() != b || u.rows() != cfg_.cond_dim || u.cols() != b) {
      fail(ErrorKind::kShapeMismatch, "velocity field input " + std::to_string(x.rows()) + "x" +
                                          std::to_string(x.cols()) + ", cond " + std::to_string(u.rows()) + "x" +
                                          std::to_string(u.cols()) + "; expected state width " +
                                          std::to_string(cfg_.state_width()) + " and cond " +
                                          std::to_string(cfg_.cond_dim));
    }
    TrunkCache local;
    TrunkCache& c = cache ? *cache : local;
    c.x = x;
    c.film.resize(cfg_.film_input_dim(), b);
    c.film.topRows(cfg_.cond_dim) = u;
    for (Index i = 0; i < b; ++i) {
      if (!(t[i] >= 0.0 && t[i] <= 1.0)) fail(ErrorKind::kShapeMismatch, "flow time outside [0, 1]");
      c.film.col(i).tail(cfg_.time_emb_dim) = time_embedding(t[i], cfg_.time_emb_dim);
    }
    const std::size_t nb = blocks_.size();
    c.h.resize(nb + 1);
    c.z.resize(nb);
    c.gamma.resize(nb);
    c.pre.resize(nb);
    c.h[0] = (W(in_w_) * x).colwise() + V(in_b_);
    for (std::size_t l = 0; l < nb; ++l) {
      const auto& blk = blocks_[l];
      c.z[l] = W(blk.w1) * c.h[l];
      c.gamma[l] = (W(blk.gamma_w) * c.film).colwise() + V(blk.gamma_b);
      MatrixXd beta = (W(blk.beta_w) * c.film).colwise() + V(blk.beta_b);
      c.pre[l] = c.gamma[l].cwiseProduct(c.z[l]) + beta;
      c.h[l + 1] = c.h[l] + ((W(blk.w2) * gelu(c.pre[l])).colwise() + V(blk.b2));
    }
    return (W(out_w_) * c.h[nb]).colwise() + V(out_b_);
  }

  /// Accumulates parameter gradients for upstream dout; optionally returns
  /// the input and conditioning gradients.
  void backward(const TrunkCache& c, const MatrixXd& dout, Gradients& grads, MatrixXd* dx = nullptr,
                MatrixXd* du = nullptr) const {
    const std::size_t nb = blocks_.size();
    if (dout.rows() != cfg_.state_width() || dout.cols() != c.x.cols()) {
      fail(ErrorKind::kShapeMismatch, "upstream gradient shape does not match the cached forward pass");
    }
    grads.g[out_w_] += dout * c.h[nb].transpose();
    grads.g[out_b_] += dout.rowwise().sum();
    MatrixXd dh = W(out_w_).transpose() * dout;
    MatrixXd dfilm = MatrixXd::Zero(c.film.rows(), c.film.cols());
    for (std::size_t l = nb; l-- > 0;) {
      const auto& blk = blocks_[l];
      const MatrixXd act = gelu(c.pre[l]);
      grads.g[blk.w2] += dh * act.transpose();
      grads.g[blk.b2] += dh.rowwise().sum();
      const MatrixXd dpre = (W(blk.w2).transpose() * dh).cwiseProduct(gelu_grad(c.pre[l]));
      const MatrixXd dgamma = dpre.cwiseProduct(c.z[l]);
      grads.g[blk.gamma_w] += dgamma * c.film.transpose();
      grads.g[blk.gamma_b] += dgamma.rowwise().sum();
      grads.g[blk.beta_w] += dpre * c.film.transpose();
      grads.g[blk.beta_b] += dpre.rowwise().sum();
      dfilm.noalias() += W(blk.gamma_w).transpose() * dgamma;
      dfilm.noalias() += W(blk.beta_w).transpose() * dpre;
      const MatrixXd dz = dpre.cwiseProduct(c.gamma[l]);
      grads.g[blk.w1] += dz * c.h[l].transpose();
      dh.noalias() += W(blk.w1).transpose() * dz;
    }
    grads.g[in_w_] += dh * c.x.transpose();
    grads.g[in_b_] += dh.rowwise().sum();
    if (dx != nullptr) *dx = W(in_w_).transpose() * dh;
    if (du != nullptr) *du = dfilm.topRows(cfg_.cond_dim);
  }

  // -- single-sample conveniences -----------------------------------------

  VectorXd encode_one(const ConditioningInput& in) const {
    const ConditioningInput* ptr = &in;
    return encode(std::span<const ConditioningInput* const>(&ptr, 1)).col(0);
  }

  State velocity(const State& x, double t, const VectorXd& u) const {
    if (x.rows() != cfg_.traj_len) {
      fail(ErrorKind::kShapeMismatch, "state has " + std::to_string(x.rows()) + " frames, network expects " +
                                          std::to_string(cfg_.traj_len));
    }
    const MatrixXd xin = Eigen::Map<const VectorXd>(x.data(), x.size());
    VectorXd tv(1);
    tv[0] = t;
    const MatrixXd out = forward(xin, tv, u, nullptr);
    State v(cfg_.traj_len, kFrameDim);
    Eigen::Map<VectorXd>(v.data(), v.size()) = out.col(0);
    return v;
  }

 private:
  struct Block {
    int w1, gamma_w, gamma_b, beta_w, beta_b, w2, b2;
  };

  const MatrixXd& W(int id) const { return store_[id].value; }
  Eigen::MatrixXd::ConstColXpr V(int id) const { return store_[id].value.col(0); }

  void build() {
    const int e = cfg_.embed_dim;
    const int d = cfg_.point_feat_dim;
    traj_w_ = store_.add("enc.traj.w", e, cfg_.history_width(), true);
    traj_b_ = store_.add("enc.traj.b", e, 1, true);
    pt_w1_ = store_.add("enc.point.w1", d, 3, true);
    pt_b1_ = store_.add("enc.point.b1", d, 1, true);
    pt_w2_ = store_.add("enc.point.w2", d, d, true);
    pt_b2_ = store_.add("enc.point.b2", d, 1, true);
    fx_w1_ = store_.add("enc.fixture.w1", e, 12, true);
    fx_b1_ = store_.add("enc.fixture.b1", e, 1, true);
    fx_w2_ = store_.add("enc.fixture.w2", e, e, true);
    fx_b2_ = store_.add("enc.fixture.b2", e, 1, true);
    cat_table_ = store_.add("enc.category.table", cfg_.category_dim, cfg_.category_vocab, true);
    goal_w1_ = store_.add("enc.goal.w1", e, 9, true);
    goal_b1_ = store_.add("enc.goal.b1", e, 1, true);
    goal_w2_ = store_.add("enc.goal.w2", e, e, true);
    goal_b2_ = store_.add("enc.goal.b2", e, 1, true);
    cond_w_ = store_.add("enc.proj.w", cfg_.cond_dim, cfg_.concat_dim(), true);
    cond_b_ = store_.add("enc.proj.b", cfg_.cond_dim, 1, true);

    const int hd = cfg_.hidden_dim;
    in_w_ = store_.add("trunk.in.w", hd, cfg_.state_width(), false);
    in_b_ = store_.add("trunk.in.b", hd, 1, false);
    for (int l = 0; l < cfg_.n_blocks; ++l) {
      const std::string p = "trunk.block" + std::to_string(l) + ".";
      Block blk{};
      blk.w1 = store_.add(p + "w1", hd, hd, false);
      blk.gamma_w = store_.add(p + "gamma.w", hd, cfg_.film_input_dim(), false);
      blk.gamma_b = store_.add(p + "gamma.b", hd, 1, false);
      blk.beta_w = store_.add(p + "beta.w", hd, cfg_.film_input_dim(), false);
      blk.beta_b = store_.add(p + "beta.b", hd, 1, false);
      blk.w2 = store_.add(p + "w2", hd, hd, false);
      blk.b2 = store_.add(p + "b2", hd, 1, false);
      blocks_.push_back(blk);
    }
    out_w_ = store_.add("trunk.out.w", cfg_.state_width(), hd, false);
    out_b_ = store_.add("trunk.out.b", cfg_.state_width(), 1, false);
  }

  NetConfig cfg_;
  ParameterStore store_;
  int traj_w_ = 0, traj_b_ = 0, pt_w1_ = 0, pt_b1_ = 0, pt_w2_ = 0, pt_b2_ = 0;
  int fx_w1_ = 0, fx_b1_ = 0, fx_w2_ = 0, fx_b2_ = 0, cat_table_ = 0;
  int goal_w1_ = 0, goal_b1_ = 0, goal_w2_ = 0, goal_b2_ = 0, cond_w_ = 0, cond_b_ = 0;
  int in_w_ = 0, in_b_ = 0, out_w_ = 0, out_b_ = 0;
  std::vector<Block> blocks_;
};

}  // namespace trajflow::nn

#endif  // TRAJFLOW_NN_VELOCITY_FIELD_HPP
