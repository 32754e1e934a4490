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

#ifndef TRAJFLOW_GUIDANCE_HPP
#define TRAJFLOW_GUIDANCE_HPP

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "trajflow/geometry.hpp"
#include "trajflow/trajectory.hpp"

namespace trajflow {

/// Inference-time physical guidance. Cost indices follow the trajectory
/// layout: rows [0, history_len) are observed, the rest are generated.
struct GuidanceConfig {
  int k_steps = 50;
  double alpha = 0.1;
  double epsilon = 0.05;
  double lambda_rot = 2.0;
  double lambda_vel = 2.0;
  double frame_dt = kDefaultFrameDt;
  double cosine_eps = 1e-8;
  bool use_collision = true;
};

inline void validate(const GuidanceConfig& cfg) {
  if (cfg.k_steps < 0) fail(ErrorKind::kValidation, "guidance k_steps must be >= 0");
  if (!(cfg.alpha > 0.0)) fail(ErrorKind::kValidation, "guidance alpha must be > 0");
  if (!(cfg.epsilon >= 0.0)) fail(ErrorKind::kValidation, "guidance epsilon must be >= 0");
  if (!(cfg.lambda_rot >= 0.0) || !(cfg.lambda_vel >= 0.0)) {
    fail(ErrorKind::kValidation, "guidance lambdas must be >= 0");
  }
  if (!(cfg.frame_dt > 0.0)) fail(ErrorKind::kValidation, "guidance frame_dt must be > 0");
  if (!(cfg.cosine_eps >= 0.0)) fail(ErrorKind::kValidation, "cosine_eps must be >= 0");
}

/// Scalar cost with its gradient over the full T x 9 state.
struct CostTerm {
  double value = 0.0;
  State grad;
};

/// Sum over generated frames of max(0, eps - d(p_j)), d the smallest fixture
/// SDF. The gradient flows through the argmin fixture only.
inline CostTerm collision_cost(const State& state, std::span<const FixtureBox> fixtures, double epsilon,
                               int history_len, double* min_sdf = nullptr) {
  CostTerm out{0.0, State::Zero(state.rows(), kFrameDim)};
  double lowest = std::numeric_limits<double>::infinity();
  for (Eigen::Index j = history_len; j < state.rows(); ++j) {
    const Vec3 p = state.row(j).head<3>().transpose();
    const NearestFixture nearest = min_fixture_sdf(p, fixtures);
    lowest = std::min(lowest, nearest.distance);
    if (nearest.index < 0 || nearest.distance >= epsilon) continue;
    out.value += epsilon - nearest.distance;
    out.grad.row(j).head<3>() -= obb_sdf_gradient(p, fixtures[nearest.index]).transpose();
  }
  if (min_sdf != nullptr) *min_sdf = lowest;
  return out;
}

/// Sum of (1 - cosine) between consecutive rot6 increments. A zero-norm
/// increment contributes 1 with no gradient.
inline CostTerm rotation_cost(const State& state, int history_len, double cosine_eps = 1e-8) {
  CostTerm out{0.0, State::Zero(state.rows(), kFrameDim)};
  const Eigen::Index t = state.rows();
  for (Eigen::Index j = std::max(history_len, 1); j + 1 < t; ++j) {
    const Vec6 next = state.row(j + 1).tail<6>().transpose();
    const Vec6 cur = state.row(j).tail<6>().transpose();
    const Vec6 prev = state.row(j - 1).tail<6>().transpose();
    const Vec6 a = next - cur;
    const Vec6 b = cur - prev;
    const double na = a.norm();
    const double nb = b.norm();
    if (na == 0.0 || nb == 0.0) {
      out.value += 1.0;
      continue;
    }
    const double denom = na * nb + cosine_eps;
    const double dot = a.dot(b);
    out.value += 1.0 - dot / denom;
    // d(cos)/da and d(cos)/db by the quotient rule.
    const Vec6 dcos_da = b / denom - (dot / (denom * denom)) * (nb / na) * a;
    const Vec6 dcos_db = a / denom - (dot / (denom * denom)) * (na / nb) * b;
    out.grad.row(j + 1).tail<6>() -= dcos_da.transpose();
    out.grad.row(j).tail<6>() += (dcos_da - dcos_db).transpose();
    out.grad.row(j - 1).tail<6>() += dcos_db.transpose();
  }
  return out;
}

/// Sum of |a_j| with v_j = (p_{j+1} - p_j) / dt and a_j = v_{j+1} - v_j.
inline CostTerm velocity_cost(const State& state, int history_len, double frame_dt) {
  CostTerm out{0.0, State::Zero(state.rows(), kFrameDim)};
  const Eigen::Index t = state.rows();
  for (Eigen::Index j = history_len; j + 2 < t; ++j) {
    const Vec3 p0 = state.row(j).head<3>().transpose();
    const Vec3 p1 = state.row(j + 1).head<3>().transpose();
    const Vec3 p2 = state.row(j + 2).head<3>().transpose();
    const Vec3 acc = ((p2 - p1) / frame_dt) - ((p1 - p0) / frame_dt);
    const double n = acc.norm();
    out.value += n;
    if (n == 0.0) continue;
    const Vec3 g = acc / (n * frame_dt);
    out.grad.row(j).head<3>() += g.transpose();
    out.grad.row(j + 1).head<3>() -= 2.0 * g.transpose();
    out.grad.row(j + 2).head<3>() += g.transpose();
  }
  return out;
}

struct CostReport {
  double j_coll = 0.0;
  double j_rot = 0.0;
  double j_vel = 0.0;
  double j_total = 0.0;
  double min_sdf = std::numeric_limits<double>::infinity();
};

struct TotalCost {
  CostReport report;
  State grad;
};

/// J = J_coll + lambda_rot * J_rot + lambda_vel * J_vel and its gradient.
inline TotalCost total_cost(const State& state, std::span<const FixtureBox> fixtures,
                            const GuidanceConfig& cfg, int history_len) {
  TotalCost out;
  double min_sdf = std::numeric_limits<double>::infinity();
  CostTerm coll = collision_cost(state, fixtures, cfg.epsilon, history_len, &min_sdf);
  const CostTerm rot = rotation_cost(state, history_len, cfg.cosine_eps);
  const CostTerm vel = velocity_cost(state, history_len, cfg.frame_dt);
  out.report.j_coll = cfg.use_collision ? coll.value : 0.0;
  out.report.j_rot = rot.value;
  out.report.j_vel = vel.value;
  out.report.min_sdf = min_sdf;
  out.report.j_total = out.report.j_coll + cfg.lambda_rot * rot.value + cfg.lambda_vel * vel.value;
  out.grad = cfg.lambda_rot * rot.grad + cfg.lambda_vel * vel.grad;
  if (cfg.use_collision) out.grad += coll.grad;
  return out;
}

struct GuidanceResult {
  State velocity;
  /// Cost of the one-step state for v^0 .. v^K (K + 1 entries).
  std::vector<CostReport> trace;
  bool aborted = false;
  std::string diagnostic;
};

/// Refines a predicted velocity by K plain gradient steps on
/// J(x_t - dt * v). Observed rows of the candidate state are reset to
/// `history` before every evaluation and their velocity rows never change.
inline GuidanceResult guided_velocity(const State& x_t, const State& v0, const GuidanceConfig& cfg,
                                      std::span<const FixtureBox> fixtures, double schedule_dt,
                                      const State& history) {
  if (x_t.rows() != v0.rows() || history.rows() >= x_t.rows()) {
    fail(ErrorKind::kShapeMismatch, "guidance state/velocity/history shapes disagree");
  }
  const int h = static_cast<int>(history.rows());
  GuidanceResult result{v0, {}, false, {}};
  result.trace.reserve(static_cast<std::size_t>(cfg.k_steps) + 1);
  State v = v0;
  for (int k = 0; k <= cfg.k_steps; ++k) {
    State y = x_t - schedule_dt * v;
    y.topRows(h) = history;
    TotalCost cost = total_cost(y, fixtures, cfg, h);
    if (!std::isfinite(cost.report.j_total) || !cost.grad.allFinite()) {
      std::ostringstream msg;
      msg << "non-finite guidance cost at inner step " << k << " (J_coll=" << cost.report.j_coll
          << ", J_rot=" << cost.report.j_rot << ", J_vel=" << cost.report.j_vel << ")";
      result.velocity = v0;
      result.aborted = true;
      result.diagnostic = msg.str();
      return result;
    }
    result.trace.push_back(cost.report);
    if (k == cfg.k_steps) break;
    // dJ/dv = -dt * dJ/dy; history rows are held fixed.
    State grad_v = -schedule_dt * cost.grad;
    grad_v.topRows(h).setZero();
    v -= cfg.alpha * grad_v;
  }
  result.velocity = std::move(v);
  return result;
}

inline std::string trace_to_csv(const std::vector<CostReport>& trace) {
  std::ostringstream out;
  out.precision(17);
  out << "step,j_coll,j_rot,j_vel,j_total,min_sdf\n";
  for (std::size_t k = 0; k < trace.size(); ++k) {
    const auto& r = trace[k];
    out << k << ',' << r.j_coll << ',' << r.j_rot << ',' << r.j_vel << ',' << r.j_total << ',' << r.min_sdf
        << '\n';
  }
  return out.str();
}

}  // namespace trajflow

#endif  // TRAJFLOW_GUIDANCE_HPP
