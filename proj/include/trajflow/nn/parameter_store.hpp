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

#ifndef TRAJFLOW_NN_PARAMETER_STORE_HPP
#define TRAJFLOW_NN_PARAMETER_STORE_HPP

#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "trajflow/error.hpp"

namespace trajflow::nn {

struct Tensor {
  std::string name;
  Eigen::MatrixXd value;
  Eigen::MatrixXd m;  // first moment
  Eigen::MatrixXd v;  // second moment
  /// Part of the conditioning encoder (detached when the encoder is frozen).
  bool conditioning = false;
};

/// Named tensors with fixed shapes and their optimizer state.
class ParameterStore {
 public:
  int add(const std::string& name, Eigen::Index rows, Eigen::Index cols, bool conditioning) {
    if (index_.count(name) != 0) fail(ErrorKind::kValidation, "duplicate tensor " + name);
    const int id = static_cast<int>(tensors_.size());
    tensors_.push_back(Tensor{name, Eigen::MatrixXd::Zero(rows, cols), Eigen::MatrixXd::Zero(rows, cols),
                              Eigen::MatrixXd::Zero(rows, cols), conditioning});
    index_[name] = id;
    return id;
  }

  int id(const std::string& name) const {
    const auto it = index_.find(name);
    if (it == index_.end()) fail(ErrorKind::kValidation, "unknown tensor " + name);
    return it->second;
  }

  Tensor& operator[](int id) { return tensors_[id]; }
  const Tensor& operator[](int id) const { return tensors_[id]; }
  Tensor& operator[](const std::string& name) { return tensors_[id(name)]; }
  const Tensor& operator[](const std::string& name) const { return tensors_[id(name)]; }

  std::size_t size() const { return tensors_.size(); }
  std::vector<Tensor>& tensors() { return tensors_; }
  const std::vector<Tensor>& tensors() const { return tensors_; }

  std::int64_t step() const { return step_; }
  void set_step(std::int64_t step) { step_ = step; }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& t : tensors_) n += static_cast<std::size_t>(t.value.size());
    return n;
  }

  bool all_finite() const {
    for (const auto& t : tensors_) {
      if (!t.value.allFinite()) return false;
    }
    return true;
  }

 private:
  std::vector<Tensor> tensors_;
  std::map<std::string, int> index_;
  std::int64_t step_ = 0;
};

/// Gradient buffers aligned with a ParameterStore's tensor order.
struct Gradients {
  std::vector<Eigen::MatrixXd> g;

  static Gradients zeros_like(const ParameterStore& store) {
    Gradients out;
    out.g.reserve(store.size());
    for (const auto& t : store.tensors()) out.g.push_back(Eigen::MatrixXd::Zero(t.value.rows(), t.value.cols()));
    return out;
  }

  Gradients& operator+=(const Gradients& other) {
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += other.g[i];
    return *this;
  }

  Gradients& operator*=(double s) {
    for (auto& m : g) m *= s;
    return *this;
  }
};

struct AdamWConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double weight_decay = 0.01;
  double eps = 1e-8;
};

/// Decoupled-weight-decay Adam. Every gradient is checked before any tensor
/// changes, so a non-finite gradient leaves the store untouched.
inline void adamw_step(ParameterStore& store, const Gradients& grads, const AdamWConfig& cfg) {
  if (grads.g.size() != store.size()) fail(ErrorKind::kShapeMismatch, "gradient count differs from tensor count");
  for (std::size_t i = 0; i < store.size(); ++i) {
    const auto& t = store[static_cast<int>(i)];
    if (grads.g[i].rows() != t.value.rows() || grads.g[i].cols() != t.value.cols()) {
      fail(ErrorKind::kShapeMismatch, "gradient shape for " + t.name);
    }
    if (!grads.g[i].allFinite()) fail(ErrorKind::kNonFiniteGradient, "tensor " + t.name);
  }
  const std::int64_t step = store.step() + 1;
  const double bias1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
  const double bias2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
  for (std::size_t i = 0; i < store.size(); ++i) {
    auto& t = store[static_cast<int>(i)];
    const auto& g = grads.g[i];
    t.value *= 1.0 - cfg.lr * cfg.weight_decay;
    t.m = cfg.beta1 * t.m + (1.0 - cfg.beta1) * g;
    t.v = cfg.beta2 * t.v + (1.0 - cfg.beta2) * g.cwiseProduct(g);
    t.value.array() -= cfg.lr * (t.m.array() / bias1) / ((t.v.array() / bias2).sqrt() + cfg.eps);
  }
  store.set_step(step);
}

}  // namespace trajflow::nn

#endif  // TRAJFLOW_NN_PARAMETER_STORE_HPP
