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

#ifndef TRAJFLOW_NN_CHECKPOINT_HPP
#define TRAJFLOW_NN_CHECKPOINT_HPP

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "trajflow/nn/velocity_field.hpp"

namespace trajflow::nn {

// Layout (all integers and doubles little-endian):
//   "TFLW" | u32 version | u32 n_config | i64 config[n_config] (position_scale as f64 bits)
//   | i64 step | i64 epochs_done | u32 n_tensors
//   | per tensor: u32 name_len, name, u32 rows, u32 cols,
//                 f64 value[rows*cols], f64 m[...], f64 v[...]   (column-major)

inline constexpr std::array<char, 4> kCheckpointMagic = {'T', 'F', 'L', 'W'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  NetConfig config;
  std::int64_t epochs_done = 0;
};

namespace detail {

template <typename T>
void put(std::ostream& out, T value) {
  static_assert(std::is_trivially_copyable_v<T>);
  std::array<char, sizeof(T)> bytes;
  std::memcpy(bytes.data(), &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
  out.write(bytes.data(), sizeof(T));
}

template <typename T>
T get(std::istream& in, const std::string& what) {
  std::array<char, sizeof(T)> bytes;
  if (!in.read(bytes.data(), sizeof(T))) fail(ErrorKind::kParseError, "checkpoint truncated while reading " + what);
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
  T value;
  std::memcpy(&value, bytes.data(), sizeof(T));
  return value;
}

inline std::vector<std::int64_t> config_block(const NetConfig& c) {
  return {c.traj_len,     c.history_len,    c.hidden_dim,     c.n_blocks,     c.cond_dim,
          c.time_emb_dim, c.point_feat_dim, c.embed_dim,      c.category_dim, c.category_vocab,
          c.max_fixtures, c.knn,            static_cast<std::int64_t>(c.seed),
          std::bit_cast<std::int64_t>(c.position_scale)};
}

inline NetConfig config_from_block(const std::vector<std::int64_t>& b) {
  if (b.size() != 14) fail(ErrorKind::kParseError, "checkpoint config block has " + std::to_string(b.size()) + " fields");
  NetConfig c;
  c.traj_len = static_cast<int>(b[0]);
  c.history_len = static_cast<int>(b[1]);
  c.hidden_dim = static_cast<int>(b[2]);
  c.n_blocks = static_cast<int>(b[3]);
  c.cond_dim = static_cast<int>(b[4]);
  c.time_emb_dim = static_cast<int>(b[5]);
  c.point_feat_dim = static_cast<int>(b[6]);
  c.embed_dim = static_cast<int>(b[7]);
  c.category_dim = static_cast<int>(b[8]);
  c.category_vocab = static_cast<int>(b[9]);
  c.max_fixtures = static_cast<int>(b[10]);
  c.knn = static_cast<int>(b[11]);
  c.seed = static_cast<std::uint64_t>(b[12]);
  c.position_scale = std::bit_cast<double>(b[13]);
  return c;
}

inline void put_matrix(std::ostream& out, const MatrixXd& m) {
  for (Index i = 0; i < m.size(); ++i) put<double>(out, m.data()[i]);
}

inline void get_matrix(std::istream& in, MatrixXd& m, const std::string& name) {
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = get<double>(in, name);
}

}  // namespace detail

inline void save_checkpoint(const VelocityField& field, std::int64_t epochs_done, const std::filesystem::path& path) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::kIoError, "cannot write checkpoint " + path.string());
  out.write(kCheckpointMagic.data(), kCheckpointMagic.size());
  detail::put<std::uint32_t>(out, kCheckpointVersion);
  const auto block = detail::config_block(field.config());
  detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(block.size()));
  for (auto v : block) detail::put<std::int64_t>(out, v);
  detail::put<std::int64_t>(out, field.params().step());
  detail::put<std::int64_t>(out, epochs_done);
  detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(field.params().size()));
  for (const auto& t : field.params().tensors()) {
    detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(t.name.size()));
    out.write(t.name.data(), static_cast<std::streamsize>(t.name.size()));
    detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(t.value.rows()));
    detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(t.value.cols()));
    detail::put_matrix(out, t.value);
    detail::put_matrix(out, t.m);
    detail::put_matrix(out, t.v);
  }
  if (!out) fail(ErrorKind::kIoError, "write failed for checkpoint " + path.string());
}

inline NetConfig read_checkpoint_config(std::istream& in) {
  std::array<char, 4> magic{};
  if (!in.read(magic.data(), magic.size()) || magic != kCheckpointMagic) {
    fail(ErrorKind::kParseError, "not a checkpoint (bad magic bytes)");
  }
  const auto version = detail::get<std::uint32_t>(in, "version");
  if (version != kCheckpointVersion) {
    fail(ErrorKind::kParseError, "unsupported checkpoint version " + std::to_string(version));
  }
  const auto n = detail::get<std::uint32_t>(in, "config size");
  std::vector<std::int64_t> block(n);
  for (auto& v : block) v = detail::get<std::int64_t>(in, "config");
  return detail::config_from_block(block);
}

/// Loads a checkpoint into `field`. The stored config must match the
/// field's config exactly; a mismatch names both shapes.
inline Checkpoint load_checkpoint_into(VelocityField& field, const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::kIoError, "cannot open checkpoint " + path.string());
  Checkpoint ck;
  ck.config = read_checkpoint_config(in);
  if (!(ck.config == field.config())) {
    const auto a = detail::config_block(ck.config);
    const auto b = detail::config_block(field.config());
    std::string sa, sb;
    for (std::size_t i = 0; i < a.size(); ++i) {
      sa += (i ? "," : "") + std::to_string(a[i]);
      sb += (i ? "," : "") + std::to_string(b[i]);
    }
    fail(ErrorKind::kShapeMismatch, "checkpoint config [" + sa + "] vs requested config [" + sb + "]");
  }
  const auto step = detail::get<std::int64_t>(in, "step");
  ck.epochs_done = detail::get<std::int64_t>(in, "epochs");
  const auto n_tensors = detail::get<std::uint32_t>(in, "tensor count");
  if (n_tensors != field.params().size()) {
    fail(ErrorKind::kShapeMismatch, "checkpoint holds " + std::to_string(n_tensors) + " tensors, network has " +
                                        std::to_string(field.params().size()));
  }
  for (auto& t : field.params().tensors()) {
    const auto len = detail::get<std::uint32_t>(in, "name length");
    std::string name(len, '\0');
    if (!in.read(name.data(), len)) fail(ErrorKind::kParseError, "checkpoint truncated in tensor name");
    const auto rows = detail::get<std::uint32_t>(in, name + " rows");
    const auto cols = detail::get<std::uint32_t>(in, name + " cols");
    if (name != t.name || rows != t.value.rows() || cols != t.value.cols()) {
      fail(ErrorKind::kShapeMismatch, "checkpoint tensor " + name + " (" + std::to_string(rows) + "x" +
                                          std::to_string(cols) + ") vs network tensor " + t.name + " (" +
                                          std::to_string(t.value.rows()) + "x" + std::to_string(t.value.cols()) + ")");
    }
    detail::get_matrix(in, t.value, name);
    detail::get_matrix(in, t.m, name);
    detail::get_matrix(in, t.v, name);
  }
  field.params().set_step(step);
  return ck;
}

/// Builds the network described by the checkpoint and loads it.
inline VelocityField load_checkpoint(const std::filesystem::path& path, std::int64_t* epochs_done = nullptr) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::kIoError, "cannot open checkpoint " + path.string());
  VelocityField field(read_checkpoint_config(in));
  const Checkpoint ck = load_checkpoint_into(field, path);
  if (epochs_done != nullptr) *epochs_done = ck.epochs_done;
  return field;
}

}  // namespace trajflow::nn

#endif  // TRAJFLOW_NN_CHECKPOINT_HPP
