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

#ifndef TRAJFLOW_HARNESS_CONFIG_HPP
#define TRAJFLOW_HARNESS_CONFIG_HPP

#include <cctype>
#include <charconv>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "trajflow/flow.hpp"
#include "trajflow/guidance.hpp"
#include "trajflow/metrics.hpp"
#include "trajflow/nn/velocity_field.hpp"
#include "trajflow/synthetic.hpp"

namespace trajflow::harness {

inline constexpr const char* kConfigEnvVar = "TRAJFLOW_CONFIG";

/// Desk-scale network: a trunk wider than the 504 generated state entries,
/// positions in units of 10 cm about the history centroid.
inline nn::NetConfig desk_net_config() {
  nn::NetConfig c;
  c.hidden_dim = 768;
  c.n_blocks = 2;
  c.position_scale = 0.1;
  return c;
}

/// Desk-scale schedule: 40 epochs with cosine decay from 1e-3 to 1e-5.
inline TrainConfig desk_train_config() {
  TrainConfig c;
  c.lr = 1e-3;
  c.lr_final = 1e-5;
  c.epochs = 40;
  return c;
}

/// Everything a command needs, resolved to concrete values. Defaults are the
/// desk configuration.
struct RunConfig {
  std::uint64_t seed = 0;
  int threads = 0;  // 0: one per hardware thread
  SyntheticDatasetConfig data;
  nn::NetConfig net = desk_net_config();
  TrainConfig train = desk_train_config();
  FlowSchedule flow;
  GuidanceConfig guidance;
  EvalConfig eval;
  std::vector<int> opt_steps{0, 1, 5, 10, 20, 30, 40, 50};
  int held_out_scenes = 200;
  int stress_scenes = 200;
};

// ---------------------------------------------------------------------------
// Values

struct ConfigValue {
  std::variant<std::int64_t, double, bool, std::string, std::vector<double>> v;
  std::string where;  // "file:line" or "--set"

  [[noreturn]] void type_error(const std::string& key, const char* want) const {
    fail(ErrorKind::kValidation, where + ": key '" + key + "' expects " + want);
  }
  std::int64_t as_int(const std::string& key) const {
    if (const auto* i = std::get_if<std::int64_t>(&v)) return *i;
    type_error(key, "an integer");
  }
  double as_double(const std::string& key) const {
    if (const auto* d = std::get_if<double>(&v)) return *d;
    if (const auto* i = std::get_if<std::int64_t>(&v)) return static_cast<double>(*i);
    type_error(key, "a number");
  }
  bool as_bool(const std::string& key) const {
    if (const auto* b = std::get_if<bool>(&v)) return *b;
    type_error(key, "true or false");
  }
  std::vector<double> as_list(const std::string& key) const {
    if (const auto* l = std::get_if<std::vector<double>>(&v)) return *l;
    type_error(key, "a list of numbers");
  }
};

namespace detail {

inline std::string trim(std::string_view s) {
  std::size_t a = 0;
  std::size_t b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return std::string(s.substr(a, b - a));
}

inline bool is_integer_literal(std::string_view s) {
  if (s.empty()) return false;
  std::size_t i = (s[0] == '-' || s[0] == '+') ? 1 : 0;
  if (i == s.size()) return false;
  for (; i < s.size(); ++i) {
    if (!std::isdigit(static_cast<unsigned char>(s[i])) && s[i] != '_') return false;
  }
  return true;
}

inline std::optional<double> parse_number(const std::string& s) {
  std::string clean;
  for (char c : s) {
    if (c != '_') clean += c;
  }
  if (clean.empty()) return std::nullopt;
  char* end = nullptr;
  const double d = std::strtod(clean.c_str(), &end);
  if (end != clean.c_str() + clean.size()) return std::nullopt;
  return d;
}

inline ConfigValue parse_value(const std::string& raw, const std::string& where) {
  const std::string s = trim(raw);
  ConfigValue out;
  out.where = where;
  if (s.empty()) fail(ErrorKind::kParseError, where + ": missing value");
  if (s.front() == '"') {
    if (s.size() < 2 || s.back() != '"') fail(ErrorKind::kParseError, where + ": unterminated string");
    out.v = s.substr(1, s.size() - 2);
    return out;
  }
  if (s == "true" || s == "false") {
    out.v = s == "true";
    return out;
  }
  if (s.front() == '[') {
    if (s.back() != ']') fail(ErrorKind::kParseError, where + ": unterminated list");
    std::vector<double> items;
    std::stringstream body(s.substr(1, s.size() - 2));
    std::string item;
    while (std::getline(body, item, ',')) {
      const std::string t = trim(item);
      if (t.empty()) continue;
      const auto d = parse_number(t);
      if (!d) fail(ErrorKind::kParseError, where + ": list entry '" + t + "' is not a number");
      items.push_back(*d);
    }
    out.v = std::move(items);
    return out;
  }
  if (is_integer_literal(s)) {
    std::string clean;
    for (char c : s) {
      if (c != '_' && c != '+') clean += c;
    }
    std::int64_t i = 0;
    const auto [ptr, ec] = std::from_chars(clean.data(), clean.data() + clean.size(), i);
    if (ec != std::errc() || ptr != clean.data() + clean.size()) {
      fail(ErrorKind::kParseError, where + ": integer '" + s + "' out of range");
    }
    out.v = i;
    return out;
  }
  if (const auto d = parse_number(s)) {
    out.v = *d;
    return out;
  }
  fail(ErrorKind::kParseError, where + ": cannot parse value '" + s + "' (strings need double quotes)");
}

inline std::string strip_comment(const std::string& line) {
  bool in_string = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    if (line[i] == '"') in_string = !in_string;
    if (line[i] == '#' && !in_string) return line.substr(0, i);
  }
  return line;
}

inline Vec3 to_vec3(const std::vector<double>& l, const ConfigValue& val, const std::string& key) {
  if (l.size() != 3) val.type_error(key, "a list of 3 numbers");
  return Vec3(l[0], l[1], l[2]);
}

inline int to_int(const ConfigValue& val, const std::string& key) {
  const std::int64_t i = val.as_int(key);
  if (i < std::numeric_limits<int>::min() || i > std::numeric_limits<int>::max()) {
    val.type_error(key, "a 32-bit integer");
  }
  return static_cast<int>(i);
}

inline std::uint64_t to_seed(const ConfigValue& val, const std::string& key) {
  const std::int64_t i = val.as_int(key);
  if (i < 0) val.type_error(key, "a non-negative integer");
  return static_cast<std::uint64_t>(i);
}

}  // namespace detail

/// One schema entry: how to write a value into the config and read it back.
struct ConfigKey {
  std::string name;
  std::function<void(RunConfig&, const ConfigValue&)> set;
  std::function<nlohmann::json(const RunConfig&)> get;
};

inline const std::vector<ConfigKey>& config_schema() {
  using detail::to_int;
  using detail::to_seed;
  using detail::to_vec3;
  using V = ConfigValue;
  using J = nlohmann::json;
  static const std::vector<ConfigKey> schema = [] {
    std::vector<ConfigKey> s;
    auto add = [&s](std::string name, std::function<void(RunConfig&, const V&)> set,
                    std::function<J(const RunConfig&)> get) {
      s.push_back({std::move(name), std::move(set), std::move(get)});
    };
#define TRAJFLOW_INT_KEY(key, field) \
  add(key, [](RunConfig& c, const V& v) { c.field = to_int(v, key); }, [](const RunConfig& c) { return J(c.field); })
#define TRAJFLOW_DOUBLE_KEY(key, field)                                         \
  add(key, [](RunConfig& c, const V& v) { c.field = v.as_double(key); }, \
      [](const RunConfig& c) { return J(c.field); })

    // Seeds: `seed` is the root; the per-module seeds default to it.
    add("seed", [](RunConfig& c, const V& v) { c.seed = to_seed(v, "seed"); },
        [](const RunConfig& c) { return J(c.seed); });
    TRAJFLOW_INT_KEY("threads", threads);

    TRAJFLOW_INT_KEY("data.n_scenes", data.n_scenes);
    add("data.n_fixtures",
        [](RunConfig& c, const V& v) {
          const auto l = v.as_list("data.n_fixtures");
          if (l.size() != 2) v.type_error("data.n_fixtures", "a list [min, max]");
          c.data.n_fixtures_min = static_cast<int>(l[0]);
          c.data.n_fixtures_max = static_cast<int>(l[1]);
        },
        [](const RunConfig& c) { return J{c.data.n_fixtures_min, c.data.n_fixtures_max}; });
    add("data.workspace_min",
        [](RunConfig& c, const V& v) { c.data.workspace_min = to_vec3(v.as_list("data.workspace_min"), v, "data.workspace_min"); },
        [](const RunConfig& c) { return J{c.data.workspace_min.x(), c.data.workspace_min.y(), c.data.workspace_min.z()}; });
    add("data.workspace_max",
        [](RunConfig& c, const V& v) { c.data.workspace_max = to_vec3(v.as_list("data.workspace_max"), v, "data.workspace_max"); },
        [](const RunConfig& c) { return J{c.data.workspace_max.x(), c.data.workspace_max.y(), c.data.workspace_max.z()}; });
    TRAJFLOW_INT_KEY("data.traj_len", data.traj_len);
    TRAJFLOW_DOUBLE_KEY("data.frame_dt", data.frame_dt);
    TRAJFLOW_DOUBLE_KEY("data.history_ratio", data.history_ratio);
    add("data.seed", [](RunConfig& c, const V& v) { c.data.seed = to_seed(v, "data.seed"); },
        [](const RunConfig& c) { return J(c.data.seed); });
    TRAJFLOW_DOUBLE_KEY("data.clearance", data.clearance);
    TRAJFLOW_INT_KEY("data.n_points", data.n_points);
    TRAJFLOW_INT_KEY("data.category_vocab", data.category_vocab);
    TRAJFLOW_INT_KEY("data.held_out_scenes", held_out_scenes);
    TRAJFLOW_INT_KEY("data.stress_scenes", stress_scenes);

    TRAJFLOW_INT_KEY("net.hidden_dim", net.hidden_dim);
    TRAJFLOW_INT_KEY("net.n_blocks", net.n_blocks);
    TRAJFLOW_INT_KEY("net.cond_dim", net.cond_dim);
    TRAJFLOW_INT_KEY("net.time_emb_dim", net.time_emb_dim);
    TRAJFLOW_INT_KEY("net.point_feat_dim", net.point_feat_dim);
    TRAJFLOW_INT_KEY("net.embed_dim", net.embed_dim);
    TRAJFLOW_INT_KEY("net.category_dim", net.category_dim);
    TRAJFLOW_INT_KEY("net.max_fixtures", net.max_fixtures);
    TRAJFLOW_INT_KEY("net.knn", net.knn);
    TRAJFLOW_DOUBLE_KEY("net.position_scale", net.position_scale);
    add("net.seed", [](RunConfig& c, const V& v) { c.net.seed = to_seed(v, "net.seed"); },
        [](const RunConfig& c) { return J(c.net.seed); });

    TRAJFLOW_DOUBLE_KEY("train.lr", train.lr);
    TRAJFLOW_DOUBLE_KEY("train.lr_final", train.lr_final);
    TRAJFLOW_INT_KEY("train.batch_size", train.batch_size);
    TRAJFLOW_INT_KEY("train.epochs", train.epochs);
    add("train.seed", [](RunConfig& c, const V& v) { c.train.seed = to_seed(v, "train.seed"); },
        [](const RunConfig& c) { return J(c.train.seed); });
    TRAJFLOW_DOUBLE_KEY("train.beta1", train.beta1);
    TRAJFLOW_DOUBLE_KEY("train.beta2", train.beta2);
    TRAJFLOW_DOUBLE_KEY("train.weight_decay", train.weight_decay);
    TRAJFLOW_DOUBLE_KEY("train.position_weight", train.position_weight);
    TRAJFLOW_DOUBLE_KEY("train.rotation_weight", train.rotation_weight);

    TRAJFLOW_INT_KEY("flow.n_steps", flow.n_steps);

    TRAJFLOW_INT_KEY("guidance.k_steps", guidance.k_steps);
    TRAJFLOW_DOUBLE_KEY("guidance.alpha", guidance.alpha);
    TRAJFLOW_DOUBLE_KEY("guidance.epsilon", guidance.epsilon);
    TRAJFLOW_DOUBLE_KEY("guidance.lambda_rot", guidance.lambda_rot);
    TRAJFLOW_DOUBLE_KEY("guidance.lambda_vel", guidance.lambda_vel);
    TRAJFLOW_DOUBLE_KEY("guidance.cosine_eps", guidance.cosine_eps);

    TRAJFLOW_DOUBLE_KEY("eval.collision_threshold", eval.collision_threshold);

    add("study.opt_steps",
        [](RunConfig& c, const V& v) {
          c.opt_steps.clear();
          for (double k : v.as_list("study.opt_steps")) {
            if (k != std::floor(k)) v.type_error("study.opt_steps", "a list of integers");
            c.opt_steps.push_back(static_cast<int>(k));
          }
        },
        [](const RunConfig& c) { return J(c.opt_steps); });
#undef TRAJFLOW_INT_KEY
#undef TRAJFLOW_DOUBLE_KEY
    return s;
  }();
  return schema;
}

inline const ConfigKey* find_key(const std::string& name) {
  for (const auto& k : config_schema()) {
    if (k.name == name) return &k;
  }
  return nullptr;
}

/// Ordered key/value assignments collected from files and overrides.
using Assignments = std::vector<std::pair<std::string, ConfigValue>>;

/// Parses `[section]` headers and `key = value` lines. Comments start with
/// '#'. Keys are checked against the schema here so typos fail with a line.
inline Assignments parse_config_text(const std::string& text, const std::string& origin) {
  Assignments out;
  std::istringstream in(text);
  std::string line;
  std::string section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string where = origin + ":" + std::to_string(lineno);
    const std::string s = detail::trim(detail::strip_comment(line));
    if (s.empty()) continue;
    if (s.front() == '[') {
      if (s.back() != ']') fail(ErrorKind::kParseError, where + ": malformed section header");
      section = detail::trim(s.substr(1, s.size() - 2));
      continue;
    }
    const auto eq = s.find('=');
    if (eq == std::string::npos) fail(ErrorKind::kParseError, where + ": expected key = value");
    const std::string key = detail::trim(s.substr(0, eq));
    const std::string full = section.empty() ? key : section + "." + key;
    if (find_key(full) == nullptr) fail(ErrorKind::kValidation, where + ": unknown key '" + full + "'");
    out.emplace_back(full, detail::parse_value(s.substr(eq + 1), where));
  }
  return out;
}

inline Assignments parse_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::kIoError, "cannot open config file " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str(), path.string());
}

/// "section.key=value" from the command line.
inline std::pair<std::string, ConfigValue> parse_override(const std::string& text) {
  const auto eq = text.find('=');
  if (eq == std::string::npos) fail(ErrorKind::kParseError, "--set '" + text + "': expected key=value");
  const std::string key = detail::trim(text.substr(0, eq));
  if (find_key(key) == nullptr) fail(ErrorKind::kValidation, "--set: unknown key '" + key + "'");
  return {key, detail::parse_value(text.substr(eq + 1), "--set " + key)};
}

inline void validate(const RunConfig& c) {
  validate(c.data);
  nn::validate(c.net);
  validate(c.train);
  validate(c.flow);
  validate(c.guidance);
  if (c.threads < 0) fail(ErrorKind::kValidation, "threads must be >= 0");
  if (c.held_out_scenes < 0 || c.stress_scenes < 0) fail(ErrorKind::kValidation, "scene counts must be >= 0");
  if (c.net.traj_len != c.data.traj_len || c.net.history_len != history_length(c.data.traj_len, c.data.history_ratio)) {
    fail(ErrorKind::kValidation, "network shape (T, H) disagrees with the dataset split");
  }
  if (c.net.category_vocab != c.data.category_vocab) {
    fail(ErrorKind::kValidation, "network and dataset category vocabularies differ");
  }
  for (int k : c.opt_steps) {
    if (k < 0) fail(ErrorKind::kValidation, "study.opt_steps entries must be >= 0");
  }
}

/// Applies assignments on top of the defaults. The root seed is applied
/// first and fans out to every module seed; explicit module seeds win.
inline RunConfig resolve(const Assignments& assignments) {
  RunConfig c;
  for (const auto& [key, value] : assignments) {
    if (key == "seed") find_key(key)->set(c, value);
  }
  c.data.seed = c.seed;
  c.net.seed = c.seed;
  c.train.seed = c.seed;
  for (const auto& [key, value] : assignments) {
    if (key != "seed") find_key(key)->set(c, value);
  }
  // Shapes the network inherits from the data.
  c.net.traj_len = c.data.traj_len;
  c.net.history_len = history_length(c.data.traj_len, c.data.history_ratio);
  c.net.category_vocab = c.data.category_vocab;
  c.guidance.frame_dt = c.data.frame_dt;
  validate(c);
  return c;
}

/// Config file (explicit path, else $TRAJFLOW_CONFIG, else none) plus
/// command-line overrides, in that order.
inline RunConfig load_run_config(const std::optional<std::filesystem::path>& path,
                                 const std::vector<std::string>& overrides) {
  Assignments all;
  std::optional<std::filesystem::path> file = path;
  if (!file) {
    if (const char* env = std::getenv(kConfigEnvVar); env != nullptr && *env != '\0') file = env;
  }
  if (file) all = parse_config_file(*file);
  for (const auto& o : overrides) all.push_back(parse_override(o));
  return resolve(all);
}

inline nlohmann::json to_json(const RunConfig& c) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& k : config_schema()) j[k.name] = k.get(c);
  return j;
}

/// Round-trippable config text with every key spelled out.
inline std::string to_config_text(const RunConfig& c) {
  std::ostringstream out;
  out.precision(17);
  std::string section;
  for (const auto& k : config_schema()) {
    const auto dot = k.name.find('.');
    const std::string sec = dot == std::string::npos ? "" : k.name.substr(0, dot);
    const std::string key = dot == std::string::npos ? k.name : k.name.substr(dot + 1);
    if (sec != section) {
      out << "\n[" << sec << "]\n";
      section = sec;
    }
    const nlohmann::json v = k.get(c);
    out << key << " = ";
    if (v.is_array()) {
      out << '[';
      for (std::size_t i = 0; i < v.size(); ++i) out << (i ? ", " : "") << v[i].dump();
      out << ']';
    } else {
      // Shortest round-trip form; floats always keep a '.' or exponent.
      out << v.dump();
    }
    out << '\n';
  }
  return out.str();
}

}  // namespace trajflow::harness

#endif  // TRAJFLOW_HARNESS_CONFIG_HPP
