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

#ifndef TRAJFLOW_HARNESS_COMMANDS_HPP
#define TRAJFLOW_HARNESS_COMMANDS_HPP

// Command implementations behind the trajflow executable. Every command
// reads its inputs without modifying them and writes into one output
// directory. Outputs are bitwise reproducible for a fixed config except the
// files named timing.json / *_timing.*, which hold wall-clock readings.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdint>
#include <ctime>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "trajflow/harness/config.hpp"
#include "trajflow/harness/selfcheck.hpp"
#include "trajflow/harness/svg.hpp"
#include "trajflow/trajflow.hpp"

namespace trajflow::harness {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Exit codes

inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 2;
inline constexpr int kExitNumeric = 3;
inline constexpr int kExitIo = 4;

inline int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kIoError: return kExitIo;
    case ErrorKind::kNonFiniteGradient:
    case ErrorKind::kNonFiniteCost:
    case ErrorKind::kDegenerateRotation:
    case ErrorKind::kGenerationFailed: return kExitNumeric;
    default: return kExitValidation;
  }
}

/// Error message without the "<Kind>: " prefix, for re-wrapping.
inline std::string bare_message(const Error& e) {
  const std::string full = e.what();
  const std::string prefix = std::string(to_string(e.kind())) + ": ";
  return full.rfind(prefix, 0) == 0 ? full.substr(prefix.size()) : full;
}

// ---------------------------------------------------------------------------
// Hashing

inline std::string hex64(std::uint64_t h) {
  std::ostringstream s;
  s << std::hex << std::setw(16) << std::setfill('0') << h;
  return s.str();
}

inline std::string read_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::kIoError, "cannot open " + path.string());
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

inline std::uint64_t hash_file(const fs::path& path) { return fnv1a(read_bytes(path)); }

/// Hash over sorted relative paths and file contents. Files whose name is in
/// `skip` are left out.
inline std::uint64_t hash_directory(const fs::path& dir, const std::set<std::string>& skip = {}) {
  if (!fs::is_directory(dir)) fail(ErrorKind::kIoError, "not a directory: " + dir.string());
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (e.is_regular_file() && !skip.contains(e.path().filename().string())) files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  std::uint64_t h = fnv1a("");
  for (const auto& f : files) {
    h = fnv1a(fs::relative(f, dir).generic_string(), h);
    h = fnv1a(read_bytes(f), h);
  }
  return h;
}

inline const std::set<std::string>& timing_files() {
  static const std::set<std::string> names{"timing.json", "opt_steps_timing.csv", "opt_steps_timing.svg"};
  return names;
}

inline std::string config_hash(const RunConfig& cfg) { return hex64(fnv1a(to_json(cfg).dump())); }

inline std::string utc_timestamp() {
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// ---------------------------------------------------------------------------
// Ordered parallel map

inline int worker_count(int requested, std::size_t jobs) {
  int n = requested > 0 ? requested : static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  return static_cast<int>(std::min<std::size_t>(static_cast<std::size_t>(n), std::max<std::size_t>(jobs, 1)));
}

/// Runs f(0..n-1) on a thread pool and returns results in index order. The
/// lowest-index exception is rethrown after all jobs finish.
template <class R, class F>
std::vector<R> parallel_map(std::size_t n, int threads, F&& f) {
  std::vector<std::optional<R>> slots(n);
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        slots[i].emplace(f(i));
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const int workers = worker_count(threads, n);
  if (workers <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (int t = 0; t < workers; ++t) pool.emplace_back(worker);
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  std::vector<R> out;
  out.reserve(n);
  for (auto& s : slots) out.push_back(std::move(*s));
  return out;
}

// ---------------------------------------------------------------------------
// Shared helpers

inline std::ostream& null_stream() {
  static std::ostream sink(nullptr);
  return sink;
}

inline double path_length(const Trajectory& traj) {
  double len = 0.0;
  for (int i = 1; i < traj.length(); ++i) len += (traj.frames[i].position - traj.frames[i - 1].position).norm();
  return len;
}

inline FrameList history_of(const Trajectory& traj) {
  return FrameList(traj.frames.begin(), traj.frames.begin() + traj.history_len);
}

inline std::uint64_t scene_noise_seed(std::uint64_t root, const std::string& id) {
  return stream_seed(stream_seed(root, "sample"), id);
}

inline nn::VelocityField load_field(const RunConfig& cfg, const fs::path& checkpoint,
                                    std::int64_t* epochs_done = nullptr) {
  nn::VelocityField field(cfg.net);
  const nn::Checkpoint ck = nn::load_checkpoint_into(field, checkpoint);
  if (epochs_done != nullptr) *epochs_done = ck.epochs_done;
  return field;
}

inline nlohmann::json base_manifest(const std::string& command, const RunConfig& cfg) {
  return {{"command", command}, {"config", to_json(cfg)}, {"config_hash", config_hash(cfg)}};
}

inline void write_timing(const fs::path& dir, nlohmann::json timing) {
  timing["finished_utc"] = utc_timestamp();
  write_json_file(dir / "timing.json", timing);
}

inline std::string csv_number(double v) {
  std::ostringstream s;
  s.precision(17);
  s << v;
  return s.str();
}

/// Dataset hash over scenes, trajectories and index; run records excluded.
inline std::string dataset_hash(const fs::path& dir) {
  return hex64(hash_directory(dir, {"manifest.json", "timing.json"}));
}

// ---------------------------------------------------------------------------
// gen-data

struct GenDataStats {
  int count = 0;
  double mean_path_length = 0.0;
  double gt_collision_rate = 0.0;
};

inline nlohmann::json to_json(const GenDataStats& s) {
  return {{"count", s.count}, {"mean_path_length", s.mean_path_length}, {"gt_collision_rate", s.gt_collision_rate}};
}

/// Generates `count` scenes of `split` (default: the configured size of that
/// split) into out_dir.
inline GenDataStats cmd_gen_data(const RunConfig& cfg, const fs::path& out_dir, Split split,
                                 std::optional<int> count = std::nullopt, std::ostream& log = null_stream()) {
  validate(cfg);
  const int n = count.value_or(split == Split::kTrain     ? cfg.data.n_scenes
                               : split == Split::kHeldOut ? cfg.held_out_scenes
                                                          : cfg.stress_scenes);
  if (n < 0) fail(ErrorKind::kValidation, "scene count must be >= 0");
  const auto start = std::chrono::steady_clock::now();
  auto samples = parallel_map<GeneratedSample>(static_cast<std::size_t>(n), cfg.threads, [&](std::size_t i) {
    return generate_indexed(cfg.data, split, static_cast<int>(i));
  });
  std::vector<DatasetEntry> entries;
  GenDataStats stats;
  stats.count = n;
  int hits = 0;
  for (int i = 0; i < n; ++i) {
    auto& s = samples[i];
    stats.mean_path_length += path_length(s.trajectory);
    hits += collides(s.trajectory, s.scene, cfg.eval.collision_threshold) ? 1 : 0;
    entries.push_back({scene_id(i), std::move(s.scene), std::move(s.trajectory)});
  }
  if (n > 0) {
    stats.mean_path_length /= n;
    stats.gt_collision_rate = static_cast<double>(hits) / n;
  }
  nlohmann::json meta = to_json(cfg.data);
  meta["split"] = std::string(to_string(split));
  write_dataset(out_dir, entries, meta);
  nlohmann::json manifest = base_manifest("gen-data", cfg);
  manifest["split"] = std::string(to_string(split));
  manifest["stats"] = to_json(stats);
  manifest["dataset_hash"] = dataset_hash(out_dir);
  write_json_file(out_dir / "manifest.json", manifest);
  write_timing(out_dir, {{"seconds", std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count()}});
  log << "gen-data " << to_string(split) << ": " << to_json(stats).dump() << "\n";
  return stats;
}

// ---------------------------------------------------------------------------
// train

/// Loss reduction (1 - final / first epoch loss) of the 40-epoch desk run.
inline constexpr double kPilotLossReduction = 0.70;
inline constexpr double kLossReductionOracle = 0.5;

struct TrainOptions {
  fs::path dataset;
  fs::path out_dir;
  bool resume = false;
  GradientHook hook;
};

struct TrainSummary {
  std::int64_t start_epoch = 0;
  std::int64_t epochs_done = 0;
  std::int64_t optimizer_step = 0;
  std::vector<double> epoch_losses;
  std::string checkpoint_hash;
};

inline std::vector<double> read_loss_csv(const fs::path& path, std::int64_t keep) {
  std::vector<double> out;
  if (!fs::exists(path)) return out;
  std::istringstream in(read_bytes(path));
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line) && static_cast<std::int64_t>(out.size()) < keep) {
    std::istringstream row(line);
    std::string epoch, loss;
    std::getline(row, epoch, ',');
    std::getline(row, loss, ',');
    out.push_back(std::stod(loss));
  }
  return out;
}

/// Trains for cfg.train.epochs epochs in total. With resume, continues from
/// out_dir/checkpoint.bin; the checkpoint is rewritten after every epoch.
inline TrainSummary cmd_train(const RunConfig& cfg, const TrainOptions& opt, std::ostream& log = null_stream()) {
  validate(cfg);
  const auto start = std::chrono::steady_clock::now();
  const auto entries = read_dataset(opt.dataset);
  if (entries.empty()) fail(ErrorKind::kValidation, "dataset " + opt.dataset.string() + " is empty");
  const auto data = parallel_map<PreparedSample>(entries.size(), cfg.threads, [&](std::size_t i) {
    try {
      return prepare_sample(entries[i].trajectory, entries[i].scene, cfg.net);
    } catch (const Error& e) {
      fail(e.kind(), entries[i].id + ": " + bare_message(e));
    }
  });

  const fs::path ckpt = opt.out_dir / "checkpoint.bin";
  nn::VelocityField field(cfg.net);
  TrainSummary summary;
  if (opt.resume) {
    if (!fs::exists(ckpt)) fail(ErrorKind::kIoError, "no checkpoint to resume at " + ckpt.string());
    summary.start_epoch = nn::load_checkpoint_into(field, ckpt).epochs_done;
    summary.epoch_losses = read_loss_csv(opt.out_dir / "loss.csv", summary.start_epoch);
  }
  fs::create_directories(opt.out_dir);

  auto write_loss = [&] {
    std::ostringstream csv;
    csv << "epoch,mean_loss,lr\n";
    for (std::size_t e = 0; e < summary.epoch_losses.size(); ++e) {
      csv << e << ',' << csv_number(summary.epoch_losses[e]) << ',' << csv_number(cfg.train.lr_at(e)) << '\n';
    }
    write_text_file(opt.out_dir / "loss.csv", csv.str());
  };

  std::int64_t epoch = summary.start_epoch;
  if (epoch == 0 || epoch >= cfg.train.epochs) nn::save_checkpoint(field, epoch, ckpt);
  for (; epoch < cfg.train.epochs; ++epoch) {
    EpochStats stats;
    try {
      stats = train_epoch(field, data, cfg.train, epoch, opt.hook);
    } catch (const Error& e) {
      fail(e.kind(), "epoch " + std::to_string(epoch) + ", " + bare_message(e));
    }
    summary.epoch_losses.push_back(stats.mean_loss);
    nn::save_checkpoint(field, epoch + 1, ckpt);
    write_loss();
    log << "epoch " << epoch << " loss " << stats.mean_loss << " lr " << cfg.train.lr_at(epoch) << "\n";
  }
  write_loss();
  summary.epochs_done = std::max<std::int64_t>(summary.start_epoch, cfg.train.epochs);
  summary.optimizer_step = field.params().step();
  summary.checkpoint_hash = hex64(hash_file(ckpt));

  nlohmann::json manifest = base_manifest("train", cfg);
  manifest["dataset"] = opt.dataset.string();
  manifest["dataset_hash"] = dataset_hash(opt.dataset);
  manifest["checkpoint"] = "checkpoint.bin";
  manifest["checkpoint_hash"] = summary.checkpoint_hash;
  manifest["start_epoch"] = summary.start_epoch;
  manifest["epochs_done"] = summary.epochs_done;
  manifest["optimizer_step"] = summary.optimizer_step;
  if (!summary.epoch_losses.empty()) {
    const double first = summary.epoch_losses.front();
    const double last = summary.epoch_losses.back();
    manifest["first_epoch_loss"] = first;
    manifest["final_epoch_loss"] = last;
    manifest["loss_reduction"] = 1.0 - last / first;
  }
  manifest["loss_reduction_oracle"] = kLossReductionOracle;
  manifest["pilot_loss_reduction"] = kPilotLossReduction;
  write_json_file(opt.out_dir / "manifest.json", manifest);
  write_timing(opt.out_dir, {{"seconds", std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count()},
                             {"epochs_run", summary.epochs_done - summary.start_epoch}});
  return summary;
}

// ---------------------------------------------------------------------------
// sample

enum class SampleMethod { kFlow, kBaseline };

inline SampleMethod sample_method_from_string(const std::string& s) {
  if (s == "flow") return SampleMethod::kFlow;
  if (s == "baseline") return SampleMethod::kBaseline;
  fail(ErrorKind::kValidation, "unknown sampling method '" + s + "' (expected flow or baseline)");
}

struct SampleOptions {
  fs::path checkpoint;
  fs::path scenes;
  fs::path out_dir;
  SampleMethod method = SampleMethod::kFlow;
  bool guidance = false;
  std::optional<int> k_steps;
};

struct SceneSample {
  std::string id;
  Trajectory trajectory;
  std::vector<std::vector<CostReport>> traces;
  std::vector<std::string> diagnostics;
  double seconds = 0.0;
};

inline std::string traces_to_csv(const std::vector<std::vector<CostReport>>& traces) {
  std::ostringstream out;
  out << "euler_step,inner_step,j_coll,j_rot,j_vel,j_total,min_sdf\n";
  for (std::size_t i = 0; i < traces.size(); ++i) {
    for (std::size_t k = 0; k < traces[i].size(); ++k) {
      const auto& r = traces[i][k];
      out << i << ',' << k << ',' << csv_number(r.j_coll) << ',' << csv_number(r.j_rot) << ','
          << csv_number(r.j_vel) << ',' << csv_number(r.j_total) << ',' << csv_number(r.min_sdf) << '\n';
    }
  }
  return out.str();
}

/// One generated trajectory. The noise stream depends only on (seed, id), so
/// guidance settings never change the initial draw.
inline SceneSample sample_scene(const nn::VelocityField* field, const DatasetEntry& entry, const RunConfig& cfg,
                                SampleMethod method, const GuidanceConfig* guidance) {
  SceneSample out;
  out.id = entry.id;
  if (entry.trajectory.frames.empty()) fail(ErrorKind::kValidation, entry.id + ": scene has no history trajectory");
  const auto t0 = std::chrono::steady_clock::now();
  const FrameList history = history_of(entry.trajectory);
  if (method == SampleMethod::kBaseline) {
    out.trajectory =
        straight_line_baseline(history, entry.scene.goal_pose, cfg.net.traj_len, entry.trajectory.frame_dt);
  } else {
    Rng rng = make_rng(scene_noise_seed(cfg.seed, entry.id));
    SampleResult r;
    try {
      r = sample(*field, entry.scene, history, cfg.flow, guidance, rng, entry.trajectory.frame_dt);
    } catch (const Error& e) {
      fail(e.kind(), entry.id + ": " + bare_message(e));
    }
    out.trajectory = std::move(r.trajectory);
    out.traces = std::move(r.guidance_traces);
    out.diagnostics = std::move(r.diagnostics);
  }
  out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

inline std::vector<SceneSample> sample_all(const nn::VelocityField* field, const std::vector<DatasetEntry>& entries,
                                           const RunConfig& cfg, SampleMethod method,
                                           const GuidanceConfig* guidance) {
  return parallel_map<SceneSample>(entries.size(), cfg.threads, [&](std::size_t i) {
    return sample_scene(field, entries[i], cfg, method, guidance);
  });
}

inline void write_samples(const fs::path& out_dir, const std::vector<SceneSample>& samples) {
  nlohmann::json index = nlohmann::json::array();
  for (const auto& s : samples) {
    save_trajectory(s.trajectory, out_dir / "trajectories" / (s.id + ".json"));
    nlohmann::json e{{"id", s.id}, {"trajectory", "trajectories/" + s.id + ".json"}};
    if (!s.traces.empty()) {
      write_text_file(out_dir / "traces" / (s.id + ".csv"), traces_to_csv(s.traces));
      e["trace"] = "traces/" + s.id + ".csv";
    }
    if (!s.diagnostics.empty()) e["diagnostics"] = s.diagnostics;
    index.push_back(e);
  }
  write_json_file(out_dir / "index.json", {{"entries", index}});
}

inline std::string method_name(SampleMethod m) { return m == SampleMethod::kFlow ? "flow" : "baseline"; }

inline std::vector<SceneSample> cmd_sample(const RunConfig& cfg, const SampleOptions& opt,
                                           std::ostream& log = null_stream()) {
  validate(cfg);
  const auto start = std::chrono::steady_clock::now();
  GuidanceConfig gcfg = cfg.guidance;
  if (opt.k_steps) gcfg.k_steps = *opt.k_steps;
  validate(gcfg);
  std::optional<nn::VelocityField> field;
  if (opt.method == SampleMethod::kFlow) field.emplace(load_field(cfg, opt.checkpoint));
  const auto entries = read_dataset(opt.scenes);
  const auto samples =
      sample_all(field ? &*field : nullptr, entries, cfg, opt.method, opt.guidance ? &gcfg : nullptr);
  write_samples(opt.out_dir, samples);

  nlohmann::json manifest = base_manifest("sample", cfg);
  manifest["method"] = method_name(opt.method);
  manifest["guidance"] = opt.guidance;
  manifest["k_steps"] = gcfg.k_steps;
  manifest["scenes"] = opt.scenes.string();
  manifest["dataset_hash"] = dataset_hash(opt.scenes);
  if (field) manifest["checkpoint_hash"] = hex64(hash_file(opt.checkpoint));
  manifest["n_trajectories"] = samples.size();
  write_json_file(opt.out_dir / "manifest.json", manifest);
  double total = 0.0;
  for (const auto& s : samples) total += s.seconds;
  write_timing(opt.out_dir,
               {{"seconds", std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count()},
                {"seconds_per_trajectory", samples.empty() ? 0.0 : total / samples.size()}});
  log << "sample: wrote " << samples.size() << " trajectories to " << opt.out_dir.string() << "\n";
  return samples;
}

// ---------------------------------------------------------------------------
// eval

/// Loads the prediction for every dataset entry from preds_dir/trajectories.
/// A missing prediction names its scene id; a prediction with no matching
/// scene or of the wrong length is a batch mismatch naming the file.
inline std::vector<Trajectory> load_predictions(const fs::path& preds_dir, const std::vector<DatasetEntry>& entries) {
  const fs::path dir = preds_dir / "trajectories";
  if (!fs::is_directory(dir)) fail(ErrorKind::kIoError, "no trajectories directory in " + preds_dir.string());
  std::set<std::string> expected;
  for (const auto& e : entries) expected.insert(e.id + ".json");
  for (const auto& f : fs::directory_iterator(dir)) {
    if (!expected.contains(f.path().filename().string())) {
      fail(ErrorKind::kBatchMismatch, "prediction " + f.path().string() + " has no matching scene");
    }
  }
  std::vector<Trajectory> preds;
  for (const auto& e : entries) {
    const fs::path p = dir / (e.id + ".json");
    if (!fs::exists(p)) fail(ErrorKind::kIoError, "missing prediction for scene " + e.id + " (" + p.string() + ")");
    Trajectory t = load_trajectory(p);
    if (t.length() != e.trajectory.length() || t.history_len != e.trajectory.history_len) {
      fail(ErrorKind::kBatchMismatch, "prediction " + p.string() + " has T=" + std::to_string(t.length()) +
                                          ", H=" + std::to_string(t.history_len) + "; ground truth has T=" +
                                          std::to_string(e.trajectory.length()) +
                                          ", H=" + std::to_string(e.trajectory.history_len));
    }
    preds.push_back(std::move(t));
  }
  return preds;
}

inline MetricReport evaluate_entries(const std::vector<Trajectory>& preds, const std::vector<DatasetEntry>& entries,
                                     const EvalConfig& cfg) {
  std::vector<Trajectory> gts;
  std::vector<SceneSpec> scenes;
  std::vector<std::string> ids;
  for (const auto& e : entries) {
    gts.push_back(e.trajectory);
    scenes.push_back(e.scene);
    ids.push_back(e.id);
  }
  return evaluate_batch(preds, gts, scenes, cfg, ids);
}

inline MetricReport cmd_eval(const RunConfig& cfg, const fs::path& preds_dir, const fs::path& dataset,
                             const fs::path& out_dir, std::ostream& log = null_stream()) {
  validate(cfg);
  const auto entries = read_dataset(dataset);
  const auto preds = load_predictions(preds_dir, entries);
  const MetricReport report = evaluate_entries(preds, entries, cfg.eval);
  write_text_file(out_dir / "metrics.csv", to_csv(report));
  write_json_file(out_dir / "metrics.json", to_json(report));
  nlohmann::json manifest = base_manifest("eval", cfg);
  manifest["predictions"] = preds_dir.string();
  manifest["predictions_hash"] = hex64(hash_directory(preds_dir / "trajectories"));
  manifest["dataset_hash"] = dataset_hash(dataset);
  if (fs::exists(preds_dir / "manifest.json")) {
    const auto pm = read_json_file(preds_dir / "manifest.json");
    if (pm.contains("checkpoint_hash")) manifest["checkpoint_hash"] = pm["checkpoint_hash"];
  }
  write_json_file(out_dir / "manifest.json", manifest);
  log << "eval: ADE " << report.ade << " FDE " << report.fde << " Frechet " << report.frechet << " geodesic "
      << report.geodesic << " collision rate " << report.collision_rate << " (n=" << report.n_trajectories << ")\n";
  return report;
}

// ---------------------------------------------------------------------------
// selfcheck

struct SelfcheckOptions {
  std::optional<std::string> only_check;
  std::optional<int> instance;
  CheckHooks hooks;
};

struct SelfcheckReport {
  std::vector<CheckResult> checks;
  bool passed = true;
};

inline nlohmann::json to_json(const SelfcheckReport& r, std::uint64_t seed) {
  nlohmann::json checks = nlohmann::json::array();
  for (const auto& c : r.checks) checks.push_back(to_json(c));
  return {{"seed", seed}, {"passed", r.passed}, {"checks", checks}};
}

/// Runs the oracle and finite-difference suite. Failures are reported, not
/// thrown; the caller maps a failed report to a numeric exit code.
inline SelfcheckReport cmd_selfcheck(const RunConfig& cfg, const SelfcheckOptions& opt = {},
                                     std::ostream& log = null_stream()) {
  SelfcheckReport report;
  std::vector<const CheckSpec*> specs;
  if (opt.only_check) {
    specs.push_back(&find_check(*opt.only_check));
  } else {
    if (opt.instance) fail(ErrorKind::kValidation, "--instance requires --check");
    for (const auto& s : check_suite()) specs.push_back(&s);
  }
  for (const CheckSpec* spec : specs) {
    CheckResult r = run_check(*spec, cfg.seed, opt.hooks, opt.instance);
    report.passed = report.passed && r.passed;
    log << (r.passed ? "PASS " : "FAIL ") << r.name << " instances=" << r.instances << " worst=" << r.worst
        << " tolerance=" << r.tolerance << "\n";
    report.checks.push_back(std::move(r));
  }
  return report;
}

// ---------------------------------------------------------------------------
// study

struct StudyRow {
  std::string condition;
  double k = 0.0;
  std::optional<MetricReport> report;
  std::string error;
  double seconds_per_trajectory = 0.0;
};

inline std::string study_csv(const std::vector<StudyRow>& rows, bool with_k) {
  std::ostringstream out;
  out << "condition," << (with_k ? "k," : "") << "n,ade,fde,frechet,geodesic,collision_rate,error\n";
  for (const auto& r : rows) {
    out << r.condition << ',';
    if (with_k) out << r.k << ',';
    if (r.report) {
      out << r.report->n_trajectories << ',' << csv_number(r.report->ade) << ',' << csv_number(r.report->fde) << ','
          << csv_number(r.report->frechet) << ',' << csv_number(r.report->geodesic) << ','
          << csv_number(r.report->collision_rate) << ",\n";
    } else {
      std::string msg = r.error;
      std::replace(msg.begin(), msg.end(), ',', ';');
      std::replace(msg.begin(), msg.end(), '\n', ' ');
      out << ",,,,,," << msg << '\n';
    }
  }
  return out.str();
}

inline nlohmann::json study_json(const std::vector<StudyRow>& rows) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& r : rows) {
    nlohmann::json j{{"condition", r.condition}, {"k", r.k}};
    if (r.report) {
      j["ade"] = r.report->ade;
      j["fde"] = r.report->fde;
      j["frechet"] = r.report->frechet;
      j["geodesic"] = r.report->geodesic;
      j["collision_rate"] = r.report->collision_rate;
      j["n"] = r.report->n_trajectories;
    } else {
      j["error"] = r.error;
    }
    out.push_back(j);
  }
  return out;
}

struct StudyOptions {
  fs::path checkpoint;
  fs::path scenes;
  fs::path out_dir;
};

inline std::vector<std::string> study_names() { return {"guidance-ablation", "opt-steps"}; }

/// Full guidance, each cost term switched off, and no guidance.
inline std::vector<std::pair<std::string, std::optional<GuidanceConfig>>> ablation_conditions(const GuidanceConfig& g) {
  GuidanceConfig no_coll = g;
  no_coll.use_collision = false;
  GuidanceConfig no_rot = g;
  no_rot.lambda_rot = 0.0;
  GuidanceConfig no_vel = g;
  no_vel.lambda_vel = 0.0;
  return {{"full", g}, {"no_collision", no_coll}, {"no_rotation", no_rot}, {"no_velocity", no_vel}, {"none", {}}};
}

inline std::vector<StudyRow> cmd_study_ablation(const RunConfig& cfg, const StudyOptions& opt,
                                                std::ostream& log = null_stream()) {
  validate(cfg);
  const nn::VelocityField field = load_field(cfg, opt.checkpoint);
  const auto entries = read_dataset(opt.scenes);
  std::vector<StudyRow> rows;
  for (const auto& [name, guidance] : ablation_conditions(cfg.guidance)) {
    StudyRow row;
    row.condition = name;
    row.k = guidance ? guidance->k_steps : 0;
    try {
      const auto samples = sample_all(&field, entries, cfg, SampleMethod::kFlow, guidance ? &*guidance : nullptr);
      std::vector<Trajectory> preds;
      for (const auto& s : samples) preds.push_back(s.trajectory);
      write_samples(opt.out_dir / name, samples);
      row.report = evaluate_entries(preds, entries, cfg.eval);
      log << name << ": ADE " << row.report->ade << " collision rate " << row.report->collision_rate << "\n";
    } catch (const Error& e) {
      row.error = e.what();
      log << name << ": " << row.error << "\n";
    }
    rows.push_back(std::move(row));
  }
  write_text_file(opt.out_dir / "ablation.csv", study_csv(rows, false));
  std::vector<std::string> labels;
  std::vector<double> rates;
  for (const auto& r : rows) {
    labels.push_back(r.condition);
    rates.push_back(r.report ? r.report->collision_rate : 0.0);
  }
  write_text_file(opt.out_dir / "ablation_collision.svg",
                  svg::bar_chart("Collision rate by guidance condition", "collision rate", labels, rates));
  nlohmann::json manifest = base_manifest("study guidance-ablation", cfg);
  manifest["checkpoint_hash"] = hex64(hash_file(opt.checkpoint));
  manifest["dataset_hash"] = dataset_hash(opt.scenes);
  manifest["conditions"] = study_json(rows);
  write_json_file(opt.out_dir / "manifest.json", manifest);
  return rows;
}

/// Sweeps the guidance inner-step count. Timing interleaves the K values
/// per scene so drift in machine load spreads over all conditions.
inline std::vector<StudyRow> cmd_study_opt_steps(const RunConfig& cfg, const StudyOptions& opt,
                                                 std::ostream& log = null_stream()) {
  validate(cfg);
  const nn::VelocityField field = load_field(cfg, opt.checkpoint);
  const auto entries = read_dataset(opt.scenes);
  const std::vector<int>& ks = cfg.opt_steps;

  struct PerScene {
    std::vector<std::optional<SceneSample>> by_k;
    std::vector<std::string> errors;
  };
  const auto per_scene = parallel_map<PerScene>(entries.size(), cfg.threads, [&](std::size_t i) {
    PerScene p;
    p.by_k.resize(ks.size());
    p.errors.resize(ks.size());
    // Rotate the starting K per scene so no condition always pays the
    // cold-cache cost of a new scene.
    for (std::size_t j = 0; j < ks.size(); ++j) {
      const std::size_t c = (i + j) % ks.size();
      GuidanceConfig g = cfg.guidance;
      g.k_steps = ks[c];
      try {
        p.by_k[c] = sample_scene(&field, entries[i], cfg, SampleMethod::kFlow, &g);
      } catch (const Error& e) {
        p.errors[c] = e.what();
      }
    }
    return p;
  });

  std::vector<StudyRow> rows;
  for (std::size_t c = 0; c < ks.size(); ++c) {
    StudyRow row;
    row.condition = "k" + std::to_string(ks[c]);
    row.k = ks[c];
    std::vector<Trajectory> preds;
    double seconds = 0.0;
    for (const auto& p : per_scene) {
      if (!p.by_k[c]) {
        if (row.error.empty()) row.error = p.errors[c];
        continue;
      }
      preds.push_back(p.by_k[c]->trajectory);
      seconds += p.by_k[c]->seconds;
    }
    if (row.error.empty()) {
      try {
        row.report = evaluate_entries(preds, entries, cfg.eval);
        row.seconds_per_trajectory = preds.empty() ? 0.0 : seconds / preds.size();
      } catch (const Error& e) {
        row.error = e.what();
      }
    }
    log << row.condition << ": "
        << (row.report ? "collision rate " + csv_number(row.report->collision_rate) + " ADE " +
                             csv_number(row.report->ade) + " s/traj " + csv_number(row.seconds_per_trajectory)
                       : row.error)
        << "\n";
    rows.push_back(std::move(row));
  }

  write_text_file(opt.out_dir / "opt_steps.csv", study_csv(rows, true));
  std::ostringstream timing;
  timing << "k,seconds_per_trajectory\n";
  std::vector<double> xs, rates, secs;
  for (const auto& r : rows) {
    timing << r.k << ',' << csv_number(r.seconds_per_trajectory) << '\n';
    xs.push_back(r.k);
    rates.push_back(r.report ? r.report->collision_rate : 0.0);
    secs.push_back(r.seconds_per_trajectory);
  }
  write_text_file(opt.out_dir / "opt_steps_timing.csv", timing.str());
  write_text_file(opt.out_dir / "opt_steps_collision.svg",
                  svg::line_chart("Collision rate vs guidance steps", "K", "collision rate", xs, rates));
  write_text_file(opt.out_dir / "opt_steps_timing.svg",
                  svg::line_chart("Wall clock vs guidance steps", "K", "seconds per trajectory", xs, secs));
  nlohmann::json manifest = base_manifest("study opt-steps", cfg);
  manifest["checkpoint_hash"] = hex64(hash_file(opt.checkpoint));
  manifest["dataset_hash"] = dataset_hash(opt.scenes);
  manifest["conditions"] = study_json(rows);
  write_json_file(opt.out_dir / "manifest.json", manifest);
  write_timing(opt.out_dir, {{"note", "per-K wall clock is in opt_steps_timing.csv"}});
  return rows;
}

}  // namespace trajflow::harness

#endif  // TRAJFLOW_HARNESS_COMMANDS_HPP
