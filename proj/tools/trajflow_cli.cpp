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

// trajflow: dataset generation, training, sampling, evaluation, self-checks
// and the guidance studies.
//
// Exit codes: 0 success, 2 validation or parse error, 3 numeric failure
// (including a failed self-check), 4 I/O error.

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "trajflow/harness/commands.hpp"

namespace {

using namespace trajflow;
using namespace trajflow::harness;

struct GlobalOptions {
  std::optional<std::string> config;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
};

RunConfig resolve_config(const GlobalOptions& g, std::vector<std::string> extra = {}) {
  std::vector<std::string> overrides = g.overrides;
  if (g.seed) overrides.push_back("seed=" + std::to_string(*g.seed));
  if (g.threads) overrides.push_back("threads=" + std::to_string(*g.threads));
  for (auto& e : extra) overrides.push_back(std::move(e));
  std::optional<std::filesystem::path> path;
  if (g.config) path = *g.config;
  return load_run_config(path, overrides);
}

int run(int argc, char** argv) {
  CLI::App app{"Flow-matching 6DoF trajectory generator with gradient-guided sampling"};
  app.require_subcommand(1);
  GlobalOptions g;
  app.add_option("-c,--config", g.config, "Config file (default: $" + std::string(kConfigEnvVar) + ")");
  app.add_option("-s,--set", g.overrides, "Override a config key, e.g. --set guidance.alpha=0.05");
  app.add_option("--seed", g.seed, "Root seed (same as --set seed=N)");
  app.add_option("--threads", g.threads, "Worker threads, 0 for all cores");

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic dataset split");
  std::string gen_out, gen_split = "train";
  std::optional<int> gen_count;
  gen->add_option("-o,--out", gen_out, "Output directory")->required();
  gen->add_option("--split", gen_split, "train, heldout or stress");
  gen->add_option("-n,--count", gen_count, "Number of scenes (default: configured split size)");

  // train
  auto* train = app.add_subcommand("train", "Train the velocity field");
  TrainOptions train_opt;
  std::string train_data, train_out;
  std::optional<int> train_epochs;
  train->add_option("-d,--data", train_data, "Dataset directory")->required();
  train->add_option("-o,--out", train_out, "Run directory (checkpoint, loss curve, manifest)")->required();
  train->add_flag("--resume", train_opt.resume, "Continue from <out>/checkpoint.bin");
  train->add_option("--epochs", train_epochs, "Total epochs (same as --set train.epochs=N)");

  // sample
  auto* samp = app.add_subcommand("sample", "Generate trajectories for a scene set");
  std::string samp_ckpt, samp_scenes, samp_out, samp_method = "flow";
  bool samp_guidance = false;
  std::optional<int> samp_k;
  samp->add_option("--checkpoint", samp_ckpt, "Checkpoint file (flow method)");
  samp->add_option("--scenes", samp_scenes, "Dataset directory with scenes and histories")->required();
  samp->add_option("-o,--out", samp_out, "Output directory")->required();
  samp->add_option("--method", samp_method, "flow or baseline");
  samp->add_flag("--guidance", samp_guidance, "Enable gradient guidance");
  samp->add_option("--k-steps", samp_k, "Override guidance.k_steps");

  // eval
  auto* ev = app.add_subcommand("eval", "Score predictions against ground truth");
  std::string ev_pred, ev_data, ev_out;
  ev->add_option("-p,--pred", ev_pred, "Sample output directory")->required();
  ev->add_option("-d,--data", ev_data, "Dataset directory with ground truth")->required();
  ev->add_option("-o,--out", ev_out, "Output directory")->required();

  // selfcheck
  auto* sc = app.add_subcommand("selfcheck", "Run oracle and finite-difference checks");
  std::optional<std::string> sc_out, sc_check, sc_corrupt;
  std::optional<int> sc_instance;
  sc->add_option("-o,--out", sc_out, "Write the JSON report here");
  sc->add_option("--check", sc_check, "Run one check only");
  sc->add_option("--instance", sc_instance, "Replay one instance of --check");
  sc->add_option("--corrupt-gradient", sc_corrupt, "Test hook: perturb the analytic gradient of a check");

  // study
  auto* st = app.add_subcommand("study", "Run a guidance study");
  std::string st_name, st_ckpt, st_scenes, st_out;
  st->add_option("study", st_name, "guidance-ablation or opt-steps")
      ->required()
      ->check(CLI::IsMember(study_names()));
  st->add_option("--checkpoint", st_ckpt, "Checkpoint file")->required();
  st->add_option("--scenes", st_scenes, "Stress-test dataset directory")->required();
  st->add_option("-o,--out", st_out, "Output directory")->required();

  // print-config
  auto* pc = app.add_subcommand("print-config", "Print the fully resolved config");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitValidation;
  }

  try {
    if (gen->parsed()) {
      const RunConfig cfg = resolve_config(g);
      const auto stats = cmd_gen_data(cfg, gen_out, split_from_string(gen_split), gen_count, std::cout);
      std::cout << to_json(stats).dump(1) << "\n";
    } else if (train->parsed()) {
      std::vector<std::string> extra;
      if (train_epochs) extra.push_back("train.epochs=" + std::to_string(*train_epochs));
      const RunConfig cfg = resolve_config(g, extra);
      train_opt.dataset = train_data;
      train_opt.out_dir = train_out;
      const auto s = cmd_train(cfg, train_opt, std::cout);
      std::cout << "train: epochs " << s.start_epoch << ".." << s.epochs_done << ", step " << s.optimizer_step
                << ", checkpoint " << s.checkpoint_hash << "\n";
    } else if (samp->parsed()) {
      const RunConfig cfg = resolve_config(g);
      SampleOptions opt;
      opt.method = sample_method_from_string(samp_method);
      if (opt.method == SampleMethod::kFlow && samp_ckpt.empty()) {
        fail(ErrorKind::kValidation, "--checkpoint is required for the flow method");
      }
      opt.checkpoint = samp_ckpt;
      opt.scenes = samp_scenes;
      opt.out_dir = samp_out;
      opt.guidance = samp_guidance;
      opt.k_steps = samp_k;
      cmd_sample(cfg, opt, std::cout);
    } else if (ev->parsed()) {
      const RunConfig cfg = resolve_config(g);
      cmd_eval(cfg, ev_pred, ev_data, ev_out, std::cout);
    } else if (sc->parsed()) {
      const RunConfig cfg = resolve_config(g);
      SelfcheckOptions opt;
      opt.only_check = sc_check;
      opt.instance = sc_instance;
      if (sc_corrupt) {
        const std::string target = *sc_corrupt;
        if (target == "grad_network") {
          opt.hooks.corrupt_network_gradient = [](nn::Gradients& grads) {
            for (auto& t : grads.g) t *= 1.01;
          };
        } else {
          if (target.rfind("grad_", 0) != 0) {
            fail(ErrorKind::kValidation, "--corrupt-gradient expects a gradient check, got '" + target + "'");
          }
          find_check(target);
          opt.hooks.corrupt_cost_gradient = [target](const std::string& check, State& grad) {
            if (check == target) grad *= 1.01;
          };
        }
      }
      const auto report = cmd_selfcheck(cfg, opt, std::cout);
      const auto j = to_json(report, cfg.seed);
      if (sc_out) write_json_file(*sc_out, j);
      if (!report.passed) {
        for (const auto& c : report.checks) {
          if (!c.passed) std::cerr << "selfcheck failure " << c.name << ": " << c.failure.dump() << "\n";
        }
        return kExitNumeric;
      }
    } else if (st->parsed()) {
      const RunConfig cfg = resolve_config(g);
      StudyOptions opt{st_ckpt, st_scenes, st_out};
      if (st_name == "guidance-ablation") {
        cmd_study_ablation(cfg, opt, std::cout);
      } else {
        cmd_study_opt_steps(cfg, opt, std::cout);
      }
    } else if (pc->parsed()) {
      std::cout << to_config_text(resolve_config(g));
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e.kind());
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: IoError: " << e.what() << "\n";
    return kExitIo;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) { return run(argc, argv); }
