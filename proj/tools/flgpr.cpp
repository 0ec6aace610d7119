// Command-line driver for the detection pipeline. Each subcommand runs one
// stage against a JSON experiment config, reading the previous stage's
// artifacts from the output directory and writing its own.

#include <CLI11.hpp>

#include <exception>
#include <iostream>
#include <string>

#include "flgpr/pipeline.hpp"

namespace {

struct CliOverrides {
  std::string config_path;
  std::string out_dir;
  long long seed = -1;
  int threads = -1;
};

flgpr::ExperimentConfig load_with_overrides(const CliOverrides& cli) {
  flgpr::ExperimentConfig cfg = flgpr::load_config(cli.config_path);
  if (!cli.out_dir.empty()) cfg.out_dir = cli.out_dir;
  if (cli.seed >= 0) cfg.seed = static_cast<std::uint64_t>(cli.seed);
  if (cli.threads >= 0) cfg.threads = cli.threads;
  flgpr::thread_count() = cfg.threads;
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  if (!flgpr::host_is_little_endian()) {
    std::cerr << "error: artifacts are little-endian; big-endian hosts unsupported\n";
    return 1;
  }

  CLI::App app{"FLGPR buried-target detection pipeline"};
  app.require_subcommand(1);
  app.fallthrough();

  CliOverrides cli;
  app.add_option("--config", cli.config_path, "experiment config (JSON)")
      ->required()
      ->check(CLI::ExistingFile);
  app.add_option("--out", cli.out_dir, "override the config's output directory");
  app.add_option("--seed", cli.seed, "override the config's master seed");
  app.add_option("--threads", cli.threads, "worker threads (0 = hardware)");

  using StageFn = std::string (*)(const flgpr::ExperimentConfig&);
  struct Stage {
    const char* name;
    const char* help;
    StageFn fn;
  };
  const Stage stages[] = {
      {"generate", "synthesize lanes and ground truth", &flgpr::pipeline::run_generate},
      {"prescreen", "RX + DP-means alarm declaration", &flgpr::pipeline::run_prescreen},
      {"extract", "handcrafted feature matrices per alarm", &flgpr::pipeline::run_extract},
      {"train", "fold codebooks and classifiers", &flgpr::pipeline::run_train},
      {"evaluate", "lane-CV scoring with bootstrap CIs", &flgpr::pipeline::run_evaluate},
      {"fuse", "SFS decision fusion and N_f sweep", &flgpr::pipeline::run_fuse},
      {"confmap", "confidence maps and dictionary atlas", &flgpr::pipeline::run_confmap},
      {"report", "aggregate pAUC table and figures", &flgpr::pipeline::run_report},
  };

  StageFn selected = nullptr;
  for (const Stage& stage : stages) {
    CLI::App* sub = app.add_subcommand(stage.name, stage.help);
    sub->callback([&selected, &stage] { selected = stage.fn; });
  }

  CLI11_PARSE(app, argc, argv);

  try {
    const flgpr::ExperimentConfig cfg = load_with_overrides(cli);
    std::cout << selected(cfg) << "\n";
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
