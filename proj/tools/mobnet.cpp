// Experiment driver. Subcommands: simulate, collect, train, eval, detect,
// ablate, all. Exit codes: 0 success, 1 config error, 2 stage failure.

#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "mobnet/experiment.hpp"

int main(int argc, char** argv) {
  CLI::App app{"mobnet: momentum-observer + limb-GRU external torque pipeline"};
  app.require_subcommand(1);

  std::string config_path, out_dir = "out";
  uint64_t seed = 0;
  int threads = 1;
  bool deterministic = false;

  for (const char* name :
       {"simulate", "collect", "train", "eval", "detect", "ablate", "all"}) {
    CLI::App* sub = app.add_subcommand(name);
    sub->add_option("--config", config_path, "experiment config (JSON)")->required();
    sub->add_option("--seed", seed, "master seed");
    sub->add_option("--out", out_dir, "output directory");
    sub->add_option("--threads", threads, "worker threads")->check(CLI::PositiveNumber);
    sub->add_flag("--deterministic", deterministic, "force single-threaded execution");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;  // bad flags are config errors
  }

  // all stages are deterministic and single-threaded at desk scale; the
  // flags are accepted for interface stability
  (void)threads;
  (void)deterministic;

  const std::string sub = app.get_subcommands().front()->get_name();
  return mobnet::run_experiment(sub, config_path, seed, out_dir, std::cout);
}
