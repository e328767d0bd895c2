// vflock: dataset generation, training and closed-loop flocking experiments.

#include <CLI11.hpp>

#include <iostream>

#include "vflock/cli/commands.hpp"
#include "vflock/error.hpp"

namespace {

using namespace vflock;
using namespace vflock::cli;

void print_error(ErrorKind kind, const std::string& message) {
  std::string flat = message;
  for (char& c : flat)
    if (c == '\n' || c == '\r') c = ' ';
  std::cerr << "error kind=" << to_string(kind) << " message=\"" << flat << "\"\n";
}

SaliencyTarget parse_target(const std::string& s) {
  if (s == "norm") return SaliencyTarget::Norm;
  if (s == "x") return SaliencyTarget::X;
  if (s == "y") return SaliencyTarget::Y;
  if (s == "z") return SaliencyTarget::Z;
  throw Error(ErrorKind::Config, "saliency target must be norm, x, y or z");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Vision-based flocking: data generation, training and closed-loop experiments"};
  app.require_subcommand(1);

  GlobalOptions global;
  std::string config_path;
  std::uint64_t seed = 0;
  app.add_option("--config", config_path, "key = value configuration file")->check(CLI::ExistingFile);
  auto* seed_opt = app.add_option("--seed", seed, "master seed, overrides the config");
  app.add_option("--jobs", global.jobs, "parallel episodes for the suite")->check(CLI::PositiveNumber);
  app.add_flag("--force", global.force, "allow overwriting an existing suite directory");
  app.add_option("--set", global.overrides, "override one config key, key=value (repeatable)");

  std::string out;
  std::string data_dir;
  std::string checkpoint;
  std::string loss_csv;
  std::string controller;
  std::string dataset;
  std::string pgm;
  std::string target = "norm";
  std::uint32_t index = 0;
  double alpha = 0.5;

  auto* gen = app.add_subcommand("gen", "generate train/val/test datasets");
  gen->add_option("--out", out, "output directory")->required();

  auto* train = app.add_subcommand("train", "train the network on a generated dataset");
  train->add_option("--data", data_dir, "directory holding train.vsfd and val.vsfd")->required();
  train->add_option("--out", out, "checkpoint path")->required();
  train->add_option("--loss-csv", loss_csv, "epoch loss CSV (default <out>.loss.csv)");

  auto* run = app.add_subcommand("run", "run one closed-loop episode");
  run->add_option("--out", out, "output directory")->required();
  run->add_option("--controller", controller, "position or vision");
  run->add_option("--checkpoint", checkpoint, "network checkpoint for the vision controller");

  auto* eval = app.add_subcommand("eval", "test-set MSE of a checkpoint");
  eval->add_option("--data", dataset, "dataset file")->required();
  eval->add_option("--checkpoint", checkpoint, "network checkpoint")->required();

  auto* sal = app.add_subcommand("saliency", "Grad-CAM overlays for one image");
  sal->add_option("--checkpoint", checkpoint, "network checkpoint")->required();
  auto* sal_data = sal->add_option("--data", dataset, "dataset file");
  sal->add_option("--index", index, "sample index within --data");
  auto* sal_pgm = sal->add_option("--pgm", pgm, "384x64 grayscale PGM instead of a dataset sample");
  sal_data->excludes(sal_pgm);
  sal->add_option("--target", target, "attributed output: norm, x, y or z");
  sal->add_option("--alpha", alpha, "overlay opacity")->check(CLI::Range(0.0, 1.0));
  sal->add_option("--out", out, "output directory")->required();

  auto* suite = app.add_subcommand("suite", "run the experiment grid");
  suite->add_option("--out", out, "results directory")->required();
  suite->add_option("--checkpoint", checkpoint, "adds vision-controller runs");

  auto* stats = app.add_subcommand("stats", "print dataset header and target means");
  stats->add_option("--data", dataset, "dataset file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    print_error(ErrorKind::Config, e.what());
    return exit_code(ErrorKind::Config);
  }

  if (!config_path.empty()) global.config = config_path;
  if (seed_opt->count() > 0) global.seed = seed;

  try {
    if (stats->parsed()) {
      cmd_stats(dataset, std::cout);
      return 0;
    }
    if (eval->parsed()) {
      cmd_eval(dataset, checkpoint, std::cout);
      return 0;
    }
    if (sal->parsed()) {
      if (dataset.empty() && pgm.empty()) throw Error(ErrorKind::Config, "saliency needs --data or --pgm");
      cmd_saliency(checkpoint, SaliencySource{dataset, index, pgm}, parse_target(target), alpha, out,
                   std::cout);
      return 0;
    }

    if (run->parsed()) {
      if (!controller.empty()) global.overrides.push_back("controller=" + controller);
      if (!checkpoint.empty()) global.overrides.push_back("checkpoint=" + checkpoint);
    }
    const ExperimentConfig cfg = resolve_config(global, std::cerr);

    if (gen->parsed()) cmd_gen(cfg, out, std::cout);
    else if (train->parsed()) cmd_train(cfg, TrainPaths{data_dir, out, loss_csv}, std::cout);
    else if (run->parsed()) cmd_run(cfg, out, std::cout);
    else if (suite->parsed()) cmd_suite(cfg, out, checkpoint, global.jobs, global.force, std::cout);
    return 0;
  } catch (const Error& e) {
    print_error(e.kind(), e.what());
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    print_error(ErrorKind::Io, e.what());
    return exit_code(ErrorKind::Io);
  }
}
