#pragma once

// Subcommand implementations behind the `vflock` executable. Each throws
// vflock::Error on failure; the entry point maps the kind to an exit code.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "vflock/attribution.hpp"
#include "vflock/cli/config.hpp"
#include "vflock/error.hpp"
#include "vflock/nn/train.hpp"

namespace vflock::cli {

struct GlobalOptions {
  std::optional<std::filesystem::path> config;
  std::optional<std::uint64_t> seed;
  int jobs = 1;
  bool force = false;
  std::vector<std::string> overrides;  // "key=value"
};

/// Config file, then --set overrides, then --seed. Prints the defaulted keys
/// to `notice` and validates the result.
ExperimentConfig resolve_config(const GlobalOptions& options, std::ostream& notice);

/// Exit status for an error kind: 1 config, 2 I/O, 3 data format,
/// 4 divergence, 5 infeasible spawn, 6 anything else.
int exit_code(ErrorKind kind);

void write_manifest(const std::filesystem::path& path, const ExperimentConfig& config);

/// Streams a VSFD file straight into a training set without keeping images twice.
nn::RegressionSet load_regression_set(const std::filesystem::path& path);

/// Writes train.vsfd, val.vsfd, test.vsfd and a manifest into `out_dir`.
void cmd_gen(const ExperimentConfig& config, const std::filesystem::path& out_dir, std::ostream& log);

struct TrainPaths {
  std::filesystem::path data_dir;    // holds train.vsfd and val.vsfd
  std::filesystem::path checkpoint;  // output
  std::filesystem::path loss_csv;    // output; empty: <checkpoint>.loss.csv
};

/// Trains the default network. On divergence the best checkpoint so far is
/// still written and Error{Divergence} is thrown afterwards.
nn::TrainResult cmd_train(const ExperimentConfig& config, const TrainPaths& paths, std::ostream& log);

struct RunSummary {
  RunOutcome outcome;
  double min_d_min = 0.0;
  double max_d_max = 0.0;
  std::optional<double> mean_order;
  std::size_t faults = 0;
};

RunSummary summarize(const EpisodeResult& result);

/// Closed-loop episode writing trajectory.csv, metrics.csv and a manifest.
RunSummary cmd_run(const ExperimentConfig& config, const std::filesystem::path& out_dir,
                   std::ostream& log);

struct EvalReport {
  std::size_t samples = 0;
  double mse = 0.0;
  double baseline_mse = 0.0;
};

EvalReport cmd_eval(const std::filesystem::path& dataset, const std::filesystem::path& checkpoint,
                    std::ostream& log);

struct SaliencySource {
  std::filesystem::path dataset;  // with `index`
  std::uint32_t index = 0;
  std::filesystem::path pgm;      // alternative: a 384x64 grayscale image
};

/// Writes overlay.ppm, heatmap.ppm, input.pgm and saliency_raw.csv into `out_dir`.
SaliencyMap cmd_saliency(const std::filesystem::path& checkpoint, const SaliencySource& source,
                         SaliencyTarget target, double alpha, const std::filesystem::path& out_dir,
                         std::ostream& log);

struct SuiteEntry {
  std::string variant;
  std::string controller;
  RunSummary summary;
};

/// Experiment grid: common, opposing, none, n3, n12, vmax4 for the position
/// controller, and again for the vision controller when `checkpoint` is set.
std::vector<SuiteEntry> cmd_suite(const ExperimentConfig& config, const std::filesystem::path& out_dir,
                                  const std::filesystem::path& checkpoint, int jobs, bool force,
                                  std::ostream& log);

void cmd_stats(const std::filesystem::path& dataset, std::ostream& out);

}  // namespace vflock::cli
