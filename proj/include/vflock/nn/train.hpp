#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "vflock/nn/network.hpp"

namespace vflock {
struct Dataset;
}

namespace vflock::nn {

struct TrainConfig {
  int batch_size = 128;
  double weight_decay = 5e-4;
  double momentum = 0.9;
  double lr = 5e-3;
  double lr_decay = 0.5;
  int plateau_patience = 10;     // epochs without improvement before decaying lr
  double dropout = 0.5;
  int early_stop_patience = 10;  // further non-improving epochs before stopping
  int max_epochs = 200;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Images kept as raw bytes and standardised on batch assembly.
struct RegressionSet {
  Shape input;
  std::vector<std::uint8_t> pixels;  // count * input.size()
  std::vector<float> targets;        // count * 3
  float pixel_mean = 0.0f;
  float pixel_std = 1.0f;

  std::size_t count() const { return targets.size() / 3; }
  /// Standardised images and targets for the given sample indices.
  void assemble(std::span<const std::size_t> indices, Tensor& images, Tensor& targets_out) const;
};

RegressionSet to_regression_set(const Dataset& ds);

/// (image - mean) / std for raw 8-bit pixels.
void standardize(std::span<const std::uint8_t> pixels, float mean, float stddev, std::span<Real> out);

/// Learning-rate plateau decay and early stopping driven by validation loss.
/// "Improvement" means strictly below the best loss seen so far.
class PlateauSchedule {
 public:
  PlateauSchedule(double lr, double decay, int plateau_patience, int early_stop_patience)
      : lr_(lr), decay_(decay), plateau_(plateau_patience), stop_(early_stop_patience) {}

  struct Decision {
    bool improved = false;
    bool decayed = false;
    bool stop = false;
  };

  Decision observe(double val_loss);
  double lr() const { return lr_; }
  double best() const { return best_; }
  int stale_epochs() const { return stale_; }

 private:
  double lr_;
  double decay_;
  int plateau_;
  int stop_;
  double best_ = std::numeric_limits<double>::infinity();
  int stale_ = 0;
};

struct EpochLog {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double lr = 0.0;
};

struct TrainResult {
  Network best;
  std::vector<EpochLog> log;
  double best_val_loss = 0.0;
  int best_epoch = 0;
  bool diverged = false;
  std::string stop_reason;
};

using EpochCallback = std::function<void(const EpochLog&)>;

/// Mini-batch SGD with momentum over seed-shuffled epochs. Returns the
/// parameters with minimal validation loss; on divergence training stops and
/// the last good checkpoint is returned with `diverged` set.
TrainResult train(Network net, const RegressionSet& train_set, const RegressionSet& val_set,
                  const TrainConfig& config, const EpochCallback& on_epoch = {});

/// Mean over samples of the squared error norm, eval mode.
double evaluate_mse(const Network& net, const RegressionSet& set, int batch_size = 128);

/// MSE of always predicting the set's own mean target.
double constant_mean_baseline(const RegressionSet& set);

void write_loss_csv(const std::filesystem::path& path, std::span<const EpochLog> log);

}  // namespace vflock::nn
