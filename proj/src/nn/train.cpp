#include "vflock/nn/train.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "vflock/dataset.hpp"
#include "vflock/error.hpp"

namespace vflock::nn {

void TrainConfig::validate() const {
  if (batch_size < 1) throw Error(ErrorKind::Config, "batch_size must be positive");
  if (!(weight_decay >= 0.0)) throw Error(ErrorKind::Config, "weight_decay must be non-negative");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw Error(ErrorKind::Config, "momentum must be in [0,1)");
  if (!(lr > 0.0)) throw Error(ErrorKind::Config, "lr must be positive");
  if (!(lr_decay > 0.0 && lr_decay <= 1.0)) throw Error(ErrorKind::Config, "lr_decay must be in (0,1]");
  if (plateau_patience < 1 || early_stop_patience < 1)
    throw Error(ErrorKind::Config, "patience values must be positive");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw Error(ErrorKind::Config, "dropout must be in [0,1)");
  if (max_epochs < 1) throw Error(ErrorKind::Config, "max_epochs must be positive");
}

void standardize(std::span<const std::uint8_t> pixels, float mean, float stddev, std::span<Real> out) {
  const Real inv = Real{1} / static_cast<Real>(stddev);
  const Real m = static_cast<Real>(mean);
  for (std::size_t k = 0; k < pixels.size(); ++k) out[k] = (static_cast<Real>(pixels[k]) - m) * inv;
}

void RegressionSet::assemble(std::span<const std::size_t> indices, Tensor& images,
                             Tensor& targets_out) const {
  const int n = static_cast<int>(indices.size());
  const std::size_t stride = input.size();
  images = Tensor({n, input.channels, input.height, input.width});
  targets_out = Tensor({n, 3});
  for (int b = 0; b < n; ++b) {
    const std::size_t idx = indices[static_cast<std::size_t>(b)];
    standardize(std::span<const std::uint8_t>(pixels).subspan(idx * stride, stride), pixel_mean,
                pixel_std, images.values().subspan(static_cast<std::size_t>(b) * stride, stride));
    for (int c = 0; c < 3; ++c)
      targets_out[static_cast<std::size_t>(b) * 3 + c] = static_cast<Real>(targets[idx * 3 + c]);
  }
}

RegressionSet to_regression_set(const Dataset& ds) {
  RegressionSet set;
  set.input = {1, kImageHeight, kImageWidth};
  set.pixel_mean = ds.header.pixel_mean;
  set.pixel_std = ds.header.pixel_std;
  set.pixels.reserve(ds.samples.size() * kImageBytes);
  set.targets.reserve(ds.samples.size() * 3);
  for (const auto& s : ds.samples) {
    set.pixels.insert(set.pixels.end(), s.image.pixels.begin(), s.image.pixels.end());
    set.targets.push_back(static_cast<float>(s.target_v_rey_body.x));
    set.targets.push_back(static_cast<float>(s.target_v_rey_body.y));
    set.targets.push_back(static_cast<float>(s.target_v_rey_body.z));
  }
  return set;
}

PlateauSchedule::Decision PlateauSchedule::observe(double val_loss) {
  Decision d;
  if (val_loss < best_) {
    best_ = val_loss;
    stale_ = 0;
    d.improved = true;
    return d;
  }
  ++stale_;
  if (stale_ % plateau_ == 0) {
    lr_ *= decay_;
    d.decayed = true;
  }
  if (stale_ >= plateau_ + stop_) d.stop = true;
  return d;
}

double evaluate_mse(const Network& net, const RegressionSet& set, int batch_size) {
  const std::size_t n = set.count();
  if (n == 0) throw Error(ErrorKind::InvalidArgument, "evaluate_mse: empty set");
  std::vector<std::size_t> idx;
  Tensor images;
  Tensor targets;
  double sse = 0.0;
  for (std::size_t start = 0; start < n; start += static_cast<std::size_t>(batch_size)) {
    const std::size_t end = std::min(n, start + static_cast<std::size_t>(batch_size));
    idx.resize(end - start);
    std::iota(idx.begin(), idx.end(), start);
    set.assemble(idx, images, targets);
    const Tensor pred = forward(net, images, Mode::Eval);
    for (std::size_t k = 0; k < pred.size(); ++k) {
      const double d = static_cast<double>(pred[k]) - static_cast<double>(targets[k]);
      sse += d * d;
    }
  }
  return sse / static_cast<double>(n);
}

double constant_mean_baseline(const RegressionSet& set) {
  const std::size_t n = set.count();
  if (n == 0) throw Error(ErrorKind::InvalidArgument, "constant_mean_baseline: empty set");
  double mean[3] = {0, 0, 0};
  for (std::size_t i = 0; i < n; ++i)
    for (int c = 0; c < 3; ++c) mean[c] += set.targets[i * 3 + c];
  for (double& m : mean) m /= static_cast<double>(n);
  double sse = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (int c = 0; c < 3; ++c) {
      const double d = set.targets[i * 3 + c] - mean[c];
      sse += d * d;
    }
  return sse / static_cast<double>(n);
}

TrainResult train(Network net, const RegressionSet& train_set, const RegressionSet& val_set,
                  const TrainConfig& config, const EpochCallback& on_epoch) {
  config.validate();
  if (train_set.count() == 0 || val_set.count() == 0)
    throw Error(ErrorKind::InvalidArgument, "training and validation sets must be non-empty");
  if (train_set.pixel_mean != val_set.pixel_mean || train_set.pixel_std != val_set.pixel_std)
    throw Error(ErrorKind::Config, "training and validation sets use different standardisation");

  net.pixel_mean = train_set.pixel_mean;
  net.pixel_std = train_set.pixel_std;

  Rng order_rng(derive_seed(config.seed, 1));
  Rng dropout_rng(derive_seed(config.seed, 2));
  SgdMomentum optimizer(net, config.momentum);
  PlateauSchedule schedule(config.lr, config.lr_decay, config.plateau_patience,
                           config.early_stop_patience);

  TrainResult result;
  result.best = net;
  result.best_val_loss = std::numeric_limits<double>::infinity();

  std::vector<std::size_t> order(train_set.count());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Tensor images;
  Tensor targets;

  for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
    const double lr = schedule.lr();
    shuffle(order, order_rng);
    double weighted_loss = 0.0;
    try {
      for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(config.batch_size)) {
        const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
        const std::span<const std::size_t> batch(order.data() + start, end - start);
        train_set.assemble(batch, images, targets);
        const auto r = loss_and_grads(net, images, targets, config.weight_decay, Mode::Train, &dropout_rng);
        weighted_loss += r.data_loss * static_cast<double>(batch.size());
        optimizer.step(net, r.grads, lr);
      }
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::Divergence) throw;
      result.diverged = true;
      result.stop_reason = std::string("divergence: ") + e.what();
      return result;
    }

    EpochLog entry;
    entry.epoch = epoch;
    entry.train_loss = weighted_loss / static_cast<double>(order.size());
    try {
      entry.val_loss = evaluate_mse(net, val_set, config.batch_size);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::Divergence) throw;
      result.diverged = true;
      result.stop_reason = std::string("divergence: ") + e.what();
      return result;
    }
    entry.lr = lr;
    result.log.push_back(entry);
    if (on_epoch) on_epoch(entry);

    const auto decision = schedule.observe(entry.val_loss);
    if (decision.improved) {
      result.best = net;
      result.best_val_loss = entry.val_loss;
      result.best_epoch = epoch;
    }
    if (decision.stop) {
      result.stop_reason = "validation plateau";
      return result;
    }
  }
  result.stop_reason = "max_epochs";
  return result;
}

void write_loss_csv(const std::filesystem::path& path, std::span<const EpochLog> log) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::Io, "cannot open " + path.string() + " for writing");
  out << "epoch,train_loss,val_loss,best_val_loss,lr\n";
  out.precision(9);
  // Running minimum of the validation loss: the loss of the checkpoint kept so far.
  double best = std::numeric_limits<double>::infinity();
  for (const auto& e : log) {
    best = std::min(best, e.val_loss);
    out << e.epoch << ',' << e.train_loss << ',' << e.val_loss << ',' << best << ',' << e.lr << '\n';
  }
  if (!out) throw Error(ErrorKind::Io, "write failed: " + path.string());
}

}  // namespace vflock::nn
