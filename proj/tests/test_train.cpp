#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "vflock/error.hpp"
#include "vflock/nn/train.hpp"

using namespace vflock;
using namespace vflock::nn;
namespace fs = std::filesystem;

namespace {

/// Targets are a fixed linear map of the standardised pixels.
RegressionSet linear_task(std::size_t count, Rng& rng) {
  RegressionSet set;
  set.input = {1, 2, 3};
  set.pixel_mean = 128.0f;
  set.pixel_std = 64.0f;
  const double coef[3][6] = {{0.5, -0.2, 0.1, 0.0, 0.3, -0.4},
                             {-0.1, 0.2, 0.0, 0.4, -0.3, 0.1},
                             {0.2, 0.2, -0.2, 0.1, 0.0, 0.3}};
  for (std::size_t s = 0; s < count; ++s) {
    double x[6];
    for (double& v : x) {
      const auto p = static_cast<std::uint8_t>(rng.below(256));
      set.pixels.push_back(p);
      v = (p - 128.0) / 64.0;
    }
    for (const auto& row : coef) {
      double t = 0.0;
      for (int k = 0; k < 6; ++k) t += row[k] * x[k];
      set.targets.push_back(static_cast<float>(t));
    }
  }
  return set;
}

Network linear_net() { return Network({1, 2, 3}, {Flatten{}, Dense(6, 3)}); }

TrainConfig quick_config() {
  TrainConfig c;
  c.batch_size = 16;
  c.dropout = 0.0;
  c.max_epochs = 15;
  c.lr = 0.05;
  c.seed = 11;
  return c;
}

}  // namespace

TEST_CASE("plateau schedule on a constant loss") {
  PlateauSchedule s(1.0, 0.5, 10, 10);
  int epoch = 0;
  int decays = 0;
  PlateauSchedule::Decision d;
  do {
    ++epoch;
    d = s.observe(3.0);
    decays += d.decayed;
    if (epoch == 1) CHECK(d.improved);
    if (epoch == 11) CHECK(s.lr() == 0.5);
  } while (!d.stop);
  // One improving epoch, then ten stale epochs before the decay and ten more before stopping.
  CHECK(epoch == 21);
  CHECK(decays == 2);

  // Equal is not an improvement; strictly lower is.
  PlateauSchedule t(1.0, 0.5, 10, 10);
  t.observe(2.0);
  CHECK_FALSE(t.observe(2.0).improved);
  CHECK(t.stale_epochs() == 1);
  CHECK(t.observe(1.999).improved);
  CHECK(t.stale_epochs() == 0);
}

TEST_CASE("training stops at the patience bound when nothing changes") {
  Rng rng(1);
  const auto set = linear_task(64, rng);
  auto cfg = quick_config();
  cfg.lr = 1e-30;  // updates vanish below float resolution
  cfg.momentum = 0.0;
  cfg.weight_decay = 0.0;
  cfg.max_epochs = 100;
  Network net = linear_net();
  init_weights(net, rng);
  // A zero bias would absorb the tiny update exactly; keep every parameter well away from zero.
  std::get<Dense>(net.layers()[1]).bias.fill(0.1f);
  const auto r = train(net, set, set, cfg);
  CHECK(r.log.size() == 21);
  CHECK(r.best_epoch == 1);
  CHECK(r.stop_reason == "validation plateau");
  for (const auto& e : r.log) CHECK(e.val_loss == r.log.front().val_loss);
}

TEST_CASE("loss decreases on a synthetic linear task") {
  Rng rng(2);
  const auto train_set = linear_task(200, rng);
  const auto val_set = linear_task(50, rng);
  Network net = linear_net();
  init_weights(net, rng);
  const double before = evaluate_mse(net, train_set);
  const auto r = train(net, train_set, val_set, quick_config());
  CHECK(r.log.back().train_loss < r.log.front().train_loss);
  CHECK(evaluate_mse(r.best, train_set) < before);
  CHECK(r.best_val_loss < 0.05 * constant_mean_baseline(val_set));
  CHECK(r.best.pixel_mean == 128.0f);
  CHECK(r.best.pixel_std == 64.0f);

  // The returned network is the one with the lowest validation loss.
  double lowest = r.log.front().val_loss;
  for (const auto& e : r.log) lowest = std::min(lowest, e.val_loss);
  CHECK(r.best_val_loss == lowest);
  CHECK(evaluate_mse(r.best, val_set, 16) == doctest::Approx(lowest).epsilon(1e-12));
}

TEST_CASE("a fixed seed reproduces the epoch log") {
  Rng a(3), b(3);
  const auto set_a = linear_task(100, a);
  const auto set_b = linear_task(100, b);
  Network na = Network({1, 2, 3}, {Flatten{}, Dropout{0.3f}, Dense(6, 3)});
  Network nb = na;
  Rng ia(4), ib(4);
  init_weights(na, ia);
  init_weights(nb, ib);
  auto cfg = quick_config();
  cfg.dropout = 0.3;
  const auto ra = train(na, set_a, set_a, cfg);
  const auto rb = train(nb, set_b, set_b, cfg);
  REQUIRE(ra.log.size() == rb.log.size());
  for (std::size_t k = 0; k < ra.log.size(); ++k) {
    CHECK(ra.log[k].train_loss == rb.log[k].train_loss);
    CHECK(ra.log[k].val_loss == rb.log[k].val_loss);
  }
  CHECK(ra.best == rb.best);
}

TEST_CASE("divergence keeps the last good network") {
  Rng rng(5);
  const auto set = linear_task(64, rng);
  auto cfg = quick_config();
  Network net = linear_net();
  init_weights(net, rng);
  cfg.max_epochs = 3;
  const auto calm = train(net, set, set, cfg);
  REQUIRE_FALSE(calm.diverged);

  cfg.lr = 1e6;
  cfg.max_epochs = 50;
  const auto wild = train(calm.best, set, set, cfg);
  CHECK(wild.diverged);
  CHECK(wild.stop_reason.find("divergence") == 0);
  // Whatever was kept still evaluates to a finite loss.
  CHECK(std::isfinite(evaluate_mse(wild.best, set)));
}

TEST_CASE("mismatched standardisation is rejected") {
  Rng rng(6);
  auto a = linear_task(10, rng);
  auto b = a;
  b.pixel_std = 1.0f;
  CHECK_THROWS_AS(train(linear_net(), a, b, quick_config()), Error);
}

TEST_CASE("constant-mean baseline") {
  RegressionSet s;
  s.targets = {1, 0, 0, 3, 0, 2};
  // Mean (2, 0, 1); squared errors 1 + 1 and 1 + 1.
  CHECK(constant_mean_baseline(s) == doctest::Approx(2.0));
}

TEST_CASE("loss CSV layout") {
  const auto path = fs::temp_directory_path() / "vflock_loss.csv";
  const std::vector<EpochLog> log{{1, 0.5, 0.25, 0.005}, {2, 0.125, 0.0625, 0.0025}, {3, 0.1, 0.5, 0.0025}};
  write_loss_csv(path, log);
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  CHECK(ss.str() == "epoch,train_loss,val_loss,best_val_loss,lr\n1,0.5,0.25,0.25,0.005\n2,0.125,0.0625,0.0625,0.0025\n"
                    "3,0.1,0.5,0.0625,0.0025\n");
  fs::remove(path);
}

TEST_CASE("train config validation") {
  TrainConfig c;
  CHECK_NOTHROW(c.validate());
  c.dropout = 1.0;
  CHECK_THROWS_AS(c.validate(), Error);
  c = {};
  c.batch_size = 0;
  CHECK_THROWS_AS(c.validate(), Error);
  c = {};
  c.lr = -1;
  CHECK_THROWS_AS(c.validate(), Error);
}
