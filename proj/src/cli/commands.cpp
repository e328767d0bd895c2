#include "vflock/cli/commands.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include "vflock/dataset.hpp"
#include "vflock/error.hpp"
#include "vflock/format.hpp"
#include "vflock/nn/checkpoint.hpp"

namespace vflock::cli {

namespace fs = std::filesystem;

namespace {

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorKind::Io, "cannot create directory " + dir.string() + ": " + ec.message());
}

std::string outcome_line(const RunSummary& s) {
  std::ostringstream out;
  out << "outcome=" << to_string(s.outcome.kind) << " step=" << s.outcome.step
      << " min_d_min=" << fmt_real(s.min_d_min) << " max_d_max=" << fmt_real(s.max_d_max)
      << " mean_order=" << (s.mean_order ? fmt_real(*s.mean_order) : std::string("nan"))
      << " faults=" << s.faults;
  return out.str();
}

}  // namespace

ExperimentConfig resolve_config(const GlobalOptions& options, std::ostream& notice) {
  ExperimentConfig cfg = options.config ? load_config(*options.config) : ExperimentConfig{};
  for (const auto& kv : options.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw Error(ErrorKind::Config, "override '" + kv + "' is not key=value");
    auto trim = [](std::string s) {
      s.erase(0, s.find_first_not_of(" \t"));
      s.erase(s.find_last_not_of(" \t") + 1);
      return s;
    };
    cfg.set(trim(kv.substr(0, eq)), trim(kv.substr(eq + 1)));
  }
  if (options.seed) {
    cfg.seed = *options.seed;
    cfg.explicit_keys.insert("seed");
  }
  cfg.train.seed = cfg.seed;
  const auto defaulted = cfg.defaulted_keys();
  if (!defaulted.empty()) {
    notice << "notice: using defaults for";
    for (const auto& k : defaulted) notice << ' ' << k;
    notice << '\n';
  }
  cfg.validate();
  return cfg;
}

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Config: return 1;
    case ErrorKind::Io: return 2;
    case ErrorKind::DataFormat: return 3;
    case ErrorKind::Divergence: return 4;
    case ErrorKind::InfeasibleSpawn: return 5;
    default: return 6;
  }
}

void write_manifest(const fs::path& path, const ExperimentConfig& config) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::Io, "cannot open " + path.string() + " for writing");
  out << "# resolved configuration; pass back with --config to reproduce\n" << config.to_text();
  if (!out) throw Error(ErrorKind::Io, "write failed: " + path.string());
}

nn::RegressionSet load_regression_set(const fs::path& path) {
  DatasetReader reader(path);
  nn::RegressionSet set;
  set.input = {1, kImageHeight, kImageWidth};
  set.pixel_mean = reader.header().pixel_mean;
  set.pixel_std = reader.header().pixel_std;
  const std::size_t n = reader.header().sample_count;
  set.pixels.reserve(n * kImageBytes);
  set.targets.reserve(n * 3);
  while (auto s = reader.next()) {
    set.pixels.insert(set.pixels.end(), s->image.pixels.begin(), s->image.pixels.end());
    set.targets.push_back(static_cast<float>(s->target_v_rey_body.x));
    set.targets.push_back(static_cast<float>(s->target_v_rey_body.y));
    set.targets.push_back(static_cast<float>(s->target_v_rey_body.z));
  }
  return set;
}

void cmd_gen(const ExperimentConfig& config, const fs::path& out_dir, std::ostream& log) {
  ensure_dir(out_dir);
  const DatasetPaths paths{out_dir / "train.vsfd", out_dir / "val.vsfd", out_dir / "test.vsfd"};
  const auto summary = build_dataset(config.counts, config.generation(), config.seed, paths);
  write_manifest(out_dir / "manifest", config);
  log << "gen train=" << config.counts.train << " val=" << config.counts.val
      << " test=" << config.counts.test << " runs=" << summary.runs[0] << '/' << summary.runs[1] << '/'
      << summary.runs[2] << " pixel_mean=" << fmt_real(summary.train_header.pixel_mean)
      << " pixel_std=" << fmt_real(summary.train_header.pixel_std) << '\n';
}

nn::TrainResult cmd_train(const ExperimentConfig& config, const TrainPaths& paths, std::ostream& log) {
  const auto train_set = load_regression_set(paths.data_dir / "train.vsfd");
  const auto val_set = load_regression_set(paths.data_dir / "val.vsfd");

  nn::Network net = nn::default_network(config.train.dropout);
  Rng init_rng(derive_seed(config.seed, 0));
  nn::init_weights(net, init_rng);

  nn::TrainConfig tc = config.train;
  tc.seed = config.seed;
  log << "train samples=" << train_set.count() << " val=" << val_set.count()
      << " parameters=" << net.parameter_count() << '\n';
  auto result = nn::train(std::move(net), train_set, val_set, tc, [&](const nn::EpochLog& e) {
    log << "epoch " << e.epoch << " train_loss=" << fmt_real(e.train_loss)
        << " val_loss=" << fmt_real(e.val_loss) << " lr=" << fmt_real(e.lr) << '\n'
        << std::flush;
  });

  if (!paths.checkpoint.parent_path().empty()) ensure_dir(paths.checkpoint.parent_path());
  nn::save_checkpoint(result.best, paths.checkpoint);
  const fs::path loss_csv =
      paths.loss_csv.empty() ? fs::path(paths.checkpoint.string() + ".loss.csv") : paths.loss_csv;
  nn::write_loss_csv(loss_csv, result.log);
  write_manifest(fs::path(paths.checkpoint.string() + ".manifest"), config);

  const double baseline = nn::constant_mean_baseline(val_set);
  log << "best_epoch=" << result.best_epoch << " best_val_mse=" << fmt_real(result.best_val_loss)
      << " baseline_val_mse=" << fmt_real(baseline) << " stop=" << result.stop_reason << '\n';
  if (result.diverged)
    throw Error(ErrorKind::Divergence,
                "training diverged; best checkpoint from epoch " + std::to_string(result.best_epoch) +
                    " saved to " + paths.checkpoint.string());
  return result;
}

RunSummary summarize(const EpisodeResult& result) {
  RunSummary s;
  s.outcome = result.outcome;
  s.faults = result.faults.size();
  if (result.metrics.empty()) return s;
  s.min_d_min = result.metrics.front().d_min;
  s.max_d_max = result.metrics.front().d_max;
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& row : result.metrics) {
    s.min_d_min = std::min(s.min_d_min, row.d_min);
    s.max_d_max = std::max(s.max_d_max, row.d_max);
    if (row.order) {
      sum += *row.order;
      ++n;
    }
  }
  if (n > 0) s.mean_order = sum / static_cast<double>(n);
  return s;
}

namespace {

EpisodeResult run_with(const ExperimentConfig& config, const nn::Network* net) {
  const EpisodeConfig ep = config.episode();
  if (config.controller == ControllerChoice::Vision)
    return run_episode(VisionBased{net, config.filter_alpha}, ep);
  return run_episode(PositionBased{}, ep);
}

RunSummary write_episode(const ExperimentConfig& config, const nn::Network* net, const fs::path& out_dir) {
  ensure_dir(out_dir);
  const auto result = run_with(config, net);
  write_trajectory_csv(out_dir / "trajectory.csv", result.trajectory);
  write_metrics_csv(out_dir / "metrics.csv", result.metrics);
  write_manifest(out_dir / "manifest", config);
  if (!result.faults.empty()) {
    std::ofstream faults(out_dir / "faults.log");
    for (const auto& f : result.faults) faults << f << '\n';
  }
  return summarize(result);
}

}  // namespace

RunSummary cmd_run(const ExperimentConfig& config, const fs::path& out_dir, std::ostream& log) {
  std::optional<nn::Network> net;
  if (config.controller == ControllerChoice::Vision) {
    if (config.checkpoint.empty())
      throw Error(ErrorKind::Config, "the vision controller requires a checkpoint");
    net = nn::load_checkpoint(config.checkpoint);
  }
  const auto summary = write_episode(config, net ? &*net : nullptr, out_dir);
  log << "run " << outcome_line(summary) << '\n';
  return summary;
}

EvalReport cmd_eval(const fs::path& dataset, const fs::path& checkpoint, std::ostream& log) {
  const nn::Network net = nn::load_checkpoint(checkpoint);
  const auto set = load_regression_set(dataset);
  if (set.pixel_mean != net.pixel_mean || set.pixel_std != net.pixel_std)
    log << "warning: dataset statistics differ from the checkpoint; using the checkpoint's\n";
  nn::RegressionSet view = set;
  view.pixel_mean = net.pixel_mean;
  view.pixel_std = net.pixel_std;
  EvalReport report;
  report.samples = set.count();
  report.mse = nn::evaluate_mse(net, view);
  report.baseline_mse = nn::constant_mean_baseline(set);
  log << "eval samples=" << report.samples << " mse=" << fmt_real(report.mse)
      << " baseline_mse=" << fmt_real(report.baseline_mse)
      << " ratio=" << fmt_real(report.mse / report.baseline_mse) << '\n';
  return report;
}

SaliencyMap cmd_saliency(const fs::path& checkpoint, const SaliencySource& source, SaliencyTarget target,
                         double alpha, const fs::path& out_dir, std::ostream& log) {
  const nn::Network net = nn::load_checkpoint(checkpoint);
  CubeImage image;
  if (!source.pgm.empty()) {
    int w = 0;
    int h = 0;
    auto pixels = read_pgm(source.pgm, w, h);
    if (w != kImageWidth || h != kImageHeight)
      throw FormatError(FormatIssue::Shape, source.pgm.string() + ": expected a 384x64 image");
    image.pixels = std::move(pixels);
  } else {
    DatasetReader reader(source.dataset);
    if (source.index >= reader.header().sample_count)
      throw Error(ErrorKind::Config, "sample index " + std::to_string(source.index) + " out of range (" +
                                         std::to_string(reader.header().sample_count) + " samples)");
    std::optional<Sample> s;
    for (std::uint32_t i = 0; i <= source.index; ++i) s = reader.next();
    image = s->image;
  }

  const SaliencyMap map = grad_cam(net, image, target);
  ensure_dir(out_dir);
  write_pgm(out_dir / "input.pgm", image.pixels, kImageWidth, kImageHeight);
  write_ppm(out_dir / "overlay.ppm", blend_overlay(map, image.pixels, alpha), kImageWidth, kImageHeight);
  std::vector<std::uint8_t> heat(3 * map.upsampled.size());
  for (std::size_t i = 0; i < map.upsampled.size(); ++i) {
    const auto c = saliency_color(map.upsampled[i]);
    std::copy(c.begin(), c.end(), heat.begin() + static_cast<std::ptrdiff_t>(3 * i));
  }
  write_ppm(out_dir / "heatmap.ppm", heat, kImageWidth, kImageHeight);
  write_saliency_csv(out_dir / "saliency_raw.csv", map);
  log << "saliency raw=" << map.raw_height << 'x' << map.raw_width << " out=" << out_dir.string() << '\n';
  return map;
}

std::vector<SuiteEntry> cmd_suite(const ExperimentConfig& config, const fs::path& out_dir,
                                  const fs::path& checkpoint, int jobs, bool force, std::ostream& log) {
  if (fs::exists(out_dir)) {
    if (!force)
      throw Error(ErrorKind::Io, "results directory " + out_dir.string() + " exists; pass --force to overwrite");
    std::error_code ec;
    fs::remove_all(out_dir, ec);
    if (ec) throw Error(ErrorKind::Io, "cannot clear " + out_dir.string() + ": " + ec.message());
  }
  ensure_dir(out_dir);

  std::optional<nn::Network> net;
  if (!checkpoint.empty()) net = nn::load_checkpoint(checkpoint);

  struct Job {
    std::string variant;
    ExperimentConfig cfg;
  };
  std::vector<Job> grid;
  auto add = [&](const std::string& name, auto&& tweak) {
    for (const auto controller : {ControllerChoice::Position, ControllerChoice::Vision}) {
      if (controller == ControllerChoice::Vision && !net) continue;
      ExperimentConfig c = config;
      c.controller = controller;
      c.checkpoint = controller == ControllerChoice::Vision ? checkpoint.string() : std::string();
      tweak(c);
      grid.push_back({name, std::move(c)});
    }
  };
  add("common", [](ExperimentConfig& c) { c.goals = GoalMode::Common; });
  add("opposing", [](ExperimentConfig& c) { c.goals = GoalMode::Opposing; });
  add("none", [](ExperimentConfig& c) { c.goals = GoalMode::None; });
  add("n3", [](ExperimentConfig& c) {
    c.goals = GoalMode::Common;
    c.flock.n_agents = 3;
  });
  add("n12", [](ExperimentConfig& c) {
    c.goals = GoalMode::Common;
    c.flock.n_agents = 12;
  });
  add("vmax4", [](ExperimentConfig& c) {
    c.goals = GoalMode::Common;
    c.flock.v_max = 4.0;
  });

  std::vector<SuiteEntry> entries(grid.size());
  std::vector<std::optional<Error>> failures(grid.size());
  std::atomic<std::size_t> next{0};
  std::mutex log_mutex;
  auto worker = [&] {
    for (std::size_t k = next++; k < grid.size(); k = next++) {
      const auto& job = grid[k];
      const std::string controller =
          job.cfg.controller == ControllerChoice::Vision ? "vision" : "position";
      try {
        const auto summary =
            write_episode(job.cfg, net ? &*net : nullptr, out_dir / (job.variant + "_" + controller));
        entries[k] = {job.variant, controller, summary};
        std::lock_guard lock(log_mutex);
        log << "suite " << job.variant << ' ' << controller << ' ' << outcome_line(summary) << '\n';
      } catch (const Error& e) {
        failures[k] = e;
      } catch (const std::exception& e) {
        failures[k] = Error(ErrorKind::Io, e.what());
      }
    }
  };
  const int workers = std::clamp(jobs, 1, static_cast<int>(grid.size()));
  std::vector<std::thread> pool;
  for (int w = 1; w < workers; ++w) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  for (std::size_t k = 0; k < grid.size(); ++k)
    if (failures[k])
      throw Error(failures[k]->kind(), grid[k].variant + ": " + failures[k]->what());

  std::ofstream summary(out_dir / "summary.csv");
  if (!summary) throw Error(ErrorKind::Io, "cannot write summary.csv");
  summary << "variant,controller,n_agents,v_max,goals,outcome,end_step,sim_seconds,min_d_min,max_d_max,"
             "mean_order,faults,collision_free,coherent\n";
  for (std::size_t k = 0; k < grid.size(); ++k) {
    const auto& e = entries[k];
    const auto& c = grid[k].cfg;
    summary << e.variant << ',' << e.controller << ',' << c.flock.n_agents << ',' << fmt_real(c.flock.v_max)
            << ',' << to_string(c.goals) << ',' << to_string(e.summary.outcome.kind) << ','
            << e.summary.outcome.step << ',' << fmt_real(e.summary.outcome.step * c.world.dt) << ','
            << fmt_real(e.summary.min_d_min) << ',' << fmt_real(e.summary.max_d_max) << ','
            << (e.summary.mean_order ? fmt_real(*e.summary.mean_order) : std::string()) << ','
            << e.summary.faults << ',' << (e.summary.min_d_min >= c.world.collision_thresh ? 1 : 0) << ','
            << (e.summary.max_d_max <= c.world.dispersion_thresh ? 1 : 0) << '\n';
  }
  write_manifest(out_dir / "manifest", config);
  return entries;
}

void cmd_stats(const fs::path& dataset, std::ostream& out) {
  DatasetReader reader(dataset);
  const auto& h = reader.header();
  double sum[3] = {0.0, 0.0, 0.0};
  std::size_t n = 0;
  while (auto s = reader.next()) {
    sum[0] += s->target_v_rey_body.x;
    sum[1] += s->target_v_rey_body.y;
    sum[2] += s->target_v_rey_body.z;
    ++n;
  }
  const double denom = n > 0 ? static_cast<double>(n) : 1.0;
  out << "version=" << h.version << " samples=" << h.sample_count << " width=" << h.width
      << " height=" << h.height << " pixel_mean=" << fmt_real(h.pixel_mean)
      << " pixel_std=" << fmt_real(h.pixel_std) << '\n'
      << "target_mean=" << fmt_real(sum[0] / denom) << ',' << fmt_real(sum[1] / denom) << ','
      << fmt_real(sum[2] / denom) << '\n';
}

}  // namespace vflock::cli
