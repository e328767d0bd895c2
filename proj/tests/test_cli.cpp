#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <unistd.h>

#include "vflock/cli/commands.hpp"
#include "vflock/cli/config.hpp"
#include "vflock/error.hpp"

using namespace vflock;
using namespace vflock::cli;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("vflock_cli_" + std::to_string(::getpid()) + "_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

/// Runs the tool with `args`, output discarded; returns the exit status.
int run_tool(const std::string& args) {
  const std::string cmd = std::string("\"") + VFLOCK_BINARY + "\" " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

ErrorKind parse_failure(const std::string& text, std::string* message = nullptr) {
  try {
    parse_config(text, "test.cfg");
  } catch (const Error& e) {
    if (message) *message = e.what();
    return e.kind();
  }
  FAIL("expected a parse failure");
  return ErrorKind::InvalidArgument;
}

// Small enough to generate and train in seconds.
const std::string kTiny =
    "--set n_train=48 --set n_val=16 --set n_test=16 --set max_epochs=2 --set batch_size=16 ";

}  // namespace

TEST_CASE("config parsing") {
  const auto cfg = parse_config(
      "# comment line\n"
      "n_agents = 12\n"
      "\n"
      "  v_max=4   # trailing comment\n"
      "goals = opposing\n"
      "tracking = lag\n"
      "filter_alpha = 0.5\n"
      "seed = 99\n");
  CHECK(cfg.flock.n_agents == 12);
  CHECK(cfg.flock.v_max == 4.0);
  CHECK(cfg.goals == GoalMode::Opposing);
  CHECK(cfg.world.tracking == Tracking::Lag);
  CHECK(cfg.filter_alpha == 0.5);
  CHECK(cfg.seed == 99);
  CHECK(cfg.explicit_keys.count("v_max") == 1);
  const auto defaulted = cfg.defaulted_keys();
  CHECK(std::find(defaulted.begin(), defaulted.end(), "r_max") != defaulted.end());
  CHECK(std::find(defaulted.begin(), defaulted.end(), "v_max") == defaulted.end());

  // Defaults follow the reference parameter table.
  const ExperimentConfig d;
  CHECK(d.flock.n_agents == 9);
  CHECK(d.flock.r_max == 20.0);
  CHECK(d.flock.v_max == 2.0);
  CHECK(d.flock.k_sep == 7.0);
  CHECK(d.flock.k_coh == 1.0);
  CHECK(d.flock.k_mig == 1.0);
  CHECK(d.train.batch_size == 128);
  CHECK(d.train.weight_decay == 5e-4);
  CHECK(d.train.momentum == 0.9);
  CHECK(d.train.lr == 5e-3);
  CHECK(d.train.dropout == 0.5);
}

TEST_CASE("config errors name the offending line") {
  std::string msg;
  CHECK(parse_failure("n_agents = 3\nbogus_key = 1\n", &msg) == ErrorKind::Config);
  CHECK(msg.find("test.cfg:2") != std::string::npos);
  CHECK(msg.find("bogus_key") != std::string::npos);
  CHECK(parse_failure("n_agents 3\n") == ErrorKind::Config);
  CHECK(parse_failure("n_agents = 3\nn_agents = 4\n") == ErrorKind::Config);
  CHECK(parse_failure("n_agents = three\n") == ErrorKind::Config);
  CHECK(parse_failure("goals = sideways\n") == ErrorKind::Config);
  CHECK(parse_failure("v_max = 2x\n") == ErrorKind::Config);
  try {
    load_config("/nonexistent/vflock.cfg");
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Io);
  }
}

TEST_CASE("canonical text round-trips") {
  auto cfg = parse_config("n_agents = 3\nk_sep = 6.5\ngoals = none\nfilter_alpha = 0.25\ncheckpoint = a b.vsnn\n");
  const std::string text = cfg.to_text();
  const auto back = parse_config(text);
  CHECK(back.to_text() == text);
  CHECK(back.flock.k_sep == 6.5);
  CHECK(back.checkpoint == "a b.vsnn");
  for (const auto& key : config_keys()) CHECK(text.find(key + " = ") != std::string::npos);

  // Values survive to the last bit.
  ExperimentConfig odd;
  odd.set("lag_tau", "0.1234567890123456789");
  CHECK(parse_config(odd.to_text()).world.lag_tau == odd.world.lag_tau);
}

TEST_CASE("exit codes follow the error kind") {
  CHECK(exit_code(ErrorKind::Config) == 1);
  CHECK(exit_code(ErrorKind::Io) == 2);
  CHECK(exit_code(ErrorKind::DataFormat) == 3);
  CHECK(exit_code(ErrorKind::Divergence) == 4);
  CHECK(exit_code(ErrorKind::InfeasibleSpawn) == 5);
  CHECK(exit_code(ErrorKind::UndefinedMetric) == 6);

  const auto dir = scratch("codes");
  {
    std::ofstream bad(dir / "bad.cfg");
    bad << "not_a_key = 1\n";
  }
  CHECK(run_tool("--config " + (dir / "bad.cfg").string() + " run --out " + (dir / "x").string()) == 1);
  CHECK(run_tool("run --controller vision --out " + (dir / "v").string()) == 1);
  CHECK(run_tool("eval --data " + (dir / "missing.vsfd").string() + " --checkpoint " +
               (dir / "missing.vsnn").string()) == 2);
  {
    std::ofstream junk(dir / "junk.vsfd", std::ios::binary);
    junk << "this is not a dataset at all, just text";
  }
  CHECK(run_tool("stats --data " + (dir / "junk.vsfd").string()) == 3);
  CHECK(run_tool("--set n_agents=2000 run --out " + (dir / "crowd").string()) == 5);
  CHECK(run_tool("--set lr=1e12 --set momentum=0.99 " + kTiny + "gen --out " + (dir / "d").string()) == 0);
  CHECK(run_tool("--set lr=1e12 --set momentum=0.99 " + kTiny + "train --data " + (dir / "d").string() +
               " --out " + (dir / "net.vsnn").string()) == 4);
  CHECK(run_tool("no-such-command") != 0);
  fs::remove_all(dir);
}

TEST_CASE("same seed gives byte-identical outputs and manifests replay them") {
  const auto dir = scratch("determinism");
  const auto a = dir / "a", b = dir / "b", c = dir / "c";
  REQUIRE(run_tool("--seed 3 --set max_steps=150 run --out " + a.string()) == 0);
  REQUIRE(run_tool("--seed 3 --set max_steps=150 run --out " + b.string()) == 0);
  REQUIRE(run_tool("--config " + (a / "manifest").string() + " run --out " + c.string()) == 0);
  for (const char* f : {"trajectory.csv", "metrics.csv", "manifest"}) {
    const auto ref = slurp(a / f);
    CHECK_FALSE(ref.empty());
    CHECK(slurp(b / f) == ref);
    CHECK(slurp(c / f) == ref);
  }
  CHECK(slurp(a / "trajectory.csv").rfind("step,agent_id,px,py,pz,vx,vy,vz,yaw,cmd_x,cmd_y,cmd_z\n", 0) == 0);

  REQUIRE(run_tool("--seed 4 " + kTiny + "gen --out " + (dir / "g1").string()) == 0);
  REQUIRE(run_tool("--seed 4 " + kTiny + "gen --out " + (dir / "g2").string()) == 0);
  for (const char* f : {"train.vsfd", "val.vsfd", "test.vsfd"})
    CHECK(slurp(dir / "g1" / f) == slurp(dir / "g2" / f));
  REQUIRE(run_tool("--seed 4 " + kTiny + "train --data " + (dir / "g1").string() + " --out " +
                 (dir / "n1.vsnn").string()) == 0);
  REQUIRE(run_tool("--seed 4 " + kTiny + "train --data " + (dir / "g2").string() + " --out " +
                 (dir / "n2.vsnn").string()) == 0);
  CHECK(slurp(dir / "n1.vsnn") == slurp(dir / "n2.vsnn"));
  CHECK(slurp(dir / "n1.vsnn.loss.csv") == slurp(dir / "n2.vsnn.loss.csv"));
  fs::remove_all(dir);
}

TEST_CASE("the suite refuses to overwrite results without --force") {
  const auto dir = scratch("suite");
  const auto out = dir / "results";
  fs::create_directories(out);
  { std::ofstream(out / "keep.txt") << "precious"; }
  CHECK(run_tool("--set max_steps=20 suite --out " + out.string()) != 0);
  CHECK(slurp(out / "keep.txt") == "precious");
  CHECK(run_tool("--force --jobs 2 --set max_steps=20 suite --out " + out.string()) == 0);
  CHECK_FALSE(fs::exists(out / "keep.txt"));
  const auto summary = slurp(out / "summary.csv");
  CHECK(summary.rfind("variant,controller,", 0) == 0);
  for (const char* v : {"common", "opposing", "none", "n3", "n12", "vmax4"})
    CHECK(fs::exists(out / (std::string(v) + "_position") / "metrics.csv"));
  fs::remove_all(dir);
}
