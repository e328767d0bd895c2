#include <doctest.h>

#include <cmath>

#include "vflock/controller.hpp"
#include "vflock/dataset.hpp"
#include "vflock/error.hpp"

using namespace vflock;

namespace {

std::vector<AgentState> random_agents(Rng& rng, int n) {
  std::vector<AgentState> a;
  for (int i = 0; i < n; ++i)
    a.push_back({i,
                 {rng.uniform(-6, 6), rng.uniform(-6, 6), rng.uniform(-6, 6)},
                 {rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)},
                 rng.uniform(-M_PI, M_PI)});
  return a;
}

nn::Network zero_network() {
  nn::Network net = nn::default_network();
  net.pixel_mean = 200.0f;
  net.pixel_std = 20.0f;
  return net;
}

}  // namespace

TEST_CASE("position command is the full flocking command") {
  Rng rng(41);
  const FlockParams params;
  for (int trial = 0; trial < 200; ++trial) {
    const auto agents = random_agents(rng, 2 + static_cast<int>(rng.below(10)));
    const Vec3 goal{rng.uniform(-20, 20), rng.uniform(-20, 20), rng.uniform(-20, 20)};
    for (std::size_t i = 0; i < agents.size(); ++i) {
      CHECK(position_cmd(i, agents, &goal, params) == full_command(i, agents, &goal, params).v_total);
      CHECK(position_cmd(i, agents, nullptr, params) == full_command(i, agents, nullptr, params).v_total);
    }
  }
  const std::vector<AgentState> lone{{0, {0, 0, 0}, {}, 0}};
  const Vec3 goal{15, 0, 0};
  CHECK(position_cmd(0, lone, &goal, params) == Vec3{1, 0, 0});

  FlockParams zero = params;
  zero.k_sep = zero.k_coh = zero.k_mig = 0.0;
  const auto agents = random_agents(rng, 5);
  for (std::size_t i = 0; i < agents.size(); ++i) CHECK(position_cmd(i, agents, &goal, zero) == Vec3{});
}

TEST_CASE("zero network leaves the migration term alone") {
  const nn::Network net = zero_network();
  const NetworkPredictor predict(net);
  const FlockParams params;
  const AgentState agent{0, {1, 2, 3}, {}, 0.7};
  const Vec3 goal{15, 0, 0};
  const CubeImage image;
  const auto vc = vision_cmd(agent, image, &goal, params, predict);
  CHECK_FALSE(vc.fault);
  CHECK(vc.command == migration_cmd(goal - agent.position, params.k_mig));
  CHECK(vision_cmd(agent, image, nullptr, params, predict).command == Vec3{});
}

TEST_CASE("a predictor returning the stored target reproduces the position command") {
  GenerationConfig g;
  g.flock.n_agents = 5;
  Rng rng(42);
  const auto run = generate_run(0, g, rng);
  const Vec3 goal = g.goal();
  const std::size_t n = static_cast<std::size_t>(g.flock.n_agents);
  for (std::size_t base = 0; base + n <= run.samples.size(); base += 7 * n) {
    std::vector<AgentState> poses;
    for (std::size_t i = 0; i < n; ++i) {
      const auto& s = run.samples[base + i];
      poses.push_back({s.agent_id, s.position, {}, s.yaw});
    }
    for (std::size_t i = 0; i < n; ++i) {
      const Sample& s = run.samples[base + i];
      const BodyPredictor oracle = [&](const CubeImage& img) {
        REQUIRE(img == s.image);
        return s.target_v_rey_body;
      };
      const Vec3 got = vision_cmd(poses[i], s.image, &goal, g.flock, oracle).command;
      const Vec3 want = position_cmd(i, poses, &goal, g.flock);
      CHECK(norm(got - want) <= 1e-6 * std::max(1.0, norm(want)));
    }
  }
}

TEST_CASE("vision commands respect the speed limit") {
  const FlockParams params;
  const AgentState agent{0, {}, {}, -1.2};
  const Vec3 goal{0, 15, 0};
  const BodyPredictor big = [](const CubeImage&) { return Vec3{30, -40, 5}; };
  const auto vc = vision_cmd(agent, CubeImage{}, &goal, params, big);
  CHECK(norm(vc.command) == doctest::Approx(params.v_max).epsilon(1e-12));
}

TEST_CASE("low-pass filter") {
  LowPassFilter identity(2, 1.0);
  CHECK(identity.apply(0, {1, 2, 3}) == Vec3{1, 2, 3});
  CHECK(identity.apply(0, {-4, 0, 1}) == Vec3{-4, 0, 1});

  LowPassFilter half(2, 0.5);
  CHECK(half.apply(1, {2, 0, 0}) == Vec3{2, 0, 0});
  CHECK(half.apply(1, {0, 2, 0}) == Vec3{1, 1, 0});
  CHECK(half.apply(1, {0, 2, 0}) == Vec3{0.5, 1.5, 0});
  CHECK(half.apply(0, {4, 4, 4}) == Vec3{4, 4, 4});  // agents are independent

  CHECK_THROWS_AS(LowPassFilter(1, 0.0), Error);
  CHECK_THROWS_AS(LowPassFilter(1, 1.5), Error);
}

TEST_CASE("non-finite predictions become a logged zero command") {
  const FlockParams params;
  const Vec3 goal{15, 0, 0};
  const BodyPredictor broken = [](const CubeImage&) { return Vec3{NAN, 0, 0}; };
  const auto vc = vision_cmd(AgentState{}, CubeImage{}, &goal, params, broken);
  CHECK(vc.fault);
  CHECK(vc.command == Vec3{});

  nn::Network net = zero_network();
  std::get<nn::Dense>(net.layers().back()).bias[0] = NAN;
  EpisodeConfig ep;
  ep.flock.n_agents = 2;
  ep.world.max_steps = 3;
  ep.world.rng_seed = 3;
  const auto r = run_episode(VisionBased{&net, std::nullopt}, ep);
  CHECK(r.faults.size() == 6);
  for (const auto& row : r.trajectory) CHECK(row.command == Vec3{});
}

TEST_CASE("a lone vision agent with a zero network flies straight to its goal") {
  const nn::Network net = zero_network();
  EpisodeConfig ep;
  ep.flock.n_agents = 1;
  ep.world.rng_seed = 9;
  const auto r = run_episode(VisionBased{&net, std::nullopt}, ep);
  CHECK(r.outcome.kind == Outcome::GoalReached);
  CHECK(r.faults.empty());
  const Vec3 start = r.trajectory.front().position;
  const Vec3 goal{ep.goal_distance, 0, 0};
  const Vec3 dir = (goal - start) / norm(goal - start);
  for (const auto& row : r.trajectory) {
    const Vec3 off = row.position - start;
    CHECK(norm(off - dir * dot(off, dir)) < 1e-9);
    CHECK(dot(off, dir) >= -1e-12);
  }
}

TEST_CASE("episodes are deterministic and synchronous") {
  EpisodeConfig ep;
  ep.world.rng_seed = 5;
  ep.world.max_steps = 60;
  const auto a = run_episode(PositionBased{}, ep);
  const auto b = run_episode(PositionBased{}, ep);
  REQUIRE(a.trajectory.size() == b.trajectory.size());
  for (std::size_t k = 0; k < a.trajectory.size(); ++k) {
    CHECK(a.trajectory[k].position == b.trajectory[k].position);
    CHECK(a.trajectory[k].command == b.trajectory[k].command);
  }
  CHECK(a.outcome == b.outcome);

  // Every command of a step is computed from that step's snapshot.
  const std::size_t n = static_cast<std::size_t>(ep.flock.n_agents);
  const auto goals = make_goals(ep.goals, ep.flock.n_agents, ep.goal_distance);
  for (std::size_t base = 0; base + n <= a.trajectory.size(); base += n) {
    std::vector<AgentState> snap;
    for (std::size_t i = 0; i < n; ++i) {
      const auto& row = a.trajectory[base + i];
      snap.push_back({row.agent_id, row.position, row.velocity, row.yaw});
    }
    for (std::size_t i = 0; i < n; ++i)
      CHECK(a.trajectory[base + i].command == position_cmd(i, snap, &*goals[i], ep.flock));
  }
}

TEST_CASE("goal assignments") {
  const auto common = make_goals(GoalMode::Common, 9, 15.0);
  for (const auto& g : common) CHECK(g == Vec3{15, 0, 0});
  const auto opposing = make_goals(GoalMode::Opposing, 9, 15.0);
  int right = 0;
  for (const auto& g : opposing) right += g->x > 0;
  CHECK(right == 5);
  CHECK(opposing[4]->x == 15.0);
  CHECK(opposing[5]->x == -15.0);
  for (const auto& g : make_goals(GoalMode::None, 4, 15.0)) CHECK_FALSE(g.has_value());
}

TEST_CASE("vision controller needs standardisation statistics") {
  nn::Network net = nn::default_network();
  CHECK_THROWS_AS(NetworkPredictor{net}, Error);
  EpisodeConfig ep;
  CHECK_THROWS_AS(run_episode(VisionBased{}, ep), Error);
}
