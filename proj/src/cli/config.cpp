#include "vflock/cli/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

#include "vflock/error.hpp"

namespace vflock::cli {

namespace {

Error config_error(const std::string& what) { return Error(ErrorKind::Config, what); }

/// Shortest text that parses back to the same double, so manifests replay exactly.
std::string exact_real(double v) {
  char buf[32];
  const auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double parse_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw config_error("key '" + key + "': expected a real number, got '" + v + "'");
  }
}

template <class Int>
Int parse_int(const std::string& key, const std::string& v) {
  Int out{};
  const auto* end = v.data() + v.size();
  const auto [ptr, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc{} || ptr != end)
    throw config_error("key '" + key + "': expected an integer, got '" + v + "'");
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw config_error("key '" + key + "': expected true or false, got '" + v + "'");
}

struct Field {
  std::string name;
  std::function<void(ExperimentConfig&, const std::string&)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

#define VF_REAL(key, member)                                                                    \
  Field {                                                                                       \
    key, [](ExperimentConfig& c, const std::string& v) { c.member = parse_double(key, v); },    \
        [](const ExperimentConfig& c) { return exact_real(c.member); }                            \
  }
#define VF_INT(key, member, type)                                                               \
  Field {                                                                                       \
    key, [](ExperimentConfig& c, const std::string& v) { c.member = parse_int<type>(key, v); }, \
        [](const ExperimentConfig& c) { return std::to_string(c.member); }                      \
  }

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      VF_INT("seed", seed, std::uint64_t),
      VF_INT("n_agents", flock.n_agents, int),
      VF_REAL("r_max", flock.r_max),
      VF_REAL("v_max", flock.v_max),
      VF_REAL("k_sep", flock.k_sep),
      VF_REAL("k_coh", flock.k_coh),
      VF_REAL("k_mig", flock.k_mig),
      VF_REAL("dt", world.dt),
      VF_REAL("spawn_cube_side", world.spawn_cube_side),
      VF_REAL("spawn_min_dist", world.spawn_min_dist),
      VF_REAL("goal_radius", world.goal_radius),
      VF_REAL("collision_thresh", world.collision_thresh),
      VF_REAL("dispersion_thresh", world.dispersion_thresh),
      VF_INT("max_steps", world.max_steps, int),
      Field{"tracking",
            [](ExperimentConfig& c, const std::string& v) {
              if (v == "perfect") c.world.tracking = Tracking::Perfect;
              else if (v == "lag") c.world.tracking = Tracking::Lag;
              else throw config_error("key 'tracking': expected perfect or lag, got '" + v + "'");
            },
            [](const ExperimentConfig& c) {
              return std::string(c.world.tracking == Tracking::Perfect ? "perfect" : "lag");
            }},
      VF_REAL("lag_tau", world.lag_tau),
      VF_REAL("agent_radius", style.agent_radius),
      VF_REAL("agent_intensity", style.agent_intensity),
      VF_REAL("background_intensity", style.background_intensity),
      Field{"shading",
            [](ExperimentConfig& c, const std::string& v) {
              if (v == "flat") c.style.shading = Shading::Flat;
              else if (v == "attenuated") c.style.shading = Shading::DistanceAttenuated;
              else throw config_error("key 'shading': expected flat or attenuated, got '" + v + "'");
            },
            [](const ExperimentConfig& c) {
              return std::string(c.style.shading == Shading::Flat ? "flat" : "attenuated");
            }},
      VF_REAL("attenuation_range", style.attenuation_range),
      Field{"horizon_gradient",
            [](ExperimentConfig& c, const std::string& v) {
              c.style.horizon_gradient = parse_bool("horizon_gradient", v);
            },
            [](const ExperimentConfig& c) { return std::string(c.style.horizon_gradient ? "true" : "false"); }},
      VF_REAL("goal_distance", goal_distance),
      VF_REAL("cone_half_angle_deg", cone_half_angle_deg),
      VF_REAL("cone_speed", cone_speed),
      VF_INT("n_train", counts.train, std::uint32_t),
      VF_INT("n_val", counts.val, std::uint32_t),
      VF_INT("n_test", counts.test, std::uint32_t),
      VF_INT("batch_size", train.batch_size, int),
      VF_REAL("weight_decay", train.weight_decay),
      VF_REAL("momentum", train.momentum),
      VF_REAL("lr", train.lr),
      VF_REAL("lr_decay", train.lr_decay),
      VF_INT("plateau_patience", train.plateau_patience, int),
      VF_REAL("dropout", train.dropout),
      VF_INT("early_stop_patience", train.early_stop_patience, int),
      VF_INT("max_epochs", train.max_epochs, int),
      Field{"controller",
            [](ExperimentConfig& c, const std::string& v) {
              if (v == "position") c.controller = ControllerChoice::Position;
              else if (v == "vision") c.controller = ControllerChoice::Vision;
              else throw config_error("key 'controller': expected position or vision, got '" + v + "'");
            },
            [](const ExperimentConfig& c) {
              return std::string(c.controller == ControllerChoice::Position ? "position" : "vision");
            }},
      Field{"checkpoint", [](ExperimentConfig& c, const std::string& v) { c.checkpoint = v; },
            [](const ExperimentConfig& c) { return c.checkpoint; }},
      Field{"goals",
            [](ExperimentConfig& c, const std::string& v) {
              if (v == "common") c.goals = GoalMode::Common;
              else if (v == "opposing") c.goals = GoalMode::Opposing;
              else if (v == "none") c.goals = GoalMode::None;
              else throw config_error("key 'goals': expected common, opposing or none, got '" + v + "'");
            },
            [](const ExperimentConfig& c) { return std::string(to_string(c.goals)); }},
      Field{"stop_at_goal",
            [](ExperimentConfig& c, const std::string& v) { c.stop_at_goal = parse_bool("stop_at_goal", v); },
            [](const ExperimentConfig& c) { return std::string(c.stop_at_goal ? "true" : "false"); }},
      Field{"filter_alpha",
            [](ExperimentConfig& c, const std::string& v) {
              if (v == "off") c.filter_alpha.reset();
              else c.filter_alpha = parse_double("filter_alpha", v);
            },
            [](const ExperimentConfig& c) {
              return c.filter_alpha ? exact_real(*c.filter_alpha) : std::string("off");
            }},
  };
  return table;
}

#undef VF_REAL
#undef VF_INT

}  // namespace

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys = [] {
    std::vector<std::string> k;
    for (const auto& f : fields()) k.push_back(f.name);
    return k;
  }();
  return keys;
}

void ExperimentConfig::set(const std::string& key, const std::string& value) {
  for (const auto& f : fields()) {
    if (f.name == key) {
      f.set(*this, value);
      explicit_keys.insert(key);
      return;
    }
  }
  throw config_error("unknown config key '" + key + "'");
}

std::string ExperimentConfig::to_text() const {
  std::ostringstream out;
  for (const auto& f : fields()) out << f.name << " = " << f.get(*this) << '\n';
  return out.str();
}

std::vector<std::string> ExperimentConfig::defaulted_keys() const {
  std::vector<std::string> out;
  for (const auto& f : fields())
    if (!explicit_keys.contains(f.name)) out.push_back(f.name);
  return out;
}

GenerationConfig ExperimentConfig::generation() const {
  GenerationConfig g;
  g.world = world;
  g.flock = flock;
  g.style = style;
  g.goal_distance = goal_distance;
  g.cone_half_angle_deg = cone_half_angle_deg;
  g.cone_speed = cone_speed;
  return g;
}

EpisodeConfig ExperimentConfig::episode() const {
  EpisodeConfig e;
  e.world = world;
  e.world.rng_seed = seed;
  e.flock = flock;
  e.style = style;
  e.goals = goals;
  e.goal_distance = goal_distance;
  e.stop_at_goal = stop_at_goal;
  return e;
}

void ExperimentConfig::validate() const {
  try {
    flock.validate();
    world.validate();
    style.validate();
  } catch (const Error& e) {
    throw config_error(e.what());
  }
  train.validate();
  if (counts.train < 1 || counts.val < 1 || counts.test < 1)
    throw config_error("dataset split counts must be at least 1");
  if (!(cone_half_angle_deg > 0.0 && cone_half_angle_deg < 90.0))
    throw config_error("cone_half_angle_deg must be in (0, 90)");
  if (!(cone_speed > 0.0)) throw config_error("cone_speed must be positive");
  if (filter_alpha && !(*filter_alpha > 0.0 && *filter_alpha <= 1.0))
    throw config_error("filter_alpha must be in (0, 1] or off");
}

ExperimentConfig parse_config(const std::string& text, const std::string& origin) {
  ExperimentConfig cfg;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw config_error(origin + ":" + std::to_string(lineno) + ": expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (cfg.explicit_keys.contains(key))
      throw config_error(origin + ":" + std::to_string(lineno) + ": duplicate key '" + key + "'");
    try {
      cfg.set(key, value);
    } catch (const Error& e) {
      throw config_error(origin + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot open config " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str(), path.string());
}

}  // namespace vflock::cli
