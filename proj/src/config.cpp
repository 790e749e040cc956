#include "coopmarl/config.hpp"

#include <fstream>
#include <map>
#include <sstream>

#include "coopmarl/errors.hpp"

namespace coopmarl::harness {

using nlohmann::json;

namespace {

const std::vector<std::pair<std::string, std::string>>& field_descriptions() {
  static const std::vector<std::pair<std::string, std::string>> docs = {
      {"world.num_red", "number of red (pursuer) agents"},
      {"world.num_green", "number of green (evader) agents"},
      {"world.num_obstacles", "number of static circular obstacles"},
      {"world.arena_half_width", "spawn square half width; soft wall starts near it"},
      {"world.dt", "integration step in seconds"},
      {"world.damping", "velocity damping per step, in [0, 1)"},
      {"world.red_max_speed", "speed clamp for red agents"},
      {"world.green_max_speed", "speed clamp for green agents"},
      {"world.force_magnitude", "push applied by a directional action"},
      {"world.agent_mass", "mass of every agent"},
      {"world.red_radius", "collision radius of red agents"},
      {"world.green_radius", "collision radius of green agents"},
      {"world.obstacle_radius", "radius of obstacles"},
      {"world.contact_stiffness", "obstacle contact spring constant"},
      {"world.episode_length", "environment step limit per episode"},
      {"world.shared_catch_reward", "every red agent earns the catch reward when any red catches"},
      {"world.catch_reward", "red reward per caught green agent"},
      {"world.caught_penalty", "green reward per red agent touching it"},
      {"world.chase_shaping", "red penalty per unit distance to the nearest green"},
      {"world.water_shaping", "green penalty per unit distance to the water"},
      {"world.boundary.inner_fraction", "fraction of the half width where the wall penalty starts"},
      {"world.boundary.linear_slope", "wall penalty slope inside the arena"},
      {"world.boundary.exp_rate", "wall penalty growth rate outside the arena"},
      {"world.boundary.exp_cap", "cap on the exponential wall term"},
      {"world.boundary.outer_offset", "constant added outside the arena"},
      {"world.boundary.weight", "overall wall penalty scale (0 disables)"},
      {"train.algorithm", "\"maddpg\" (reference target) or \"cooperative\" (bonus gate)"},
      {"train.episodes", "training episodes per seed"},
      {"train.max_episode_length", "step cap per training episode"},
      {"train.gamma", "discount factor in [0, 1)"},
      {"train.tau", "target network tracking rate in (0, 1]"},
      {"train.batch_size", "minibatch size per agent update"},
      {"train.buffer_capacity", "replay buffer capacity"},
      {"train.update_every", "environment steps between update rounds"},
      {"train.warmup", "transitions stored before learning starts"},
      {"train.bonus.enabled", "apply the cooperation multiplier (cooperative algorithm only)"},
      {"train.bonus.threshold", "L: bonus fires when more than L teammates have positive reward; \"inf\" never fires"},
      {"train.bonus.phi", "multiplier applied to the agent's reward when the gate fires"},
      {"train.bonus.apply_to_red", "gate active for the red team"},
      {"train.bonus.apply_to_green", "gate active for the green team"},
      {"train.temperature", "Gumbel-softmax temperature"},
      {"train.actor_lr", "Adam learning rate for actors"},
      {"train.critic_lr", "Adam learning rate for critics"},
      {"train.hidden_layers", "hidden layer widths for actors and critics"},
      {"train.bootstrap_on_timeout", "bootstrap from the target critic at the episode step cap"},
      {"seeds", "run seeds; one training run per seed"},
      {"output_dir", "directory for metrics, checkpoints and the manifest"},
      {"eval_every", "episodes between greedy evaluations (0 disables)"},
      {"eval_episodes", "episodes per greedy evaluation"},
      {"smoothing_window", "moving-average window for plots"},
      {"checkpoint_every", "episodes between periodic checkpoints (0 disables)"},
      {"final_checkpoint", "write a checkpoint when a seed finishes"},
      {"record_wall_time", "fill the wall_ms metrics column (makes CSVs non-reproducible)"},
  };
  return docs;
}

std::string algorithm_name(maddpg::Algorithm a) {
  return a == maddpg::Algorithm::kMaddpg ? "maddpg" : "cooperative";
}

maddpg::Algorithm parse_algorithm(const std::string& name) {
  if (name == "maddpg") return maddpg::Algorithm::kMaddpg;
  if (name == "cooperative") return maddpg::Algorithm::kCooperative;
  throw ConfigError("train.algorithm must be \"maddpg\" or \"cooperative\", got \"" + name + "\"");
}

const char* type_label(const json& j) { return j.type_name(); }

void merge_into(json& base, const json& user, const std::string& prefix) {
  if (!user.is_object()) throw ConfigError("config section '" + prefix + "' must be an object");
  for (auto it = user.begin(); it != user.end(); ++it) {
    const std::string key = prefix.empty() ? it.key() : prefix + "." + it.key();
    if (!base.contains(it.key())) throw ConfigError("unknown config key '" + key + "'");
    json& slot = base[it.key()];
    const json& value = it.value();
    if (slot.is_object()) {
      merge_into(slot, value, key);
    } else if (key == "train.bonus.threshold" && value.is_string()) {
      if (value.get<std::string>() != "inf")
        throw ConfigError("train.bonus.threshold must be an integer or \"inf\"");
      slot = maddpg::kGateNeverFires;
    } else if (slot.is_number_integer() || slot.is_number_unsigned()) {
      if (!value.is_number_integer() && !value.is_number_unsigned())
        throw ConfigError("config key '" + key + "' expects an integer, got " + type_label(value));
      slot = value;
    } else if (slot.is_number_float()) {
      if (!value.is_number()) throw ConfigError("config key '" + key + "' expects a number, got " + type_label(value));
      slot = value.get<double>();
    } else if (slot.type() != value.type()) {
      throw ConfigError("config key '" + key + "' expects " + type_label(slot) + ", got " +
                        type_label(value));
    } else {
      slot = value;
    }
  }
}

void flatten(const json& tree, const std::string& prefix, std::map<std::string, std::string>& out) {
  for (auto it = tree.begin(); it != tree.end(); ++it) {
    const std::string key = prefix.empty() ? it.key() : prefix + "." + it.key();
    if (it.value().is_object()) {
      flatten(it.value(), key, out);
    } else {
      out[key] = it.value().dump();
    }
  }
}

template <typename T>
T field(const json& j, const char* key, const std::string& section) {
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError("config key '" + section + "." + key + "': " + e.what());
  }
}

}  // namespace

void ExperimentConfig::validate() const {
  world.validate();
  train.validate();
  if (seeds.empty()) throw ConfigError("seeds must be nonempty");
  if (smoothing_window < 1) throw ConfigError("smoothing_window must be >= 1");
  if (eval_every < 0 || eval_episodes < 0) throw ConfigError("eval settings must be >= 0");
  if (checkpoint_every < 0) throw ConfigError("checkpoint_every must be >= 0");
  if (output_dir.empty()) throw ConfigError("output_dir must be set");
}

maddpg::TrainConfig ExperimentConfig::train_for_seed(std::uint64_t seed) const {
  maddpg::TrainConfig t = train;
  t.seed = seed;
  return t;
}

json to_json(const ExperimentConfig& c) {
  const env::WorldConfig& w = c.world;
  const maddpg::TrainConfig& t = c.train;
  json world = {
      {"num_red", w.num_red},
      {"num_green", w.num_green},
      {"num_obstacles", w.num_obstacles},
      {"arena_half_width", w.arena_half_width},
      {"dt", w.dt},
      {"damping", w.damping},
      {"red_max_speed", w.red_max_speed},
      {"green_max_speed", w.green_max_speed},
      {"force_magnitude", w.force_magnitude},
      {"agent_mass", w.agent_mass},
      {"red_radius", w.red_radius},
      {"green_radius", w.green_radius},
      {"obstacle_radius", w.obstacle_radius},
      {"contact_stiffness", w.contact_stiffness},
      {"episode_length", w.episode_length},
      {"shared_catch_reward", w.shared_catch_reward},
      {"catch_reward", w.catch_reward},
      {"caught_penalty", w.caught_penalty},
      {"chase_shaping", w.chase_shaping},
      {"water_shaping", w.water_shaping},
      {"boundary",
       {{"inner_fraction", w.boundary.inner_fraction},
        {"linear_slope", w.boundary.linear_slope},
        {"exp_rate", w.boundary.exp_rate},
        {"exp_cap", w.boundary.exp_cap},
        {"outer_offset", w.boundary.outer_offset},
        {"weight", w.boundary.weight}}},
  };
  json train = {
      {"algorithm", algorithm_name(t.algorithm)},
      {"episodes", t.episodes},
      {"max_episode_length", t.max_episode_length},
      {"gamma", t.gamma},
      {"tau", t.tau},
      {"batch_size", t.batch_size},
      {"buffer_capacity", t.buffer_capacity},
      {"update_every", t.update_every},
      {"warmup", t.warmup},
      {"bonus",
       {{"enabled", t.bonus.enabled},
        {"threshold", t.bonus.threshold},
        {"phi", t.bonus.phi},
        {"apply_to_red", t.bonus.apply_to_red},
        {"apply_to_green", t.bonus.apply_to_green}}},
      {"temperature", t.temperature},
      {"actor_lr", t.actor_lr},
      {"critic_lr", t.critic_lr},
      {"hidden_layers", t.hidden_layers},
      {"bootstrap_on_timeout", t.bootstrap_on_timeout},
  };
  return {
      {"world", world},
      {"train", train},
      {"seeds", c.seeds},
      {"output_dir", c.output_dir.generic_string()},
      {"eval_every", c.eval_every},
      {"eval_episodes", c.eval_episodes},
      {"smoothing_window", c.smoothing_window},
      {"checkpoint_every", c.checkpoint_every},
      {"final_checkpoint", c.final_checkpoint},
      {"record_wall_time", c.record_wall_time},
  };
}

ExperimentConfig experiment_from_json(const json& tree) {
  json merged = to_json(ExperimentConfig{});
  merge_into(merged, tree, "");

  ExperimentConfig c;
  const json& w = merged.at("world");
  c.world.num_red = field<int>(w, "num_red", "world");
  c.world.num_green = field<int>(w, "num_green", "world");
  c.world.num_obstacles = field<int>(w, "num_obstacles", "world");
  c.world.arena_half_width = field<double>(w, "arena_half_width", "world");
  c.world.dt = field<double>(w, "dt", "world");
  c.world.damping = field<double>(w, "damping", "world");
  c.world.red_max_speed = field<double>(w, "red_max_speed", "world");
  c.world.green_max_speed = field<double>(w, "green_max_speed", "world");
  c.world.force_magnitude = field<double>(w, "force_magnitude", "world");
  c.world.agent_mass = field<double>(w, "agent_mass", "world");
  c.world.red_radius = field<double>(w, "red_radius", "world");
  c.world.green_radius = field<double>(w, "green_radius", "world");
  c.world.obstacle_radius = field<double>(w, "obstacle_radius", "world");
  c.world.contact_stiffness = field<double>(w, "contact_stiffness", "world");
  c.world.episode_length = field<int>(w, "episode_length", "world");
  c.world.shared_catch_reward = field<bool>(w, "shared_catch_reward", "world");
  c.world.catch_reward = field<double>(w, "catch_reward", "world");
  c.world.caught_penalty = field<double>(w, "caught_penalty", "world");
  c.world.chase_shaping = field<double>(w, "chase_shaping", "world");
  c.world.water_shaping = field<double>(w, "water_shaping", "world");
  const json& b = w.at("boundary");
  c.world.boundary.inner_fraction = field<double>(b, "inner_fraction", "world.boundary");
  c.world.boundary.linear_slope = field<double>(b, "linear_slope", "world.boundary");
  c.world.boundary.exp_rate = field<double>(b, "exp_rate", "world.boundary");
  c.world.boundary.exp_cap = field<double>(b, "exp_cap", "world.boundary");
  c.world.boundary.outer_offset = field<double>(b, "outer_offset", "world.boundary");
  c.world.boundary.weight = field<double>(b, "weight", "world.boundary");

  const json& t = merged.at("train");
  c.train.algorithm = parse_algorithm(field<std::string>(t, "algorithm", "train"));
  c.train.episodes = field<int>(t, "episodes", "train");
  c.train.max_episode_length = field<int>(t, "max_episode_length", "train");
  c.train.gamma = field<double>(t, "gamma", "train");
  c.train.tau = field<double>(t, "tau", "train");
  c.train.batch_size = field<int>(t, "batch_size", "train");
  c.train.buffer_capacity = field<std::size_t>(t, "buffer_capacity", "train");
  c.train.update_every = field<int>(t, "update_every", "train");
  c.train.warmup = field<std::size_t>(t, "warmup", "train");
  const json& bonus = t.at("bonus");
  c.train.bonus.enabled = field<bool>(bonus, "enabled", "train.bonus");
  c.train.bonus.threshold = field<int>(bonus, "threshold", "train.bonus");
  c.train.bonus.phi = field<double>(bonus, "phi", "train.bonus");
  c.train.bonus.apply_to_red = field<bool>(bonus, "apply_to_red", "train.bonus");
  c.train.bonus.apply_to_green = field<bool>(bonus, "apply_to_green", "train.bonus");
  c.train.temperature = field<double>(t, "temperature", "train");
  c.train.actor_lr = field<double>(t, "actor_lr", "train");
  c.train.critic_lr = field<double>(t, "critic_lr", "train");
  c.train.hidden_layers = field<std::vector<int>>(t, "hidden_layers", "train");
  c.train.bootstrap_on_timeout = field<bool>(t, "bootstrap_on_timeout", "train");

  c.seeds = field<std::vector<std::uint64_t>>(merged, "seeds", "");
  c.output_dir = field<std::string>(merged, "output_dir", "");
  c.eval_every = field<int>(merged, "eval_every", "");
  c.eval_episodes = field<int>(merged, "eval_episodes", "");
  c.smoothing_window = field<int>(merged, "smoothing_window", "");
  c.checkpoint_every = field<int>(merged, "checkpoint_every", "");
  c.final_checkpoint = field<bool>(merged, "final_checkpoint", "");
  c.record_wall_time = field<bool>(merged, "record_wall_time", "");
  c.validate();
  return c;
}

json read_config_tree(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file '" + path.string() + "': file not found or unreadable");
  try {
    return json::parse(in, nullptr, /*allow_exceptions=*/true, /*ignore_comments=*/true);
  } catch (const json::parse_error& e) {
    throw ConfigError("config file '" + path.string() + "' is not valid JSON: " + e.what());
  }
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  return experiment_from_json(read_config_tree(path));
}

void apply_override(json& tree, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0)
    throw ConfigError("override '" + assignment + "' must look like key.path=value");
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);

  json value;
  try {
    value = json::parse(text);
  } catch (const json::parse_error&) {
    value = text;
  }
  const json defaults = to_json(ExperimentConfig{});
  const json* probe = &defaults;
  json* slot = &tree;
  std::istringstream parts(key);
  std::string part;
  std::vector<std::string> path;
  while (std::getline(parts, part, '.')) path.push_back(part);
  for (std::size_t k = 0; k < path.size(); ++k) {
    if (!probe->is_object() || !probe->contains(path[k]))
      throw ConfigError("unknown config key '" + key + "'");
    probe = &probe->at(path[k]);
    if (!slot->is_object()) *slot = json::object();
    slot = &(*slot)[path[k]];
  }
  if (probe->is_object()) throw ConfigError("config key '" + key + "' names a section, not a value");
  *slot = std::move(value);
}

std::string config_echo(const ExperimentConfig& config) { return to_json(config).dump(2); }

std::vector<FieldDoc> config_field_docs() {
  std::map<std::string, std::string> defaults;
  flatten(to_json(ExperimentConfig{}), "", defaults);
  std::vector<FieldDoc> docs;
  for (const auto& [key, description] : field_descriptions()) {
    auto it = defaults.find(key);
    docs.push_back({key, it == defaults.end() ? "" : it->second, description});
  }
  return docs;
}

}  // namespace coopmarl::harness
