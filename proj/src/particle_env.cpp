#include "coopmarl/particle_env.hpp"

#include <algorithm>
#include <limits>
#include <string>

#include "coopmarl/errors.hpp"

namespace coopmarl::env {

namespace {

constexpr int kMaxSpawnAttempts = 10000;

struct Disc {
  Vec2 center;
  double radius;
};

double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

Vec2 sample_free_point(std::mt19937_64& rng, double half_width, double radius,
                       const std::vector<Disc>& placed) {
  for (int attempt = 0; attempt < kMaxSpawnAttempts; ++attempt) {
    const Vec2 p{uniform(rng, -half_width, half_width), uniform(rng, -half_width, half_width)};
    const bool overlaps = std::any_of(placed.begin(), placed.end(), [&](const Disc& d) {
      return distance(p, d.center) < d.radius + radius;
    });
    if (!overlaps) return p;
  }
  throw ConfigError("spawn rejection sampling exceeded " + std::to_string(kMaxSpawnAttempts) +
                    " attempts; arena too crowded for the configured entities");
}

// Rescale so the Euclidean norm does not exceed limit, tolerating no rounding overshoot.
Vec2 clamp_speed(Vec2 v, double limit) {
  const double speed = v.norm();
  if (speed <= limit) return v;
  double scale = limit / speed;
  Vec2 out = v * scale;
  while (out.norm() > limit) {
    scale = std::nextafter(scale, 0.0);
    out = v * scale;
  }
  return out;
}

double wall_term(const BoundaryPenalty& b, double half_width, double coordinate) {
  const double a = std::abs(coordinate);
  const double inner = b.inner_fraction * half_width;
  if (a < inner) return 0.0;
  if (a <= half_width) return (a - inner) * b.linear_slope;
  return std::min(std::exp(b.exp_rate * (a - half_width)), b.exp_cap) + b.outer_offset;
}

}  // namespace

Vec2 action_direction(ActionId action) {
  switch (action) {
    case ActionId::kUp:
      return {0.0, 1.0};
    case ActionId::kDown:
      return {0.0, -1.0};
    case ActionId::kLeft:
      return {-1.0, 0.0};
    case ActionId::kRight:
      return {1.0, 0.0};
  }
  throw ContractViolation("unknown action id");
}

void WorldConfig::validate() const {
  auto fail = [](const std::string& what) { throw ConfigError("invalid world config: " + what); };
  if (num_red < 1) fail("num_red must be >= 1");
  if (num_green < 1) fail("num_green must be >= 1");
  if (num_obstacles < 0) fail("num_obstacles must be >= 0");
  if (!(arena_half_width > 0.0)) fail("arena_half_width must be > 0");
  if (!(dt > 0.0)) fail("dt must be > 0");
  if (!(damping >= 0.0 && damping < 1.0)) fail("damping must lie in [0, 1)");
  if (!(red_max_speed > 0.0) || !(green_max_speed > 0.0)) fail("max speeds must be > 0");
  if (!(agent_mass > 0.0)) fail("agent_mass must be > 0");
  if (!(red_radius > 0.0) || !(green_radius > 0.0) || !(obstacle_radius > 0.0))
    fail("all radii must be > 0");
  if (!(force_magnitude >= 0.0)) fail("force_magnitude must be >= 0");
  if (!(contact_stiffness >= 0.0)) fail("contact_stiffness must be >= 0");
  if (episode_length < 1) fail("episode_length must be >= 1");
}

int WorldConfig::observation_dim() const {
  return 2 + 2 + 2 * num_obstacles + 2 + 2 * (num_agents() - 1) + 2 * num_green;
}

double WorldConfig::radius_of(int agent) const {
  return team_of(agent) == Team::kRed ? red_radius : green_radius;
}

double WorldConfig::max_speed_of(int agent) const {
  return team_of(agent) == Team::kRed ? red_max_speed : green_max_speed;
}

const EntityState& WorldState::agent(int index) const {
  require(index >= 0 && index < num_agents(), "agent index out of range");
  const auto n_red = static_cast<int>(red.size());
  return index < n_red ? red[index] : green[index - n_red];
}

EntityState& WorldState::agent(int index) {
  return const_cast<EntityState&>(std::as_const(*this).agent(index));
}

ResetResult env_reset(const WorldConfig& config, std::uint64_t seed) {
  config.validate();
  WorldState state;
  state.rng.seed(seed);
  const double h = config.arena_half_width;

  std::vector<Disc> placed;
  for (int k = 0; k < config.num_obstacles; ++k) {
    const Vec2 p = sample_free_point(state.rng, h, config.obstacle_radius, placed);
    placed.push_back({p, config.obstacle_radius});
    state.obstacles.push_back({p, {}});
  }
  state.water = sample_free_point(state.rng, h, 0.0, placed);
  placed.push_back({state.water, 0.0});
  for (int i = 0; i < config.num_agents(); ++i) {
    const double r = config.radius_of(i);
    const Vec2 p = sample_free_point(state.rng, h, r, placed);
    placed.push_back({p, r});
    (config.team_of(i) == Team::kRed ? state.red : state.green).push_back({p, {}});
  }
  state.step = 0;
  auto observations = observe_all(config, state);
  return {std::move(state), std::move(observations)};
}

WorldState apply_physics(const WorldConfig& config, const WorldState& state,
                         std::span<const Vec2> forces) {
  require(static_cast<int>(forces.size()) == state.num_agents(),
          "apply_physics: one force per agent required");
  WorldState next = state;
  for (int i = 0; i < state.num_agents(); ++i) {
    const EntityState& cur = state.agent(i);
    Vec2 force = forces[i];
    for (const EntityState& obstacle : state.obstacles) {
      const Vec2 offset = cur.position - obstacle.position;
      const double d = offset.norm();
      const double penetration = config.radius_of(i) + config.obstacle_radius - d;
      if (penetration <= 0.0) continue;
      const Vec2 normal = d > 0.0 ? offset * (1.0 / d) : Vec2{1.0, 0.0};
      force += normal * (config.contact_stiffness * penetration);
    }
    EntityState& out = next.agent(i);
    Vec2 v = cur.velocity * (1.0 - config.damping) + force * (config.dt / config.agent_mass);
    v = clamp_speed(v, config.max_speed_of(i));
    out.velocity = v;
    out.position = cur.position + v * config.dt;
  }
  return next;
}

bool agents_collide(const WorldConfig& config, const WorldState& state, int a, int b) {
  const double d = distance(state.agent(a).position, state.agent(b).position);
  return d < config.radius_of(a) + config.radius_of(b);
}

double boundary_penalty(const WorldConfig& config, Vec2 position) {
  const BoundaryPenalty& b = config.boundary;
  const double h = config.arena_half_width;
  return b.weight * (wall_term(b, h, position.x) + wall_term(b, h, position.y));
}

RewardVector compute_rewards(const WorldConfig& config, const WorldState& state) {
  const int n_red = static_cast<int>(state.red.size());
  const int n_agents = state.num_agents();
  RewardVector rewards(n_agents, 0.0);

  std::vector<int> catches_by_red(n_red, 0);
  std::vector<int> catchers_of_green(n_agents - n_red, 0);
  for (int i = 0; i < n_red; ++i) {
    for (int j = n_red; j < n_agents; ++j) {
      if (agents_collide(config, state, i, j)) {
        ++catches_by_red[i];
        ++catchers_of_green[j - n_red];
      }
    }
  }
  const int greens_caught = static_cast<int>(
      std::count_if(catchers_of_green.begin(), catchers_of_green.end(), [](int c) { return c > 0; }));

  for (int i = 0; i < n_red; ++i) {
    double nearest = std::numeric_limits<double>::infinity();
    for (const EntityState& g : state.green)
      nearest = std::min(nearest, distance(state.red[i].position, g.position));
    const int caught = config.shared_catch_reward ? greens_caught : catches_by_red[i];
    rewards[i] = config.catch_reward * caught - config.chase_shaping * nearest;
  }
  for (int j = n_red; j < n_agents; ++j) {
    const Vec2 p = state.agent(j).position;
    rewards[j] = config.caught_penalty * catchers_of_green[j - n_red] -
                 config.water_shaping * distance(p, state.water) - boundary_penalty(config, p);
  }
  return rewards;
}

Observation observe(const WorldConfig& config, const WorldState& state, int agent) {
  require(agent >= 0 && agent < state.num_agents(), "observe: agent index out of range");
  Observation obs;
  obs.reserve(config.observation_dim());
  auto push = [&obs](Vec2 v) {
    obs.push_back(v.x);
    obs.push_back(v.y);
  };
  const EntityState& self = state.agent(agent);
  push(self.velocity);
  push(self.position);
  for (const EntityState& o : state.obstacles) push(o.position - self.position);
  push(state.water - self.position);
  for (int k = 0; k < state.num_agents(); ++k) {
    if (k != agent) push(state.agent(k).position - self.position);
  }
  for (const EntityState& g : state.green) push(g.velocity);
  return obs;
}

std::vector<Observation> observe_all(const WorldConfig& config, const WorldState& state) {
  std::vector<Observation> all;
  all.reserve(state.num_agents());
  for (int i = 0; i < state.num_agents(); ++i) all.push_back(observe(config, state, i));
  return all;
}

StepResult env_step(const WorldConfig& config, const WorldState& state,
                    std::span<const ActionId> actions) {
  require(static_cast<int>(actions.size()) == state.num_agents(),
          "env_step: expected " + std::to_string(state.num_agents()) + " actions, got " +
              std::to_string(actions.size()));
  require(state.step < config.episode_length, "env_step: episode already finished");

  std::vector<Vec2> forces;
  forces.reserve(actions.size());
  for (ActionId a : actions) forces.push_back(action_direction(a) * config.force_magnitude);

  StepResult result;
  result.state = apply_physics(config, state, forces);
  result.state.step = state.step + 1;
  result.rewards = compute_rewards(config, result.state);
  result.observations = observe_all(config, result.state);
  result.done = result.state.step >= config.episode_length;
  return result;
}

}  // namespace coopmarl::env
