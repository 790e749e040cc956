#pragma once

// Two-team predator-prey particle world.
//
// Red agents (pursuers) are rewarded for touching green agents; green agents
// (evaders) are rewarded for staying near a fixed water landmark and
// penalised when caught or when they leave the arena. Three static circular
// obstacles block movement through a soft contact force. Agents pick one of
// four directional pushes each step.

#include <array>
#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

namespace coopmarl::env {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  Vec2& operator+=(Vec2 o) {
    x += o.x;
    y += o.y;
    return *this;
  }
  friend Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
  friend Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
  friend Vec2 operator*(Vec2 a, double s) { return {a.x * s, a.y * s}; }
  friend Vec2 operator*(double s, Vec2 a) { return {a.x * s, a.y * s}; }
  double norm() const { return std::sqrt(x * x + y * y); }
  bool operator==(const Vec2&) const = default;
};

inline double distance(Vec2 a, Vec2 b) { return (a - b).norm(); }

enum class Team : std::uint8_t { kRed = 0, kGreen = 1 };

enum class ActionId : std::uint8_t { kUp = 0, kDown = 1, kLeft = 2, kRight = 3 };
inline constexpr int kNumActions = 4;

// Unit force direction for an action.
Vec2 action_direction(ActionId action);

// Soft wall that keeps evaders inside the arena. Per coordinate with
// h = arena half width and a = |coordinate|:
//   a <  inner_fraction*h            -> 0
//   inner_fraction*h <= a <= h       -> (a - inner_fraction*h) * linear_slope
//   a >  h                           -> min(exp(exp_rate*(a-h)), exp_cap) + outer_offset
// The two coordinate terms are summed and scaled by weight.
struct BoundaryPenalty {
  double inner_fraction = 0.9;
  double linear_slope = 10.0;
  double exp_rate = 2.0;
  double exp_cap = 10.0;
  double outer_offset = 1.0;
  double weight = 1.0;

  bool operator==(const BoundaryPenalty&) const = default;
};

struct WorldConfig {
  int num_red = 4;
  int num_green = 2;
  int num_obstacles = 3;
  double arena_half_width = 1.0;
  double dt = 0.1;
  double damping = 0.25;
  double red_max_speed = 1.0;
  double green_max_speed = 1.3;
  double force_magnitude = 5.0;
  double agent_mass = 1.0;
  double red_radius = 0.075;
  double green_radius = 0.05;
  double obstacle_radius = 0.2;
  double contact_stiffness = 100.0;
  int episode_length = 25;
  bool shared_catch_reward = true;
  double catch_reward = 10.0;
  double caught_penalty = -10.0;
  double chase_shaping = 0.1;
  double water_shaping = 0.1;
  BoundaryPenalty boundary;

  // Throws ConfigError on any violated invariant.
  void validate() const;

  int num_agents() const { return num_red + num_green; }
  // 2 (own vel) + 2 (own pos) + 2*obstacles + 2 (water) + 2*(N-1) + 2*green.
  int observation_dim() const;
  Team team_of(int agent) const { return agent < num_red ? Team::kRed : Team::kGreen; }
  double radius_of(int agent) const;
  double max_speed_of(int agent) const;

  bool operator==(const WorldConfig&) const = default;
};

struct EntityState {
  Vec2 position;
  Vec2 velocity;
  bool operator==(const EntityState&) const = default;
};

struct WorldState {
  std::vector<EntityState> red;
  std::vector<EntityState> green;
  std::vector<EntityState> obstacles;
  Vec2 water;
  int step = 0;
  std::mt19937_64 rng;

  // Agents are indexed red first, then green.
  const EntityState& agent(int index) const;
  EntityState& agent(int index);
  int num_agents() const { return static_cast<int>(red.size() + green.size()); }

  bool operator==(const WorldState&) const = default;
};

using Observation = std::vector<double>;
using RewardVector = std::vector<double>;

struct ResetResult {
  WorldState state;
  std::vector<Observation> observations;
};

struct StepResult {
  WorldState state;
  RewardVector rewards;
  std::vector<Observation> observations;
  bool done = false;
};

ResetResult env_reset(const WorldConfig& config, std::uint64_t seed);

StepResult env_step(const WorldConfig& config, const WorldState& state,
                    std::span<const ActionId> actions);

// Integrates one step given per-agent external forces. Obstacle contact
// forces are added internally before integration.
WorldState apply_physics(const WorldConfig& config, const WorldState& state,
                         std::span<const Vec2> forces);

RewardVector compute_rewards(const WorldConfig& config, const WorldState& state);

double boundary_penalty(const WorldConfig& config, Vec2 position);

Observation observe(const WorldConfig& config, const WorldState& state, int agent);

std::vector<Observation> observe_all(const WorldConfig& config, const WorldState& state);

// Center distance strictly below the sum of radii.
bool agents_collide(const WorldConfig& config, const WorldState& state, int a, int b);

}  // namespace coopmarl::env
