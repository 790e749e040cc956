#pragma once

// Multi-agent actor-critic with centralized critics, plus the cooperation
// bonus: an agent's sampled reward is multiplied by phi in its critic target
// whenever more than L members of its team (itself included) received a
// strictly positive reward in that transition.

#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <vector>

#include "coopmarl/neural.hpp"
#include "coopmarl/particle_env.hpp"
#include "coopmarl/replay_buffer.hpp"

namespace coopmarl::maddpg {

using env::Team;

// Which target rule the trainer uses. kMaddpg is the plain reference target
// y = r_i + gamma * Q'; kCooperative routes through the bonus gate.
enum class Algorithm { kMaddpg, kCooperative };

// Threshold value for which the gate can never fire.
inline constexpr int kGateNeverFires = std::numeric_limits<int>::max();

struct CooperationBonus {
  bool enabled = true;
  int threshold = 1;  // L
  double phi = 2.0;
  bool apply_to_red = true;
  bool apply_to_green = true;

  bool operator==(const CooperationBonus&) const = default;
};

struct TrainConfig {
  Algorithm algorithm = Algorithm::kCooperative;
  int episodes = 25000;
  int max_episode_length = 25;
  double gamma = 0.95;
  double tau = 0.01;
  int batch_size = 1024;
  std::size_t buffer_capacity = 1'000'000;
  int update_every = 100;
  std::size_t warmup = 1024;
  CooperationBonus bonus;
  double temperature = 1.0;
  double actor_lr = 1e-2;
  double critic_lr = 1e-2;
  std::vector<int> hidden_layers{64, 64};
  // When true a time-limit "done" still bootstraps from Q'.
  bool bootstrap_on_timeout = true;
  std::uint64_t seed = 0;

  // Throws ConfigError.
  void validate() const;
  bool bonus_active() const { return algorithm == Algorithm::kCooperative && bonus.enabled; }

  bool operator==(const TrainConfig&) const = default;
};

struct TeamAssignment {
  std::vector<Team> team_of;

  static TeamAssignment from_world(const env::WorldConfig& world);
  std::vector<int> members(Team team) const;
  std::size_t team_size(Team team) const { return members(team).size(); }
};

// Per-agent network sizes shared by every learner in a run.
struct LearnerLayout {
  int num_agents = 0;
  int obs_dim = 0;
  int num_actions = env::kNumActions;

  static LearnerLayout from_world(const env::WorldConfig& world);
  int joint_obs_size() const { return num_agents * obs_dim; }
  int joint_action_size() const { return num_agents * num_actions; }
  int critic_input_size() const { return joint_obs_size() + joint_action_size(); }
  TransitionShape transition_shape() const {
    return {joint_obs_size(), joint_action_size(), num_agents};
  }
};

struct AgentLearner {
  nn::MlpParams actor;
  nn::MlpParams critic;
  nn::MlpParams target_actor;
  nn::MlpParams target_critic;
  nn::AdamState actor_opt;
  nn::AdamState critic_opt;
  Team team = Team::kRed;

  // Targets start as exact copies of the online networks.
  static AgentLearner create(const LearnerLayout& layout, const std::vector<int>& hidden, Team team,
                             std::uint64_t actor_seed, std::uint64_t critic_seed);
};

// Cooperation gate: phi if the number of strictly positive entries exceeds
// threshold, otherwise 1. Throws ContractViolation on an empty team.
double compute_phi(std::span<const double> team_rewards, int threshold, double phi);

// Per-sample multiplier phi_i^j for agent, read from each stored reward vector.
// All ones when the bonus is inactive or disabled for the agent's team.
nn::Vector cooperation_multipliers(const Minibatch& batch, const TrainConfig& config,
                                   const TeamAssignment& teams, int agent);

// gamma * mask * Q'_agent(x', mu'_1(o'_1), ..., mu'_N(o'_N)) with noise-free
// target-actor actions. mask is 0 only for stored terminals when
// bootstrap_on_timeout is false.
nn::Vector bootstrap_term(const Minibatch& batch, std::span<const AgentLearner> learners,
                          const LearnerLayout& layout, const TrainConfig& config, int agent);

// y^j = phi_i^j * r_i^j + bootstrap_term.
nn::Vector compute_targets(const Minibatch& batch, std::span<const AgentLearner> learners,
                           const LearnerLayout& layout, const TrainConfig& config,
                           const TeamAssignment& teams, int agent);

// Reference target y^j = r_i^j + bootstrap_term, no gate involved.
nn::Vector maddpg_targets(const Minibatch& batch, std::span<const AgentLearner> learners,
                          const LearnerLayout& layout, const TrainConfig& config, int agent);

// Stacks joint observations over joint actions, one column per sample.
nn::Matrix critic_input(const nn::Matrix& obs, const nn::Matrix& actions);

struct LossAndGradient {
  double value = 0.0;
  nn::ParamGradients grads;
};

// Mean-squared critic loss (1/S) sum_j (y^j - Q(x^j, a^j))^2 and its gradient.
LossAndGradient critic_loss_gradient(const nn::MlpParams& critic, const Minibatch& batch,
                                     const nn::Vector& targets);

// One Adam step on the critic; returns the pre-update loss.
double critic_update(AgentLearner& learner, const Minibatch& batch, const nn::Vector& targets,
                     double lr);

// Actor objective -(1/S) sum_j Q_i(x^j, a_1^j, .., p_i^j, .., a_N^j) where
// p_i^j = softmax((mu_i(o_i^j) + noise^j) / temperature), and its gradient
// with respect to the actor parameters. noise is (num_actions x S).
LossAndGradient actor_objective_gradient(const nn::MlpParams& actor, const nn::MlpParams& critic,
                                         const Minibatch& batch, const LearnerLayout& layout,
                                         int agent, const nn::Matrix& noise, double temperature);

// Draws Gumbel noise, applies one Adam step to learners[agent].actor and
// returns the gradient L2 norm.
double actor_update(std::span<AgentLearner> learners, const Minibatch& batch,
                    const LearnerLayout& layout, int agent, double lr, double temperature,
                    std::mt19937_64& rng);

struct ActionChoice {
  env::ActionId action = env::ActionId::kUp;
  nn::Vector indicator;
};

// explore: Gumbel-softmax sample per agent. Otherwise argmax of the actor
// logits, which never touches rng.
std::vector<ActionChoice> select_actions(std::span<const AgentLearner> learners,
                                         std::span<const env::Observation> observations,
                                         bool explore, double temperature, std::mt19937_64& rng);

}  // namespace coopmarl::maddpg
