#include "coopmarl/maddpg.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "coopmarl/errors.hpp"

namespace coopmarl::maddpg {

void TrainConfig::validate() const {
  auto fail = [](const std::string& what) { throw ConfigError("invalid train config: " + what); };
  if (episodes < 0) fail("episodes must be >= 0");
  if (max_episode_length < 1) fail("max_episode_length must be >= 1");
  if (!(gamma >= 0.0 && gamma < 1.0)) fail("gamma must lie in [0, 1)");
  if (!(tau > 0.0 && tau <= 1.0)) fail("tau must lie in (0, 1]");
  if (batch_size < 1) fail("batch_size must be >= 1");
  if (buffer_capacity < 1) fail("buffer_capacity must be >= 1");
  if (static_cast<std::size_t>(batch_size) > buffer_capacity) fail("batch_size exceeds buffer_capacity");
  if (update_every < 1) fail("update_every must be >= 1");
  if (bonus.threshold < 0) fail("bonus threshold L must be >= 0");
  if (!(bonus.phi > 0.0)) fail("bonus phi must be > 0");
  if (!(temperature > 0.0)) fail("temperature must be > 0");
  if (!(actor_lr >= 0.0) || !(critic_lr >= 0.0)) fail("learning rates must be >= 0");
  for (int h : hidden_layers)
    if (h < 1) fail("hidden layer sizes must be >= 1");
}

TeamAssignment TeamAssignment::from_world(const env::WorldConfig& world) {
  TeamAssignment teams;
  for (int i = 0; i < world.num_agents(); ++i) teams.team_of.push_back(world.team_of(i));
  return teams;
}

std::vector<int> TeamAssignment::members(Team team) const {
  std::vector<int> out;
  for (std::size_t i = 0; i < team_of.size(); ++i)
    if (team_of[i] == team) out.push_back(static_cast<int>(i));
  return out;
}

LearnerLayout LearnerLayout::from_world(const env::WorldConfig& world) {
  return {world.num_agents(), world.observation_dim(), env::kNumActions};
}

AgentLearner AgentLearner::create(const LearnerLayout& layout, const std::vector<int>& hidden,
                                  Team team, std::uint64_t actor_seed, std::uint64_t critic_seed) {
  std::vector<int> actor_sizes{layout.obs_dim};
  actor_sizes.insert(actor_sizes.end(), hidden.begin(), hidden.end());
  actor_sizes.push_back(layout.num_actions);
  std::vector<int> critic_sizes{layout.critic_input_size()};
  critic_sizes.insert(critic_sizes.end(), hidden.begin(), hidden.end());
  critic_sizes.push_back(1);

  AgentLearner learner;
  learner.actor = nn::mlp_init(actor_sizes, actor_seed);
  learner.critic = nn::mlp_init(critic_sizes, critic_seed);
  learner.target_actor = learner.actor;
  learner.target_critic = learner.critic;
  learner.actor_opt = nn::AdamState::for_params(learner.actor);
  learner.critic_opt = nn::AdamState::for_params(learner.critic);
  learner.team = team;
  return learner;
}

double compute_phi(std::span<const double> team_rewards, int threshold, double phi) {
  require(!team_rewards.empty(), "compute_phi: team must be nonempty");
  require(threshold >= 0, "compute_phi: L must be >= 0");
  require(phi > 0.0, "compute_phi: phi must be > 0");
  const auto positive = std::count_if(team_rewards.begin(), team_rewards.end(),
                                      [](double r) { return r > 0.0; });
  return positive > threshold ? phi : 1.0;
}

nn::Vector cooperation_multipliers(const Minibatch& batch, const TrainConfig& config,
                                   const TeamAssignment& teams, int agent) {
  nn::Vector multipliers = nn::Vector::Ones(batch.size());
  const Team team = teams.team_of.at(agent);
  const bool on = config.bonus_active() &&
                  (team == Team::kRed ? config.bonus.apply_to_red : config.bonus.apply_to_green);
  if (!on) return multipliers;
  const std::vector<int> mates = teams.members(team);
  std::vector<double> team_rewards(mates.size());
  for (Eigen::Index j = 0; j < batch.size(); ++j) {
    for (std::size_t m = 0; m < mates.size(); ++m) team_rewards[m] = batch.rewards(mates[m], j);
    multipliers[j] = compute_phi(team_rewards, config.bonus.threshold, config.bonus.phi);
  }
  return multipliers;
}

nn::Matrix critic_input(const nn::Matrix& obs, const nn::Matrix& actions) {
  require(obs.cols() == actions.cols(), "critic_input: sample count mismatch");
  nn::Matrix input(obs.rows() + actions.rows(), obs.cols());
  input.topRows(obs.rows()) = obs;
  input.bottomRows(actions.rows()) = actions;
  return input;
}

nn::Vector bootstrap_term(const Minibatch& batch, std::span<const AgentLearner> learners,
                          const LearnerLayout& layout, const TrainConfig& config, int agent) {
  require(static_cast<int>(learners.size()) == layout.num_agents, "bootstrap_term: learner count");
  require(agent >= 0 && agent < layout.num_agents, "bootstrap_term: agent index out of range");
  const Eigen::Index samples = batch.size();
  nn::Matrix next_actions = nn::Matrix::Zero(layout.joint_action_size(), samples);
  for (int k = 0; k < layout.num_agents; ++k) {
    const nn::Matrix logits =
        nn::mlp_forward(learners[k].target_actor, nn::Matrix(batch.next_obs.middleRows(k * layout.obs_dim, layout.obs_dim)));
    for (Eigen::Index j = 0; j < samples; ++j) {
      Eigen::Index best = 0;
      logits.col(j).maxCoeff(&best);
      next_actions(k * layout.num_actions + best, j) = 1.0;
    }
  }
  const nn::Matrix q_next =
      nn::mlp_forward(learners[agent].target_critic, critic_input(batch.next_obs, next_actions));
  nn::Vector term(samples);
  for (Eigen::Index j = 0; j < samples; ++j) {
    const bool cut = !config.bootstrap_on_timeout && batch.done[j] != 0.0;
    term[j] = cut ? 0.0 : config.gamma * q_next(0, j);
  }
  return term;
}

nn::Vector compute_targets(const Minibatch& batch, std::span<const AgentLearner> learners,
                           const LearnerLayout& layout, const TrainConfig& config,
                           const TeamAssignment& teams, int agent) {
  const nn::Vector phi = cooperation_multipliers(batch, config, teams, agent);
  const nn::Vector future = bootstrap_term(batch, learners, layout, config, agent);
  nn::Vector y(batch.size());
  for (Eigen::Index j = 0; j < batch.size(); ++j) y[j] = phi[j] * batch.rewards(agent, j) + future[j];
  return y;
}

nn::Vector maddpg_targets(const Minibatch& batch, std::span<const AgentLearner> learners,
                          const LearnerLayout& layout, const TrainConfig& config, int agent) {
  const nn::Vector future = bootstrap_term(batch, learners, layout, config, agent);
  nn::Vector y(batch.size());
  for (Eigen::Index j = 0; j < batch.size(); ++j) y[j] = batch.rewards(agent, j) + future[j];
  return y;
}

LossAndGradient critic_loss_gradient(const nn::MlpParams& critic, const Minibatch& batch,
                                     const nn::Vector& targets) {
  require(targets.size() == batch.size(), "critic loss: one target per sample required");
  const auto samples = static_cast<double>(batch.size());
  nn::ForwardCache cache;
  const nn::Matrix q = nn::mlp_forward(critic, critic_input(batch.obs, batch.actions), &cache);
  const Eigen::RowVectorXd residual = q.row(0) - targets.transpose();
  LossAndGradient out;
  out.value = residual.squaredNorm() / samples;
  const nn::Matrix grad_q = (2.0 / samples) * residual;
  out.grads = nn::mlp_backward(critic, cache, grad_q, /*want_input_grad=*/false).params;
  return out;
}

double critic_update(AgentLearner& learner, const Minibatch& batch, const nn::Vector& targets,
                     double lr) {
  const LossAndGradient lg = critic_loss_gradient(learner.critic, batch, targets);
  nn::adam_step(learner.critic, lg.grads, learner.critic_opt, lr);
  return lg.value;
}

LossAndGradient actor_objective_gradient(const nn::MlpParams& actor, const nn::MlpParams& critic,
                                         const Minibatch& batch, const LearnerLayout& layout,
                                         int agent, const nn::Matrix& noise, double temperature) {
  require(agent >= 0 && agent < layout.num_agents, "actor objective: agent index out of range");
  const auto samples = static_cast<double>(batch.size());
  const Eigen::Index action_row = static_cast<Eigen::Index>(agent) * layout.num_actions;

  nn::ForwardCache actor_cache;
  const nn::Matrix logits =
      nn::mlp_forward(actor, batch.obs.middleRows(agent * layout.obs_dim, layout.obs_dim), &actor_cache);
  const nn::Matrix probs = nn::relaxed_softmax(logits, noise, temperature);

  nn::Matrix actions = batch.actions;
  actions.middleRows(action_row, layout.num_actions) = probs;
  nn::ForwardCache critic_cache;
  const nn::Matrix q = nn::mlp_forward(critic, critic_input(batch.obs, actions), &critic_cache);

  LossAndGradient out;
  out.value = -q.sum() / samples;
  const nn::Matrix grad_q = nn::Matrix::Constant(1, batch.size(), -1.0 / samples);
  const nn::GradientBundle critic_grads = nn::mlp_backward(critic, critic_cache, grad_q);
  const nn::Matrix grad_probs =
      critic_grads.input.middleRows(layout.joint_obs_size() + action_row, layout.num_actions);
  const nn::Matrix grad_logits = nn::softmax_backward(probs, grad_probs, temperature);
  out.grads = nn::mlp_backward(actor, actor_cache, grad_logits, /*want_input_grad=*/false).params;
  return out;
}

double actor_update(std::span<AgentLearner> learners, const Minibatch& batch,
                    const LearnerLayout& layout, int agent, double lr, double temperature,
                    std::mt19937_64& rng) {
  nn::Matrix noise(layout.num_actions, batch.size());
  for (Eigen::Index j = 0; j < batch.size(); ++j) noise.col(j) = nn::sample_gumbel(layout.num_actions, rng);
  AgentLearner& learner = learners[agent];
  const LossAndGradient lg =
      actor_objective_gradient(learner.actor, learner.critic, batch, layout, agent, noise, temperature);
  nn::adam_step(learner.actor, lg.grads, learner.actor_opt, lr);
  return std::sqrt(lg.grads.squared_norm());
}

std::vector<ActionChoice> select_actions(std::span<const AgentLearner> learners,
                                         std::span<const env::Observation> observations,
                                         bool explore, double temperature, std::mt19937_64& rng) {
  require(learners.size() == observations.size(), "select_actions: one observation per learner");
  std::vector<ActionChoice> choices;
  choices.reserve(learners.size());
  for (std::size_t i = 0; i < learners.size(); ++i) {
    const nn::Vector obs = Eigen::Map<const nn::Vector>(observations[i].data(),
                                                        static_cast<Eigen::Index>(observations[i].size()));
    const nn::Vector logits = nn::mlp_forward(learners[i].actor, obs).output;
    ActionChoice choice;
    choice.indicator = explore ? nn::gumbel_softmax_sample(logits, temperature, rng).hard
                               : nn::hard_argmax(logits);
    choice.action = static_cast<env::ActionId>(nn::argmax(choice.indicator));
    choices.push_back(std::move(choice));
  }
  return choices;
}

}  // namespace coopmarl::maddpg
