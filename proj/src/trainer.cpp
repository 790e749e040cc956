#include "coopmarl/trainer.hpp"

#include <algorithm>
#include <chrono>

#include "coopmarl/errors.hpp"

namespace coopmarl::maddpg {

namespace {

enum SeedStream : std::uint64_t {
  kTrainerStream = 1,
  kActorStream = 2,
  kCriticStream = 3,
  kEnvStream = 4,
  kEvalStream = 5,
};

std::vector<double> concat(const std::vector<env::Observation>& parts) {
  std::vector<double> out;
  for (const auto& p : parts) out.insert(out.end(), p.begin(), p.end());
  return out;
}

int episode_steps(const env::WorldConfig& world, int max_episode_length) {
  return std::min(world.episode_length, max_episode_length);
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream, std::uint64_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(index),
                    static_cast<std::uint32_t>(index >> 32)};
  std::uint32_t words[2];
  seq.generate(words, words + 2);
  return (static_cast<std::uint64_t>(words[0]) << 32) | words[1];
}

Trainer::Trainer(TrainConfig train, env::WorldConfig world)
    : train_(std::move(train)),
      world_(std::move(world)),
      layout_(LearnerLayout::from_world(world_)),
      teams_(TeamAssignment::from_world(world_)),
      buffer_(layout_.transition_shape(), train_.buffer_capacity),
      rng_(derive_seed(train_.seed, kTrainerStream)) {
  world_.validate();
  train_.validate();
  for (int i = 0; i < layout_.num_agents; ++i) {
    learners_.push_back(AgentLearner::create(layout_, train_.hidden_layers, teams_.team_of[i],
                                             derive_seed(train_.seed, kActorStream, i),
                                             derive_seed(train_.seed, kCriticStream, i)));
  }
}

Trainer Trainer::restore(TrainConfig train, env::WorldConfig world,
                         std::vector<AgentLearner> learners, ReplayBuffer buffer,
                         std::mt19937_64 rng, int episodes_completed, std::uint64_t env_steps,
                         std::uint64_t update_rounds) {
  Trainer t(std::move(train), std::move(world));
  require(learners.size() == t.learners_.size(), "restore: learner count does not match world");
  for (std::size_t i = 0; i < learners.size(); ++i) {
    require(learners[i].actor.layer_sizes == t.learners_[i].actor.layer_sizes &&
                learners[i].critic.layer_sizes == t.learners_[i].critic.layer_sizes,
            "restore: network shapes do not match configuration");
  }
  require(buffer.shape() == t.buffer_.shape(), "restore: replay buffer shape mismatch");
  t.learners_ = std::move(learners);
  t.buffer_ = std::move(buffer);
  t.rng_ = rng;
  t.episodes_completed_ = episodes_completed;
  t.env_steps_ = env_steps;
  t.update_rounds_ = update_rounds;
  return t;
}

void Trainer::set_episode_budget(int episodes) {
  require(episodes >= 0, "episode budget must be >= 0");
  train_.episodes = episodes;
}

MetricsRow Trainer::run_episode() {
  const auto started = std::chrono::steady_clock::now();
  const int episode = episodes_completed_ + 1;
  auto reset = env::env_reset(world_, derive_seed(train_.seed, kEnvStream, episode));
  env::WorldState state = std::move(reset.state);
  std::vector<env::Observation> obs = std::move(reset.observations);

  std::vector<double> episode_rewards(layout_.num_agents, 0.0);
  const int steps = episode_steps(world_, train_.max_episode_length);
  std::vector<env::ActionId> actions(layout_.num_agents);
  for (int t = 0; t < steps; ++t) {
    const auto choices = select_actions(learners_, obs, /*explore=*/true, train_.temperature, rng_);
    Transition tr;
    tr.obs = concat(obs);
    for (int i = 0; i < layout_.num_agents; ++i) {
      actions[i] = choices[i].action;
      tr.actions.insert(tr.actions.end(), choices[i].indicator.begin(), choices[i].indicator.end());
    }
    auto step = env::env_step(world_, state, actions);
    tr.rewards = step.rewards;
    tr.next_obs = concat(step.observations);
    tr.done = step.done || t + 1 == steps;
    buffer_.push(tr);
    for (int i = 0; i < layout_.num_agents; ++i) episode_rewards[i] += step.rewards[i];

    state = std::move(step.state);
    obs = std::move(step.observations);
    ++env_steps_;
    learn();
  }
  episodes_completed_ = episode;

  double wall_ms = 0.0;
  if (record_wall_time_) {
    wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - started)
                  .count();
  }
  return make_metrics_row(episode, std::move(episode_rewards), world_.num_red, wall_ms);
}

void Trainer::learn() {
  if (!buffer_.ready(train_.batch_size, train_.warmup) || env_steps_ % train_.update_every != 0) return;

  for (int i = 0; i < layout_.num_agents; ++i) {
    const Minibatch batch = buffer_.sample(train_.batch_size, rng_);
    const nn::Vector targets =
        train_.algorithm == Algorithm::kMaddpg
            ? maddpg_targets(batch, learners_, layout_, train_, i)
            : compute_targets(batch, learners_, layout_, train_, teams_, i);
    critic_update(learners_[i], batch, targets, train_.critic_lr);
    actor_update(learners_, batch, layout_, i, train_.actor_lr, train_.temperature, rng_);
  }
  for (auto& learner : learners_) {
    nn::soft_update(learner.target_actor, learner.actor, train_.tau);
    nn::soft_update(learner.target_critic, learner.critic, train_.tau);
  }
  ++update_rounds_;
}

std::vector<MetricsRow> Trainer::run() {
  std::vector<MetricsRow> rows;
  while (episodes_completed_ < train_.episodes) rows.push_back(run_episode());
  return rows;
}

std::vector<MetricsRow> train(const TrainConfig& config, const env::WorldConfig& world,
                              std::vector<AgentLearner>* learners_out) {
  Trainer trainer(config, world);
  auto rows = trainer.run();
  if (learners_out) *learners_out = trainer.learners();
  return rows;
}

EvalMetrics evaluate(std::span<const AgentLearner> learners, const env::WorldConfig& world,
                     int episodes, std::uint64_t seed, int max_episode_length) {
  require(episodes >= 0, "evaluate: episodes must be >= 0");
  require(static_cast<int>(learners.size()) == world.num_agents(),
          "evaluate: one learner per agent required");
  const int n = world.num_agents();
  std::mt19937_64 unused_rng(0);
  EvalMetrics out;
  out.mean_agent.assign(n, 0.0);
  std::vector<env::ActionId> actions(n);
  const int steps = episode_steps(world, max_episode_length);
  for (int e = 1; e <= episodes; ++e) {
    auto reset = env::env_reset(world, derive_seed(seed, kEvalStream, e));
    env::WorldState state = std::move(reset.state);
    std::vector<env::Observation> obs = std::move(reset.observations);
    std::vector<double> totals(n, 0.0);
    for (int t = 0; t < steps; ++t) {
      const auto choices = select_actions(learners, obs, /*explore=*/false, 1.0, unused_rng);
      for (int i = 0; i < n; ++i) actions[i] = choices[i].action;
      auto step = env::env_step(world, state, actions);
      for (int i = 0; i < n; ++i) totals[i] += step.rewards[i];
      state = std::move(step.state);
      obs = std::move(step.observations);
      if (step.done) break;
    }
    out.rows.push_back(make_metrics_row(e, std::move(totals), world.num_red));
  }
  if (episodes > 0) {
    for (const auto& row : out.rows) {
      for (int i = 0; i < n; ++i) out.mean_agent[i] += row.agent_rewards[i];
      out.mean_red += row.red_team;
      out.mean_green += row.green_team;
      out.mean_total += row.total;
    }
    const double scale = 1.0 / episodes;
    for (double& m : out.mean_agent) m *= scale;
    out.mean_red *= scale;
    out.mean_green *= scale;
    out.mean_total *= scale;
  }
  return out;
}

}  // namespace coopmarl::maddpg
