#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "coopmarl/maddpg.hpp"
#include "coopmarl/metrics.hpp"
#include "coopmarl/particle_env.hpp"
#include "coopmarl/replay_buffer.hpp"

namespace coopmarl::maddpg {

// Independent seed stream per (run seed, purpose, index).
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream, std::uint64_t index = 0);

// Owns every piece of state that training touches, so that a run can be
// checkpointed between episodes and resumed bit-exactly.
class Trainer {
 public:
  Trainer(TrainConfig train, env::WorldConfig world);

  // Reassembles a trainer from checkpointed state.
  static Trainer restore(TrainConfig train, env::WorldConfig world,
                         std::vector<AgentLearner> learners, ReplayBuffer buffer,
                         std::mt19937_64 rng, int episodes_completed, std::uint64_t env_steps,
                         std::uint64_t update_rounds);

  // One exploring episode with learning on the configured cadence.
  MetricsRow run_episode();

  // Runs episodes until config().episodes are complete.
  std::vector<MetricsRow> run();

  void set_record_wall_time(bool on) { record_wall_time_ = on; }

  const TrainConfig& config() const { return train_; }
  const env::WorldConfig& world() const { return world_; }
  const LearnerLayout& layout() const { return layout_; }
  const TeamAssignment& teams() const { return teams_; }
  const std::vector<AgentLearner>& learners() const { return learners_; }
  const ReplayBuffer& buffer() const { return buffer_; }
  const std::mt19937_64& rng() const { return rng_; }
  int episodes_completed() const { return episodes_completed_; }
  std::uint64_t env_steps() const { return env_steps_; }
  std::uint64_t update_rounds() const { return update_rounds_; }

  // Raising the episode budget lets a resumed run continue past the
  // checkpointed configuration.
  void set_episode_budget(int episodes);

 private:
  void learn();

  TrainConfig train_;
  env::WorldConfig world_;
  LearnerLayout layout_;
  TeamAssignment teams_;
  std::vector<AgentLearner> learners_;
  ReplayBuffer buffer_;
  std::mt19937_64 rng_;
  int episodes_completed_ = 0;
  std::uint64_t env_steps_ = 0;
  std::uint64_t update_rounds_ = 0;
  bool record_wall_time_ = false;
};

// Full training run; learners_out (optional) receives the final learners.
std::vector<MetricsRow> train(const TrainConfig& train, const env::WorldConfig& world,
                              std::vector<AgentLearner>* learners_out = nullptr);

struct EvalMetrics {
  std::vector<MetricsRow> rows;
  std::vector<double> mean_agent;
  double mean_red = 0.0;
  double mean_green = 0.0;
  double mean_total = 0.0;
};

// Greedy (argmax) rollouts on raw environment rewards.
EvalMetrics evaluate(std::span<const AgentLearner> learners, const env::WorldConfig& world,
                     int episodes, std::uint64_t seed, int max_episode_length);

}  // namespace coopmarl::maddpg
