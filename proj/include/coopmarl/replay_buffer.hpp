#pragma once

#include <algorithm>
#include <cstddef>
#include <random>
#include <span>
#include <vector>

#include "coopmarl/neural.hpp"

namespace coopmarl::maddpg {

// One stored experience. Observations and actions are concatenated over all
// agents in agent order; rewards always carry every agent's reward.
struct Transition {
  std::vector<double> obs;
  std::vector<double> actions;
  std::vector<double> rewards;
  std::vector<double> next_obs;
  bool done = false;

  bool operator==(const Transition&) const = default;
};

struct TransitionShape {
  int obs_size = 0;     // sum of per-agent observation sizes
  int action_size = 0;  // num_agents * actions per agent
  int num_agents = 0;

  int record_width() const { return 2 * obs_size + action_size + num_agents + 1; }
  bool operator==(const TransitionShape&) const = default;
};

// Column j of every matrix is sample j.
struct Minibatch {
  nn::Matrix obs;
  nn::Matrix actions;
  nn::Matrix rewards;
  nn::Matrix next_obs;
  nn::Vector done;  // 1.0 or 0.0
  std::vector<std::size_t> slots;

  Eigen::Index size() const { return obs.cols(); }
};

// Fixed-capacity FIFO ring of transitions, stored as flat records.
class ReplayBuffer {
 public:
  ReplayBuffer(TransitionShape shape, std::size_t capacity);

  // Once full, overwrites the oldest record.
  void push(const Transition& transition);

  // Uniform with replacement over stored records, so batch_size may exceed
  // size(). Throws NotReadyError on an empty buffer; deciding when there is
  // enough data to learn from is the trainer's job (see ready()).
  Minibatch sample(std::size_t batch_size, std::mt19937_64& rng) const;

  bool ready(std::size_t batch_size, std::size_t warmup = 0) const {
    return size_ >= std::max(batch_size, warmup);
  }

  Minibatch gather(std::span<const std::size_t> slots) const;
  Transition at(std::size_t slot) const;

  std::size_t size() const { return size_; }
  std::size_t capacity() const { return capacity_; }
  std::size_t cursor() const { return cursor_; }
  const TransitionShape& shape() const { return shape_; }

  // Raw records, size() * shape().record_width() doubles.
  const std::vector<double>& records() const { return records_; }
  static ReplayBuffer restore(TransitionShape shape, std::size_t capacity, std::size_t cursor,
                              std::vector<double> records);

 private:
  TransitionShape shape_;
  std::size_t capacity_;
  std::size_t cursor_ = 0;
  std::size_t size_ = 0;
  std::vector<double> records_;
};

}  // namespace coopmarl::maddpg
