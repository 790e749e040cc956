#include "coopmarl/replay_buffer.hpp"

#include <algorithm>
#include <string>

#include "coopmarl/errors.hpp"

namespace coopmarl::maddpg {

ReplayBuffer::ReplayBuffer(TransitionShape shape, std::size_t capacity)
    : shape_(shape), capacity_(capacity) {
  require(capacity >= 1, "replay buffer capacity must be >= 1");
  require(shape.obs_size > 0 && shape.action_size > 0 && shape.num_agents > 0,
          "replay buffer shape must be positive");
}

void ReplayBuffer::push(const Transition& t) {
  require(static_cast<int>(t.obs.size()) == shape_.obs_size &&
              static_cast<int>(t.next_obs.size()) == shape_.obs_size &&
              static_cast<int>(t.actions.size()) == shape_.action_size &&
              static_cast<int>(t.rewards.size()) == shape_.num_agents,
          "replay buffer: transition shape does not match buffer");
  const std::size_t width = shape_.record_width();
  if (size_ < capacity_) records_.resize((size_ + 1) * width);
  double* out = records_.data() + cursor_ * width;
  out = std::copy(t.obs.begin(), t.obs.end(), out);
  out = std::copy(t.actions.begin(), t.actions.end(), out);
  out = std::copy(t.rewards.begin(), t.rewards.end(), out);
  out = std::copy(t.next_obs.begin(), t.next_obs.end(), out);
  *out = t.done ? 1.0 : 0.0;
  cursor_ = (cursor_ + 1) % capacity_;
  size_ = std::min(size_ + 1, capacity_);
}

Transition ReplayBuffer::at(std::size_t slot) const {
  require(slot < size_, "replay buffer: slot out of range");
  const double* rec = records_.data() + slot * shape_.record_width();
  Transition t;
  t.obs.assign(rec, rec + shape_.obs_size);
  rec += shape_.obs_size;
  t.actions.assign(rec, rec + shape_.action_size);
  rec += shape_.action_size;
  t.rewards.assign(rec, rec + shape_.num_agents);
  rec += shape_.num_agents;
  t.next_obs.assign(rec, rec + shape_.obs_size);
  rec += shape_.obs_size;
  t.done = *rec != 0.0;
  return t;
}

Minibatch ReplayBuffer::gather(std::span<const std::size_t> slots) const {
  const auto n = static_cast<Eigen::Index>(slots.size());
  Minibatch batch;
  batch.obs.resize(shape_.obs_size, n);
  batch.actions.resize(shape_.action_size, n);
  batch.rewards.resize(shape_.num_agents, n);
  batch.next_obs.resize(shape_.obs_size, n);
  batch.done.resize(n);
  batch.slots.assign(slots.begin(), slots.end());
  using ConstMap = Eigen::Map<const Eigen::VectorXd>;
  for (Eigen::Index j = 0; j < n; ++j) {
    require(slots[j] < size_, "replay buffer: slot out of range");
    const double* rec = records_.data() + slots[j] * shape_.record_width();
    batch.obs.col(j) = ConstMap(rec, shape_.obs_size);
    rec += shape_.obs_size;
    batch.actions.col(j) = ConstMap(rec, shape_.action_size);
    rec += shape_.action_size;
    batch.rewards.col(j) = ConstMap(rec, shape_.num_agents);
    rec += shape_.num_agents;
    batch.next_obs.col(j) = ConstMap(rec, shape_.obs_size);
    rec += shape_.obs_size;
    batch.done[j] = *rec;
  }
  return batch;
}

Minibatch ReplayBuffer::sample(std::size_t batch_size, std::mt19937_64& rng) const {
  require(batch_size >= 1, "replay buffer: batch size must be >= 1");
  if (size_ == 0) throw NotReadyError("replay buffer is empty");
  std::uniform_int_distribution<std::size_t> pick(0, size_ - 1);
  std::vector<std::size_t> slots(batch_size);
  for (auto& s : slots) s = pick(rng);
  return gather(slots);
}

ReplayBuffer ReplayBuffer::restore(TransitionShape shape, std::size_t capacity, std::size_t cursor,
                                   std::vector<double> records) {
  ReplayBuffer buffer(shape, capacity);
  const std::size_t width = shape.record_width();
  require(records.size() % width == 0, "replay buffer restore: record storage not a multiple of width");
  buffer.size_ = records.size() / width;
  require(buffer.size_ <= capacity, "replay buffer restore: more records than capacity");
  require(cursor < capacity && (buffer.size_ == capacity || cursor == buffer.size_ % capacity),
          "replay buffer restore: inconsistent cursor");
  buffer.cursor_ = cursor;
  buffer.records_ = std::move(records);
  return buffer;
}

}  // namespace coopmarl::maddpg
