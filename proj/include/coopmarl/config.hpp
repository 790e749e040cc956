#pragma once

// Experiment configuration, stored as a JSON tree:
//
//   {
//     "world":   { ...WorldConfig fields... },
//     "train":   { ...TrainConfig fields, "bonus": { ... } },
//     "seeds":   [0, 1, 2],
//     "output_dir": "runs/example",
//     ...
//   }
//
// Every key is optional; missing keys take their defaults. Unknown keys and
// type mismatches are rejected with ConfigError.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "coopmarl/maddpg.hpp"
#include "coopmarl/particle_env.hpp"

namespace coopmarl::harness {

struct ExperimentConfig {
  env::WorldConfig world;
  maddpg::TrainConfig train;
  std::vector<std::uint64_t> seeds{0};
  std::filesystem::path output_dir = "runs";
  int eval_every = 500;       // episodes between greedy evaluations, 0 disables
  int eval_episodes = 10;
  int smoothing_window = 100;
  int checkpoint_every = 0;   // episodes between periodic checkpoints, 0 disables
  bool final_checkpoint = true;
  bool record_wall_time = false;

  void validate() const;
  // Train config with the run seed filled in.
  maddpg::TrainConfig train_for_seed(std::uint64_t seed) const;
};

nlohmann::json to_json(const ExperimentConfig& config);

// Merges the tree over the defaults, then decodes. Throws ConfigError.
ExperimentConfig experiment_from_json(const nlohmann::json& tree);

// Throws ConfigError naming the file when it is missing or malformed.
nlohmann::json read_config_tree(const std::filesystem::path& path);
ExperimentConfig load_experiment_config(const std::filesystem::path& path);

// Applies "dotted.key=value" to the tree. The value is parsed as JSON when it
// can be, otherwise taken as a string. Throws ConfigError on unknown keys.
void apply_override(nlohmann::json& tree, const std::string& assignment);

// Canonical text embedded in checkpoints and reports.
std::string config_echo(const ExperimentConfig& config);

struct FieldDoc {
  std::string key;
  std::string default_value;
  std::string description;
};

// One entry per configurable leaf, in file order.
std::vector<FieldDoc> config_field_docs();

}  // namespace coopmarl::harness
