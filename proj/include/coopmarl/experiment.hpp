#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "coopmarl/config.hpp"
#include "coopmarl/metrics.hpp"

namespace coopmarl::harness {

struct RunArtifacts {
  std::map<std::uint64_t, std::vector<MetricsRow>> metrics;  // by seed
  std::vector<std::filesystem::path> metrics_csvs;
  std::vector<std::filesystem::path> eval_csvs;
  std::vector<std::filesystem::path> checkpoints;
  std::filesystem::path manifest;
};

std::filesystem::path metrics_csv_path(const std::filesystem::path& dir, std::uint64_t seed);

// Trains every seed, writing metrics_<seed>.csv, eval_<seed>.csv (when
// eval_every > 0), checkpoints and manifest.txt under config.output_dir.
// Throws IoError before training if the directory is not writable.
RunArtifacts run_experiment(const ExperimentConfig& config);

// Continues the run stored in a checkpoint up to `episodes` total episodes,
// rewriting metrics_<seed>.csv in output_dir and refreshing the manifest.
RunArtifacts resume_experiment(const std::filesystem::path& checkpoint, int episodes,
                               const std::filesystem::path& output_dir);

std::string sha256_hex(const std::filesystem::path& file);

// "<sha256>  <path relative to dir>" per artifact, sorted by path.
std::filesystem::path write_manifest(const std::filesystem::path& dir);

// True when every manifest entry exists and hashes to the recorded digest.
bool verify_manifest(const std::filesystem::path& manifest);

struct ArmSummary {
  double red_team = 0.0;
  double green_team = 0.0;
  double total = 0.0;
};

// Means over the last `window` rows.
ArmSummary final_window_means(std::span<const MetricsRow> rows, int window);

// Final 20% of episodes, at least one.
int final_window_size(int episodes);

struct SignTest {
  int wins = 0;    // variant > baseline
  int losses = 0;  // variant < baseline
  int ties = 0;
  double p_value = 1.0;  // two-sided exact binomial over non-tied pairs
};

SignTest sign_test(std::span<const double> differences);

struct SeedComparison {
  std::uint64_t seed = 0;
  ArmSummary baseline;
  ArmSummary variant;
};

struct ComparisonReport {
  int final_window = 0;
  std::vector<SeedComparison> per_seed;
  ArmSummary pooled_baseline;
  ArmSummary pooled_variant;
  SignTest red_team;
  SignTest green_team;
  SignTest total;
  std::string verdict;
  std::string baseline_config;
  std::string variant_config;
};

// Throws ContractViolation when the arms differ in anything other than the
// algorithm and bonus settings (world, seeds, training schedule, ...).
void check_comparable(const ExperimentConfig& baseline, const ExperimentConfig& variant);

ComparisonReport summarize_comparison(const ExperimentConfig& baseline, const ExperimentConfig& variant,
                                      const std::map<std::uint64_t, std::vector<MetricsRow>>& baseline_rows,
                                      const std::map<std::uint64_t, std::vector<MetricsRow>>& variant_rows);

// Runs both arms into their own output directories and writes report.json
// and report.txt into report_dir.
ComparisonReport compare(const ExperimentConfig& baseline, const ExperimentConfig& variant,
                         const std::filesystem::path& report_dir);

nlohmann::json report_to_json(const ComparisonReport& report);
std::string report_to_text(const ComparisonReport& report);

}  // namespace coopmarl::harness
