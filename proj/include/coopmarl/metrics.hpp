#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "coopmarl/particle_env.hpp"

namespace coopmarl {

// Episodic rewards for one episode. Team sums are accumulated in agent order.
struct MetricsRow {
  int episode = 0;
  std::vector<double> agent_rewards;
  double red_team = 0.0;
  double green_team = 0.0;
  double total = 0.0;
  double wall_ms = 0.0;

  bool operator==(const MetricsRow&) const = default;
};

MetricsRow make_metrics_row(int episode, std::vector<double> agent_rewards, int num_red,
                            double wall_ms = 0.0);

// red_0..red_{R-1}, green_0..green_{G-1}
std::vector<std::string> agent_column_names(int num_red, int num_green);

std::string metrics_csv_header(int num_red, int num_green);
std::string metrics_csv_line(const MetricsRow& row);

// Shortest decimal form that round-trips to the same double.
std::string format_double(double value);

struct MetricsTable {
  std::vector<std::string> agent_names;
  int num_red = 0;
  int num_green = 0;
  std::vector<MetricsRow> rows;
};

// Throws ParseError naming the file and line on any schema violation.
MetricsTable read_metrics_csv(const std::filesystem::path& path);
void write_metrics_csv(const std::filesystem::path& path, int num_red, int num_green,
                       const std::vector<MetricsRow>& rows);

}  // namespace coopmarl
