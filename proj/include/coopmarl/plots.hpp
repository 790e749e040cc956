#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace coopmarl::harness {

// A labelled curve. When several CSVs are given (one per seed) the curve is
// their per-episode mean.
struct PlotSeries {
  std::string label;
  std::vector<std::filesystem::path> csvs;
};

// Centered moving average; the window is truncated at both ends of the
// series. A constant input yields exactly the constant, window 1 is the
// identity.
std::vector<double> centered_moving_average(std::span<const double> values, int window);

struct PlotFiles {
  std::filesystem::path total;       // total reward, one curve per series
  std::filesystem::path teams;       // red and green panels
  std::filesystem::path red_agents;  // one panel per red agent
};

// Throws ParseError (file and line) on malformed CSVs and ContractViolation
// when the series disagree on agents or episode count.
PlotFiles emit_plots(const std::vector<PlotSeries>& series, int smoothing_window,
                     const std::filesystem::path& output_dir);

// One series per CSV, labelled by file stem.
PlotFiles emit_plots(const std::vector<std::filesystem::path>& csv_paths, int smoothing_window,
                     const std::filesystem::path& output_dir);

}  // namespace coopmarl::harness
