#include <CLI11.hpp>

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "coopmarl/checkpoint.hpp"
#include "coopmarl/config.hpp"
#include "coopmarl/errors.hpp"
#include "coopmarl/experiment.hpp"
#include "coopmarl/metrics.hpp"
#include "coopmarl/plots.hpp"
#include "coopmarl/trainer.hpp"

namespace fs = std::filesystem;
using namespace coopmarl;
using namespace coopmarl::harness;

namespace {

struct GlobalFlags {
  std::string config;
  std::optional<std::int64_t> seed;
  std::string out;
  std::vector<std::string> overrides;
};

std::string field_reference() {
  std::ostringstream text;
  text << "Config fields (JSON file via --config, or --set key=value):\n";
  for (const auto& f : config_field_docs())
    text << "  " << f.key << " = " << f.default_value << "\n      " << f.description << "\n";
  return text.str();
}

ExperimentConfig build_config(const std::string& path, const GlobalFlags& flags) {
  nlohmann::json tree = path.empty() ? nlohmann::json::object() : read_config_tree(path);
  for (const auto& o : flags.overrides) apply_override(tree, o);
  if (flags.seed) {
    if (*flags.seed < 0) throw ConfigError("--seed must be non-negative");
    tree["seeds"] = nlohmann::json::array({*flags.seed});
  }
  if (!flags.out.empty()) tree["output_dir"] = flags.out;
  return experiment_from_json(tree);
}

void print_summary(const std::string& title, const ArmSummary& s) {
  std::cout << title << ": red_team " << format_double(s.red_team) << ", green_team "
            << format_double(s.green_team) << ", total " << format_double(s.total) << "\n";
}

int cmd_train(const GlobalFlags& flags, const std::string& resume, int episodes) {
  if (!resume.empty()) {
    const fs::path out = flags.out.empty() ? fs::path(resume).parent_path() : fs::path(flags.out);
    const auto loaded = load_checkpoint(resume);
    const int target = episodes > 0 ? episodes : loaded.config.train.episodes;
    const auto artifacts = resume_experiment(resume, target, out.empty() ? fs::path(".") : out);
    for (const auto& p : artifacts.metrics_csvs) std::cout << "wrote " << p.string() << "\n";
    return 0;
  }
  auto cfg = build_config(flags.config, flags);
  if (episodes > 0) cfg.train.episodes = episodes;
  cfg.validate();
  const auto artifacts = run_experiment(cfg);
  for (const auto& [seed, rows] : artifacts.metrics) {
    const auto s = final_window_means(rows, final_window_size(static_cast<int>(rows.size())));
    print_summary("seed " + std::to_string(seed) + " final-window means", s);
  }
  for (const auto& p : artifacts.metrics_csvs) std::cout << "wrote " << p.string() << "\n";
  std::cout << "manifest " << artifacts.manifest.string() << "\n";
  return 0;
}

int cmd_eval(const GlobalFlags& flags, const std::string& checkpoint, int episodes) {
  const auto loaded = load_checkpoint(checkpoint);
  const int n = episodes > 0 ? episodes : loaded.config.eval_episodes;
  const std::uint64_t seed = flags.seed ? static_cast<std::uint64_t>(*flags.seed) : loaded.trainer.config().seed;
  const auto eval = maddpg::evaluate(loaded.trainer.learners(), loaded.trainer.world(), n, seed,
                                     loaded.trainer.config().max_episode_length);
  std::cout << "episodes " << n << "\n";
  print_summary("greedy means", {eval.mean_red, eval.mean_green, eval.mean_total});
  if (!flags.out.empty()) {
    fs::create_directories(flags.out);
    const fs::path csv = fs::path(flags.out) / ("eval_" + std::to_string(seed) + ".csv");
    write_metrics_csv(csv, loaded.trainer.world().num_red, loaded.trainer.world().num_green, eval.rows);
    std::cout << "wrote " << csv.string() << "\n";
  }
  return 0;
}

int cmd_compare(const GlobalFlags& flags, const std::string& variant_path) {
  if (flags.config.empty()) throw ConfigError("compare needs --config <baseline> and --variant <config>");
  GlobalFlags arm_flags = flags;
  arm_flags.out.clear();
  auto baseline = build_config(flags.config, arm_flags);
  auto variant = build_config(variant_path, arm_flags);
  fs::path report_dir = flags.out.empty() ? fs::path("comparison") : fs::path(flags.out);
  if (!flags.out.empty()) {
    baseline.output_dir = report_dir / "baseline";
    variant.output_dir = report_dir / "variant";
  }
  const auto report = compare(baseline, variant, report_dir);
  std::cout << report_to_text(report);
  std::cout << "report " << (report_dir / "report.json").string() << "\n";
  return 0;
}

int cmd_plot(const GlobalFlags& flags, const std::vector<std::string>& csvs,
             const std::vector<std::string>& series_args, int window) {
  std::vector<PlotSeries> series;
  for (const auto& c : csvs) series.push_back({fs::path(c).stem().string(), {c}});
  for (const auto& arg : series_args) {
    const auto eq = arg.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("--series expects label=path[,path...], got '" + arg + "'");
    PlotSeries s{arg.substr(0, eq), {}};
    std::stringstream paths(arg.substr(eq + 1));
    for (std::string p; std::getline(paths, p, ',');)
      if (!p.empty()) s.csvs.emplace_back(p);
    series.push_back(std::move(s));
  }
  if (series.empty()) throw ConfigError("plot needs at least one --csv or --series");
  if (window <= 0) {
    window = flags.config.empty() ? ExperimentConfig{}.smoothing_window : build_config(flags.config, flags).smoothing_window;
  }
  const fs::path out = flags.out.empty() ? fs::path("plots") : fs::path(flags.out);
  const auto files = emit_plots(series, window, out);
  for (const auto& p : {files.total, files.teams, files.red_agents}) std::cout << "wrote " << p.string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Cooperative multi-agent training on the particle predator-prey world"};
  app.footer(field_reference());
  app.require_subcommand(1);

  GlobalFlags flags;
  app.add_option("--config", flags.config, "experiment config file (JSON)");
  app.add_option("--seed", flags.seed, "run a single seed, overriding the config's seed list");
  app.add_option("--out", flags.out, "output directory, overriding output_dir");
  app.add_option("--set", flags.overrides, "override a config field, e.g. --set train.gamma=0.9")->take_all();

  std::string resume;
  int train_episodes = 0;
  auto* train = app.add_subcommand("train", "train every configured seed");
  train->fallthrough();
  train->add_option("--resume", resume, "continue from a checkpoint");
  train->add_option("--episodes", train_episodes, "total episode budget (overrides train.episodes)");

  std::string checkpoint;
  int eval_episodes = 0;
  auto* eval = app.add_subcommand("eval", "greedy evaluation of a checkpoint");
  eval->fallthrough();
  eval->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
  eval->add_option("--episodes", eval_episodes, "number of evaluation episodes");

  std::string variant;
  auto* cmp = app.add_subcommand("compare", "train baseline (--config) and variant arms and write a report");
  cmp->fallthrough();
  cmp->add_option("--variant", variant, "variant config file")->required();

  std::vector<std::string> csvs;
  std::vector<std::string> series;
  int window = 0;
  auto* plot = app.add_subcommand("plot", "render SVG reward curves from metrics CSVs");
  plot->fallthrough();
  plot->add_option("--csv", csvs, "metrics CSV, one series each");
  plot->add_option("--series", series, "label=a.csv,b.csv; the CSVs are averaged per episode");
  plot->add_option("--window", window, "moving-average window (default: smoothing_window)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (*train) return cmd_train(flags, resume, train_episodes);
    if (*eval) return cmd_eval(flags, checkpoint, eval_episodes);
    if (*cmp) return cmd_compare(flags, variant);
    if (*plot) return cmd_plot(flags, csvs, series, window);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
