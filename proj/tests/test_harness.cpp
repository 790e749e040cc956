#include <gtest/gtest.h>

#include <boost/property_tree/ptree.hpp>
#include <boost/property_tree/xml_parser.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "coopmarl/checkpoint.hpp"
#include "coopmarl/config.hpp"
#include "coopmarl/errors.hpp"
#include "coopmarl/experiment.hpp"
#include "coopmarl/metrics.hpp"
#include "coopmarl/plots.hpp"

namespace fs = std::filesystem;
using namespace coopmarl;
using namespace coopmarl::harness;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("coopmarl_harness_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void spit(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

ExperimentConfig small_experiment(const fs::path& out, int episodes = 10) {
  ExperimentConfig c;
  c.train.episodes = episodes;
  c.train.batch_size = 32;
  c.train.warmup = 64;
  c.train.update_every = 10;
  c.train.buffer_capacity = 4000;
  c.train.hidden_layers = {16, 16};
  c.seeds = {3};
  c.output_dir = out;
  c.eval_every = 5;
  c.eval_episodes = 2;
  return c;
}

std::size_t count_polylines(const boost::property_tree::ptree& node) {
  std::size_t n = 0;
  for (const auto& [name, child] : node) {
    if (name == "polyline") n += child.get<std::string>("<xmlattr>.class", "") == "series";
    n += count_polylines(child);
  }
  return n;
}

std::vector<std::string> polyline_points(const boost::property_tree::ptree& node) {
  std::vector<std::string> out;
  for (const auto& [name, child] : node) {
    if (name == "polyline") out.push_back(child.get<std::string>("<xmlattr>.points"));
    auto sub = polyline_points(child);
    out.insert(out.end(), sub.begin(), sub.end());
  }
  return out;
}

}  // namespace

TEST(metrics_csv, header_and_round_trip) {
  EXPECT_EQ(metrics_csv_header(2, 1), "episode,red_0,red_1,green_0,red_team,green_team,total,wall_ms");
  const auto row = make_metrics_row(1, {0.1, -2.5, 1e-17}, 2);
  EXPECT_EQ(row.red_team, 0.1 + -2.5);
  const fs::path dir = scratch("csv");
  write_metrics_csv(dir / "m.csv", 2, 1, {row, make_metrics_row(2, {1, 2, 3}, 2)});
  const auto table = read_metrics_csv(dir / "m.csv");
  EXPECT_EQ(table.num_red, 2);
  EXPECT_EQ(table.num_green, 1);
  ASSERT_EQ(table.rows.size(), 2u);
  EXPECT_EQ(table.rows[0], row);
  const auto text = slurp(dir / "m.csv");
  EXPECT_EQ(text.find('\r'), std::string::npos);
  EXPECT_EQ(text.back(), '\n');
}

TEST(metrics_csv, malformed_input_names_file_and_line) {
  const fs::path dir = scratch("csv_bad");
  spit(dir / "bad.csv",
       "episode,red_0,green_0,red_team,green_team,total,wall_ms\n1,1,2,1,2,3,0\n2,1,oops,1,2,3,0\n");
  try {
    read_metrics_csv(dir / "bad.csv");
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    const std::string what = e.what();
    EXPECT_NE(what.find("bad.csv"), std::string::npos) << what;
    EXPECT_NE(what.find(":3"), std::string::npos) << what;
  }
  spit(dir / "cols.csv", "episode,red_0,green_0,red_team,green_team,total,wall_ms\n1,1,2,1\n");
  EXPECT_THROW(read_metrics_csv(dir / "cols.csv"), ParseError);
  spit(dir / "header.csv", "ep,red_0\n");
  EXPECT_THROW(read_metrics_csv(dir / "header.csv"), ParseError);
}

TEST(format_double, round_trips) {
  for (double v : {0.1, -1.0 / 3.0, 1e-300, 12345.678, 0.0}) EXPECT_EQ(std::stod(format_double(v)), v);
}

TEST(config, defaults_round_trip_through_json) {
  ExperimentConfig c;
  c.seeds = {1, 2, 9};
  c.train.bonus.threshold = 3;
  const auto back = experiment_from_json(to_json(c));
  EXPECT_EQ(config_echo(back), config_echo(c));
  EXPECT_EQ(back.world, c.world);
  EXPECT_EQ(back.seeds, c.seeds);
}

TEST(config, unknown_keys_and_bad_types_rejected) {
  EXPECT_THROW(experiment_from_json(nlohmann::json::parse(R"({"world":{"num_reds":3}})")), ConfigError);
  EXPECT_THROW(experiment_from_json(nlohmann::json::parse(R"({"train":{"gamma":"high"}})")), ConfigError);
  EXPECT_THROW(experiment_from_json(nlohmann::json::parse(R"({"train":{"gamma":1.5}})")), ConfigError);
  EXPECT_THROW(experiment_from_json(nlohmann::json::parse(R"({"seeds":[]})")), ConfigError);
}

TEST(config, partial_files_and_overrides) {
  auto tree = nlohmann::json::parse(R"({"train":{"episodes":7},"seeds":[4]})");
  apply_override(tree, "train.bonus.phi=5");
  apply_override(tree, "train.bonus.threshold=inf");
  apply_override(tree, "output_dir=somewhere");
  const auto c = experiment_from_json(tree);
  EXPECT_EQ(c.train.episodes, 7);
  EXPECT_EQ(c.train.bonus.phi, 5.0);
  EXPECT_EQ(c.train.bonus.threshold, maddpg::kGateNeverFires);
  EXPECT_EQ(c.output_dir, fs::path("somewhere"));
  EXPECT_EQ(c.train.gamma, 0.95);
  EXPECT_THROW(apply_override(tree, "train.nonsense=1"), ConfigError);
  EXPECT_THROW(apply_override(tree, "no_equals_sign"), ConfigError);
}

TEST(config, missing_file_is_named) {
  try {
    load_experiment_config("/nonexistent/missing.json");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("missing.json"), std::string::npos);
  }
}

TEST(config, every_leaf_is_documented) {
  std::vector<std::string> leaves;
  std::function<void(const nlohmann::json&, const std::string&)> walk = [&](const nlohmann::json& j,
                                                                            const std::string& prefix) {
    for (auto it = j.begin(); it != j.end(); ++it) {
      const std::string key = prefix.empty() ? it.key() : prefix + "." + it.key();
      if (it->is_object()) walk(*it, key);
      else leaves.push_back(key);
    }
  };
  walk(to_json(ExperimentConfig{}), "");
  std::vector<std::string> documented;
  for (const auto& d : config_field_docs()) documented.push_back(d.key);
  std::sort(leaves.begin(), leaves.end());
  std::sort(documented.begin(), documented.end());
  EXPECT_EQ(leaves, documented);
}

TEST(config, shipped_example_loads) {
  const auto c = load_experiment_config(fs::path(COOPMARL_SOURCE_DIR) / "configs" / "example.json");
  EXPECT_NO_THROW(c.validate());
}

TEST(run_experiment, rows_files_and_determinism) {
  const fs::path dir = scratch("run");
  const auto a = run_experiment(small_experiment(dir / "a"));
  const auto b = run_experiment(small_experiment(dir / "b"));
  const auto table = read_metrics_csv(dir / "a" / "metrics_3.csv");
  EXPECT_EQ(table.rows.size(), 10u);
  EXPECT_EQ(slurp(dir / "a" / "metrics_3.csv"), slurp(dir / "b" / "metrics_3.csv"));
  EXPECT_EQ(slurp(dir / "a" / "eval_3.csv"), slurp(dir / "b" / "eval_3.csv"));
  EXPECT_EQ(read_metrics_csv(dir / "a" / "eval_3.csv").rows.size(), 2u);
  EXPECT_EQ(a.metrics.at(3), table.rows);
  EXPECT_TRUE(verify_manifest(a.manifest));
  EXPECT_TRUE(fs::exists(dir / "a" / "ckpt_3_final.bin"));
}

TEST(run_experiment, two_seeds_fan_out) {
  const fs::path dir = scratch("fanout");
  auto c = small_experiment(dir, 4);
  c.seeds = {1, 2};
  const auto r = run_experiment(c);
  EXPECT_EQ(r.metrics_csvs.size(), 2u);
  EXPECT_EQ(r.checkpoints.size(), 2u);
  EXPECT_TRUE(fs::exists(dir / "metrics_1.csv"));
  EXPECT_TRUE(fs::exists(dir / "metrics_2.csv"));
  EXPECT_TRUE(fs::exists(dir / "ckpt_1_final.bin"));
  EXPECT_TRUE(fs::exists(dir / "ckpt_2_final.bin"));
  std::size_t manifests = 0;
  for (const auto& e : fs::directory_iterator(dir)) manifests += e.path().filename() == "manifest.txt";
  EXPECT_EQ(manifests, 1u);
  const auto manifest = slurp(r.manifest);
  EXPECT_NE(manifest.find("metrics_1.csv"), std::string::npos);
  EXPECT_NE(manifest.find("ckpt_2_final.bin"), std::string::npos);
  EXPECT_NE(read_metrics_csv(dir / "metrics_1.csv").rows, read_metrics_csv(dir / "metrics_2.csv").rows);
}

TEST(run_experiment, unwritable_output_fails_before_training) {
  const fs::path dir = scratch("unwritable");
  spit(dir / "plain_file", "x");
  EXPECT_THROW(run_experiment(small_experiment(dir / "plain_file" / "out")), IoError);
}

TEST(manifest, detects_tampering) {
  const fs::path dir = scratch("manifest");
  spit(dir / "a.txt", "hello");
  spit(dir / "b.txt", "world");
  const auto m = write_manifest(dir);
  EXPECT_TRUE(verify_manifest(m));
  EXPECT_NE(slurp(m).find("2cf24dba5fb0a30e26e83b2ac5b9e29e1b161e5c1fa7425e73043362938b9824  a.txt"),
            std::string::npos);
  spit(dir / "a.txt", "hellO");
  EXPECT_FALSE(verify_manifest(m));
}

TEST(sha256_hex, known_vector) {
  const fs::path dir = scratch("sha");
  spit(dir / "abc", "abc");
  EXPECT_EQ(sha256_hex(dir / "abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST(checkpoint, round_trip_is_bitwise) {
  const fs::path dir = scratch("ckpt");
  auto cfg = small_experiment(dir, 6);
  maddpg::Trainer trainer(cfg.train_for_seed(3), cfg.world);
  trainer.run();
  save_checkpoint(trainer, cfg, dir / "c.bin");
  const auto loaded = load_checkpoint(dir / "c.bin");
  EXPECT_EQ(loaded.config_echo, config_echo(cfg));
  const auto& t = loaded.trainer;
  EXPECT_EQ(t.config(), trainer.config());
  EXPECT_EQ(t.world(), trainer.world());
  EXPECT_EQ(t.rng(), trainer.rng());
  EXPECT_EQ(t.episodes_completed(), 6);
  EXPECT_EQ(t.env_steps(), trainer.env_steps());
  EXPECT_EQ(t.update_rounds(), trainer.update_rounds());
  EXPECT_EQ(t.buffer().records(), trainer.buffer().records());
  EXPECT_EQ(t.buffer().cursor(), trainer.buffer().cursor());
  for (std::size_t i = 0; i < t.learners().size(); ++i) {
    const auto& a = t.learners()[i];
    const auto& b = trainer.learners()[i];
    EXPECT_TRUE(a.actor == b.actor && a.critic == b.critic && a.target_actor == b.target_actor &&
                a.target_critic == b.target_critic);
    EXPECT_EQ(a.actor_opt.timestep, b.actor_opt.timestep);
    EXPECT_EQ(a.critic_opt.second_moment.weights[0], b.critic_opt.second_moment.weights[0]);
    EXPECT_EQ(a.team, b.team);
  }
  // Saving the loaded state again reproduces the file byte for byte.
  save_checkpoint(t, loaded.config, dir / "d.bin");
  EXPECT_EQ(slurp(dir / "c.bin"), slurp(dir / "d.bin"));
}

TEST(checkpoint, fresh_learner_round_trip) {
  const fs::path dir = scratch("ckpt_fresh");
  auto cfg = small_experiment(dir, 0);
  maddpg::Trainer trainer(cfg.train_for_seed(3), cfg.world);
  save_checkpoint(trainer, cfg, dir / "c.bin");
  const auto loaded = load_checkpoint(dir / "c.bin");
  for (std::size_t i = 0; i < trainer.learners().size(); ++i)
    EXPECT_EQ(loaded.trainer.learners()[i].actor.flatten(), trainer.learners()[i].actor.flatten());
}

TEST(checkpoint, version_bump_and_truncation_rejected) {
  const fs::path dir = scratch("ckpt_bad");
  auto cfg = small_experiment(dir, 2);
  maddpg::Trainer trainer(cfg.train_for_seed(3), cfg.world);
  trainer.run();
  save_checkpoint(trainer, cfg, dir / "c.bin");
  std::string bytes = slurp(dir / "c.bin");

  std::string bumped = bytes;
  bumped[8] = static_cast<char>(kCheckpointVersion + 1);
  spit(dir / "bumped.bin", bumped);
  try {
    load_checkpoint(dir / "bumped.bin");
    FAIL();
  } catch (const CheckpointFormatError& e) {
    EXPECT_NE(std::string(e.what()).find("version"), std::string::npos);
  }
  spit(dir / "short.bin", bytes.substr(0, bytes.size() / 2));
  EXPECT_THROW(load_checkpoint(dir / "short.bin"), CheckpointFormatError);
  spit(dir / "long.bin", bytes + "x");
  EXPECT_THROW(load_checkpoint(dir / "long.bin"), CheckpointFormatError);
  std::string magic = bytes;
  magic[0] = 'X';
  spit(dir / "magic.bin", magic);
  EXPECT_THROW(load_checkpoint(dir / "magic.bin"), CheckpointFormatError);
  EXPECT_THROW(load_checkpoint(dir / "absent.bin"), CheckpointFormatError);
}

TEST(checkpoint, resume_matches_straight_run) {
  const fs::path dir = scratch("resume");
  auto straight = small_experiment(dir / "straight", 20);
  straight.eval_every = 0;
  run_experiment(straight);
  auto half = straight;
  half.output_dir = dir / "resumed";
  half.train.episodes = 10;
  run_experiment(half);
  resume_experiment(dir / "resumed" / "ckpt_3_final.bin", 20, dir / "resumed");
  EXPECT_EQ(slurp(dir / "straight" / "metrics_3.csv"), slurp(dir / "resumed" / "metrics_3.csv"));
  EXPECT_TRUE(verify_manifest(dir / "resumed" / "manifest.txt"));
}

TEST(compare, identical_arms_have_zero_differences) {
  const fs::path dir = scratch("cmp_same");
  auto base = small_experiment(dir / "base", 10);
  base.train.bonus.enabled = false;
  base.seeds = {1, 2};
  auto variant = base;
  variant.output_dir = dir / "variant";
  const auto report = compare(base, variant, dir / "report");
  ASSERT_EQ(report.per_seed.size(), 2u);
  for (const auto& s : report.per_seed) {
    EXPECT_EQ(s.baseline.red_team, s.variant.red_team);
    EXPECT_EQ(s.baseline.green_team, s.variant.green_team);
    EXPECT_EQ(s.baseline.total, s.variant.total);
  }
  EXPECT_EQ(report.red_team.ties, 2);
  EXPECT_EQ(report.red_team.p_value, 1.0);
  EXPECT_EQ(report.final_window, 2);
  EXPECT_TRUE(fs::exists(dir / "report" / "report.json"));
  const auto text = slurp(dir / "report" / "report.txt");
  EXPECT_NE(text.find(config_echo(base)), std::string::npos);
}

TEST(compare, report_matches_csv_recomputation) {
  const fs::path dir = scratch("cmp_recompute");
  auto base = small_experiment(dir / "base", 10);
  base.train.bonus.enabled = false;
  auto variant = base;
  variant.output_dir = dir / "variant";
  variant.train.bonus.enabled = true;
  variant.train.bonus.threshold = 0;
  const auto report = compare(base, variant, dir / "report");
  const auto rows = read_metrics_csv(dir / "variant" / "metrics_3.csv").rows;
  double red = 0, green = 0, total = 0;
  for (std::size_t k = rows.size() - 2; k < rows.size(); ++k)
    red += rows[k].red_team, green += rows[k].green_team, total += rows[k].total;
  EXPECT_DOUBLE_EQ(report.per_seed[0].variant.red_team, red / 2);
  EXPECT_DOUBLE_EQ(report.per_seed[0].variant.green_team, green / 2);
  EXPECT_DOUBLE_EQ(report.per_seed[0].variant.total, total / 2);
  EXPECT_DOUBLE_EQ(report.pooled_variant.red_team, red / 2);
  const auto json = nlohmann::json::parse(slurp(dir / "report" / "report.json"));
  EXPECT_TRUE(json.contains("baseline_config"));
  EXPECT_TRUE(json.contains("verdict"));
}

TEST(compare, confounded_arms_rejected) {
  const fs::path dir = scratch("cmp_bad");
  auto base = small_experiment(dir / "base");
  auto variant = base;
  variant.output_dir = dir / "variant";
  variant.seeds = {4};
  EXPECT_THROW(check_comparable(base, variant), ContractViolation);
  variant = base;
  variant.output_dir = dir / "variant";
  variant.world.num_obstacles = 2;
  EXPECT_THROW(check_comparable(base, variant), ContractViolation);
  variant = base;
  variant.output_dir = dir / "variant";
  variant.train.gamma = 0.9;
  EXPECT_THROW(check_comparable(base, variant), ContractViolation);
  variant = base;
  EXPECT_THROW(check_comparable(base, variant), ContractViolation);
  variant.output_dir = dir / "variant";
  variant.train.bonus.phi = 5;
  variant.train.algorithm = maddpg::Algorithm::kMaddpg;
  EXPECT_NO_THROW(check_comparable(base, variant));
}

TEST(sign_test, exact_binomial) {
  const std::vector<double> d{1, 2, 3, 4, 5};
  const auto s = sign_test(d);
  EXPECT_EQ(s.wins, 5);
  EXPECT_DOUBLE_EQ(s.p_value, 2.0 / 32.0);
  const std::vector<double> e{1, -1, 0, 2};
  const auto t = sign_test(e);
  EXPECT_EQ(t.wins, 2);
  EXPECT_EQ(t.losses, 1);
  EXPECT_EQ(t.ties, 1);
  EXPECT_DOUBLE_EQ(t.p_value, 1.0);
}

TEST(final_window, sizes) {
  EXPECT_EQ(final_window_size(5000), 1000);
  EXPECT_EQ(final_window_size(3), 1);
  EXPECT_EQ(final_window_size(10), 2);
}

TEST(moving_average, constant_and_identity) {
  const std::vector<double> c(37, -3.7);
  for (int w : {1, 2, 5, 100}) EXPECT_EQ(centered_moving_average(c, w), c);
  const std::vector<double> v{1, 5, -2, 8, 0.5};
  EXPECT_EQ(centered_moving_average(v, 1), v);
  const auto m = centered_moving_average(v, 3);
  EXPECT_DOUBLE_EQ(m[0], 3.0);
  EXPECT_DOUBLE_EQ(m[2], 11.0 / 3.0);
  EXPECT_DOUBLE_EQ(m[4], 4.25);
}

TEST(plots, well_formed_with_one_curve_per_series) {
  const fs::path dir = scratch("plots");
  std::vector<MetricsRow> a, b;
  for (int e = 1; e <= 50; ++e) {
    a.push_back(make_metrics_row(e, {1.0 * e, 2, 3, 4, -5, -6.0 + e}, 4));
    b.push_back(make_metrics_row(e, {0.5 * e, 1, 1, 1, -1, -2}, 4));
  }
  write_metrics_csv(dir / "a.csv", 4, 2, a);
  write_metrics_csv(dir / "b.csv", 4, 2, b);
  const auto files = emit_plots({{"baseline & co", {dir / "a.csv"}}, {"<variant>", {dir / "a.csv", dir / "b.csv"}}}, 5,
                                dir / "svg");
  for (const auto& [file, panels] : {std::pair{files.total, 1}, {files.teams, 2}, {files.red_agents, 4}}) {
    boost::property_tree::ptree tree;
    ASSERT_NO_THROW(boost::property_tree::read_xml(file.string(), tree)) << file;
    EXPECT_EQ(count_polylines(tree), static_cast<std::size_t>(2 * panels)) << file;
    const auto text = slurp(file);
    EXPECT_NE(text.find("&lt;variant&gt;"), std::string::npos);
    EXPECT_NE(text.find("<title>"), std::string::npos);
  }
}

TEST(plots, constant_input_is_flat) {
  const fs::path dir = scratch("plots_flat");
  std::vector<MetricsRow> rows;
  for (int e = 1; e <= 30; ++e) rows.push_back(make_metrics_row(e, {2, 2, 2, 2, 1, 1}, 4));
  write_metrics_csv(dir / "flat.csv", 4, 2, rows);
  const auto files = emit_plots(std::vector<fs::path>{dir / "flat.csv"}, 7, dir / "svg");
  boost::property_tree::ptree tree;
  boost::property_tree::read_xml(files.total.string(), tree);
  const auto pts = polyline_points(tree);
  ASSERT_FALSE(pts.empty());
  for (const auto& line : pts) {
    std::istringstream in(line);
    std::string pair, y0;
    while (in >> pair) {
      const auto y = pair.substr(pair.find(',') + 1);
      if (y0.empty()) y0 = y;
      EXPECT_EQ(y, y0);
    }
  }
}

TEST(plots, mismatched_series_and_bad_csv) {
  const fs::path dir = scratch("plots_bad");
  std::vector<MetricsRow> a, b;
  for (int e = 1; e <= 5; ++e) a.push_back(make_metrics_row(e, {1, 2, 3}, 2));
  for (int e = 1; e <= 6; ++e) b.push_back(make_metrics_row(e, {1, 2, 3}, 2));
  write_metrics_csv(dir / "a.csv", 2, 1, a);
  write_metrics_csv(dir / "b.csv", 2, 1, b);
  EXPECT_THROW(emit_plots({{"x", {dir / "a.csv", dir / "b.csv"}}}, 3, dir / "svg"), ContractViolation);
  spit(dir / "bad.csv", "episode,red_0\n");
  EXPECT_THROW(emit_plots(std::vector<fs::path>{dir / "bad.csv"}, 3, dir / "svg"), ParseError);
}
