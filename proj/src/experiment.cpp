#include "coopmarl/experiment.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <memory>
#include <sstream>

#include "coopmarl/checkpoint.hpp"
#include "coopmarl/errors.hpp"
#include "coopmarl/trainer.hpp"

namespace coopmarl::harness {

namespace fs = std::filesystem;

namespace {

constexpr std::uint64_t kEvalSeedStream = 6;
constexpr const char* kManifestName = "manifest.txt";

void ensure_writable(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory '" + dir.string() + "': " + ec.message());
  const fs::path probe = dir / ".write_probe";
  {
    std::ofstream out(probe);
    if (!out) throw IoError("output directory '" + dir.string() + "' is not writable");
  }
  fs::remove(probe, ec);
}

fs::path eval_csv_path(const fs::path& dir, std::uint64_t seed) {
  return dir / ("eval_" + std::to_string(seed) + ".csv");
}

fs::path checkpoint_path(const fs::path& dir, std::uint64_t seed, const std::string& tag) {
  return dir / ("ckpt_" + std::to_string(seed) + "_" + tag + ".bin");
}

MetricsRow greedy_eval_row(const maddpg::Trainer& trainer, const ExperimentConfig& config, int episode) {
  const auto eval = maddpg::evaluate(trainer.learners(), trainer.world(), config.eval_episodes,
                                     maddpg::derive_seed(trainer.config().seed, kEvalSeedStream, episode),
                                     trainer.config().max_episode_length);
  return make_metrics_row(episode, eval.mean_agent, trainer.world().num_red);
}

std::vector<MetricsRow> rows_up_to(const fs::path& csv, int episode) {
  if (!fs::exists(csv)) return {};
  auto table = read_metrics_csv(csv);
  std::vector<MetricsRow> kept;
  for (auto& row : table.rows)
    if (row.episode <= episode) kept.push_back(std::move(row));
  return kept;
}

// Drives one seed from the trainer's current episode to its budget.
void continue_run(maddpg::Trainer& trainer, const ExperimentConfig& config, const fs::path& dir,
                  std::vector<MetricsRow>& rows, std::vector<MetricsRow>& eval_rows,
                  RunArtifacts& artifacts) {
  const std::uint64_t seed = trainer.config().seed;
  trainer.set_record_wall_time(config.record_wall_time);
  while (trainer.episodes_completed() < trainer.config().episodes) {
    rows.push_back(trainer.run_episode());
    const int e = trainer.episodes_completed();
    if (config.eval_every > 0 && e % config.eval_every == 0) eval_rows.push_back(greedy_eval_row(trainer, config, e));
    if (config.checkpoint_every > 0 && e % config.checkpoint_every == 0) {
      const fs::path p = checkpoint_path(dir, seed, "ep" + std::to_string(e));
      save_checkpoint(trainer, config, p);
      artifacts.checkpoints.push_back(p);
    }
  }
  const int n_red = config.world.num_red;
  const int n_green = config.world.num_green;
  const fs::path csv = metrics_csv_path(dir, seed);
  write_metrics_csv(csv, n_red, n_green, rows);
  artifacts.metrics_csvs.push_back(csv);
  if (!eval_rows.empty()) {
    const fs::path eval_csv = eval_csv_path(dir, seed);
    write_metrics_csv(eval_csv, n_red, n_green, eval_rows);
    artifacts.eval_csvs.push_back(eval_csv);
  }
  if (config.final_checkpoint) {
    const fs::path p = checkpoint_path(dir, seed, "final");
    save_checkpoint(trainer, config, p);
    artifacts.checkpoints.push_back(p);
  }
  artifacts.metrics[seed] = rows;
}

double binomial_tail_two_sided(int n, int k) {
  // P(X <= k) for X ~ Bin(n, 1/2), doubled and capped at 1.
  double tail = 0.0;
  double term = std::pow(0.5, n);  // C(n, 0) / 2^n
  for (int i = 0; i <= k; ++i) {
    tail += term;
    term = term * (n - i) / (i + 1);
  }
  return std::min(1.0, 2.0 * tail);
}

}  // namespace

fs::path metrics_csv_path(const fs::path& dir, std::uint64_t seed) {
  return dir / ("metrics_" + std::to_string(seed) + ".csv");
}

RunArtifacts run_experiment(const ExperimentConfig& config) {
  config.validate();
  ensure_writable(config.output_dir);
  RunArtifacts artifacts;
  for (std::uint64_t seed : config.seeds) {
    maddpg::Trainer trainer(config.train_for_seed(seed), config.world);
    std::vector<MetricsRow> rows;
    std::vector<MetricsRow> eval_rows;
    continue_run(trainer, config, config.output_dir, rows, eval_rows, artifacts);
  }
  artifacts.manifest = write_manifest(config.output_dir);
  return artifacts;
}

RunArtifacts resume_experiment(const fs::path& checkpoint, int episodes, const fs::path& output_dir) {
  LoadedCheckpoint loaded = load_checkpoint(checkpoint);
  ensure_writable(output_dir);
  ExperimentConfig config = loaded.config;
  config.output_dir = output_dir;
  config.train.episodes = episodes;
  maddpg::Trainer& trainer = loaded.trainer;
  trainer.set_episode_budget(episodes);

  const std::uint64_t seed = trainer.config().seed;
  const int done = trainer.episodes_completed();
  std::vector<MetricsRow> rows = rows_up_to(metrics_csv_path(output_dir, seed), done);
  std::vector<MetricsRow> eval_rows = rows_up_to(eval_csv_path(output_dir, seed), done);
  RunArtifacts artifacts;
  continue_run(trainer, config, output_dir, rows, eval_rows, artifacts);
  artifacts.manifest = write_manifest(output_dir);
  return artifacts;
}

std::string sha256_hex(const fs::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw IoError("cannot read " + file.string() + " for hashing");
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1)
    throw IoError("sha256: digest initialisation failed");
  std::array<char, 1 << 16> chunk{};
  while (in) {
    in.read(chunk.data(), chunk.size());
    if (in.gcount() > 0) EVP_DigestUpdate(ctx.get(), chunk.data(), static_cast<std::size_t>(in.gcount()));
  }
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int length = 0;
  EVP_DigestFinal_ex(ctx.get(), digest, &length);
  static constexpr char kHex[] = "0123456789abcdef";
  std::string hex;
  for (unsigned int k = 0; k < length; ++k) {
    hex += kHex[digest[k] >> 4];
    hex += kHex[digest[k] & 0xf];
  }
  return hex;
}

fs::path write_manifest(const fs::path& dir) {
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    const auto name = entry.path().filename().string();
    if (name == kManifestName || entry.path().extension() == ".tmp") continue;
    files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  const fs::path manifest = dir / kManifestName;
  std::ofstream out(manifest, std::ios::binary);
  if (!out) throw IoError("cannot write " + manifest.string());
  for (const auto& f : files) out << sha256_hex(f) << "  " << f.filename().string() << '\n';
  return manifest;
}

bool verify_manifest(const fs::path& manifest) {
  std::ifstream in(manifest);
  if (!in) return false;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto gap = line.find("  ");
    if (gap == std::string::npos) return false;
    const fs::path file = manifest.parent_path() / line.substr(gap + 2);
    if (!fs::exists(file) || sha256_hex(file) != line.substr(0, gap)) return false;
  }
  return true;
}

int final_window_size(int episodes) { return std::max(1, episodes / 5); }

ArmSummary final_window_means(std::span<const MetricsRow> rows, int window) {
  require(window >= 1 && static_cast<std::size_t>(window) <= rows.size(),
          "final_window_means: window must be within the number of rows");
  ArmSummary s;
  for (std::size_t k = rows.size() - window; k < rows.size(); ++k) {
    s.red_team += rows[k].red_team;
    s.green_team += rows[k].green_team;
    s.total += rows[k].total;
  }
  s.red_team /= window;
  s.green_team /= window;
  s.total /= window;
  return s;
}

SignTest sign_test(std::span<const double> differences) {
  SignTest t;
  for (double d : differences) {
    if (d > 0.0) {
      ++t.wins;
    } else if (d < 0.0) {
      ++t.losses;
    } else {
      ++t.ties;
    }
  }
  const int n = t.wins + t.losses;
  t.p_value = n == 0 ? 1.0 : binomial_tail_two_sided(n, std::min(t.wins, t.losses));
  return t;
}

void check_comparable(const ExperimentConfig& baseline, const ExperimentConfig& variant) {
  auto confound = [](const std::string& what) {
    throw ContractViolation("comparison would be confounded: baseline and variant " + what +
                            "; the arms may differ only in algorithm and bonus settings");
  };
  if (!(baseline.world == variant.world)) confound("use different world configs");
  if (baseline.seeds != variant.seeds) confound("use different seeds");
  maddpg::TrainConfig a = baseline.train;
  maddpg::TrainConfig b = variant.train;
  a.algorithm = b.algorithm;
  a.bonus = b.bonus;
  if (!(a == b)) confound("use different training settings");
  if (fs::weakly_canonical(baseline.output_dir) == fs::weakly_canonical(variant.output_dir))
    confound("share an output directory");
}

ComparisonReport summarize_comparison(const ExperimentConfig& baseline, const ExperimentConfig& variant,
                                      const std::map<std::uint64_t, std::vector<MetricsRow>>& baseline_rows,
                                      const std::map<std::uint64_t, std::vector<MetricsRow>>& variant_rows) {
  ComparisonReport report;
  report.final_window = final_window_size(baseline.train.episodes);
  report.baseline_config = config_echo(baseline);
  report.variant_config = config_echo(variant);
  std::vector<double> d_red;
  std::vector<double> d_green;
  std::vector<double> d_total;
  for (std::uint64_t seed : baseline.seeds) {
    const auto& b = baseline_rows.at(seed);
    const auto& v = variant_rows.at(seed);
    SeedComparison sc{seed, final_window_means(b, report.final_window),
                      final_window_means(v, report.final_window)};
    d_red.push_back(sc.variant.red_team - sc.baseline.red_team);
    d_green.push_back(sc.variant.green_team - sc.baseline.green_team);
    d_total.push_back(sc.variant.total - sc.baseline.total);
    report.per_seed.push_back(sc);
  }
  const double n = static_cast<double>(report.per_seed.size());
  for (const auto& sc : report.per_seed) {
    report.pooled_baseline.red_team += sc.baseline.red_team / n;
    report.pooled_baseline.green_team += sc.baseline.green_team / n;
    report.pooled_baseline.total += sc.baseline.total / n;
    report.pooled_variant.red_team += sc.variant.red_team / n;
    report.pooled_variant.green_team += sc.variant.green_team / n;
    report.pooled_variant.total += sc.variant.total / n;
  }
  report.red_team = sign_test(d_red);
  report.green_team = sign_test(d_green);
  report.total = sign_test(d_total);

  std::ostringstream verdict;
  auto line = [&](const char* name, const SignTest& t, double pooled_diff) {
    verdict << name << ": variant higher in " << t.wins << ", lower in " << t.losses << ", tied in "
            << t.ties << " of " << report.per_seed.size() << " seeds; pooled difference "
            << format_double(pooled_diff) << " (sign test p = " << format_double(t.p_value) << ")\n";
  };
  line("red team", report.red_team, report.pooled_variant.red_team - report.pooled_baseline.red_team);
  line("green team", report.green_team,
       report.pooled_variant.green_team - report.pooled_baseline.green_team);
  line("total", report.total, report.pooled_variant.total - report.pooled_baseline.total);
  report.verdict = verdict.str();
  return report;
}

ComparisonReport compare(const ExperimentConfig& baseline, const ExperimentConfig& variant,
                         const fs::path& report_dir) {
  baseline.validate();
  variant.validate();
  check_comparable(baseline, variant);
  ensure_writable(report_dir);
  const RunArtifacts base_run = run_experiment(baseline);
  const RunArtifacts variant_run = run_experiment(variant);
  ComparisonReport report = summarize_comparison(baseline, variant, base_run.metrics, variant_run.metrics);

  std::ofstream json_out(report_dir / "report.json", std::ios::binary);
  json_out << report_to_json(report).dump(2) << '\n';
  std::ofstream text_out(report_dir / "report.txt", std::ios::binary);
  text_out << report_to_text(report);
  if (!json_out || !text_out) throw IoError("failed writing comparison report in " + report_dir.string());
  return report;
}

nlohmann::json report_to_json(const ComparisonReport& r) {
  auto arm = [](const ArmSummary& a) {
    return nlohmann::json{{"red_team", a.red_team}, {"green_team", a.green_team}, {"total", a.total}};
  };
  auto test = [](const SignTest& t) {
    return nlohmann::json{{"wins", t.wins}, {"losses", t.losses}, {"ties", t.ties}, {"p_value", t.p_value}};
  };
  nlohmann::json seeds = nlohmann::json::array();
  for (const auto& sc : r.per_seed)
    seeds.push_back({{"seed", sc.seed}, {"baseline", arm(sc.baseline)}, {"variant", arm(sc.variant)}});
  return {
      {"final_window_episodes", r.final_window},
      {"per_seed", seeds},
      {"pooled", {{"baseline", arm(r.pooled_baseline)}, {"variant", arm(r.pooled_variant)}}},
      {"sign_test", {{"red_team", test(r.red_team)}, {"green_team", test(r.green_team)}, {"total", test(r.total)}}},
      {"verdict", r.verdict},
      {"baseline_config", nlohmann::json::parse(r.baseline_config)},
      {"variant_config", nlohmann::json::parse(r.variant_config)},
  };
}

std::string report_to_text(const ComparisonReport& r) {
  std::ostringstream out;
  out << "Mean episodic reward over the final " << r.final_window << " episodes\n\n";
  out << "seed,baseline_red,variant_red,baseline_green,variant_green,baseline_total,variant_total\n";
  for (const auto& sc : r.per_seed) {
    out << sc.seed << ',' << format_double(sc.baseline.red_team) << ',' << format_double(sc.variant.red_team)
        << ',' << format_double(sc.baseline.green_team) << ',' << format_double(sc.variant.green_team) << ','
        << format_double(sc.baseline.total) << ',' << format_double(sc.variant.total) << '\n';
  }
  out << "pooled," << format_double(r.pooled_baseline.red_team) << ','
      << format_double(r.pooled_variant.red_team) << ',' << format_double(r.pooled_baseline.green_team)
      << ',' << format_double(r.pooled_variant.green_team) << ',' << format_double(r.pooled_baseline.total)
      << ',' << format_double(r.pooled_variant.total) << "\n\n";
  out << r.verdict << "\nBaseline config:\n" << r.baseline_config << "\n\nVariant config:\n"
      << r.variant_config << '\n';
  return out.str();
}

}  // namespace coopmarl::harness
