#include "coopmarl/plots.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "coopmarl/errors.hpp"
#include "coopmarl/metrics.hpp"

namespace coopmarl::harness {

namespace fs = std::filesystem;

namespace {

constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                                    "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"};
constexpr int kPanelWidth = 420;
constexpr int kPanelHeight = 280;
constexpr int kMarginLeft = 64;
constexpr int kMarginRight = 16;
constexpr int kMarginTop = 28;
constexpr int kMarginBottom = 40;
constexpr int kHeaderHeight = 40;
constexpr int kLegendRow = 18;

struct Curve {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
};

struct Panel {
  std::string title;
  std::vector<Curve> curves;
};

// Per-episode means across the CSVs of one series.
struct SeriesData {
  std::string label;
  int num_red = 0;
  int num_green = 0;
  std::vector<double> episode;
  std::vector<double> total;
  std::vector<double> red_team;
  std::vector<double> green_team;
  std::vector<std::vector<double>> red_agents;
};

std::string xml_escape(const std::string& text) {
  std::string out;
  for (char c : text) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      case '\'': out += "&apos;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string fixed(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

std::string tick_label(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4g", std::abs(v) < 1e-12 ? 0.0 : v);
  return buf;
}

SeriesData load_series(const PlotSeries& series) {
  require(!series.csvs.empty(), "plot series '" + series.label + "' has no CSV files");
  std::vector<MetricsTable> tables;
  for (const auto& path : series.csvs) tables.push_back(read_metrics_csv(path));
  const MetricsTable& first = tables.front();
  for (const auto& t : tables) {
    require(t.num_red == first.num_red && t.num_green == first.num_green,
            "plot series '" + series.label + "': CSVs disagree on team sizes");
    require(t.rows.size() == first.rows.size(),
            "plot series '" + series.label + "': CSVs disagree on episode count");
  }
  SeriesData s;
  s.label = series.label;
  s.num_red = first.num_red;
  s.num_green = first.num_green;
  const std::size_t n = first.rows.size();
  const double k = static_cast<double>(tables.size());
  s.red_agents.assign(s.num_red, std::vector<double>(n, 0.0));
  for (std::size_t r = 0; r < n; ++r) {
    s.episode.push_back(first.rows[r].episode);
    double total = 0.0;
    double red = 0.0;
    double green = 0.0;
    for (const auto& t : tables) {
      total += t.rows[r].total;
      red += t.rows[r].red_team;
      green += t.rows[r].green_team;
      for (int a = 0; a < s.num_red; ++a) s.red_agents[a][r] += t.rows[r].agent_rewards[a] / k;
    }
    s.total.push_back(total / k);
    s.red_team.push_back(red / k);
    s.green_team.push_back(green / k);
  }
  return s;
}

void render_panel(std::ostringstream& svg, const Panel& panel, int ox, int oy) {
  double xmin = INFINITY, xmax = -INFINITY, ymin = INFINITY, ymax = -INFINITY;
  for (const auto& c : panel.curves) {
    for (double x : c.x) xmin = std::min(xmin, x), xmax = std::max(xmax, x);
    for (double y : c.y) ymin = std::min(ymin, y), ymax = std::max(ymax, y);
  }
  if (!(xmin <= xmax)) xmin = 0.0, xmax = 1.0;
  if (!(ymin <= ymax)) ymin = 0.0, ymax = 1.0;
  if (xmax == xmin) xmin -= 1.0, xmax += 1.0;
  if (ymax == ymin) ymin -= 1.0, ymax += 1.0;

  const double left = ox + kMarginLeft;
  const double top = oy + kMarginTop;
  const double width = kPanelWidth - kMarginLeft - kMarginRight;
  const double height = kPanelHeight - kMarginTop - kMarginBottom;
  auto px = [&](double x) { return left + (x - xmin) / (xmax - xmin) * width; };
  auto py = [&](double y) { return top + height - (y - ymin) / (ymax - ymin) * height; };

  svg << "<g class=\"panel\">\n";
  svg << "<text x=\"" << fixed(left + width / 2) << "\" y=\"" << oy + 18
      << "\" text-anchor=\"middle\" font-size=\"13\">" << xml_escape(panel.title) << "</text>\n";
  svg << "<rect x=\"" << fixed(left) << "\" y=\"" << fixed(top) << "\" width=\"" << fixed(width)
      << "\" height=\"" << fixed(height) << "\" fill=\"none\" stroke=\"#444\"/>\n";
  for (int k = 0; k <= 4; ++k) {
    const double yv = ymin + (ymax - ymin) * k / 4.0;
    const double xv = xmin + (xmax - xmin) * k / 4.0;
    svg << "<line x1=\"" << fixed(left - 4) << "\" y1=\"" << fixed(py(yv)) << "\" x2=\"" << fixed(left)
        << "\" y2=\"" << fixed(py(yv)) << "\" stroke=\"#444\"/>\n";
    svg << "<text x=\"" << fixed(left - 6) << "\" y=\"" << fixed(py(yv) + 4)
        << "\" text-anchor=\"end\" font-size=\"10\">" << tick_label(yv) << "</text>\n";
    svg << "<line x1=\"" << fixed(px(xv)) << "\" y1=\"" << fixed(top + height) << "\" x2=\"" << fixed(px(xv))
        << "\" y2=\"" << fixed(top + height + 4) << "\" stroke=\"#444\"/>\n";
    svg << "<text x=\"" << fixed(px(xv)) << "\" y=\"" << fixed(top + height + 16)
        << "\" text-anchor=\"middle\" font-size=\"10\">" << tick_label(xv) << "</text>\n";
  }
  svg << "<text x=\"" << fixed(left + width / 2) << "\" y=\"" << fixed(top + height + 32)
      << "\" text-anchor=\"middle\" font-size=\"11\">episode</text>\n";
  svg << "<text x=\"" << ox + 14 << "\" y=\"" << fixed(top + height / 2) << "\" transform=\"rotate(-90 "
      << ox + 14 << ' ' << fixed(top + height / 2) << ")\" text-anchor=\"middle\" font-size=\"11\">reward</text>\n";

  for (std::size_t c = 0; c < panel.curves.size(); ++c) {
    const Curve& curve = panel.curves[c];
    svg << "<polyline class=\"series\" data-series=\"" << xml_escape(curve.label) << "\" fill=\"none\" stroke=\""
        << kPalette[c % std::size(kPalette)] << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t k = 0; k < curve.x.size(); ++k) {
      if (k) svg << ' ';
      svg << fixed(px(curve.x[k])) << ',' << fixed(py(curve.y[k]));
    }
    svg << "\"/>\n";
  }
  svg << "</g>\n";
}

void write_figure(const fs::path& path, const std::string& title, const std::vector<Panel>& panels,
                  const std::vector<std::string>& legend) {
  const int count = static_cast<int>(panels.size());
  const int cols = count <= 2 ? count : static_cast<int>(std::ceil(std::sqrt(static_cast<double>(count))));
  const int rows = (count + cols - 1) / cols;
  const int legend_height = kLegendRow * static_cast<int>(legend.size()) + 8;
  const int width = cols * kPanelWidth;
  const int height = kHeaderHeight + rows * kPanelHeight + legend_height;

  std::ostringstream svg;
  svg << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"" << width << "\" height=\""
      << height << "\" viewBox=\"0 0 " << width << ' ' << height << "\" font-family=\"sans-serif\">\n";
  svg << "<title>" << xml_escape(title) << "</title>\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg << "<text x=\"" << width / 2 << "\" y=\"26\" text-anchor=\"middle\" font-size=\"16\">"
      << xml_escape(title) << "</text>\n";
  for (int p = 0; p < count; ++p)
    render_panel(svg, panels[p], (p % cols) * kPanelWidth, kHeaderHeight + (p / cols) * kPanelHeight);

  const int legend_top = kHeaderHeight + rows * kPanelHeight;
  svg << "<g class=\"legend\">\n";
  for (std::size_t k = 0; k < legend.size(); ++k) {
    const int y = legend_top + kLegendRow * static_cast<int>(k) + 12;
    svg << "<line x1=\"" << kMarginLeft << "\" y1=\"" << y - 4 << "\" x2=\"" << kMarginLeft + 24 << "\" y2=\""
        << y - 4 << "\" stroke=\"" << kPalette[k % std::size(kPalette)] << "\" stroke-width=\"3\"/>\n";
    svg << "<text x=\"" << kMarginLeft + 30 << "\" y=\"" << y << "\" font-size=\"11\">" << xml_escape(legend[k])
        << "</text>\n";
  }
  svg << "</g>\n</svg>\n";

  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << svg.str();
}

Curve smoothed(const SeriesData& s, const std::vector<double>& values, int window) {
  return {s.label, s.episode, centered_moving_average(values, window)};
}

}  // namespace

std::vector<double> centered_moving_average(std::span<const double> values, int window) {
  require(window >= 1, "smoothing window must be >= 1");
  const auto n = static_cast<std::ptrdiff_t>(values.size());
  const std::ptrdiff_t behind = (window - 1) / 2;
  const std::ptrdiff_t ahead = window - 1 - behind;
  std::vector<double> out(values.size());
  for (std::ptrdiff_t t = 0; t < n; ++t) {
    const std::ptrdiff_t lo = std::max<std::ptrdiff_t>(0, t - behind);
    const std::ptrdiff_t hi = std::min<std::ptrdiff_t>(n - 1, t + ahead);
    // Averaging offsets from the first value keeps constant windows exact.
    const double base = values[lo];
    double offset = 0.0;
    for (std::ptrdiff_t k = lo; k <= hi; ++k) offset += values[k] - base;
    out[t] = base + offset / static_cast<double>(hi - lo + 1);
  }
  return out;
}

PlotFiles emit_plots(const std::vector<PlotSeries>& series, int smoothing_window, const fs::path& output_dir) {
  require(!series.empty(), "emit_plots: at least one series required");
  std::vector<SeriesData> data;
  for (const auto& s : series) data.push_back(load_series(s));
  for (const auto& d : data)
    require(d.num_red == data.front().num_red && d.num_green == data.front().num_green,
            "emit_plots: series disagree on team sizes");

  std::error_code ec;
  fs::create_directories(output_dir, ec);
  if (ec) throw IoError("cannot create plot directory '" + output_dir.string() + "': " + ec.message());

  std::vector<std::string> legend;
  for (const auto& d : data) legend.push_back(d.label);
  const std::string suffix = " (moving average, window " + std::to_string(smoothing_window) + ")";

  Panel total{"total reward, all agents", {}};
  Panel red{"red team reward", {}};
  Panel green{"green team reward", {}};
  std::vector<Panel> agents;
  for (int a = 0; a < data.front().num_red; ++a) agents.push_back({"red agent " + std::to_string(a), {}});
  for (const auto& d : data) {
    total.curves.push_back(smoothed(d, d.total, smoothing_window));
    red.curves.push_back(smoothed(d, d.red_team, smoothing_window));
    green.curves.push_back(smoothed(d, d.green_team, smoothing_window));
    for (int a = 0; a < d.num_red; ++a) agents[a].curves.push_back(smoothed(d, d.red_agents[a], smoothing_window));
  }

  PlotFiles files{output_dir / "total_reward.svg", output_dir / "team_reward.svg",
                  output_dir / "red_agent_reward.svg"};
  write_figure(files.total, "Total reward" + suffix, {total}, legend);
  write_figure(files.teams, "Team reward" + suffix, {red, green}, legend);
  write_figure(files.red_agents, "Red agent reward" + suffix, agents, legend);
  return files;
}

PlotFiles emit_plots(const std::vector<fs::path>& csv_paths, int smoothing_window, const fs::path& output_dir) {
  std::vector<PlotSeries> series;
  for (const auto& p : csv_paths) series.push_back({p.stem().string(), {p}});
  return emit_plots(series, smoothing_window, output_dir);
}

}  // namespace coopmarl::harness
