#include "coopmarl/metrics.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "coopmarl/errors.hpp"

namespace coopmarl {

MetricsRow make_metrics_row(int episode, std::vector<double> agent_rewards, int num_red,
                            double wall_ms) {
  MetricsRow row;
  row.episode = episode;
  row.wall_ms = wall_ms;
  for (std::size_t i = 0; i < agent_rewards.size(); ++i) {
    if (static_cast<int>(i) < num_red) {
      row.red_team += agent_rewards[i];
    } else {
      row.green_team += agent_rewards[i];
    }
  }
  row.total = row.red_team + row.green_team;
  row.agent_rewards = std::move(agent_rewards);
  return row;
}

std::vector<std::string> agent_column_names(int num_red, int num_green) {
  std::vector<std::string> names;
  for (int i = 0; i < num_red; ++i) names.push_back("red_" + std::to_string(i));
  for (int i = 0; i < num_green; ++i) names.push_back("green_" + std::to_string(i));
  return names;
}

std::string metrics_csv_header(int num_red, int num_green) {
  std::string header = "episode";
  for (const auto& name : agent_column_names(num_red, num_green)) header += "," + name;
  header += ",red_team,green_team,total,wall_ms";
  return header;
}

std::string format_double(double value) {
  char buf[64];
  const auto result = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, result.ptr);
}

std::string metrics_csv_line(const MetricsRow& row) {
  std::string line = std::to_string(row.episode);
  for (double r : row.agent_rewards) line += "," + format_double(r);
  line += "," + format_double(row.red_team);
  line += "," + format_double(row.green_team);
  line += "," + format_double(row.total);
  line += "," + format_double(row.wall_ms);
  return line;
}

void write_metrics_csv(const std::filesystem::path& path, int num_red, int num_green,
                       const std::vector<MetricsRow>& rows) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << metrics_csv_header(num_red, num_green) << '\n';
  for (const auto& row : rows) out << metrics_csv_line(row) << '\n';
  if (!out) throw IoError("failed writing " + path.string());
}

namespace {

std::vector<std::string> split_commas(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, ',')) fields.push_back(field);
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

double parse_number(const std::string& text, const std::string& where) {
  double value = 0.0;
  const auto result = std::from_chars(text.data(), text.data() + text.size(), value);
  if (result.ec != std::errc() || result.ptr != text.data() + text.size())
    throw ParseError(where + ": '" + text + "' is not a number");
  return value;
}

}  // namespace

MetricsTable read_metrics_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError(path.string() + ": cannot open metrics file");
  const std::string file = path.string();

  std::string line;
  if (!std::getline(in, line)) throw ParseError(file + ":1: missing header");
  const auto header = split_commas(line);
  const std::size_t n = header.size();
  if (n < 6 || header.front() != "episode" || header[n - 4] != "red_team" ||
      header[n - 3] != "green_team" || header[n - 2] != "total" || header[n - 1] != "wall_ms")
    throw ParseError(file + ":1: header does not match the metrics schema");

  MetricsTable table;
  table.agent_names.assign(header.begin() + 1, header.end() - 4);
  for (const auto& name : table.agent_names) {
    if (name.rfind("red_", 0) == 0) {
      if (table.num_green > 0) throw ParseError(file + ":1: red columns must precede green columns");
      ++table.num_red;
    } else if (name.rfind("green_", 0) == 0) {
      ++table.num_green;
    } else {
      throw ParseError(file + ":1: unexpected agent column '" + name + "'");
    }
  }

  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const std::string where = file + ":" + std::to_string(line_no);
    const auto fields = split_commas(line);
    if (fields.size() != n)
      throw ParseError(where + ": expected " + std::to_string(n) + " fields, found " +
                       std::to_string(fields.size()));
    MetricsRow row;
    const double episode = parse_number(fields[0], where);
    row.episode = static_cast<int>(episode);
    if (row.episode != episode) throw ParseError(where + ": episode index must be an integer");
    for (std::size_t k = 1; k + 4 < n; ++k) row.agent_rewards.push_back(parse_number(fields[k], where));
    row.red_team = parse_number(fields[n - 4], where);
    row.green_team = parse_number(fields[n - 3], where);
    row.total = parse_number(fields[n - 2], where);
    row.wall_ms = parse_number(fields[n - 1], where);
    table.rows.push_back(std::move(row));
  }
  return table;
}

}  // namespace coopmarl
