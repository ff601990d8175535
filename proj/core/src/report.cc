// Copyright 2026 The randpad Authors
// SPDX-License-Identifier: Apache-2.0

#include "randpad/report.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "randpad/config.h"
#include "randpad/rng.h"

namespace randpad {

std::size_t CsvTable::column(const std::string& name) const {
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == name) return i;
  }
  throw std::out_of_range("CSV has no column \"" + name + "\"");
}

CsvTable parse_csv(const std::string& text) {
  CsvTable table;
  std::istringstream in(text);
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::size_t start = 0;
    while (true) {
      const auto comma = line.find(',', start);
      cells.push_back(line.substr(start, comma == std::string::npos ? std::string::npos : comma - start));
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    if (first) {
      table.header = std::move(cells);
      first = false;
    } else {
      if (cells.size() != table.header.size()) {
        throw std::runtime_error("CSV row has " + std::to_string(cells.size()) + " cells, header has " +
                                 std::to_string(table.header.size()));
      }
      table.rows.push_back(std::move(cells));
    }
  }
  if (first) throw std::runtime_error("CSV is empty");
  return table;
}

CsvTable read_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return parse_csv(ss.str());
  } catch (const std::exception& e) {
    throw std::runtime_error(path.string() + ": " + e.what());
  }
}

BarChart chart_from_csv(const CsvTable& table, const std::string& category_column,
                        const std::string& value_column, const std::string& series_column) {
  const auto cat = table.column(category_column);
  const auto val = table.column(value_column);
  const std::size_t ser = series_column.empty() ? 0 : table.column(series_column);
  BarChart chart;
  chart.y_label = value_column;
  std::map<std::pair<std::size_t, std::size_t>, std::pair<double, int>> sums;
  auto index_of = [](std::vector<std::string>& list, const std::string& v) {
    auto it = std::find(list.begin(), list.end(), v);
    if (it != list.end()) return static_cast<std::size_t>(it - list.begin());
    list.push_back(v);
    return list.size() - 1;
  };
  for (const auto& row : table.rows) {
    const auto c = index_of(chart.categories, row[cat]);
    const auto s = index_of(chart.series, series_column.empty() ? value_column : row[ser]);
    auto& acc = sums[{s, c}];
    acc.first += std::stod(row[val]);
    acc.second += 1;
  }
  chart.values.assign(chart.series.size(), std::vector<double>(chart.categories.size(), 0.0));
  for (const auto& [key, acc] : sums) chart.values[key.first][key.second] = acc.first / acc.second;
  return chart;
}

namespace {

std::string num(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", x);
  return buf;
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

constexpr const char* kPalette[] = {"#4c72b0", "#dd8452", "#55a868", "#c44e52", "#8172b3", "#937860"};

}  // namespace

std::string render_svg(const BarChart& chart) {
  const double left = 60, right = 20, top = 40, bottom = 60;
  const double group_width = std::max(40.0, 24.0 * static_cast<double>(std::max<std::size_t>(1, chart.series.size())) + 16.0);
  const double plot_w = group_width * static_cast<double>(std::max<std::size_t>(1, chart.categories.size()));
  const double plot_h = 240;
  const double width = left + plot_w + right + 120;
  const double height = top + plot_h + bottom;

  double hi = 0.0, lo = 0.0;
  for (const auto& s : chart.values) {
    for (double v : s) {
      hi = std::max(hi, v);
      lo = std::min(lo, v);
    }
  }
  if (hi == lo) hi = lo + 1.0;
  auto y_of = [&](double v) { return top + plot_h * (hi - v) / (hi - lo); };

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << num(width) << "\" height=\"" << num(height)
      << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg << "<text x=\"" << num(width / 2) << "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">"
      << escape(chart.title) << "</text>\n";
  // Axes and ticks.
  svg << "<line x1=\"" << num(left) << "\" y1=\"" << num(top) << "\" x2=\"" << num(left) << "\" y2=\""
      << num(top + plot_h) << "\" stroke=\"black\"/>\n";
  svg << "<line x1=\"" << num(left) << "\" y1=\"" << num(y_of(0)) << "\" x2=\"" << num(left + plot_w)
      << "\" y2=\"" << num(y_of(0)) << "\" stroke=\"black\"/>\n";
  for (int t = 0; t <= 4; ++t) {
    const double v = lo + (hi - lo) * t / 4.0;
    svg << "<text x=\"" << num(left - 6) << "\" y=\"" << num(y_of(v) + 4) << "\" text-anchor=\"end\">" << num(v)
        << "</text>\n";
  }
  svg << "<text x=\"14\" y=\"" << num(top + plot_h / 2) << "\" transform=\"rotate(-90 14 " << num(top + plot_h / 2)
      << ")\" text-anchor=\"middle\">" << escape(chart.y_label) << "</text>\n";
  // Bars.
  const double bar_w = (group_width - 16.0) / static_cast<double>(std::max<std::size_t>(1, chart.series.size()));
  for (std::size_t c = 0; c < chart.categories.size(); ++c) {
    const double gx = left + group_width * static_cast<double>(c) + 8.0;
    for (std::size_t s = 0; s < chart.series.size(); ++s) {
      const double v = chart.values[s][c];
      const double y0 = y_of(std::max(v, 0.0));
      const double y1 = y_of(std::min(v, 0.0));
      svg << "<rect x=\"" << num(gx + bar_w * static_cast<double>(s)) << "\" y=\"" << num(y0) << "\" width=\""
          << num(bar_w - 2) << "\" height=\"" << num(y1 - y0) << "\" fill=\"" << kPalette[s % 6] << "\"><title>"
          << escape(chart.series[s]) << " " << escape(chart.categories[c]) << ": " << num(v) << "</title></rect>\n";
    }
    svg << "<text x=\"" << num(gx + (group_width - 16.0) / 2) << "\" y=\"" << num(top + plot_h + 16)
        << "\" text-anchor=\"middle\">" << escape(chart.categories[c]) << "</text>\n";
  }
  // Legend.
  for (std::size_t s = 0; s < chart.series.size(); ++s) {
    const double ly = top + 16.0 * static_cast<double>(s);
    svg << "<rect x=\"" << num(left + plot_w + 16) << "\" y=\"" << num(ly) << "\" width=\"10\" height=\"10\" fill=\""
        << kPalette[s % 6] << "\"/>\n";
    svg << "<text x=\"" << num(left + plot_w + 30) << "\" y=\"" << num(ly + 9) << "\">" << escape(chart.series[s])
        << "</text>\n";
  }
  svg << "</svg>\n";
  return svg.str();
}

// -- manifests ---------------------------------------------------------------

std::string hex64(std::uint64_t value) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(value));
  return buf;
}

std::string file_hash(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot hash " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return hex64(hash_bytes(ss.str()));
}

std::string format_manifest(const Manifest& m) {
  nlohmann::ordered_json j;
  j["command"] = m.command;
  j["config_hash"] = m.config_hash;
  j["seed"] = m.seed;
  j["config"] = m.config;
  auto list = [](const std::vector<ManifestEntry>& entries) {
    nlohmann::ordered_json arr = nlohmann::ordered_json::array();
    for (const auto& e : entries) arr.push_back({{"path", e.path}, {"hash", e.hash}});
    return arr;
  };
  j["inputs"] = list(m.inputs);
  j["outputs"] = list(m.outputs);
  return j.dump(2) + "\n";
}

void write_manifest(const Manifest& manifest, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::ofstream out(dir / "manifest.json", std::ios::binary);
  if (!out) throw std::runtime_error("cannot write manifest in " + dir.string());
  out << format_manifest(manifest);
}

}  // namespace randpad
