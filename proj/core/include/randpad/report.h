// Copyright 2026 The randpad Authors
// SPDX-License-Identifier: Apache-2.0
//
// Small reporting helpers: CSV tables, standalone SVG bar charts drawn from
// them, and the run manifest every CLI command leaves next to its outputs.

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace randpad {

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  /// Index of a header cell; throws std::out_of_range when absent.
  std::size_t column(const std::string& name) const;
};

/// Comma-separated, no quoting (the CSVs written here never need it).
CsvTable parse_csv(const std::string& text);
CsvTable read_csv(const std::filesystem::path& path);

struct BarChart {
  std::string title;
  std::string y_label;
  std::vector<std::string> categories;          // x-axis groups
  std::vector<std::string> series;              // bars within a group
  std::vector<std::vector<double>> values;      // [series][category]
};

/// Groups rows by `category_column`, one bar series per distinct value of
/// `series_column` (a single series when empty), bar height from
/// `value_column` averaged over duplicate (series, category) rows.
BarChart chart_from_csv(const CsvTable& table, const std::string& category_column,
                        const std::string& value_column, const std::string& series_column = "");

/// Deterministic standalone SVG document.
std::string render_svg(const BarChart& chart);

// -- manifests ---------------------------------------------------------------

/// 64-bit FNV-1a of a file's bytes as 16 hex digits.
std::string file_hash(const std::filesystem::path& path);
std::string hex64(std::uint64_t value);

struct ManifestEntry {
  std::string path;
  std::string hash;
};

struct Manifest {
  std::string command;
  std::string config_hash;
  std::string config;  // canonical dump
  std::uint64_t seed = 0;
  std::vector<ManifestEntry> inputs;
  std::vector<ManifestEntry> outputs;
};

/// Writes `dir/manifest.json`. Paths are stored as given.
void write_manifest(const Manifest& manifest, const std::filesystem::path& dir);
std::string format_manifest(const Manifest& manifest);

}  // namespace randpad
