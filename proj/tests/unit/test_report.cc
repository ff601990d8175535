// Copyright 2026 The randpad Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "randpad/report.h"

using namespace randpad;

TEST_CASE("CSV parsing and column lookup") {
  const auto t = parse_csv("a,b\n1,x\n2,y\n");
  CHECK(t.header == std::vector<std::string>{"a", "b"});
  CHECK(t.rows.size() == 2);
  CHECK(t.column("b") == 1);
  CHECK_THROWS_AS(t.column("c"), std::out_of_range);
  CHECK_THROWS_AS(parse_csv("a,b\n1\n"), std::runtime_error);
}

TEST_CASE("bar charts average duplicate rows and render deterministically") {
  const auto t = parse_csv("policy,bucket,f1\noff,0,10\noff,0,20\nfull,0,30\noff,16,5\n");
  const BarChart c = chart_from_csv(t, "bucket", "f1", "policy");
  CHECK(c.categories == std::vector<std::string>{"0", "16"});
  CHECK(c.series == std::vector<std::string>{"off", "full"});
  CHECK(c.values[0][0] == doctest::Approx(15.0));
  CHECK(c.values[1][0] == doctest::Approx(30.0));
  const std::string svg = render_svg(c);
  CHECK(svg == render_svg(c));
  CHECK(svg.starts_with("<svg"));
  CHECK(svg.find("</svg>") != std::string::npos);
}

TEST_CASE("manifest lists hashes") {
  const auto dir = std::filesystem::temp_directory_path() / "randpad_manifest_test";
  std::filesystem::create_directories(dir);
  {
    std::ofstream(dir / "f.txt") << "hello";
  }
  Manifest m;
  m.command = "demo";
  m.config_hash = hex64(1);
  m.inputs.push_back({"f.txt", file_hash(dir / "f.txt")});
  write_manifest(m, dir);
  std::ifstream in(dir / "manifest.json");
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  CHECK(text == format_manifest(m));
  CHECK(text.find("\"command\": \"demo\"") != std::string::npos);
  CHECK(file_hash(dir / "f.txt") == hex64(0xa430d84680aabd0bULL));  // FNV-1a("hello")
  std::filesystem::remove_all(dir);
}
