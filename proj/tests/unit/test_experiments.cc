// Copyright 2026 The randpad Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "randpad/experiments.h"

using namespace randpad;

namespace {

ExperimentPlan tiny_plan() {
  ExperimentPlan plan;
  plan.name = "tiny";
  plan.train_data = {LengthLaw::fixed(6), AnswerLaw::uniform, "none", 40};
  plan.eval_data = {LengthLaw::range(6, 20), AnswerLaw::uniform, "none", 20};
  plan.val_count = 10;
  plan.vocab_size = 16;
  plan.seeds = {1, 2};
  plan.demarcations = {8};
  plan.bucket_width = 8;
  plan.train.epochs = 1;
  plan.train.batch_size = 8;
  plan.train.adam.learning_rate = 1e-3;
  plan.train.eval_every = 2;
  plan.model.capacity = 32;
  plan.model.hidden = 8;
  plan.model.ffn = 16;
  return plan;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

}  // namespace

TEST_CASE("plan validation") {
  ExperimentPlan plan = tiny_plan();
  CHECK_NOTHROW(plan.validate());
  plan.policies = {"full", "off"};
  CHECK_THROWS_AS(plan.validate(), std::invalid_argument);
  plan = tiny_plan();
  plan.seeds.clear();
  CHECK_THROWS_AS(plan.validate(), std::invalid_argument);
  plan = tiny_plan();
  plan.train_fraction = 0.0;
  CHECK_THROWS_AS(plan.validate(), std::invalid_argument);
}

TEST_CASE("plan keys are read from a config") {
  const auto kv = KeyValueConfig::parse(
      "plan.policies = off,capped:8,full\nplan.seeds = 3,4\nplan.demarcations = 16,32\n"
      "data.train_length = fixed:12\ndata.eval_length = range:12:56\nmodel.capacity = 64\n");
  const ExperimentPlan plan = ExperimentPlan::from_config(kv);
  CHECK(plan.policies == std::vector<std::string>{"off", "capped:8", "full"});
  CHECK(plan.seeds == std::vector<std::uint64_t>{3, 4});
  CHECK(plan.demarcations == std::vector<int>{16, 32});
  CHECK(plan.model.capacity == 64);
  CHECK_THROWS(ExperimentPlan::from_config(KeyValueConfig::parse("plan.bucket_by = middle\n")));
}

TEST_CASE("a zero-width shift policy reproduces the baseline exactly") {
  ExperimentPlan plan = tiny_plan();
  plan.policies = {"off", "capped:0"};
  const PlanResult r = run_plan(plan);
  CHECK(r.runs.size() == 4);
  for (const auto& paired : r.paired) {
    CHECK(paired.mean_delta == 0.0);
    CHECK(paired.sd_delta == 0.0);
  }
  CHECK(r.paired_metric("capped:0", "f1").seeds == plan.seeds);
  CHECK(r.run("capped:0", 2).census == r.run("off", 2).census);
  CHECK_THROWS_AS(r.run("full", 1), std::out_of_range);
}

TEST_CASE("plan outputs are byte-identical across reruns") {
  const ExperimentPlan plan = tiny_plan();
  const auto base = std::filesystem::temp_directory_path() / "randpad_experiments_test";
  std::filesystem::remove_all(base);
  write_plan_result(run_plan(plan), base / "a");
  write_plan_result(run_plan(plan), base / "b");
  int files = 0;
  for (const auto& entry : std::filesystem::directory_iterator(base / "a")) {
    ++files;
    CHECK(slurp(entry.path()) == slurp(base / "b" / entry.path().filename()));
  }
  CHECK(files >= 4);
  std::filesystem::remove_all(base);
}

TEST_CASE("paired statistics") {
  const auto [mean, sd] = mean_and_sd({1.0, 2.0, 3.0});
  CHECK(mean == 2.0);
  CHECK(sd == doctest::Approx(1.0));
  CHECK(mean_and_sd({4.0}).second == 0.0);
}

TEST_CASE("low-resource sweep") {
  ExperimentPlan plan = tiny_plan();
  plan.seeds = {1};
  CHECK_THROWS_AS(lowresource_sweep(plan, {}, {"full"}, {1}), std::invalid_argument);
  CHECK_THROWS_AS(lowresource_sweep(plan, {1.5}, {"full"}, {1}), std::invalid_argument);
  // capped:0 duplicates the baseline and is not run again.
  const auto cells = lowresource_sweep(plan, {0.5, 1.0}, {"capped:0", "capped:4"}, {1});
  REQUIRE(cells.size() == 4);
  for (const auto& c : cells) {
    CHECK(c.policy != "capped:0");
    if (c.policy == "off") CHECK(c.mean_delta == 0.0);
  }
  CHECK(cells[0].fraction == 0.5);
  CHECK(cells[1].policy == "capped:4");
}
