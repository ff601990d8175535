// Copyright 2026 The randpad Authors
// SPDX-License-Identifier: Apache-2.0
//
// Paired seed experiments: every shift policy is trained with the same seed,
// data and instance order as the baseline, evaluated on shared sets, and
// compared per seed.

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "randpad/config.h"
#include "randpad/corpus.h"
#include "randpad/evaluation.h"
#include "randpad/padshift.h"
#include "randpad/training.h"

namespace randpad {

/// How one split is produced: a synthetic draw, optionally truncated.
struct DataRecipe {
  LengthLaw length = LengthLaw::fixed(25);
  AnswerLaw answer_law = AnswerLaw::uniform;
  /// "none", "fixed:L" or "range:L1:L2".
  std::string truncation = "none";
  int count = 1000;

  Dataset build(Split split, int vocab_size, double distractor_rate, std::uint64_t seed) const;
};

struct ExperimentPlan {
  std::string name = "plan";
  DataRecipe train_data{LengthLaw::fixed(25), AnswerLaw::uniform, "none", 5000};
  DataRecipe eval_data{LengthLaw::range(25, 120), AnswerLaw::uniform, "none", 1000};
  int val_count = 1000;  // drawn with the eval recipe
  int vocab_size = 64;
  double distractor_rate = 0.0;
  std::uint64_t data_seed = 1;
  /// The first policy is the baseline and must be "off".
  std::vector<std::string> policies{"off", "full"};
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  std::vector<int> demarcations{32};
  int bucket_width = 32;
  BucketBy bucket_by = BucketBy::predicted;
  TrainConfig train;
  ModelConfig model;  // vocab_size is filled in from the data
  double train_fraction = 1.0;
  std::uint64_t sampling_seed = 0;

  /// Throws std::invalid_argument on an empty seed list or a missing baseline.
  void validate() const;

  /// Keys: plan.{name,policies,seeds,demarcations,bucket_width,bucket_by},
  /// data.{vocab_size,distractor_rate,seed,answer_law,train_length,
  /// train_truncation,train_count,eval_length,eval_truncation,eval_count,
  /// val_count}, plus the train.* / padshift.* / model.* keys.
  static ExperimentPlan from_config(const KeyValueConfig& config);
};

/// One trained and evaluated (policy, seed) cell.
struct SeedRun {
  std::string policy;
  std::uint64_t seed = 0;
  EvalReport test;
  RunLog log;
  UpdateCensus census;
};

/// Per-seed (baseline, treated) values of one metric and their deltas.
struct PairedResult {
  std::string policy;
  std::string metric;  // "f1", "em", "seg1_f1@X", "seg2_f1@X"
  std::vector<std::uint64_t> seeds;
  std::vector<double> baseline;
  std::vector<double> treated;
  double mean_delta = 0.0;
  double sd_delta = 0.0;  // sample standard deviation; 0 for one seed

  double delta(std::size_t i) const { return treated[i] - baseline[i]; }
};

struct PlanResult {
  std::string name;
  std::vector<SeedRun> runs;  // seed-major, policies in plan order
  std::vector<PairedResult> paired;

  const SeedRun& run(const std::string& policy, std::uint64_t seed) const;
  const PairedResult& paired_metric(const std::string& policy, const std::string& metric) const;
};

/// The datasets a plan trains and evaluates on.
struct PlanData {
  Dataset train;  // re-annotated and, if requested, subsampled
  Dataset val;
  Dataset test;
  Vocab vocab;
};

PlanData build_plan_data(const ExperimentPlan& plan);

/// Called as each cell finishes (for progress output).
using RunCallback = std::function<void(const SeedRun&)>;

/// Trains every (seed, policy) cell and pairs each treatment with the
/// baseline of the same seed. Throws std::runtime_error naming the seed when
/// a cell fails, or when a treatment visits instances in a different order
/// than its baseline.
PlanResult run_plan(const ExperimentPlan& plan, const RunCallback& on_run = {});

/// Mean and sample standard deviation.
std::pair<double, double> mean_and_sd(const std::vector<double>& values);

/// Pairs runs by seed against the baseline policy for every metric.
std::vector<PairedResult> pair_runs(const ExperimentPlan& plan, const std::vector<SeedRun>& runs);

/// Writes runs.csv, paired.csv, buckets.csv, segments.csv and one census
/// CSV per cell into `dir`.
void write_plan_result(const PlanResult& result, const std::filesystem::path& dir);

// -- low-resource sweep --------------------------------------------------------

struct SweepCell {
  double fraction = 1.0;
  std::uint64_t sampling_seed = 0;
  std::string policy;  // "off", "capped:K" or "full"
  double mean_f1 = 0.0;
  double mean_delta = 0.0;  // versus "off" on the same subset
  double sd_delta = 0.0;
};

/// For each fraction and sampling seed, subsamples the training set and
/// runs the plan with policies {off} + caps. `caps` are policy names;
/// "off" is added as the baseline when absent. Throws std::invalid_argument
/// for fractions outside (0, 1] or a subset with no examples.
std::vector<SweepCell> lowresource_sweep(const ExperimentPlan& base, const std::vector<double>& fractions,
                                         const std::vector<std::string>& caps,
                                         const std::vector<std::uint64_t>& sampling_seeds,
                                         const RunCallback& on_run = {});

void write_sweep_csv(const std::vector<SweepCell>& cells, const std::filesystem::path& path);

}  // namespace randpad
