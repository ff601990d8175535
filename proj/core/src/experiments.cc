// Copyright 2026 The randpad Authors
// SPDX-License-Identifier: Apache-2.0

#include "randpad/experiments.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include "randpad/rng.h"

namespace randpad {

namespace {

std::string fmt(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4f", x);
  return buf;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

std::uint64_t split_seed(std::uint64_t seed, Split split) {
  return mix64(seed ^ mix64(static_cast<std::uint64_t>(split) + 1));
}

}  // namespace

Dataset DataRecipe::build(Split split, int vocab_size, double distractor_rate, std::uint64_t seed) const {
  SyntheticSpec spec;
  spec.vocab_size = vocab_size;
  spec.length = length;
  spec.answer_law = answer_law;
  spec.distractor_rate = distractor_rate;
  spec.count = count;
  spec.seed = split_seed(seed, split);
  spec.split = split;
  Dataset d = generate_synthetic(spec);
  if (truncation == "none") return d;
  const LengthLaw cut = LengthLaw::parse(truncation);
  if (cut.is_fixed()) return truncate_fixed(d, cut.min_words);
  return truncate_range(d, cut.min_words, cut.max_words, spec.seed);
}

void ExperimentPlan::validate() const {
  if (seeds.empty()) throw std::invalid_argument("plan needs at least one seed");
  if (policies.empty() || ShiftPolicy::parse(policies.front()).mode != ShiftMode::off) {
    throw std::invalid_argument("the first policy of a plan must be the baseline \"off\"");
  }
  for (const auto& p : policies) ShiftPolicy::parse(p);
  if (!(train_fraction > 0.0 && train_fraction <= 1.0)) {
    throw std::invalid_argument("training fraction must lie in (0, 1]");
  }
  if (bucket_width < 1) throw std::invalid_argument("plan.bucket_width must be >= 1");
  train.validate();
}

ExperimentPlan ExperimentPlan::from_config(const KeyValueConfig& c) {
  ExperimentPlan p;
  p.name = c.get_string("plan.name", p.name);
  p.policies = c.get_list("plan.policies", p.policies);
  if (c.contains("plan.seeds")) {
    p.seeds.clear();
    for (const auto& s : c.get_list("plan.seeds", {})) p.seeds.push_back(std::stoull(s));
  }
  if (c.contains("plan.demarcations")) {
    p.demarcations.clear();
    for (const auto& s : c.get_list("plan.demarcations", {})) p.demarcations.push_back(std::stoi(s));
  }
  p.bucket_width = static_cast<int>(c.get_int("plan.bucket_width", p.bucket_width));
  const auto by = c.get_string("plan.bucket_by", "predicted");
  if (by != "predicted" && by != "gold") throw ConfigError("plan.bucket_by must be predicted or gold");
  p.bucket_by = by == "gold" ? BucketBy::gold : BucketBy::predicted;

  p.vocab_size = static_cast<int>(c.get_int("data.vocab_size", p.vocab_size));
  p.distractor_rate = c.get_double("data.distractor_rate", p.distractor_rate);
  p.data_seed = static_cast<std::uint64_t>(c.get_int("data.seed", static_cast<std::int64_t>(p.data_seed)));
  const auto law = parse_answer_law(c.get_string("data.answer_law", "uniform"));
  p.train_data.answer_law = law;
  p.eval_data.answer_law = law;
  p.train_data.length = LengthLaw::parse(c.get_string("data.train_length", p.train_data.length.to_string()));
  p.train_data.truncation = c.get_string("data.train_truncation", p.train_data.truncation);
  p.train_data.count = static_cast<int>(c.get_int("data.train_count", p.train_data.count));
  p.eval_data.length = LengthLaw::parse(c.get_string("data.eval_length", p.eval_data.length.to_string()));
  p.eval_data.truncation = c.get_string("data.eval_truncation", p.eval_data.truncation);
  p.eval_data.count = static_cast<int>(c.get_int("data.eval_count", p.eval_data.count));
  p.val_count = static_cast<int>(c.get_int("data.val_count", p.val_count));
  p.train_fraction = c.get_double("data.train_fraction", p.train_fraction);
  p.sampling_seed = static_cast<std::uint64_t>(c.get_int("data.sampling_seed", 0));

  p.train = TrainConfig::from_config(c);
  p.model = model_config_from(c, kReservedTokens);
  p.validate();
  return p;
}

// -- plan --------------------------------------------------------------------

PlanData build_plan_data(const ExperimentPlan& plan) {
  PlanData d;
  d.train = plan.train_data.build(Split::train, plan.vocab_size, plan.distractor_rate, plan.data_seed);
  // Examples whose mentions were all truncated away stay in the set (they
  // keep the set size fixed) but contribute no loss.
  Dataset annotated = d.train;
  annotated.examples.clear();
  Dataset with_mentions = d.train;
  with_mentions.examples.erase(
      std::remove_if(with_mentions.examples.begin(), with_mentions.examples.end(),
                     [](const QAExample& e) { return e.answers.empty(); }),
      with_mentions.examples.end());
  const Dataset chosen = reannotate_answers(with_mentions, plan.data_seed);
  std::size_t next = 0;
  for (const auto& e : d.train.examples) {
    annotated.examples.push_back(e.answers.empty() ? e : chosen.examples[next++]);
  }
  d.train = std::move(annotated);
  if (plan.train_fraction < 1.0) d.train = subsample(d.train, plan.train_fraction, plan.sampling_seed);

  DataRecipe val_recipe = plan.eval_data;
  val_recipe.count = plan.val_count;
  d.val = val_recipe.build(Split::val, plan.vocab_size, plan.distractor_rate, plan.data_seed);
  d.test = plan.eval_data.build(Split::test, plan.vocab_size, plan.distractor_rate, plan.data_seed);
  d.vocab = build_vocab(d.train, std::size_t{1} << 20);
  return d;
}

std::pair<double, double> mean_and_sd(const std::vector<double>& values) {
  if (values.empty()) return {0.0, 0.0};
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(values.size());
  if (values.size() < 2) return {mean, 0.0};
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  return {mean, std::sqrt(ss / static_cast<double>(values.size() - 1))};
}

namespace {

std::map<std::string, double> metrics_of(const EvalReport& r) {
  std::map<std::string, double> m;
  m["f1"] = r.f1;
  m["em"] = r.em;
  for (const auto& s : r.segments) {
    m["seg1_f1@" + std::to_string(s.demarcation)] = s.first_f1;
    m["seg2_f1@" + std::to_string(s.demarcation)] = s.second_f1;
  }
  return m;
}

std::vector<std::string> metric_names(const ExperimentPlan& plan) {
  std::vector<std::string> names{"f1", "em"};
  for (int x : plan.demarcations) {
    names.push_back("seg1_f1@" + std::to_string(x));
    names.push_back("seg2_f1@" + std::to_string(x));
  }
  return names;
}

}  // namespace

std::vector<PairedResult> pair_runs(const ExperimentPlan& plan, const std::vector<SeedRun>& runs) {
  auto find = [&](const std::string& policy, std::uint64_t seed) -> const SeedRun& {
    for (const auto& r : runs) {
      if (r.policy == policy && r.seed == seed) return r;
    }
    throw std::runtime_error("missing result for policy " + policy + ", seed " + std::to_string(seed));
  };
  std::vector<PairedResult> out;
  for (const auto& policy : plan.policies) {
    for (const auto& metric : metric_names(plan)) {
      PairedResult pr;
      pr.policy = policy;
      pr.metric = metric;
      std::vector<double> deltas;
      for (auto seed : plan.seeds) {
        pr.seeds.push_back(seed);
        pr.baseline.push_back(metrics_of(find(plan.policies.front(), seed).test).at(metric));
        pr.treated.push_back(metrics_of(find(policy, seed).test).at(metric));
        deltas.push_back(pr.treated.back() - pr.baseline.back());
      }
      std::tie(pr.mean_delta, pr.sd_delta) = mean_and_sd(deltas);
      out.push_back(std::move(pr));
    }
  }
  return out;
}

const SeedRun& PlanResult::run(const std::string& policy, std::uint64_t seed) const {
  for (const auto& r : runs) {
    if (r.policy == policy && r.seed == seed) return r;
  }
  throw std::out_of_range("no run for " + policy + " seed " + std::to_string(seed));
}

const PairedResult& PlanResult::paired_metric(const std::string& policy, const std::string& metric) const {
  for (const auto& p : paired) {
    if (p.policy == policy && p.metric == metric) return p;
  }
  throw std::out_of_range("no paired result for " + policy + " / " + metric);
}

PlanResult run_plan(const ExperimentPlan& plan, const RunCallback& on_run) {
  plan.validate();
  const PlanData data = build_plan_data(plan);
  const WindowingPolicy windowing = WindowingPolicy::with_capacity(plan.model.capacity);
  const auto train_windows = encode_dataset(data.train, data.vocab, windowing);
  const EvalSet val = EvalSet::build(data.val, data.vocab, windowing);
  const EvalSet test = EvalSet::build(data.test, data.vocab, windowing);
  ModelConfig model = plan.model;
  model.vocab_size = static_cast<int>(data.vocab.size());

  EvalOptions options;
  options.max_answer_tokens = plan.train.max_answer_tokens;
  options.bucket_width = plan.bucket_width;
  options.bucket_by = plan.bucket_by;
  options.demarcations = plan.demarcations;

  PlanResult result;
  result.name = plan.name;
  for (auto seed : plan.seeds) {
    std::vector<std::uint64_t> baseline_order;
    for (const auto& policy : plan.policies) {
      SeedRun run;
      run.policy = policy;
      run.seed = seed;
      try {
        TrainConfig cfg = plan.train;
        cfg.seed = seed;
        cfg.shift = ShiftPolicy::parse(policy, seed);
        cfg.shift.resample_each_epoch = plan.train.shift.resample_each_epoch;
        TrainResult trained = train(cfg, model, train_windows, &val);
        run.test = evaluate(trained.best, test, options);
        run.log = std::move(trained.log);
        run.census = std::move(trained.census);
      } catch (const std::exception& e) {
        throw std::runtime_error("plan " + plan.name + ": seed " + std::to_string(seed) + ", policy " +
                                 policy + " failed: " + e.what());
      }
      if (policy == plan.policies.front()) {
        baseline_order = run.log.epoch_order_hashes;
      } else if (run.log.epoch_order_hashes != baseline_order) {
        throw std::runtime_error("plan " + plan.name + ": seed " + std::to_string(seed) + ", policy " +
                                 policy + " visited instances in a different order than the baseline");
      }
      if (on_run) on_run(run);
      result.runs.push_back(std::move(run));
    }
  }
  result.paired = pair_runs(plan, result.runs);
  return result;
}

void write_plan_result(const PlanResult& result, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::ostringstream runs, paired, buckets, segments;
  runs << "policy,seed,f1,em,best_step,total_steps,census_spread\n";
  buckets << "policy,seed,lo,hi,count,mean_f1,mean_em\n";
  segments << "policy,seed,demarcation,first_count,first_f1,second_count,second_f1\n";
  for (const auto& r : result.runs) {
    runs << r.policy << ',' << r.seed << ',' << fmt(r.test.f1) << ',' << fmt(r.test.em) << ','
         << r.log.best_step << ',' << r.log.total_steps << ',' << fmt(census_spread(r.census)) << '\n';
    for (const auto& b : r.test.buckets) {
      buckets << r.policy << ',' << r.seed << ',' << b.lo << ',' << b.hi << ',' << b.count << ','
              << fmt(b.mean_f1) << ',' << fmt(b.mean_em) << '\n';
    }
    for (const auto& s : r.test.segments) {
      segments << r.policy << ',' << r.seed << ',' << s.demarcation << ',' << s.first_count << ','
               << fmt(s.first_f1) << ',' << s.second_count << ',' << fmt(s.second_f1) << '\n';
    }
    std::string policy_file = r.policy;
    std::replace(policy_file.begin(), policy_file.end(), ':', '-');
    save_census_csv(r.census, dir / ("census_" + policy_file + "_seed" + std::to_string(r.seed) + ".csv"));
  }
  paired << "policy,metric,seeds,mean_baseline,mean_treated,mean_delta,sd_delta\n";
  for (const auto& p : result.paired) {
    paired << p.policy << ',' << p.metric << ',' << p.seeds.size() << ',' << fmt(mean_and_sd(p.baseline).first)
           << ',' << fmt(mean_and_sd(p.treated).first) << ',' << fmt(p.mean_delta) << ','
           << fmt(p.sd_delta) << '\n';
  }
  write_text(dir / "runs.csv", runs.str());
  write_text(dir / "paired.csv", paired.str());
  write_text(dir / "buckets.csv", buckets.str());
  write_text(dir / "segments.csv", segments.str());
}

// -- low-resource sweep --------------------------------------------------------

std::vector<SweepCell> lowresource_sweep(const ExperimentPlan& base, const std::vector<double>& fractions,
                                         const std::vector<std::string>& caps,
                                         const std::vector<std::uint64_t>& sampling_seeds,
                                         const RunCallback& on_run) {
  if (fractions.empty() || sampling_seeds.empty()) {
    throw std::invalid_argument("sweep needs at least one fraction and one sampling seed");
  }
  std::vector<std::string> policies{"off"};
  for (const auto& c : caps) {
    const auto policy = ShiftPolicy::parse(c);
    if (policy.mode == ShiftMode::off || (policy.mode == ShiftMode::capped && policy.cap == 0)) continue;
    policies.push_back(policy.name());
  }
  std::vector<SweepCell> cells;
  for (double fraction : fractions) {
    if (!(fraction > 0.0 && fraction <= 1.0)) {
      throw std::invalid_argument("sweep fraction " + fmt(fraction) + " is outside (0, 1]");
    }
    for (auto sampling_seed : sampling_seeds) {
      ExperimentPlan plan = base;
      plan.policies = policies;
      plan.train_fraction = fraction;
      plan.sampling_seed = sampling_seed;
      plan.name = base.name + "@" + fmt(fraction) + "/" + std::to_string(sampling_seed);
      const PlanResult result = run_plan(plan, on_run);
      for (const auto& policy : policies) {
        const auto& f1 = result.paired_metric(policy, "f1");
        cells.push_back({fraction, sampling_seed, policy, mean_and_sd(f1.treated).first, f1.mean_delta,
                         f1.sd_delta});
      }
    }
  }
  return cells;
}

void write_sweep_csv(const std::vector<SweepCell>& cells, const std::filesystem::path& path) {
  std::ostringstream out;
  out << "fraction,sampling_seed,policy,mean_f1,mean_delta,sd_delta\n";
  for (const auto& c : cells) {
    out << fmt(c.fraction) << ',' << c.sampling_seed << ',' << c.policy << ',' << fmt(c.mean_f1) << ','
        << fmt(c.mean_delta) << ',' << fmt(c.sd_delta) << '\n';
  }
  write_text(path, out.str());
}

}  // namespace randpad
