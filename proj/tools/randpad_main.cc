// Copyright 2026 The randpad Authors
// SPDX-License-Identifier: Apache-2.0
//
// randpad: command-line front end. Every subcommand folds its flags into one
// effective key-value config, reads and writes plain files, and leaves a
// manifest.json (config hash, input and output hashes) in the output
// directory.

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#ifdef __GLIBC__
#include <malloc.h>
#endif

#include <CLI11.hpp>

#include "randpad/config.h"
#include "randpad/corpus.h"
#include "randpad/encoding.h"
#include "randpad/evaluation.h"
#include "randpad/experiments.h"
#include "randpad/model.h"
#include "randpad/padshift.h"
#include "randpad/report.h"
#include "randpad/training.h"

namespace fs = std::filesystem;
using namespace randpad;

namespace {

constexpr std::size_t kMaxVocab = std::size_t{1} << 20;

std::string fmt(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", x);
  return buf;
}

/// Bookkeeping for one subcommand invocation.
class Job {
 public:
  Job(std::string command, KeyValueConfig config, fs::path out)
      : command_(std::move(command)), config_(std::move(config)), out_(std::move(out)) {
    fs::create_directories(out_);
  }

  const KeyValueConfig& config() const { return config_; }
  const fs::path& out() const { return out_; }

  const std::string& input(const std::string& path) {
    inputs_.push_back({path, file_hash(path)});
    return inputs_.back().path;
  }

  fs::path output(const std::string& name) const { return out_ / name; }

  /// Records a file already written under out().
  void produced(const std::string& name) { outputs_.push_back({name, file_hash(out_ / name)}); }

  void write(const std::string& name, const std::string& text) {
    std::ofstream f(out_ / name, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + (out_ / name).string());
    f << text;
    f.close();
    produced(name);
  }

  void finish(std::uint64_t seed) {
    Manifest m;
    m.command = command_;
    m.config = config_.dump();
    m.config_hash = hex64(config_.hash());
    m.seed = seed;
    m.inputs = inputs_;
    m.outputs = outputs_;
    write_manifest(m, out_);
  }

 private:
  std::string command_;
  KeyValueConfig config_;
  fs::path out_;
  std::vector<ManifestEntry> inputs_;
  std::vector<ManifestEntry> outputs_;
};

std::uint64_t get_seed(const KeyValueConfig& c, const std::string& key) {
  return static_cast<std::uint64_t>(c.get_int(key, 0));
}

EvalOptions eval_options(const KeyValueConfig& c) {
  EvalOptions o;
  o.max_answer_tokens = static_cast<int>(c.get_int("eval.max_answer_tokens", o.max_answer_tokens));
  o.bucket_width = static_cast<int>(c.get_int("eval.bucket_width", o.bucket_width));
  const auto by = c.get_string("eval.bucket_by", "predicted");
  if (by != "predicted" && by != "gold") throw ConfigError("eval.bucket_by must be predicted or gold");
  o.bucket_by = by == "gold" ? BucketBy::gold : BucketBy::predicted;
  for (const auto& x : c.get_list("eval.demarcations", {"16", "32", "64"})) o.demarcations.push_back(std::stoi(x));
  return o;
}

// -- charts --------------------------------------------------------------------

/// Bar chart of mean F1 per bucket, one series per value of `series`
/// (or a single series when empty); buckets ordered by their lower bound.
std::string bucket_svg(const CsvTable& table, const std::string& series, const std::string& title) {
  CsvTable t;
  t.header = {"bucket", "series", "mean_f1"};
  std::vector<std::pair<int, std::vector<std::string>>> rows;
  const auto lo = table.column("lo");
  const auto hi = table.column("hi");
  const auto f1 = table.column("mean_f1");
  for (const auto& r : table.rows) {
    rows.push_back({std::stoi(r[lo]),
                    {r[lo] + "-" + r[hi], series.empty() ? "mean_f1" : r[table.column(series)], r[f1]}});
  }
  std::stable_sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  for (auto& r : rows) t.rows.push_back(std::move(r.second));
  BarChart chart = chart_from_csv(t, "bucket", "mean_f1", "series");
  chart.title = title;
  chart.y_label = "mean F1";
  return render_svg(chart);
}

/// Bar chart of first/second segment F1 per demarcation.
std::string segment_svg(const CsvTable& table, const std::string& series, const std::string& title) {
  CsvTable t;
  t.header = {"segment", "series", "f1"};
  const auto x = table.column("demarcation");
  const auto first = table.column("first_f1");
  const auto second = table.column("second_f1");
  for (const auto& r : table.rows) {
    const std::string s = series.empty() ? "f1" : r[table.column(series)];
    t.rows.push_back({"first@" + r[x], s, r[first]});
    t.rows.push_back({"second@" + r[x], s, r[second]});
  }
  BarChart chart = chart_from_csv(t, "segment", "f1", "series");
  chart.title = title;
  chart.y_label = "F1";
  return render_svg(chart);
}

// -- subcommands ---------------------------------------------------------------

void cmd_gen_data(Job& job) {
  const auto& c = job.config();
  SyntheticSpec spec;
  spec.split = parse_split(c.get_string("data.split", "train"));
  spec.count = static_cast<int>(c.get_int("data.count", 1000));
  spec.length = LengthLaw::parse(c.get_string("data.length", "range:25:120"));
  spec.answer_law = parse_answer_law(c.get_string("data.answer_law", "uniform"));
  spec.vocab_size = static_cast<int>(c.get_int("data.vocab_size", spec.vocab_size));
  spec.distractor_rate = c.get_double("data.distractor_rate", spec.distractor_rate);
  spec.seed = get_seed(c, "data.seed");
  const std::string name = std::string(to_string(spec.split)) + ".jsonl";
  save_dataset(generate_synthetic(spec), job.output(name));
  job.produced(name);
  job.finish(spec.seed);
}

void cmd_truncate(Job& job, const std::string& input) {
  const auto& c = job.config();
  const Dataset data = load_dataset(job.input(input));
  const std::string mode = c.get_string("truncate.mode", "");
  const std::uint64_t seed = get_seed(c, "truncate.seed");
  Dataset out;
  if (mode.starts_with("fixed:")) {
    out = truncate_fixed(data, std::stoi(mode.substr(6)));
  } else if (mode.starts_with("range:")) {
    const LengthLaw law = LengthLaw::parse(mode);
    out = truncate_range(data, law.min_words, law.max_words, seed);
  } else {
    throw ConfigError("truncate.mode must be fixed:L or range:L1:L2, got \"" + mode + "\"");
  }
  save_dataset(out, job.output("truncated.jsonl"));
  job.produced("truncated.jsonl");
  job.finish(seed);
}

void cmd_reannotate(Job& job, const std::string& input) {
  const std::uint64_t seed = get_seed(job.config(), "reannotate.seed");
  const Dataset data = load_dataset(job.input(input));
  save_dataset(reannotate_answers(data, seed), job.output("reannotated.jsonl"));
  job.produced("reannotated.jsonl");
  job.finish(seed);
}

void cmd_train(Job& job, const std::string& train_path, const std::string& val_path) {
  const auto& c = job.config();
  const Dataset train_data = load_dataset(job.input(train_path), Split::train);
  const Vocab vocab = build_vocab(train_data, static_cast<std::size_t>(c.get_int("vocab.max_size", kMaxVocab)));
  const TrainConfig tc = TrainConfig::from_config(c);
  const ModelConfig mc = model_config_from(c, vocab.size());
  const WindowingPolicy windowing = WindowingPolicy::with_capacity(mc.capacity);
  const auto windows = encode_dataset(train_data, vocab, windowing);
  std::optional<EvalSet> val;
  if (!val_path.empty()) val = EvalSet::build(load_dataset(job.input(val_path), Split::val), vocab, windowing);

  const TrainResult result = train(tc, mc, windows, val ? &*val : nullptr);
  std::fprintf(stderr, "trained %lld steps, best step %lld (val F1 %.2f)\n",
               static_cast<long long>(result.log.total_steps), static_cast<long long>(result.log.best_step),
               result.log.best_f1);

  save_checkpoint(result.best, job.output("checkpoint.bin"));
  job.produced("checkpoint.bin");
  vocab.save(job.output("vocab.txt"));
  job.produced("vocab.txt");
  job.write("run_log.jsonl", format_run_log(result.log));
  const std::string census = format_census_csv(result.census);
  job.write("census.csv", census);
  CsvTable table = parse_csv(census);
  BarChart chart = chart_from_csv(table, "position", "fraction");
  chart.title = "update fraction per position (" + tc.shift.name() + ")";
  job.write("census.svg", render_svg(chart));
  job.finish(tc.seed);
}

void cmd_eval(Job& job, const std::string& checkpoint, const std::string& vocab_path, const std::string& data_path) {
  const auto& c = job.config();
  const ModelParams params = load_checkpoint(job.input(checkpoint));
  const Vocab vocab = Vocab::load(job.input(vocab_path));
  const Dataset data = load_dataset(job.input(data_path), Split::test);
  const EvalSet set = EvalSet::build(data, vocab, WindowingPolicy::with_capacity(params.config.capacity));
  const EvalReport report = evaluate(params, set, eval_options(c));

  save_predictions(report.predictions, job.output("predictions.jsonl"));
  job.produced("predictions.jsonl");
  std::ostringstream metrics;
  metrics << "metric,value\nf1," << fmt(report.f1) << "\nem," << fmt(report.em) << "\nexamples,"
          << report.instances.size() << "\n";
  job.write("metrics.csv", metrics.str());
  std::ostringstream instances;
  instances << "id,f1,em,predicted_start,gold_start\n";
  for (const auto& i : report.instances) {
    instances << i.id << ',' << fmt(i.f1) << ',' << fmt(i.em) << ',' << i.predicted_start << ',' << i.gold_start
              << '\n';
  }
  job.write("instances.csv", instances.str());
  std::ostringstream buckets;
  buckets << "lo,hi,count,mean_f1,mean_em\n";
  for (const auto& b : report.buckets) {
    buckets << b.lo << ',' << b.hi << ',' << b.count << ',' << fmt(b.mean_f1) << ',' << fmt(b.mean_em) << '\n';
  }
  job.write("buckets.csv", buckets.str());
  std::ostringstream segments;
  segments << "demarcation,first_count,first_f1,second_count,second_f1\n";
  for (const auto& s : report.segments) {
    segments << s.demarcation << ',' << s.first_count << ',' << fmt(s.first_f1) << ',' << s.second_count << ','
             << fmt(s.second_f1) << '\n';
  }
  job.write("segments.csv", segments.str());
  job.write("buckets.svg", bucket_svg(parse_csv(buckets.str()), "", "F1 by answer position"));
  job.write("segments.svg", segment_svg(parse_csv(segments.str()), "", "F1 by segment"));
  std::fprintf(stderr, "F1 %.2f EM %.2f over %zu examples\n", report.f1, report.em, report.instances.size());
  job.finish(0);
}

void cmd_census(Job& job, const std::string& data_path) {
  const auto& c = job.config();
  const Dataset data = load_dataset(job.input(data_path), Split::train);
  const Vocab vocab = build_vocab(data, static_cast<std::size_t>(c.get_int("vocab.max_size", kMaxVocab)));
  const int capacity = static_cast<int>(c.get_int("model.capacity", ModelConfig{}.capacity));
  const auto windows = encode_dataset(data, vocab, WindowingPolicy::with_capacity(capacity));
  const TrainConfig base = TrainConfig::from_config(c);

  std::ostringstream table, summary;
  table << "policy,position,count,fraction\n";
  summary << "policy,steps,spread\n";
  for (const auto& name : c.get_list("census.policies", {"off", "full"})) {
    TrainConfig tc = base;
    tc.shift = ShiftPolicy::parse(name, base.shift.seed);
    tc.shift.resample_each_epoch = base.shift.resample_each_epoch;
    const UpdateCensus census = simulate_census(windows, capacity, tc);
    for (const auto& row : census_report(census)) {
      char frac[32];
      std::snprintf(frac, sizeof frac, "%.6f", row.fraction);
      table << tc.shift.name() << ',' << row.position << ',' << row.count << ',' << frac << '\n';
    }
    summary << tc.shift.name() << ',' << census.total_steps << ',' << fmt(census_spread(census)) << '\n';
  }
  job.write("census.csv", table.str());
  job.write("census_summary.csv", summary.str());
  BarChart chart = chart_from_csv(parse_csv(table.str()), "position", "fraction", "policy");
  chart.title = "update fraction per position";
  job.write("census.svg", render_svg(chart));
  job.finish(base.seed);
}

void cmd_segments(Job& job, const std::string& data_path, const std::string& vocab_path) {
  const auto& c = job.config();
  const Dataset data = load_dataset(job.input(data_path), Split::test);
  const Vocab vocab = vocab_path.empty() ? build_vocab(data, kMaxVocab) : Vocab::load(job.input(vocab_path));
  const int capacity = static_cast<int>(c.get_int("model.capacity", ModelConfig{}.capacity));
  const EvalSet set = EvalSet::build(data, vocab, WindowingPolicy::with_capacity(capacity));
  std::ostringstream rows, summary;
  rows << "demarcation,id,segment\n";
  summary << "demarcation,first_count,second_count\n";
  for (const auto& x : c.get_list("segments.demarcations", {"16", "32", "64"})) {
    const SegmentPair pair = split_segments(set, std::stoi(x));
    for (const auto& id : pair.first) rows << pair.demarcation << ',' << id << ",first\n";
    for (const auto& id : pair.second) rows << pair.demarcation << ',' << id << ",second\n";
    summary << pair.demarcation << ',' << pair.first.size() << ',' << pair.second.size() << '\n';
  }
  job.write("segments.csv", rows.str());
  job.write("segment_sizes.csv", summary.str());
  job.finish(0);
}

void cmd_categorize(Job& job, const std::string& baseline_path, const std::string& improved_path,
                    const std::string& data_path) {
  const Dataset data = load_dataset(job.input(data_path), Split::test);
  const auto baseline = load_predictions(job.input(baseline_path));
  const auto improved = load_predictions(job.input(improved_path));
  std::map<std::string, const Prediction*> by_id;
  for (const auto& p : improved) by_id[p.example_id] = &p;
  std::map<std::string, const Prediction*> base_by_id;
  for (const auto& p : baseline) base_by_id[p.example_id] = &p;

  std::ostringstream rows;
  rows << "id,category\n";
  std::map<Improvement, std::size_t> counts;
  for (const auto& ex : data.examples) {
    const auto b = base_by_id.find(ex.id);
    const auto i = by_id.find(ex.id);
    if (b == base_by_id.end() || i == by_id.end()) {
      throw std::runtime_error("example " + ex.id + " is missing from a prediction file");
    }
    const auto golds = gold_texts(ex);
    const Improvement cat = categorize_improvement(b->second->text, i->second->text, golds);
    ++counts[cat];
    rows << ex.id << ',' << to_string(cat) << '\n';
  }
  std::ostringstream summary;
  summary << "category,count\n";
  for (auto cat : {Improvement::correction, Improvement::boundary, Improvement::not_improved}) {
    summary << to_string(cat) << ',' << counts[cat] << '\n';
  }
  job.write("categories.csv", rows.str());
  job.write("category_counts.csv", summary.str());
  BarChart chart = chart_from_csv(parse_csv(summary.str()), "category", "count");
  chart.title = "improvement categories";
  job.write("categories.svg", render_svg(chart));
  job.finish(0);
}

void report_progress(const SeedRun& r) {
  std::fprintf(stderr, "%s seed %llu: F1 %.2f (best step %lld of %lld)\n", r.policy.c_str(),
               static_cast<unsigned long long>(r.seed), r.test.f1, static_cast<long long>(r.log.best_step),
               static_cast<long long>(r.log.total_steps));
}

void cmd_plan(Job& job) {
  const ExperimentPlan plan = ExperimentPlan::from_config(job.config());
  const PlanResult result = run_plan(plan, report_progress);
  write_plan_result(result, job.out());
  for (const char* name : {"runs.csv", "paired.csv", "buckets.csv", "segments.csv"}) job.produced(name);
  for (const auto& r : result.runs) {
    std::string policy = r.policy;
    std::replace(policy.begin(), policy.end(), ':', '-');
    job.produced("census_" + policy + "_seed" + std::to_string(r.seed) + ".csv");
  }
  job.write("buckets.svg", bucket_svg(read_csv(job.output("buckets.csv")), "policy",
                                      plan.name + ": F1 by answer position"));
  job.write("segments.svg", segment_svg(read_csv(job.output("segments.csv")), "policy",
                                        plan.name + ": F1 by segment"));
  for (const auto& p : result.paired) {
    if (p.policy == plan.policies.front()) continue;
    std::fprintf(stderr, "%s %s: mean delta %+.2f (sd %.2f)\n", p.policy.c_str(), p.metric.c_str(), p.mean_delta,
                 p.sd_delta);
  }
  job.finish(plan.data_seed);
}

void cmd_sweep(Job& job) {
  const auto& c = job.config();
  const ExperimentPlan base = ExperimentPlan::from_config(c);
  std::vector<double> fractions;
  for (const auto& f : c.get_list("sweep.fractions", {"0.05", "0.1", "0.25", "0.5", "1"})) {
    fractions.push_back(std::stod(f));
  }
  const auto caps = c.get_list("sweep.caps", {"capped:16", "capped:32", "capped:64", "full"});
  std::vector<std::uint64_t> sampling_seeds;
  for (const auto& s : c.get_list("sweep.sampling_seeds", {"1", "2", "3"})) sampling_seeds.push_back(std::stoull(s));
  const auto cells = lowresource_sweep(base, fractions, caps, sampling_seeds, report_progress);
  write_sweep_csv(cells, job.output("sweep.csv"));
  job.produced("sweep.csv");
  CsvTable t;
  t.header = {"fraction", "policy", "mean_delta"};
  for (const auto& cell : cells) {
    if (cell.policy == "off") continue;
    t.rows.push_back({fmt(cell.fraction), cell.policy, fmt(cell.mean_delta)});
  }
  if (!t.rows.empty()) {
    BarChart chart = chart_from_csv(t, "fraction", "mean_delta", "policy");
    chart.title = "F1 delta versus baseline by training fraction";
    job.write("sweep.svg", render_svg(chart));
  }
  job.finish(base.data_seed);
}

}  // namespace

int main(int argc, char** argv) {
#ifdef __GLIBC__
  // Training allocates and frees many equally sized matrices; keep the heap.
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
#endif
  CLI::App app{"Random Padding extractive-QA lab"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out = "out";
  app.add_option("--config", config_path, "key = value configuration file")->check(CLI::ExistingFile);
  app.add_option("--seed", seed, "seed for the subcommand's random choices");
  app.add_option("--out", out, "output directory")->capture_default_str();

  // Flag values that map onto config keys; they override the config file.
  std::map<std::string, std::string> overrides;
  auto key_option = [&](CLI::App* cmd, const std::string& flag, const std::string& key, const std::string& help) {
    cmd->add_option_function<std::string>(flag, [&overrides, key](const std::string& v) { overrides[key] = v; },
                                          help + " [" + key + "]");
  };
  std::string input, train_path, val_path, checkpoint, vocab_path, data_path, baseline_path, improved_path;

  auto* gen = app.add_subcommand("gen-data", "generate a synthetic dataset split");
  key_option(gen, "--split", "data.split", "train, val or test");
  key_option(gen, "--count", "data.count", "number of examples");
  key_option(gen, "--length", "data.length", "fixed:L or range:L1:L2 context words");
  key_option(gen, "--answer-law", "data.answer_law", "uniform, front or rear");

  auto* trunc = app.add_subcommand("truncate", "truncate contexts to fixed or ranged word counts");
  trunc->add_option("--input", input, "dataset file")->required()->check(CLI::ExistingFile);
  key_option(trunc, "--mode", "truncate.mode", "fixed:L or range:L1:L2");

  auto* reann = app.add_subcommand("reannotate", "keep one uniformly chosen answer mention per example");
  reann->add_option("--input", input, "dataset file")->required()->check(CLI::ExistingFile);

  auto* tr = app.add_subcommand("train", "fine-tune a model");
  tr->add_option("--train", train_path, "training dataset")->required()->check(CLI::ExistingFile);
  tr->add_option("--val", val_path, "validation dataset for checkpoint selection")->check(CLI::ExistingFile);
  std::string policy;
  tr->add_option("--policy", policy, "shift policy: off, full or capped:K");

  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint");
  ev->add_option("--checkpoint", checkpoint, "checkpoint file")->required()->check(CLI::ExistingFile);
  ev->add_option("--vocab", vocab_path, "vocabulary file written by train")->required()->check(CLI::ExistingFile);
  ev->add_option("--data", data_path, "dataset to evaluate")->required()->check(CLI::ExistingFile);

  auto* cen = app.add_subcommand("census", "count per-position update opportunities under shift policies");
  cen->add_option("--data", data_path, "training dataset")->required()->check(CLI::ExistingFile);
  key_option(cen, "--policies", "census.policies", "comma-separated shift policies");

  auto* seg = app.add_subcommand("segments", "split a dataset into first/second segments");
  seg->add_option("--data", data_path, "dataset")->required()->check(CLI::ExistingFile);
  seg->add_option("--vocab", vocab_path, "vocabulary file (default: built from the data)")
      ->check(CLI::ExistingFile);
  key_option(seg, "--demarcations", "segments.demarcations", "comma-separated X values");

  auto* cat = app.add_subcommand("categorize", "classify baseline-to-improved prediction changes");
  cat->add_option("--baseline", baseline_path, "baseline predictions.jsonl")->required()->check(CLI::ExistingFile);
  cat->add_option("--improved", improved_path, "improved predictions.jsonl")->required()->check(CLI::ExistingFile);
  cat->add_option("--data", data_path, "dataset with gold answers")->required()->check(CLI::ExistingFile);

  auto* pl = app.add_subcommand("plan", "run a paired multi-seed experiment");
  auto* sw = app.add_subcommand("sweep", "run the low-resource fraction x cap grid");

  CLI11_PARSE(app, argc, argv);

  try {
    KeyValueConfig config = config_path.empty() ? KeyValueConfig{} : KeyValueConfig::load(config_path);
    for (const auto& [k, v] : overrides) config.set(k, v);
    if (!policy.empty()) {
      const ShiftPolicy p = ShiftPolicy::parse(policy);
      config.set("padshift.mode", std::string(to_string(p.mode)));
      if (p.mode == ShiftMode::capped) config.set("padshift.K", std::to_string(p.cap));
    }
    auto seed_into = [&](const std::string& key) {
      if (seed) config.set(key, std::to_string(*seed));
    };
    CLI::App* cmd = app.get_subcommands().front();
    const std::string name = cmd->get_name();
    if (cmd == gen || cmd == pl || cmd == sw) seed_into("data.seed");
    if (cmd == trunc) seed_into("truncate.seed");
    if (cmd == reann) seed_into("reannotate.seed");
    if (cmd == tr || cmd == cen) seed_into("train.seed");

    Job job(name, config, out);
    if (cmd == gen) cmd_gen_data(job);
    if (cmd == trunc) cmd_truncate(job, input);
    if (cmd == reann) cmd_reannotate(job, input);
    if (cmd == tr) cmd_train(job, train_path, val_path);
    if (cmd == ev) cmd_eval(job, checkpoint, vocab_path, data_path);
    if (cmd == cen) cmd_census(job, data_path);
    if (cmd == seg) cmd_segments(job, data_path, vocab_path);
    if (cmd == cat) cmd_categorize(job, baseline_path, improved_path, data_path);
    if (cmd == pl) cmd_plan(job);
    if (cmd == sw) cmd_sweep(job);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "randpad: error: %s\n", e.what());
    return 1;
  }
  return 0;
}
