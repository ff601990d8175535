// Copyright 2026 The randpad Authors
// SPDX-License-Identifier: Apache-2.0

#include "randpad/evaluation.h"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>

#include <json.hpp>

#include "randpad/padshift.h"

namespace randpad {

SpanChoice decode_span(const SpanLogits& logits, int max_answer_tokens) {
  const int mc = logits.context_tokens();
  if (mc == 0) throw std::invalid_argument("decode_span: window has no context tokens");
  if (max_answer_tokens < 1) throw std::invalid_argument("decode_span: max answer length must be >= 1");
  SpanChoice best{0, 0, -std::numeric_limits<double>::infinity()};
  bool found = false;
  for (int s = 0; s < mc; ++s) {
    const int last = std::min(mc - 1, s + max_answer_tokens - 1);
    for (int e = s; e <= last; ++e) {
      const double score = logits.start(s) + logits.end(e);
      if (!found || score > best.score) {
        best = {s, e, score};
        found = true;
      }
    }
  }
  best.start += logits.context_begin;
  best.end += logits.context_begin;
  return best;
}

EvalSet EvalSet::build(Dataset data, const Vocab& vocab, const WindowingPolicy& policy) {
  EvalSet set;
  set.data = std::move(data);
  set.window_ranges.reserve(set.data.examples.size());
  for (const auto& ex : set.data.examples) {
    const auto begin = set.windows.size();
    for (auto& w : encode_example(ex, vocab, policy)) set.windows.push_back(std::move(w));
    set.window_ranges.emplace_back(begin, set.windows.size());
  }
  return set;
}

std::span<const EncodedWindow> EvalSet::windows_of(std::size_t example) const {
  const auto [b, e] = window_ranges.at(example);
  return std::span<const EncodedWindow>(windows).subspan(b, e - b);
}

Prediction predict_example(const ModelParams& params, const QAExample& example,
                           std::span<const EncodedWindow> windows, int max_answer_tokens,
                           bool use_inference_view) {
  if (windows.empty()) throw std::invalid_argument("example " + example.id + " has no windows");
  Prediction best;
  bool found = false;
  for (const auto& w : windows) {
    const EncodedWindow& input = use_inference_view ? inference_view(w) : w;
    const SpanChoice choice = decode_span(forward(params, input), max_answer_tokens);
    if (!found || choice.score > best.score) {
      best.example_id = example.id;
      best.start = choice.start;
      best.end = choice.end;
      best.score = choice.score;
      best.window_index = w.window_index;
      best.window_offset = w.window_offset;
      const int first_word = w.window_offset + (choice.start - w.context_begin());
      const int last_word = w.window_offset + (choice.end - w.context_begin());
      best.text = join_words(std::span<const std::string>(example.context)
                                 .subspan(static_cast<std::size_t>(first_word),
                                          static_cast<std::size_t>(last_word - first_word + 1)));
      found = true;
    }
  }
  return best;
}

std::vector<Prediction> predict(const ModelParams& params, const EvalSet& set,
                                int max_answer_tokens, bool use_inference_view) {
  std::vector<Prediction> out;
  out.reserve(set.data.examples.size());
  for (std::size_t i = 0; i < set.data.examples.size(); ++i) {
    out.push_back(predict_example(params, set.data.examples[i], set.windows_of(i),
                                  max_answer_tokens, use_inference_view));
  }
  return out;
}

// -- metrics -----------------------------------------------------------------

std::string normalize_answer(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  bool pending_space = false;
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::ispunct(c)) continue;
    if (std::isspace(c)) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) {
      out += ' ';
      pending_space = false;
    }
    out += static_cast<char>(std::tolower(c));
  }
  return out;
}

std::vector<std::string> normalized_tokens(std::string_view text) {
  return split_words(normalize_answer(text));
}

namespace {
double f1_single(const std::vector<std::string>& pred, const std::vector<std::string>& gold) {
  std::unordered_map<std::string, int> counts;
  for (const auto& t : gold) ++counts[t];
  int common = 0;
  for (const auto& t : pred) {
    auto it = counts.find(t);
    if (it != counts.end() && it->second > 0) {
      --it->second;
      ++common;
    }
  }
  if (common == 0) return 0.0;
  const double precision = static_cast<double>(common) / static_cast<double>(pred.size());
  const double recall = static_cast<double>(common) / static_cast<double>(gold.size());
  return 100.0 * 2.0 * precision * recall / (precision + recall);
}
}  // namespace

double squad_f1(std::string_view prediction, std::span<const std::string> golds) {
  const auto pred = normalized_tokens(prediction);
  double best = 0.0;
  for (const auto& g : golds) best = std::max(best, f1_single(pred, normalized_tokens(g)));
  return best;
}

double exact_match(std::string_view prediction, std::span<const std::string> golds) {
  const auto pred = normalize_answer(prediction);
  for (const auto& g : golds) {
    if (normalize_answer(g) == pred) return 100.0;
  }
  return 0.0;
}

std::vector<std::string> gold_texts(const QAExample& example) {
  std::vector<std::string> out;
  out.reserve(example.answers.size());
  for (const auto& m : example.answers) out.push_back(m.text);
  return out;
}

// -- positions, buckets, segments ---------------------------------------------

std::vector<int> mention_token_positions(const QAExample& example,
                                         std::span<const EncodedWindow> windows) {
  std::vector<int> out;
  out.reserve(example.answers.size());
  for (const auto& m : example.answers) {
    bool mapped = false;
    for (const auto& w : windows) {
      if (auto span = map_answer_span(w, m)) {
        // Unshifted layout: drop any applied shift.
        out.push_back(span->start - w.shift);
        mapped = true;
        break;
      }
    }
    if (!mapped) {
      throw std::runtime_error("example " + example.id + ": mention [" + std::to_string(m.start) +
                               "," + std::to_string(m.end) + "] is not contained in any window");
    }
  }
  return out;
}

std::vector<BucketRow> bucket_by_position(std::span<const InstanceScore> instances, int width,
                                          int capacity, BucketBy by) {
  if (width < 1) throw std::invalid_argument("bucket width must be >= 1");
  const int buckets = (capacity + width - 1) / width;
  std::vector<BucketRow> rows(static_cast<std::size_t>(buckets));
  for (int b = 0; b < buckets; ++b) {
    rows[static_cast<std::size_t>(b)].lo = b * width;
    rows[static_cast<std::size_t>(b)].hi = std::min(capacity, (b + 1) * width);
  }
  for (const auto& inst : instances) {
    const int pos = by == BucketBy::predicted ? inst.predicted_start : inst.gold_start;
    if (pos < 0 || pos >= capacity) continue;
    auto& row = rows[static_cast<std::size_t>(pos / width)];
    ++row.count;
    row.mean_f1 += inst.f1;
    row.mean_em += inst.em;
  }
  std::vector<BucketRow> out;
  for (auto& row : rows) {
    if (row.count == 0) continue;
    row.mean_f1 /= static_cast<double>(row.count);
    row.mean_em /= static_cast<double>(row.count);
    out.push_back(row);
  }
  return out;
}

SegmentPair split_segments(const EvalSet& set, int demarcation) {
  SegmentPair pair;
  pair.demarcation = demarcation;
  for (std::size_t i = 0; i < set.data.examples.size(); ++i) {
    const auto& ex = set.data.examples[i];
    const auto positions = mention_token_positions(ex, set.windows_of(i));
    const bool front = std::any_of(positions.begin(), positions.end(),
                                   [demarcation](int p) { return p <= demarcation; });
    (front ? pair.first : pair.second).push_back(ex.id);
  }
  return pair;
}

double mean_f1(std::span<const InstanceScore> instances, std::span<const std::string> ids) {
  if (ids.empty()) return 0.0;
  std::unordered_map<std::string_view, const InstanceScore*> by_id;
  for (const auto& inst : instances) by_id.emplace(inst.id, &inst);
  double sum = 0.0;
  for (const auto& id : ids) {
    auto it = by_id.find(id);
    if (it == by_id.end()) throw std::runtime_error("no score for instance " + id);
    sum += it->second->f1;
  }
  return sum / static_cast<double>(ids.size());
}

EvalReport score_predictions(const EvalSet& set, std::span<const Prediction> predictions,
                             const EvalOptions& options) {
  std::unordered_map<std::string_view, const Prediction*> by_id;
  for (const auto& p : predictions) by_id.emplace(p.example_id, &p);
  EvalReport report;
  report.instances.reserve(set.data.examples.size());
  for (std::size_t i = 0; i < set.data.examples.size(); ++i) {
    const auto& ex = set.data.examples[i];
    auto it = by_id.find(ex.id);
    if (it == by_id.end()) throw std::runtime_error("no prediction for example " + ex.id);
    const Prediction& p = *it->second;
    const auto golds = gold_texts(ex);
    InstanceScore inst;
    inst.id = ex.id;
    inst.f1 = squad_f1(p.text, golds);
    inst.em = exact_match(p.text, golds);
    inst.predicted_start = p.start;
    const auto positions = mention_token_positions(ex, set.windows_of(i));
    if (!positions.empty()) inst.gold_start = *std::min_element(positions.begin(), positions.end());
    report.f1 += inst.f1;
    report.em += inst.em;
    report.instances.push_back(std::move(inst));
    report.predictions.push_back(p);
  }
  if (!report.instances.empty()) {
    report.f1 /= static_cast<double>(report.instances.size());
    report.em /= static_cast<double>(report.instances.size());
  }
  const int capacity = set.windows.empty() ? 0 : set.windows.front().capacity();
  report.buckets = bucket_by_position(report.instances, options.bucket_width, capacity, options.bucket_by);
  for (int x : options.demarcations) {
    const auto seg = split_segments(set, x);
    report.segments.push_back({x, seg.first.size(), mean_f1(report.instances, seg.first),
                               seg.second.size(), mean_f1(report.instances, seg.second)});
  }
  return report;
}

EvalReport evaluate(const ModelParams& params, const EvalSet& set, const EvalOptions& options) {
  const auto preds = predict(params, set, options.max_answer_tokens);
  return score_predictions(set, preds, options);
}

// -- improvement categories --------------------------------------------------

std::string_view to_string(Improvement category) {
  switch (category) {
    case Improvement::correction: return "correction";
    case Improvement::boundary: return "boundary";
    case Improvement::not_improved: return "not-improved";
  }
  return "not-improved";
}

Improvement categorize_improvement(std::string_view baseline, std::string_view improved,
                                   std::span<const std::string> golds) {
  if (!(squad_f1(improved, golds) > squad_f1(baseline, golds))) return Improvement::not_improved;
  const auto base_words = normalized_tokens(baseline);
  const std::unordered_set<std::string> base_bag(base_words.begin(), base_words.end());
  for (const auto& w : normalized_tokens(improved)) {
    if (base_bag.contains(w)) return Improvement::boundary;
  }
  return Improvement::correction;
}

// -- files -------------------------------------------------------------------

void save_predictions(std::span<const Prediction> predictions, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write predictions " + path.string());
  for (const auto& p : predictions) {
    nlohmann::ordered_json rec;
    rec["id"] = p.example_id;
    rec["text"] = p.text;
    rec["P_s"] = p.start;
    rec["score"] = p.score;
    out << rec.dump() << '\n';
  }
}

std::vector<Prediction> load_predictions(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open predictions " + path.string());
  std::vector<Prediction> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto rec = nlohmann::json::parse(line);
      Prediction p;
      p.example_id = rec.at("id").get<std::string>();
      p.text = rec.at("text").get<std::string>();
      p.start = rec.at("P_s").get<int>();
      p.score = rec.at("score").get<double>();
      out.push_back(std::move(p));
    } catch (const nlohmann::json::exception& e) {
      throw std::runtime_error(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace randpad
