// Copyright 2026 The randpad Authors
// SPDX-License-Identifier: Apache-2.0

#include "randpad/corpus.h"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <unordered_set>

#include <json.hpp>

#include "randpad/rng.h"

namespace randpad {

using nlohmann::json;

std::string_view to_string(Split split) {
  switch (split) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  return "train";
}

Split parse_split(std::string_view text) {
  if (text == "train") return Split::train;
  if (text == "val" || text == "validation" || text == "dev") return Split::val;
  if (text == "test") return Split::test;
  throw std::invalid_argument("unknown split: " + std::string(text));
}

DataError::DataError(std::size_t line, std::string field, const std::string& what)
    : std::runtime_error("line " + std::to_string(line) + ", field \"" + field + "\": " + what),
      line_(line),
      field_(std::move(field)) {}

std::vector<std::string> split_words(std::string_view text) {
  std::vector<std::string> words;
  std::size_t i = 0;
  auto is_space = [](char c) {
    return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f';
  };
  while (i < text.size()) {
    while (i < text.size() && is_space(text[i])) ++i;
    std::size_t j = i;
    while (j < text.size() && !is_space(text[j])) ++j;
    if (j > i) words.emplace_back(text.substr(i, j - i));
    i = j;
  }
  return words;
}

std::string join_words(std::span<const std::string> words) {
  std::string out;
  for (std::size_t i = 0; i < words.size(); ++i) {
    if (i) out += ' ';
    out += words[i];
  }
  return out;
}

void validate_example(const QAExample& example) {
  if (example.context.empty()) {
    throw std::invalid_argument("example " + example.id + ": empty context");
  }
  const int n = static_cast<int>(example.context.size());
  for (const auto& m : example.answers) {
    if (m.start < 0 || m.end < m.start || m.end >= n) {
      throw std::invalid_argument("example " + example.id + ": mention [" +
                                  std::to_string(m.start) + "," + std::to_string(m.end) +
                                  "] outside context of " + std::to_string(n) + " words");
    }
    if (m.text.empty()) throw std::invalid_argument("example " + example.id + ": empty mention text");
    auto slice = std::span<const std::string>(example.context).subspan(
        static_cast<std::size_t>(m.start), static_cast<std::size_t>(m.end - m.start + 1));
    if (join_words(slice) != m.text) {
      throw std::invalid_argument("example " + example.id + ": mention text \"" + m.text +
                                  "\" does not match its words");
    }
  }
}

void validate_dataset(const Dataset& dataset) {
  std::unordered_set<std::string> seen;
  seen.reserve(dataset.examples.size());
  for (const auto& ex : dataset.examples) {
    validate_example(ex);
    if (!seen.insert(ex.id).second) throw std::invalid_argument("duplicate example id " + ex.id);
  }
}

namespace {

// Keeps the first `length` words; returns false when the example must be
// removed from an evaluation split.
bool truncate_example(QAExample& ex, int length, Split split) {
  if (static_cast<int>(ex.context.size()) > length) {
    ex.context.resize(static_cast<std::size_t>(length));
  }
  std::erase_if(ex.answers, [length](const AnswerMention& m) { return m.end >= length; });
  return split == Split::train || !ex.answers.empty();
}

}  // namespace

Dataset truncate_fixed(const Dataset& dataset, int length) {
  if (length < 1) throw std::invalid_argument("truncate_fixed: length must be >= 1");
  Dataset out{dataset.split, {}};
  out.examples.reserve(dataset.examples.size());
  for (const auto& src : dataset.examples) {
    QAExample ex = src;
    if (truncate_example(ex, length, dataset.split)) out.examples.push_back(std::move(ex));
  }
  return out;
}

Dataset truncate_range(const Dataset& dataset, int min_length, int max_length,
                       std::uint64_t seed) {
  if (min_length < 1 || max_length < min_length) {
    throw std::invalid_argument("truncate_range: need 1 <= L1 <= L2");
  }
  Dataset out{dataset.split, {}};
  out.examples.reserve(dataset.examples.size());
  for (const auto& src : dataset.examples) {
    Rng rng = make_stream(seed, {stream_tag::kTruncate, hash_bytes(src.id)});
    const int length = static_cast<int>(uniform_int(rng, min_length, max_length));
    QAExample ex = src;
    if (truncate_example(ex, length, dataset.split)) out.examples.push_back(std::move(ex));
  }
  return out;
}

Dataset reannotate_answers(const Dataset& dataset, std::uint64_t seed) {
  Dataset out = dataset;
  for (auto& ex : out.examples) {
    if (ex.answers.empty()) {
      throw std::invalid_argument("example " + ex.id + ": no mention to select");
    }
    Rng rng = make_stream(seed, {stream_tag::kReannotate, hash_bytes(ex.id)});
    const auto pick = uniform_int(rng, 0, static_cast<std::int64_t>(ex.answers.size()) - 1);
    AnswerMention chosen = ex.answers[static_cast<std::size_t>(pick)];
    ex.answers = {std::move(chosen)};
  }
  return out;
}

Dataset subsample(const Dataset& dataset, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction <= 1.0)) {
    throw std::invalid_argument("subsample: fraction must be in (0, 1]");
  }
  const auto total = dataset.examples.size();
  const auto keep = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(total)));
  if (keep == 0) throw std::invalid_argument("subsample: fraction yields zero instances");
  std::vector<std::size_t> order(total);
  for (std::size_t i = 0; i < total; ++i) order[i] = i;
  Rng rng = make_stream(seed, {stream_tag::kSubsample, total});
  shuffle(std::span<std::size_t>(order), rng);
  order.resize(keep);
  std::sort(order.begin(), order.end());
  Dataset out{dataset.split, {}};
  out.examples.reserve(keep);
  for (auto i : order) out.examples.push_back(dataset.examples[i]);
  return out;
}

// -- synthetic ---------------------------------------------------------------

LengthLaw LengthLaw::parse(std::string_view text) {
  auto parse_int = [&](std::string_view s) {
    int v = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size()) {
      throw std::invalid_argument("bad length law: " + std::string(text));
    }
    return v;
  };
  if (text.starts_with("fixed:")) return fixed(parse_int(text.substr(6)));
  if (text.starts_with("range:")) {
    auto rest = text.substr(6);
    auto colon = rest.find(':');
    if (colon == std::string_view::npos) throw std::invalid_argument("bad length law: " + std::string(text));
    return range(parse_int(rest.substr(0, colon)), parse_int(rest.substr(colon + 1)));
  }
  throw std::invalid_argument("bad length law (want fixed:L or range:L1:L2): " + std::string(text));
}

std::string LengthLaw::to_string() const {
  if (is_fixed()) return "fixed:" + std::to_string(min_words);
  return "range:" + std::to_string(min_words) + ":" + std::to_string(max_words);
}

std::string_view to_string(AnswerLaw law) {
  switch (law) {
    case AnswerLaw::uniform: return "uniform";
    case AnswerLaw::front: return "front";
    case AnswerLaw::rear: return "rear";
  }
  return "uniform";
}

AnswerLaw parse_answer_law(std::string_view text) {
  if (text == "uniform") return AnswerLaw::uniform;
  if (text == "front") return AnswerLaw::front;
  if (text == "rear") return AnswerLaw::rear;
  throw std::invalid_argument("unknown answer law: " + std::string(text));
}

std::pair<int, int> answer_start_range(AnswerLaw law, int context_words) {
  // The key sits at start-1 and the answer occupies start..start+1.
  const int lo = 1;
  const int hi = context_words - kSyntheticAnswerWords;
  const int half = context_words / 2;
  switch (law) {
    case AnswerLaw::uniform: return {lo, hi};
    case AnswerLaw::front: return {lo, std::max(lo, std::min(hi, half - 1))};
    case AnswerLaw::rear: return {std::min(hi, std::max(lo, half)), hi};
  }
  return {lo, hi};
}

Dataset generate_synthetic(const SyntheticSpec& spec) {
  if (spec.vocab_size < 4) {
    throw std::invalid_argument("generate_synthetic: vocab size " + std::to_string(spec.vocab_size) +
                                " too small to keep the key word unique (need >= 4)");
  }
  if (spec.count < 1) throw std::invalid_argument("generate_synthetic: count must be >= 1");
  if (spec.length.min_words > spec.length.max_words) {
    throw std::invalid_argument("generate_synthetic: L1 > L2");
  }
  if (spec.length.min_words < kSyntheticAnswerWords + 1) {
    throw std::invalid_argument("generate_synthetic: contexts need at least 3 words");
  }
  if (!(spec.distractor_rate >= 0.0 && spec.distractor_rate <= 1.0)) {
    throw std::invalid_argument("generate_synthetic: distractor rate must be in [0, 1]");
  }
  const int keys = spec.vocab_size / 2;
  const int fillers = spec.vocab_size - keys;
  auto key_word = [](int i) { return "k" + std::to_string(i); };
  auto filler_word = [](int i) { return "w" + std::to_string(i); };

  Dataset out{spec.split, {}};
  out.examples.reserve(static_cast<std::size_t>(spec.count));
  const std::string prefix = "syn-" + std::string(to_string(spec.split)) + "-";
  for (int i = 0; i < spec.count; ++i) {
    QAExample ex;
    ex.id = prefix + std::to_string(i);
    Rng rng = make_stream(spec.seed, {stream_tag::kSynthetic, hash_bytes(ex.id)});
    const int n = static_cast<int>(uniform_int(rng, spec.length.min_words, spec.length.max_words));
    const int key = static_cast<int>(uniform_int(rng, 0, keys - 1));
    auto [lo, hi] = answer_start_range(spec.answer_law, n);
    const int start = static_cast<int>(uniform_int(rng, lo, hi));

    auto distractor = [&]() {
      if (spec.distractor_rate > 0.0 && uniform_unit(rng) < spec.distractor_rate) {
        int other = static_cast<int>(uniform_int(rng, 0, keys - 2));
        if (other >= key) ++other;
        return key_word(other);
      }
      return filler_word(static_cast<int>(uniform_int(rng, 0, fillers - 1)));
    };
    ex.context.reserve(static_cast<std::size_t>(n));
    for (int p = 0; p < n; ++p) {
      ex.context.push_back(p == start - 1 ? key_word(key) : distractor());
    }
    ex.question = {"what", "follows", key_word(key)};
    const int end = start + kSyntheticAnswerWords - 1;
    ex.answers.push_back(
        {start, end, ex.context[static_cast<std::size_t>(start)] + " " +
                         ex.context[static_cast<std::size_t>(end)]});
    out.examples.push_back(std::move(ex));
  }
  return out;
}

// -- interchange format ------------------------------------------------------

namespace {

const json& require(const json& record, const char* field, std::size_t line) {
  auto it = record.find(field);
  if (it == record.end()) throw DataError(line, field, "missing field");
  return *it;
}

QAExample parse_record(const json& record, std::size_t line) {
  if (!record.is_object()) throw DataError(line, "<record>", "expected a JSON object");
  QAExample ex;
  const auto& id = require(record, "id", line);
  if (!id.is_string()) throw DataError(line, "id", "expected a string");
  ex.id = id.get<std::string>();
  const auto& question = require(record, "question", line);
  if (!question.is_string()) throw DataError(line, "question", "expected a string");
  ex.question = split_words(question.get_ref<const std::string&>());
  const auto& context = require(record, "context", line);
  if (!context.is_string()) throw DataError(line, "context", "expected a string");
  ex.context = split_words(context.get_ref<const std::string&>());
  if (ex.context.empty()) throw DataError(line, "context", "context has no words");
  const auto& answers = require(record, "answers", line);
  if (!answers.is_array()) throw DataError(line, "answers", "expected an array");
  const int n = static_cast<int>(ex.context.size());
  for (std::size_t a = 0; a < answers.size(); ++a) {
    const auto& ans = answers[a];
    const std::string where = "answers[" + std::to_string(a) + "]";
    if (!ans.is_object()) throw DataError(line, where, "expected an object");
    auto text_it = ans.find("text");
    auto start_it = ans.find("word_start");
    auto end_it = ans.find("word_end");
    if (text_it == ans.end() || !text_it->is_string()) {
      throw DataError(line, where + ".text", "missing or not a string");
    }
    if (start_it == ans.end() || !start_it->is_number_integer()) {
      throw DataError(line, where + ".word_start", "missing or not an integer");
    }
    if (end_it == ans.end() || !end_it->is_number_integer()) {
      throw DataError(line, where + ".word_end", "missing or not an integer");
    }
    AnswerMention m{start_it->get<int>(), end_it->get<int>(), text_it->get<std::string>()};
    if (m.start < 0 || m.end < m.start || m.end >= n) {
      throw DataError(line, where, "word span out of range");
    }
    auto slice = std::span<const std::string>(ex.context)
                     .subspan(static_cast<std::size_t>(m.start),
                              static_cast<std::size_t>(m.end - m.start + 1));
    if (join_words(slice) != m.text) {
      throw DataError(line, where + ".text", "text does not match context words");
    }
    ex.answers.push_back(std::move(m));
  }
  return ex;
}

}  // namespace

Dataset parse_dataset(std::string_view jsonl, Split default_split) {
  Dataset out{default_split, {}};
  bool split_seen = false;
  std::unordered_set<std::string> ids;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < jsonl.size()) {
    auto end = jsonl.find('\n', pos);
    if (end == std::string_view::npos) end = jsonl.size();
    auto line = jsonl.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
    json record;
    try {
      record = json::parse(line);
    } catch (const json::parse_error& e) {
      throw DataError(line_no, "<record>", std::string("invalid JSON: ") + e.what());
    }
    QAExample ex = parse_record(record, line_no);
    if (auto it = record.find("split"); it != record.end()) {
      if (!it->is_string()) throw DataError(line_no, "split", "expected a string");
      Split s;
      try {
        s = parse_split(it->get_ref<const std::string&>());
      } catch (const std::invalid_argument& e) {
        throw DataError(line_no, "split", e.what());
      }
      if (split_seen && s != out.split) throw DataError(line_no, "split", "mixed splits in one file");
      out.split = s;
      split_seen = true;
    }
    if (!ids.insert(ex.id).second) throw DataError(line_no, "id", "duplicate id " + ex.id);
    out.examples.push_back(std::move(ex));
  }
  return out;
}

Dataset load_dataset(const std::filesystem::path& path, Split default_split) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open dataset " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_dataset(ss.str(), default_split);
}

std::string format_dataset(const Dataset& dataset) {
  std::string out;
  for (const auto& ex : dataset.examples) {
    // ordered_json keeps the documented field order in the file.
    nlohmann::ordered_json answers = nlohmann::ordered_json::array();
    for (const auto& m : ex.answers) {
      nlohmann::ordered_json a;
      a["text"] = m.text;
      a["word_start"] = m.start;
      a["word_end"] = m.end;
      answers.push_back(std::move(a));
    }
    nlohmann::ordered_json record;
    record["id"] = ex.id;
    record["question"] = join_words(ex.question);
    record["context"] = join_words(ex.context);
    record["answers"] = answers;
    record["split"] = to_string(dataset.split);
    out += record.dump();
    out += '\n';
  }
  return out;
}

void save_dataset(const Dataset& dataset, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write dataset " + path.string());
  out << format_dataset(dataset);
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

}  // namespace randpad
