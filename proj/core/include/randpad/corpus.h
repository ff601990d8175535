// Copyright 2026 The randpad Authors
// SPDX-License-Identifier: Apache-2.0
//
// Question/context datasets at word granularity: the interchange file format,
// truncation into fixed-length and range-length families, answer
// re-annotation, and a synthetic task generator.
//
// A "word" is a whitespace-delimited token. Contexts are stored as word
// vectors; answer mentions index into them with inclusive bounds.

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace randpad {

enum class Split { train, val, test };

std::string_view to_string(Split split);
Split parse_split(std::string_view text);

struct AnswerMention {
  int start = 0;  // first word, inclusive
  int end = 0;    // last word, inclusive
  std::string text;

  friend bool operator==(const AnswerMention&, const AnswerMention&) = default;
};

struct QAExample {
  std::string id;
  std::vector<std::string> question;
  std::vector<std::string> context;
  std::vector<AnswerMention> answers;

  friend bool operator==(const QAExample&, const QAExample&) = default;
};

struct Dataset {
  Split split = Split::train;
  std::vector<QAExample> examples;

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

/// Raised for malformed dataset records; carries the 1-based line number and
/// the offending field.
class DataError : public std::runtime_error {
 public:
  DataError(std::size_t line, std::string field, const std::string& what);
  std::size_t line() const { return line_; }
  const std::string& field() const { return field_; }

 private:
  std::size_t line_;
  std::string field_;
};

std::vector<std::string> split_words(std::string_view text);
std::string join_words(std::span<const std::string> words);

/// Throws std::invalid_argument when an example breaks a record invariant
/// (empty context, mention out of range, text not matching its word slice).
void validate_example(const QAExample& example);
/// Also checks id uniqueness.
void validate_dataset(const Dataset& dataset);

// -- truncation families ----------------------------------------------------

/// Cuts every context to its first `length` words. Mentions that end at or
/// beyond the cut are dropped. Train examples left without mentions are
/// kept; val/test examples without mentions are removed.
Dataset truncate_fixed(const Dataset& dataset, int length);

/// Per example, draws a length uniformly from [min_length, max_length] using a
/// stream keyed by (seed, example id), then truncates as truncate_fixed.
Dataset truncate_range(const Dataset& dataset, int min_length, int max_length,
                       std::uint64_t seed);

/// Keeps one mention per example, chosen uniformly with a stream keyed by
/// (seed, example id). Throws std::invalid_argument("... no mention to select")
/// for an example without mentions.
Dataset reannotate_answers(const Dataset& dataset, std::uint64_t seed);

/// Deterministic subset of round(fraction * size) examples (at least one),
/// original order preserved.
Dataset subsample(const Dataset& dataset, double fraction, std::uint64_t seed);

// -- synthetic task ----------------------------------------------------------

struct LengthLaw {
  int min_words = 100;
  int max_words = 100;

  static LengthLaw fixed(int words) { return {words, words}; }
  static LengthLaw range(int lo, int hi) { return {lo, hi}; }
  /// "fixed:L" or "range:L1:L2".
  static LengthLaw parse(std::string_view text);
  std::string to_string() const;
  bool is_fixed() const { return min_words == max_words; }

  friend bool operator==(const LengthLaw&, const LengthLaw&) = default;
};

enum class AnswerLaw { uniform, front, rear };

std::string_view to_string(AnswerLaw law);
AnswerLaw parse_answer_law(std::string_view text);

/// Question "what follows <key>"; the context holds <key> exactly once and
/// the two words after it form the answer. Every other context word is a
/// distractor: with probability `distractor_rate` another key word, otherwise
/// a filler word.
struct SyntheticSpec {
  int vocab_size = 64;  // content words; half keys, half fillers
  LengthLaw length = LengthLaw::fixed(100);
  AnswerLaw answer_law = AnswerLaw::uniform;
  double distractor_rate = 0.0;
  int count = 1;
  std::uint64_t seed = 0;
  Split split = Split::train;
};

inline constexpr int kSyntheticAnswerWords = 2;

/// Inclusive range of admissible answer start words for a context length.
std::pair<int, int> answer_start_range(AnswerLaw law, int context_words);

Dataset generate_synthetic(const SyntheticSpec& spec);

// -- interchange format ------------------------------------------------------
//
// One JSON document per line:
//   {"id": "...", "question": "...", "context": "...",
//    "answers": [{"text": "...", "word_start": 3, "word_end": 4}],
//    "split": "train"}
// "split" is optional on read; records without it take `default_split`.

Dataset load_dataset(const std::filesystem::path& path, Split default_split = Split::train);
Dataset parse_dataset(std::string_view jsonl, Split default_split = Split::train);
void save_dataset(const Dataset& dataset, const std::filesystem::path& path);
std::string format_dataset(const Dataset& dataset);

}  // namespace randpad
