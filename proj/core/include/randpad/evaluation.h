// Copyright 2026 The randpad Authors
// SPDX-License-Identifier: Apache-2.0
//
// Span decoding, SQuAD-style F1/EM, answer-position buckets, segment division
// and the baseline-vs-improved categorizer.

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "randpad/corpus.h"
#include "randpad/encoding.h"
#include "randpad/model.h"

namespace randpad {

inline constexpr int kDefaultMaxAnswerTokens = 30;

struct SpanChoice {
  int start = 0;  // window indices
  int end = 0;
  double score = 0.0;
};

/// Best S.T_s + E.T_e over context spans with e - s + 1 <= max_answer_tokens.
/// Ties go to the smaller start, then the smaller end.
SpanChoice decode_span(const SpanLogits& logits, int max_answer_tokens = kDefaultMaxAnswerTokens);

struct Prediction {
  std::string example_id;
  std::string text;
  int start = 0;  // P_s, token index within its window
  int end = 0;
  int window_index = 0;
  int window_offset = 0;
  double score = 0.0;
};

/// A dataset with its encoded windows; `window_ranges[i]` is the half-open
/// range of `windows` belonging to example i.
struct EvalSet {
  Dataset data;
  std::vector<EncodedWindow> windows;
  std::vector<std::pair<std::size_t, std::size_t>> window_ranges;

  static EvalSet build(Dataset data, const Vocab& vocab, const WindowingPolicy& policy);
  std::span<const EncodedWindow> windows_of(std::size_t example) const;
};

/// Decodes each window (through inference_view unless told otherwise) and
/// keeps the highest-scoring span; ties go to the earliest window.
Prediction predict_example(const ModelParams& params, const QAExample& example,
                           std::span<const EncodedWindow> windows,
                           int max_answer_tokens = kDefaultMaxAnswerTokens,
                           bool use_inference_view = true);

std::vector<Prediction> predict(const ModelParams& params, const EvalSet& set,
                                int max_answer_tokens = kDefaultMaxAnswerTokens,
                                bool use_inference_view = true);

// -- metrics -----------------------------------------------------------------

/// Lowercase, punctuation removed, whitespace collapsed.
std::string normalize_answer(std::string_view text);
std::vector<std::string> normalized_tokens(std::string_view text);

/// Bag-of-words F1 in percent, maximized over the golds.
double squad_f1(std::string_view prediction, std::span<const std::string> golds);
/// 100 when the normalized prediction equals some normalized gold, else 0.
double exact_match(std::string_view prediction, std::span<const std::string> golds);

std::vector<std::string> gold_texts(const QAExample& example);

// -- positions, buckets, segments ---------------------------------------------

/// Start token of each mention in the first window that fully contains it.
/// Throws std::runtime_error naming the example when a mention fits no window.
std::vector<int> mention_token_positions(const QAExample& example,
                                         std::span<const EncodedWindow> windows);

struct InstanceScore {
  std::string id;
  double f1 = 0.0;
  double em = 0.0;
  int predicted_start = 0;
  int gold_start = -1;  // earliest mention start token, -1 without mentions
};

enum class BucketBy { predicted, gold };

struct BucketRow {
  int lo = 0;  // inclusive
  int hi = 0;  // exclusive
  std::size_t count = 0;
  double mean_f1 = 0.0;
  double mean_em = 0.0;
};

/// Groups instances into [i*width, (i+1)*width) by start position. Empty
/// buckets are omitted.
std::vector<BucketRow> bucket_by_position(std::span<const InstanceScore> instances, int width,
                                          int capacity, BucketBy by = BucketBy::predicted);

struct SegmentPair {
  int demarcation = 0;  // X
  std::vector<std::string> first;   // some mention starts at a token <= X
  std::vector<std::string> second;  // all mentions start after X
};

SegmentPair split_segments(const EvalSet& set, int demarcation);

struct SegmentRow {
  int demarcation = 0;
  std::size_t first_count = 0;
  double first_f1 = 0.0;
  std::size_t second_count = 0;
  double second_f1 = 0.0;
};

// -- reports -----------------------------------------------------------------

struct EvalOptions {
  int max_answer_tokens = kDefaultMaxAnswerTokens;
  int bucket_width = 32;
  BucketBy bucket_by = BucketBy::predicted;
  std::vector<int> demarcations;
};

struct EvalReport {
  double f1 = 0.0;
  double em = 0.0;
  std::vector<BucketRow> buckets;
  std::vector<SegmentRow> segments;
  std::vector<InstanceScore> instances;
  std::vector<Prediction> predictions;
};

/// Scores predictions given in example order.
EvalReport score_predictions(const EvalSet& set, std::span<const Prediction> predictions,
                             const EvalOptions& options);
EvalReport evaluate(const ModelParams& params, const EvalSet& set, const EvalOptions& options);

/// Mean F1 over the instances whose ids are listed (0 when none).
double mean_f1(std::span<const InstanceScore> instances, std::span<const std::string> ids);

// -- improvement categories --------------------------------------------------

enum class Improvement { correction, boundary, not_improved };

std::string_view to_string(Improvement category);

/// not_improved unless the improved prediction scores a higher F1; then
/// correction when the two predictions share no normalized word, boundary
/// otherwise.
Improvement categorize_improvement(std::string_view baseline, std::string_view improved,
                                   std::span<const std::string> golds);

// -- files -------------------------------------------------------------------

/// JSON lines {"id", "text", "P_s", "score"}.
void save_predictions(std::span<const Prediction> predictions, const std::filesystem::path& path);
std::vector<Prediction> load_predictions(const std::filesystem::path& path);

}  // namespace randpad
