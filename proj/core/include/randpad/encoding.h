// Copyright 2026 The randpad Authors
// SPDX-License-Identifier: Apache-2.0
//
// Word-level vocabulary and the fixed-capacity input layout
//
//   [CLS] question [SEP] context [SEP] [PAD] ... [PAD]
//
// with sliding windows over long contexts. One token per word.

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "randpad/corpus.h"

namespace randpad {

inline constexpr int kClsId = 0;
inline constexpr int kSepId = 1;
inline constexpr int kPadId = 2;
inline constexpr int kUnkId = 3;
inline constexpr int kReservedTokens = 4;

class Vocab {
 public:
  /// Reserved tokens only.
  Vocab();
  /// `words` are the non-reserved entries, assigned ids 4, 5, ...
  explicit Vocab(std::vector<std::string> words);

  int id(std::string_view word) const;
  const std::string& word(int id) const;
  int size() const { return static_cast<int>(words_.size()); }
  bool contains(std::string_view word) const { return index_.contains(std::string(word)); }

  /// One non-reserved word per line; line i (0-based) holds id i + 4.
  static Vocab load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  friend bool operator==(const Vocab& a, const Vocab& b) { return a.words_ == b.words_; }

 private:
  std::vector<std::string> words_;  // includes reserved names at 0..3
  std::unordered_map<std::string, int> index_;
};

/// Keeps the `max_size - 4` most frequent question/context words; ties go to
/// the lexicographically smaller word.
Vocab build_vocab(const Dataset& dataset, std::size_t max_size);

enum class Mask : std::uint8_t { ignore = 0, attend = 1 };

struct TokenSpan {
  int start = 0;  // inclusive
  int end = 0;    // inclusive

  friend bool operator==(const TokenSpan&, const TokenSpan&) = default;
};

/// A fixed-length model input. `shift` counts PADs placed between [CLS] and
/// the question (zero unless the training-time padding shift was applied);
/// all token coordinates, including `gold`, are indices into `ids`.
struct EncodedWindow {
  std::string example_id;
  int window_index = 0;
  std::vector<int> ids;
  std::vector<Mask> mask;
  int question_tokens = 0;  // M_q
  int context_tokens = 0;   // M_c
  int window_offset = 0;    // word index of the first context word
  int shift = 0;
  std::vector<TokenSpan> gold;

  int capacity() const { return static_cast<int>(ids.size()); }
  /// m = M_q + M_c + 3.
  int non_pad() const { return question_tokens + context_tokens + 3; }
  int context_begin() const { return shift + question_tokens + 2; }
  /// One past the last context token (the final [SEP]).
  int context_end() const { return context_begin() + context_tokens; }
  int trailing_pads() const { return capacity() - non_pad() - shift; }

  friend bool operator==(const EncodedWindow&, const EncodedWindow&) = default;
};

/// Throws std::logic_error when the layout invariants do not hold.
void check_window(const EncodedWindow& window);

struct WindowingPolicy {
  int capacity = 128;
  int stride = 64;

  static WindowingPolicy with_capacity(int capacity) { return {capacity, capacity / 2}; }
};

/// Splits the context into windows of at most n - M_q - 3 context tokens,
/// advancing by the stride (clamped to that budget) until the context end is
/// covered. Every mention lands in each window that fully contains it.
/// Throws std::invalid_argument when the question leaves no room for context.
std::vector<EncodedWindow> encode_example(const QAExample& example, const Vocab& vocab,
                                          const WindowingPolicy& policy);

/// Concatenation of encode_example over a dataset, in example order.
std::vector<EncodedWindow> encode_dataset(const Dataset& dataset, const Vocab& vocab,
                                          const WindowingPolicy& policy);

/// Token span of a word-level mention inside the window, or nullopt when the
/// window does not contain all of it.
std::optional<TokenSpan> map_answer_span(const EncodedWindow& window, const AnswerMention& mention);

/// Space-joined vocabulary words at token positions [span.start, span.end].
std::string decode_tokens(const EncodedWindow& window, const Vocab& vocab, TokenSpan span);

}  // namespace randpad
