// Copyright 2026 The randpad Authors
// SPDX-License-Identifier: Apache-2.0
//
// Independent reference implementations and random generators shared by the
// unit tests and the acceptance binary. Nothing here calls the code it
// checks, except to build inputs.

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "randpad/corpus.h"
#include "randpad/encoding.h"
#include "randpad/evaluation.h"
#include "randpad/model.h"
#include "randpad/rng.h"

namespace randpad::testing {

// -- metrics -------------------------------------------------------------------

/// Lowercase ASCII, drop ASCII punctuation, split on whitespace.
std::vector<std::string> oracle_tokens(const std::string& text);

/// Bag-of-words overlap F1 (percent), maximum over golds.
double oracle_f1(const std::string& prediction, const std::vector<std::string>& golds);
double oracle_em(const std::string& prediction, const std::vector<std::string>& golds);

/// Random short phrase over a small word list with random case, punctuation
/// and spacing, so that overlaps and normalization edge cases are common.
std::string random_phrase(Rng& rng);

// -- decoding ------------------------------------------------------------------

/// Exhaustive search over every admissible (s, e); ties resolve to the
/// smallest s, then the smallest e. Indices are window indices.
SpanChoice oracle_decode(const SpanLogits& logits, int max_answer_tokens);

/// Logits over `context_tokens` entries drawn from a small integer grid so
/// that equal scores are frequent.
SpanLogits random_logits(Rng& rng, int context_tokens, int context_begin, bool coarse);

// -- windows and segments ------------------------------------------------------

/// A well-formed unshifted window: [CLS] q [SEP] c [SEP] PAD..., ids drawn
/// from [kReservedTokens, vocab), one random gold span in the context.
EncodedWindow random_window(Rng& rng, int capacity, int vocab, int max_question, int max_context);

/// Unshifted token positions of every mention, recomputed from the window
/// geometry (budget n - M_q - 3, stride min(n/2, budget)); -1 when no window
/// holds the mention.
std::vector<int> oracle_mention_positions(const QAExample& example, int capacity);

/// Random example with 1-3 mentions whose context may exceed one window.
QAExample random_example(Rng& rng, int index, int max_context_words);

// -- gradients -----------------------------------------------------------------

struct FdReport {
  std::int64_t entries = 0;   // (parameter entry, window) pairs compared
  std::int64_t failures = 0;
  double worst_relative = 0.0;  // over pairs with absolute error above abs_tol
  std::string first_failure;
};

/// Compares backward() against central differences of the loss for every
/// parameter entry and every window.
FdReport finite_difference_check(const ModelParams& params, std::span<const EncodedWindow> windows, double step,
                                 double rel_tol, double abs_tol);

}  // namespace randpad::testing
