// Copyright 2026 The randpad Authors
// SPDX-License-Identifier: Apache-2.0
//
// Random Padding: at fine-tuning time, move k trailing [PAD] tokens to sit
// between [CLS] and the question, so non-pad tokens (and their position
// embeddings) slide toward the rear of the sequence:
//
//   [CLS] {k [PAD]} question [SEP] context [SEP] {n-m-k [PAD]}
//
// [CLS] stays at index 0 and the moved PADs stay attention-masked. The
// inference path never shifts.

#pragma once

#include <cstdint>
#include <string_view>

#include "randpad/encoding.h"
#include "randpad/rng.h"

namespace randpad {

enum class ShiftMode { off, full, capped };

std::string_view to_string(ShiftMode mode);
ShiftMode parse_shift_mode(std::string_view text);

struct ShiftPolicy {
  ShiftMode mode = ShiftMode::off;
  int cap = 0;  // K, capped mode only
  std::uint64_t seed = 0;
  /// true: fresh k every epoch. false: one k per window for the whole run.
  bool resample_each_epoch = true;

  /// Human-readable name: "off", "full", "capped:64".
  std::string name() const;
  /// Inverse of name().
  static ShiftPolicy parse(std::string_view text, std::uint64_t seed = 0);
};

struct PaddingLayout {
  int k = 0;  // shifted PAD count
  int m = 0;  // non-pad tokens
  int n = 0;  // capacity
};

/// off: 0. full: uniform on [0, n-m]. capped: uniform on [0, min(K, n-m)].
int sample_shift(int m, int n, const ShiftPolicy& policy, Rng& rng);

/// Stream for one window's draw, keyed by (policy seed, example id, window
/// index, epoch); epoch is ignored when the policy does not resample.
Rng shift_stream(const ShiftPolicy& policy, const EncodedWindow& window, int epoch);

/// Draws k for `window` in `epoch`.
PaddingLayout plan_shift(const EncodedWindow& window, const ShiftPolicy& policy, int epoch);

/// Moves k trailing PADs to just after [CLS]. Gold spans move by k; the
/// inserted PADs carry Mask::ignore. Throws std::out_of_range unless
/// 0 <= k <= trailing PAD count.
EncodedWindow apply_shift(const EncodedWindow& window, int k);

/// The inference input: the window itself.
inline const EncodedWindow& inference_view(const EncodedWindow& window) { return window; }

}  // namespace randpad
