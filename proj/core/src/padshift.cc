// Copyright 2026 The randpad Authors
// SPDX-License-Identifier: Apache-2.0

#include "randpad/padshift.h"

#include <algorithm>
#include <charconv>
#include <stdexcept>
#include <string>

namespace randpad {

std::string_view to_string(ShiftMode mode) {
  switch (mode) {
    case ShiftMode::off: return "off";
    case ShiftMode::full: return "full";
    case ShiftMode::capped: return "capped";
  }
  return "off";
}

ShiftMode parse_shift_mode(std::string_view text) {
  if (text == "off" || text == "none") return ShiftMode::off;
  if (text == "full") return ShiftMode::full;
  if (text == "capped") return ShiftMode::capped;
  throw std::invalid_argument("unknown padshift mode: " + std::string(text));
}

std::string ShiftPolicy::name() const {
  if (mode == ShiftMode::capped) return "capped:" + std::to_string(cap);
  return std::string(to_string(mode));
}

ShiftPolicy ShiftPolicy::parse(std::string_view text, std::uint64_t seed) {
  ShiftPolicy p;
  p.seed = seed;
  if (text.starts_with("capped:")) {
    auto num = text.substr(7);
    int cap = 0;
    auto [ptr, ec] = std::from_chars(num.data(), num.data() + num.size(), cap);
    if (ec != std::errc() || ptr != num.data() + num.size() || cap < 0) {
      throw std::invalid_argument("bad capped policy: " + std::string(text));
    }
    p.mode = ShiftMode::capped;
    p.cap = cap;
    return p;
  }
  p.mode = parse_shift_mode(text);
  return p;
}

int sample_shift(int m, int n, const ShiftPolicy& policy, Rng& rng) {
  if (m > n) throw std::invalid_argument("sample_shift: m exceeds n");
  const int budget = n - m;
  switch (policy.mode) {
    case ShiftMode::off: return 0;
    case ShiftMode::full: return static_cast<int>(uniform_int(rng, 0, budget));
    case ShiftMode::capped: {
      if (policy.cap < 0) throw std::invalid_argument("sample_shift: negative cap");
      return static_cast<int>(uniform_int(rng, 0, std::min(policy.cap, budget)));
    }
  }
  return 0;
}

Rng shift_stream(const ShiftPolicy& policy, const EncodedWindow& window, int epoch) {
  const auto epoch_key = policy.resample_each_epoch ? static_cast<std::uint64_t>(epoch) : 0ULL;
  return make_stream(policy.seed, {stream_tag::kShift, hash_bytes(window.example_id),
                                   static_cast<std::uint64_t>(window.window_index), epoch_key});
}

PaddingLayout plan_shift(const EncodedWindow& window, const ShiftPolicy& policy, int epoch) {
  const int m = window.non_pad();
  const int n = window.capacity() - window.shift;
  Rng rng = shift_stream(policy, window, epoch);
  return {sample_shift(m, n, policy, rng), m, n};
}

EncodedWindow apply_shift(const EncodedWindow& window, int k) {
  if (k < 0 || k > window.trailing_pads()) {
    throw std::out_of_range("apply_shift: k=" + std::to_string(k) + " outside [0, " +
                            std::to_string(window.trailing_pads()) + "]");
  }
  if (k == 0) return window;
  EncodedWindow out = window;
  const auto kk = static_cast<std::size_t>(k);
  // Everything after [CLS] moves right by k; the last k slots were PADs.
  std::copy_backward(window.ids.begin() + 1, window.ids.end() - k, out.ids.end());
  std::copy_backward(window.mask.begin() + 1, window.mask.end() - k, out.mask.end());
  std::fill_n(out.ids.begin() + 1, kk, kPadId);
  std::fill_n(out.mask.begin() + 1, kk, Mask::ignore);
  out.shift = window.shift + k;
  for (auto& g : out.gold) {
    g.start += k;
    g.end += k;
  }
  return out;
}

}  // namespace randpad
