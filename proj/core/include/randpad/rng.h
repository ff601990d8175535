// Copyright 2026 The randpad Authors
// SPDX-License-Identifier: Apache-2.0
//
// Keyed random streams. Every stochastic step in the library draws from a
// stream derived from (seed, key...) so results never depend on iteration
// order. Bounded draws and shuffles are implemented here rather than through
// <random> distributions, whose output is implementation-defined.

#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <span>
#include <string_view>
#include <utility>

namespace randpad {

using Rng = std::mt19937_64;

/// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// 64-bit FNV-1a.
std::uint64_t hash_bytes(std::string_view bytes);

/// Seeds an engine from a base seed and an ordered list of keys.
Rng make_stream(std::uint64_t seed, std::initializer_list<std::uint64_t> keys);

/// Uniform integer in [lo, hi], unbiased (rejection sampling).
std::int64_t uniform_int(Rng& rng, std::int64_t lo, std::int64_t hi);

/// Uniform double in [0, 1) with 53 random bits.
double uniform_unit(Rng& rng);

/// Standard normal via Box-Muller.
double standard_normal(Rng& rng);

/// Fisher-Yates.
template <typename T>
void shuffle(std::span<T> items, Rng& rng) {
  for (std::size_t i = items.size(); i > 1; --i) {
    auto j = static_cast<std::size_t>(uniform_int(rng, 0, static_cast<std::int64_t>(i) - 1));
    using std::swap;
    swap(items[i - 1], items[j]);
  }
}

// Stream purpose tags keep unrelated draws on the same (seed, id) apart.
namespace stream_tag {
inline constexpr std::uint64_t kTruncate = 0x7472756e63ULL;
inline constexpr std::uint64_t kReannotate = 0x7265616e6eULL;
inline constexpr std::uint64_t kSynthetic = 0x73796e7468ULL;
inline constexpr std::uint64_t kShift = 0x7368696674ULL;
inline constexpr std::uint64_t kShuffle = 0x73687566ULL;
inline constexpr std::uint64_t kInit = 0x696e6974ULL;
inline constexpr std::uint64_t kSubsample = 0x73756273ULL;
}  // namespace stream_tag

}  // namespace randpad
