// Copyright 2026 The randpad Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <map>

#include "oracles.h"
#include "randpad/padshift.h"

using namespace randpad;

TEST_CASE("policy names round-trip") {
  for (const char* text : {"off", "full", "capped:0", "capped:64"}) {
    CHECK(ShiftPolicy::parse(text).name() == text);
  }
  CHECK_THROWS_AS(ShiftPolicy::parse("capped:-1"), std::invalid_argument);
  CHECK_THROWS_AS(ShiftPolicy::parse("capped:x"), std::invalid_argument);
  CHECK_THROWS_AS(ShiftPolicy::parse("sideways"), std::invalid_argument);
}

TEST_CASE("sample_shift respects the policy range") {
  Rng rng = make_stream(5, {2});
  const auto off = ShiftPolicy::parse("off");
  const auto full = ShiftPolicy::parse("full");
  const auto capped = ShiftPolicy::parse("capped:3");
  std::map<int, int> full_seen, capped_seen;
  for (int i = 0; i < 5000; ++i) {
    CHECK(sample_shift(20, 30, off, rng) == 0);
    ++full_seen[sample_shift(20, 30, full, rng)];
    ++capped_seen[sample_shift(20, 30, capped, rng)];
  }
  CHECK(full_seen.size() == 11);
  CHECK(full_seen.begin()->first == 0);
  CHECK(full_seen.rbegin()->first == 10);
  CHECK(capped_seen.size() == 4);
  CHECK(capped_seen.rbegin()->first == 3);
  // A cap beyond the budget is clamped.
  CHECK(sample_shift(30, 30, ShiftPolicy::parse("capped:9"), rng) == 0);
  CHECK_THROWS_AS(sample_shift(31, 30, full, rng), std::invalid_argument);
}

TEST_CASE("apply_shift inserts masked PADs after CLS") {
  Rng rng = make_stream(8, {3});
  for (int trial = 0; trial < 2000; ++trial) {
    const EncodedWindow w = testing::random_window(rng, 40, 30, 6, 20);
    const int k = static_cast<int>(uniform_int(rng, 0, w.trailing_pads()));
    const EncodedWindow s = apply_shift(w, k);
    check_window(s);
    CHECK(s.shift == k);
    CHECK(s.ids[0] == kClsId);
    for (int i = 1; i <= k; ++i) {
      CHECK(s.ids[static_cast<std::size_t>(i)] == kPadId);
      CHECK(s.mask[static_cast<std::size_t>(i)] == Mask::ignore);
    }
    for (int i = 1; i < w.non_pad(); ++i) {
      CHECK(s.ids[static_cast<std::size_t>(i + k)] == w.ids[static_cast<std::size_t>(i)]);
    }
    CHECK(s.gold[0].start == w.gold[0].start + k);
    CHECK(s.gold[0].end == w.gold[0].end + k);
    CHECK(s.non_pad() == w.non_pad());
  }
  const EncodedWindow w = testing::random_window(rng, 40, 30, 6, 20);
  CHECK_THROWS_AS(apply_shift(w, w.trailing_pads() + 1), std::out_of_range);
  CHECK_THROWS_AS(apply_shift(w, -1), std::out_of_range);
}

TEST_CASE("shift draws are reproducible per window and epoch") {
  Rng rng = make_stream(9, {4});
  EncodedWindow w = testing::random_window(rng, 64, 30, 4, 10);
  auto policy = ShiftPolicy::parse("full", 17);
  CHECK(plan_shift(w, policy, 0).k == plan_shift(w, policy, 0).k);
  bool differs = false;
  for (int epoch = 1; epoch < 20; ++epoch) differs |= plan_shift(w, policy, epoch).k != plan_shift(w, policy, 0).k;
  CHECK(differs);
  policy.resample_each_epoch = false;
  for (int epoch = 1; epoch < 20; ++epoch) CHECK(plan_shift(w, policy, epoch).k == plan_shift(w, policy, 0).k);
}

TEST_CASE("inference view is the unshifted window") {
  Rng rng = make_stream(10, {5});
  const EncodedWindow w = testing::random_window(rng, 32, 20, 4, 10);
  CHECK(&inference_view(w) == &w);
  CHECK(inference_view(w).shift == 0);
}
