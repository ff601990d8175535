// Copyright 2026 The randpad Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <filesystem>
#include <set>

#include "oracles.h"
#include "randpad/encoding.h"

using namespace randpad;

namespace {

QAExample example(int question_words, int context_words, std::vector<std::pair<int, int>> mentions = {}) {
  QAExample ex;
  ex.id = "e";
  for (int i = 0; i < question_words; ++i) ex.question.push_back("q" + std::to_string(i));
  for (int i = 0; i < context_words; ++i) ex.context.push_back("c" + std::to_string(i));
  for (auto [s, e] : mentions) {
    std::vector<std::string> slice(ex.context.begin() + s, ex.context.begin() + e + 1);
    ex.answers.push_back({s, e, join_words(slice)});
  }
  return ex;
}

Vocab vocab_of(const QAExample& ex) { return build_vocab(Dataset{Split::train, {ex}}, 1 << 20); }

}  // namespace

TEST_CASE("single-window layout") {
  const auto ex = example(2, 3, {{0, 0}});
  const auto windows = encode_example(ex, vocab_of(ex), {10, 5});
  REQUIRE(windows.size() == 1);
  const auto& w = windows[0];
  CHECK(w.non_pad() == 8);
  CHECK(w.trailing_pads() == 2);
  CHECK(w.ids[0] == kClsId);
  CHECK(w.ids[3] == kSepId);
  CHECK(w.context_begin() == 4);
  CHECK(w.ids[7] == kSepId);
  CHECK(w.ids[8] == kPadId);
  CHECK(w.ids[9] == kPadId);
  REQUIRE(w.gold.size() == 1);
  CHECK(w.gold[0] == TokenSpan{4, 4});  // first context slot is M_q + 2
  check_window(w);
}

TEST_CASE("long contexts are split into overlapping windows") {
  const auto ex = example(17, 600);
  CHECK(encode_example(ex, vocab_of(ex), WindowingPolicy::with_capacity(512)).size() == 2);
}

TEST_CASE("a mention is mapped only in windows that hold it whole") {
  // Capacity 12 with one question word leaves 8 context slots; stride 4
  // gives windows over words 0..7 and 4..11.
  const auto ex = example(1, 12, {{6, 9}, {3, 5}, {5, 6}});
  const auto windows = encode_example(ex, vocab_of(ex), {12, 4});
  REQUIRE(windows.size() == 2);
  CHECK(windows[0].window_offset == 0);
  CHECK(windows[1].window_offset == 4);
  CHECK(!map_answer_span(windows[0], ex.answers[0]));
  CHECK(map_answer_span(windows[1], ex.answers[0]) == TokenSpan{3 + 2, 3 + 5});
  CHECK(map_answer_span(windows[0], ex.answers[1]) == TokenSpan{3 + 3, 3 + 5});
  CHECK(!map_answer_span(windows[1], ex.answers[1]));
  CHECK(map_answer_span(windows[0], ex.answers[2]));
  CHECK(map_answer_span(windows[1], ex.answers[2]));
  CHECK(windows[0].gold.size() == 2);
  CHECK(windows[1].gold.size() == 2);
}

TEST_CASE("question too long for the capacity") {
  const auto ex = example(8, 3);
  CHECK_THROWS_AS(encode_example(ex, vocab_of(ex), {10, 5}), std::invalid_argument);
}

TEST_CASE("window invariants and span round trip on random examples") {
  Rng rng = make_stream(31, {1});
  Dataset d{Split::test, {}};
  for (int i = 0; i < 1000; ++i) d.examples.push_back(testing::random_example(rng, i, 150));
  const Vocab vocab = build_vocab(d, 1 << 20);
  for (const auto& ex : d.examples) {
    const auto windows = encode_example(ex, vocab, WindowingPolicy::with_capacity(48));
    std::set<int> covered;
    for (const auto& w : windows) {
      check_window(w);
      CHECK(w.ids[0] == kClsId);
      for (int i = 0; i < w.capacity(); ++i) {
        CHECK((w.ids[static_cast<std::size_t>(i)] == kPadId) == (w.mask[static_cast<std::size_t>(i)] == Mask::ignore));
      }
      for (int i = 0; i < w.context_tokens; ++i) covered.insert(w.window_offset + i);
      for (const auto& m : ex.answers) {
        if (auto span = map_answer_span(w, m)) {
          CHECK(span->start >= w.question_tokens + 2);
          CHECK(span->end < w.question_tokens + w.context_tokens + 2);
          CHECK(decode_tokens(w, vocab, *span) == m.text);
        }
      }
    }
    CHECK(covered.size() == ex.context.size());
  }
}

TEST_CASE("vocabulary keeps frequent words, breaks ties lexicographically") {
  QAExample ex;
  ex.id = "v";
  ex.question = {"a"};
  ex.context = {"a", "b"};
  Dataset d{Split::train, {ex}};
  const Vocab v = build_vocab(d, kReservedTokens + 1);
  CHECK(v.size() == kReservedTokens + 1);
  CHECK(v.contains("a"));
  CHECK(!v.contains("b"));
  CHECK(v.id("b") == kUnkId);
  CHECK(build_vocab(d, kReservedTokens + 1) == v);

  ex.question = {"y"};
  ex.context = {"x"};
  const Vocab tie = build_vocab(Dataset{Split::train, {ex}}, kReservedTokens + 1);
  CHECK(tie.contains("x"));
  CHECK(!tie.contains("y"));

  const auto path = std::filesystem::temp_directory_path() / "randpad_vocab_test.txt";
  v.save(path);
  CHECK(Vocab::load(path) == v);
  std::filesystem::remove(path);
}
