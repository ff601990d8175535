// Copyright 2026 The randpad Authors
// SPDX-License-Identifier: Apache-2.0

#include <benchmark/benchmark.h>

#include "randpad/evaluation.h"
#include "randpad/model.h"
#include "randpad/padshift.h"

using namespace randpad;

namespace {

EncodedWindow make_window(int capacity, int vocab, int question, int context) {
  Rng rng = make_stream(1, {2});
  EncodedWindow w;
  w.example_id = "bench";
  w.question_tokens = question;
  w.context_tokens = context;
  w.ids.assign(static_cast<std::size_t>(capacity), kPadId);
  w.mask.assign(static_cast<std::size_t>(capacity), Mask::ignore);
  const int m = question + context + 3;
  for (int i = 0; i < m; ++i) {
    int id = static_cast<int>(uniform_int(rng, kReservedTokens, vocab - 1));
    if (i == 0) id = kClsId;
    if (i == question + 1 || i == m - 1) id = kSepId;
    w.ids[static_cast<std::size_t>(i)] = id;
    w.mask[static_cast<std::size_t>(i)] = Mask::attend;
  }
  w.gold = {{question + 3, question + 4}};
  return w;
}

ModelConfig bench_config(int capacity) {
  ModelConfig c;
  c.capacity = capacity;
  c.vocab_size = 80;
  return c;
}

void BM_Forward(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const ModelParams p = ModelParams::initialize(bench_config(n), 1);
  const EncodedWindow w = make_window(n, 80, 4, n / 2);
  for (auto _ : state) benchmark::DoNotOptimize(forward(p, w));
}
BENCHMARK(BM_Forward)->Arg(64)->Arg(128);

void BM_Backward(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const ModelParams p = ModelParams::initialize(bench_config(n), 1);
  const EncodedWindow w = make_window(n, 80, 4, n / 2);
  for (auto _ : state) benchmark::DoNotOptimize(backward(p, w, w.gold[0]));
}
BENCHMARK(BM_Backward)->Arg(64)->Arg(128);

void BM_ApplyShift(benchmark::State& state) {
  const EncodedWindow w = make_window(512, 80, 10, 200);
  const auto policy = ShiftPolicy::parse("full", 3);
  int epoch = 0;
  for (auto _ : state) {
    const PaddingLayout layout = plan_shift(w, policy, epoch++);
    benchmark::DoNotOptimize(apply_shift(w, layout.k));
  }
}
BENCHMARK(BM_ApplyShift);

void BM_DecodeSpan(benchmark::State& state) {
  const int mc = static_cast<int>(state.range(0));
  Rng rng = make_stream(4, {5});
  SpanLogits l;
  l.start.resize(mc);
  l.end.resize(mc);
  for (int i = 0; i < mc; ++i) {
    l.start(i) = standard_normal(rng);
    l.end(i) = standard_normal(rng);
  }
  for (auto _ : state) benchmark::DoNotOptimize(decode_span(l));
}
BENCHMARK(BM_DecodeSpan)->Arg(100)->Arg(500);

}  // namespace

BENCHMARK_MAIN();
