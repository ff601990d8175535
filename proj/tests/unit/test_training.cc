// Copyright 2026 The randpad Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <limits>

#include "randpad/corpus.h"
#include "randpad/evaluation.h"
#include "randpad/training.h"

using namespace randpad;

namespace {

struct Fixture {
  Vocab vocab;
  std::vector<EncodedWindow> windows;
  EvalSet val;
  ModelConfig model;

  Fixture() {
    SyntheticSpec spec;
    spec.vocab_size = 16;
    spec.length = LengthLaw::fixed(6);
    spec.count = 48;
    spec.seed = 3;
    const Dataset train = generate_synthetic(spec);
    spec.split = Split::val;
    spec.length = LengthLaw::range(6, 16);
    spec.count = 12;
    spec.seed = 4;
    const Dataset v = generate_synthetic(spec);
    vocab = build_vocab(train, 1 << 20);
    windows = encode_dataset(train, vocab, WindowingPolicy::with_capacity(24));
    val = EvalSet::build(v, vocab, WindowingPolicy::with_capacity(24));
    model.capacity = 24;
    model.hidden = 8;
    model.ffn = 16;
    model.vocab_size = vocab.size();
  }

  TrainConfig config(const std::string& policy) const {
    TrainConfig tc;
    tc.epochs = 2;
    tc.batch_size = 8;
    tc.adam.learning_rate = 1e-3;
    tc.seed = 5;
    tc.eval_every = 4;
    tc.shift = ShiftPolicy::parse(policy, 5);
    return tc;
  }
};

}  // namespace

TEST_CASE("Adam update matches a hand computation") {
  AdamConfig cfg;
  cfg.learning_rate = 0.1;
  Matrix p{{1.0, -2.0}};
  Matrix m = Matrix::Zero(1, 2), v = Matrix::Zero(1, 2);
  const Matrix g1{{0.5, -1.0}};
  const Matrix g2{{-0.25, 2.0}};
  adam_update(p, g1, m, v, 1, cfg);
  adam_update(p, g2, m, v, 2, cfg);
  for (int j = 0; j < 2; ++j) {
    double mm = 0.0, vv = 0.0, x = j == 0 ? 1.0 : -2.0;
    const double gs[2] = {g1(0, j), g2(0, j)};
    for (int t = 1; t <= 2; ++t) {
      mm = 0.9 * mm + 0.1 * gs[t - 1];
      vv = 0.999 * vv + 0.001 * gs[t - 1] * gs[t - 1];
      const double mhat = mm / (1.0 - std::pow(0.9, t));
      const double vhat = vv / (1.0 - std::pow(0.999, t));
      x -= 0.1 * mhat / (std::sqrt(vhat) + 1e-8);
    }
    CHECK(p(0, j) == doctest::Approx(x).epsilon(1e-14));
  }
}

TEST_CASE("a non-finite gradient stops the step and leaves parameters alone") {
  ModelConfig mc;
  mc.hidden = 8;
  mc.ffn = 8;
  mc.capacity = 8;
  mc.vocab_size = 8;
  ModelParams p = ModelParams::initialize(mc, 1);
  const ModelParams before = p;
  Gradients g = ModelParams::zeros(mc);
  g.layers[1].w2(3, 2) = std::numeric_limits<double>::quiet_NaN();
  AdamState state = AdamState::zeros(mc);
  CHECK_THROWS_WITH_AS(adam_step(p, g, state, AdamConfig{}), doctest::Contains("layers.1.ffn.w2"), NonFiniteGradient);
  CHECK(p == before);
  CHECK(state.step == 0);
}

TEST_CASE("train config validation") {
  TrainConfig tc;
  CHECK_NOTHROW(tc.validate());
  tc.batch_size = 0;
  CHECK_THROWS_AS(tc.validate(), std::invalid_argument);
  tc = TrainConfig{};
  tc.adam.beta1 = 1.0;
  CHECK_THROWS_AS(tc.validate(), std::invalid_argument);

  const auto kv = KeyValueConfig::parse("train.epochs = 3\ntrain.seed = 9\npadshift.mode = capped\npadshift.K = 4\n");
  const TrainConfig parsed = TrainConfig::from_config(kv);
  CHECK(parsed.epochs == 3);
  CHECK(parsed.shift.name() == "capped:4");
  CHECK(parsed.shift.seed == 9);
}

TEST_CASE("census counts and spread") {
  UpdateCensus c = UpdateCensus::empty(4);
  c.record({true, true, false, false});
  c.record({true, true, true, false});
  const auto rows = census_report(c);
  REQUIRE(rows.size() == 4);
  CHECK(rows[1].fraction == 1.0);
  CHECK(rows[2].fraction == 0.5);
  CHECK(rows[3].count == 0);
  CHECK(census_spread(c) == 1.0);
  CHECK_THROWS_AS(census_report(UpdateCensus::empty(4)), std::invalid_argument);
  CHECK_THROWS_AS(c.record({true}), std::invalid_argument);
}

TEST_CASE("training is deterministic and shares the batch order across policies") {
  const Fixture f;
  const TrainResult off = train(f.config("off"), f.model, f.windows, &f.val);
  const TrainResult again = train(f.config("off"), f.model, f.windows, &f.val);
  CHECK(off.last == again.last);
  CHECK(off.best == again.best);
  CHECK(format_run_log(off.log) == format_run_log(again.log));

  int seen_shifts = 0;
  const TrainResult full = train(f.config("full"), f.model, f.windows, &f.val,
                                 [&](const StepBatch& b, const Gradients&) {
                                   for (const auto& w : b.inputs) {
                                     check_window(w);
                                     seen_shifts += w.shift > 0;
                                   }
                                 });
  CHECK(seen_shifts > 0);
  CHECK(full.log.epoch_order_hashes.size() == 2);
  CHECK(full.log.epoch_order_hashes == off.log.epoch_order_hashes);
  CHECK(full.log.total_steps == off.log.total_steps);
  CHECK(full.log.total_steps == 12);
  CHECK(full.log.points.back().step == 12);
  CHECK(full.log.best_step >= 1);

  CHECK(off.census == simulate_census(f.windows, f.model.capacity, f.config("off")));
  CHECK(full.census == simulate_census(f.windows, f.model.capacity, f.config("full")));
  CHECK(census_spread(full.census) < census_spread(off.census));
}

TEST_CASE("training refuses data without any gold span") {
  Fixture f;
  for (auto& w : f.windows) w.gold.clear();
  CHECK_THROWS_AS(train(f.config("off"), f.model, f.windows, nullptr), std::invalid_argument);
}
