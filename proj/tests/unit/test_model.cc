// Copyright 2026 The randpad Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "oracles.h"
#include "randpad/model.h"
#include "randpad/padshift.h"

using namespace randpad;

namespace {

ModelConfig tiny_config() {
  ModelConfig c;
  c.layers = 2;
  c.heads = 2;
  c.hidden = 8;
  c.ffn = 12;
  c.capacity = 16;
  c.vocab_size = 12;
  return c;
}

ModelParams perturbed(const ModelConfig& c, std::uint64_t seed) {
  ModelParams p = ModelParams::initialize(c, seed);
  Rng rng = make_stream(seed, {99});
  for (auto& t : p.tensors()) {
    for (Eigen::Index i = 0; i < t.value->size(); ++i) t.value->data()[i] += 0.2 * standard_normal(rng);
  }
  return p;
}

double log_sum_exp(const Vector& v) {
  const double mx = v.maxCoeff();
  return mx + std::log((v.array() - mx).exp().sum());
}

}  // namespace

TEST_CASE("model config validation") {
  ModelConfig c = tiny_config();
  CHECK_NOTHROW(c.validate());
  c.heads = 3;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = tiny_config();
  c.hidden = 0;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
}

TEST_CASE("initialization follows the documented scheme") {
  const ModelParams p = ModelParams::initialize(tiny_config(), 3);
  CHECK(p == ModelParams::initialize(tiny_config(), 3));
  CHECK(!(p == ModelParams::initialize(tiny_config(), 4)));
  CHECK(p.start_vector.isZero());
  CHECK(p.end_vector.isZero());
  CHECK(p.final_gain.isOnes());
  CHECK(p.layers[0].bq.isZero());
  CHECK(p.all_finite());
}

TEST_CASE("analytic gradients agree with central differences") {
  const ModelConfig c = tiny_config();
  const ModelParams p = perturbed(c, 11);
  Rng rng = make_stream(12, {1});
  std::vector<EncodedWindow> windows;
  for (int i = 0; i < 4; ++i) {
    EncodedWindow w = testing::random_window(rng, c.capacity, c.vocab_size, 3, 6);
    windows.push_back(apply_shift(w, static_cast<int>(uniform_int(rng, 0, w.trailing_pads()))));
  }
  const auto report = testing::finite_difference_check(p, windows, 1e-5, 1e-5, 1e-9);
  INFO(report.first_failure);
  CHECK(report.entries == static_cast<std::int64_t>(p.parameter_count() * windows.size()));
  CHECK(report.failures == 0);
}

TEST_CASE("batched incremental losses match full forward passes") {
  const ModelConfig c = tiny_config();
  ModelParams p = perturbed(c, 21);
  Rng rng = make_stream(22, {1});
  std::vector<EncodedWindow> windows;
  for (int i = 0; i < 3; ++i) windows.push_back(testing::random_window(rng, c.capacity, c.vocab_size, 3, 6));
  const BatchForward batch(p, windows);
  const auto base = batch.losses(p);
  for (std::size_t i = 0; i < windows.size(); ++i) {
    CHECK(base[i] == doctest::Approx(span_loss(forward(p, windows[i]), windows[i].gold[0])).epsilon(1e-12));
  }
  p.layers[1].w1(2, 3) += 0.3;
  const auto changed = batch.losses_after_change(p, "layers.1.ffn.w1", 2, 3);
  for (std::size_t i = 0; i < windows.size(); ++i) {
    CHECK(changed[i] == doctest::Approx(span_loss(forward(p, windows[i]), windows[i].gold[0])).epsilon(1e-10));
  }
}

TEST_CASE("span loss is the mean of start and end cross-entropy") {
  SpanLogits l;
  l.start = Vector{{0.5, -1.0, 2.0}};
  l.end = Vector{{1.0, 0.0, 0.0}};
  l.context_begin = 4;
  const double expected = 0.5 * ((log_sum_exp(l.start) - (-1.0)) + (log_sum_exp(l.end) - 0.0));
  CHECK(span_loss(l, {5, 6}) == doctest::Approx(expected).epsilon(1e-14));
  CHECK(span_score(l, 4, 6) == doctest::Approx(0.5));
  CHECK_THROWS_AS(span_score(l, 3, 4), std::out_of_range);
  CHECK(start_probabilities(l).sum() == doctest::Approx(1.0));
}

TEST_CASE("masked positions receive no gradient") {
  const ModelConfig c = tiny_config();
  const ModelParams p = perturbed(c, 31);
  Rng rng = make_stream(32, {1});
  for (int trial = 0; trial < 50; ++trial) {
    EncodedWindow w = testing::random_window(rng, c.capacity, c.vocab_size, 3, 6);
    w = apply_shift(w, static_cast<int>(uniform_int(rng, 0, w.trailing_pads())));
    const Gradients g = backward(p, w, w.gold[0]);
    for (int i = 0; i < c.capacity; ++i) {
      if (w.mask[static_cast<std::size_t>(i)] == Mask::attend) continue;
      for (int j = 0; j < c.hidden; ++j) CHECK(g.position_embedding(i, j) == 0.0);
    }
    // The PAD embedding row is never read.
    for (int j = 0; j < c.hidden; ++j) CHECK(g.token_embedding(kPadId, j) == 0.0);
  }
}

TEST_CASE("forward ignores what sits under masked positions") {
  const ModelConfig c = tiny_config();
  ModelParams p = perturbed(c, 41);
  Rng rng = make_stream(42, {1});
  const EncodedWindow w = testing::random_window(rng, c.capacity, c.vocab_size, 3, 4);
  const SpanLogits before = forward(p, w);
  for (int i = w.non_pad(); i < c.capacity; ++i) p.position_embedding.row(i).setConstant(5.0);
  const SpanLogits after = forward(p, w);
  CHECK(before.start == after.start);
  CHECK(before.end == after.end);
}

TEST_CASE("forward rejects malformed windows") {
  const ModelConfig c = tiny_config();
  const ModelParams p = ModelParams::initialize(c, 1);
  Rng rng = make_stream(51, {1});
  EncodedWindow w = testing::random_window(rng, c.capacity, c.vocab_size, 3, 4);
  EncodedWindow longer = w;
  longer.ids.push_back(kPadId);
  longer.mask.push_back(Mask::ignore);
  CHECK_THROWS_AS(forward(p, longer), std::invalid_argument);
  EncodedWindow bad_id = w;
  bad_id.ids[2] = c.vocab_size;
  CHECK_THROWS_AS(forward(p, bad_id), std::invalid_argument);
}

TEST_CASE("checkpoints round-trip bit for bit") {
  const ModelParams p = perturbed(tiny_config(), 61);
  const auto path = std::filesystem::temp_directory_path() / "randpad_model_test.bin";
  save_checkpoint(p, path);
  CHECK(load_checkpoint(path) == p);

  {
    std::ofstream out(path, std::ios::binary);
    out << "NOTACKPT";
  }
  CHECK_THROWS_AS(load_checkpoint(path), std::runtime_error);
  std::filesystem::remove(path);
  CHECK_THROWS_AS(load_checkpoint(path), std::runtime_error);
}
