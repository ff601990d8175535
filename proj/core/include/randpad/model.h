// Copyright 2026 The randpad Authors
// SPDX-License-Identifier: Apache-2.0
//
// A small pre-LayerNorm transformer encoder with learnable absolute position
// embeddings and an extractive span head, in double precision with
// hand-written backpropagation.
//
//   x_t   = token_embedding[id_t] + position_embedding[t]
//   layer: x += Attention(LN1(x));  x += FFN(LN2(x))      (GELU, tanh form)
//   T     = LN_final(x)
//   start logit at context token i = S . T_i, end logit = E . T_i
//
// Start/end probabilities are softmaxes over the context tokens only, i.e.
// window indices context_begin() .. context_end()-1.
//
// Only attended tokens enter the computation: ignore-masked positions are
// dropped before the first layer, which is exactly what an additive -inf
// attention mask yields once exp() underflows to zero. Their rows (token and
// position) therefore receive identically zero gradient.

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "randpad/encoding.h"

namespace randpad {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

struct ModelConfig {
  int layers = 2;
  int heads = 2;
  int hidden = 64;    // H
  int ffn = 128;      // feed-forward width
  int capacity = 128; // n
  int vocab_size = kReservedTokens;
  double init_std = 0.02;
  double ln_eps = 1e-5;

  int head_dim() const { return hidden / heads; }
  /// Throws std::invalid_argument on non-positive sizes or H % heads != 0.
  void validate() const;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

struct EncoderLayer {
  Matrix ln1_gain, ln1_bias;  // 1 x H
  Matrix wq, bq, wk, bk, wv, bv, wo, bo;
  Matrix ln2_gain, ln2_bias;
  Matrix w1, b1;  // H x F, 1 x F
  Matrix w2, b2;  // F x H, 1 x H
};

template <typename M>
struct NamedTensor {
  std::string name;
  M* value;
};

struct ModelParams {
  ModelConfig config;
  Matrix token_embedding;     // vocab x H
  Matrix position_embedding;  // n x H
  std::vector<EncoderLayer> layers;
  Matrix final_gain, final_bias;  // 1 x H
  Matrix start_vector;            // S, 1 x H
  Matrix end_vector;              // E, 1 x H

  /// Correctly shaped, all zeros.
  static ModelParams zeros(const ModelConfig& config);
  /// Embeddings and projection weights ~ N(0, init_std^2); biases zero;
  /// LayerNorm gains one; S and E zero.
  static ModelParams initialize(const ModelConfig& config, std::uint64_t seed);

  /// Every tensor in a fixed order with dotted names, e.g.
  /// "embeddings.position", "layers.1.attention.wq", "head.start".
  std::vector<NamedTensor<Matrix>> tensors();
  std::vector<NamedTensor<const Matrix>> tensors() const;

  std::size_t parameter_count() const;
  void set_zero();
  bool all_finite() const;

  friend bool operator==(const ModelParams& a, const ModelParams& b);
};

/// Same shape as ModelParams.
using Gradients = ModelParams;

struct SpanLogits {
  Vector start;  // one entry per context token
  Vector end;
  int context_begin = 0;  // window index of the first context token
  /// Final representations T_i of the attended tokens, in sequence order;
  /// `positions[r]` is the window index of row r.
  Matrix representations;
  std::vector<int> positions;

  int context_tokens() const { return static_cast<int>(start.size()); }
};

/// Activations kept for backpropagation.
struct LayerTrace {
  Matrix x_in;
  Matrix a_hat, a;  // LN1 normalized input / output
  Vector a_rstd;
  Matrix q, k, v;
  std::vector<Matrix> probs;  // per head, m x m
  Matrix ctx;
  Matrix x_mid;
  Matrix b_hat, b;
  Vector b_rstd;
  Matrix z, g;  // FFN pre-activation / GELU output
};

struct ForwardTrace {
  std::vector<int> ids;        // attended token ids in order
  std::vector<int> positions;  // their window indices
  int context_row = 0;         // first context row in the compact order
  std::vector<LayerTrace> layers;
  Matrix x_out;
  Matrix t_hat;
  Vector t_rstd;
  SpanLogits logits;
};

/// Throws std::invalid_argument on window/parameter dimension mismatch or a
/// malformed mask.
SpanLogits forward(const ModelParams& params, const EncodedWindow& window);
ForwardTrace forward_trace(const ModelParams& params, const EncodedWindow& window);

/// Forward pass over several windows at once. The attended rows of all
/// windows are stacked so every dense product is one matrix multiply, while
/// attention stays inside each window. The residual-stream input of every
/// block is cached, so after changing the parameters of one block the output
/// can be recomputed from that block onward. Used for sensitivity probes and
/// finite-difference checks.
///
/// Stages: 0 embeddings, 1 + 2l attention block of layer l, 2 + 2l its
/// feed-forward block, 1 + 2L final LayerNorm and span head.
class BatchForward {
 public:
  BatchForward(const ModelParams& params, std::span<const EncodedWindow> windows);

  int stage_count() const { return 2 + 2 * base_.config.layers; }
  /// First stage that reads the named tensor (names as in ModelParams::tensors()).
  int stage_of(std::string_view tensor_name) const;

  std::vector<SpanLogits> logits(const ModelParams& params, int from_stage = 0) const;
  /// span_loss of each window against its first gold span; windows without
  /// gold give NaN.
  std::vector<double> losses(const ModelParams& params, int from_stage = 0) const;
  /// Equal to losses(changed) up to rounding, provided `changed` differs from
  /// the construction parameters only in entry (row, col) of the named
  /// tensor. Recomputes only what that entry influences: a change to a
  /// projection weight, for instance, is a rank-one update of its block.
  std::vector<double> losses_after_change(const ModelParams& changed, std::string_view tensor_name,
                                          int row, int col) const;

 private:
  struct StageCache {
    Matrix x_in, y, x_out;
    Matrix q, k, v, ctx;         // attention stages
    std::vector<Matrix> probs;   // attention, [window * heads + head]
    Matrix z, g;                 // feed-forward stages
  };

  int windows() const { return static_cast<int>(context_row_.size()); }
  Matrix embed(const ModelParams& params) const;
  void attention_block(const ModelParams& params, int layer, Matrix& x, StageCache* keep) const;
  void ffn_block(const ModelParams& params, int layer, Matrix& x, StageCache* keep) const;
  /// Runs stages [from_stage, last) on x and returns the final representations.
  Matrix propagate(const ModelParams& params, int from_stage, Matrix x) const;
  Matrix input_of(int stage) const;
  std::vector<double> head_losses(const ModelParams& params, const Matrix& t) const;

  ModelParams base_;
  std::vector<int> ids_, positions_;
  std::vector<int> row_begin_;  // windows + 1 entries
  std::vector<int> context_row_, context_tokens_, context_begin_;
  std::vector<TokenSpan> gold_;
  std::vector<bool> has_gold_;
  int longest_ = 0;
  std::vector<StageCache> cache_;  // cache_[s - 1] belongs to stage s
};

/// S . T_s + E . T_e for window indices s <= e inside the context; throws
/// std::out_of_range otherwise.
double span_score(const SpanLogits& logits, int s, int e);

/// Mean of -log P(start = s*) and -log P(end = e*); `gold` in window indices.
double span_loss(const SpanLogits& logits, TokenSpan gold);
/// Loss against the window's first gold span; nullopt (skip) when it has none.
std::optional<double> window_loss(const SpanLogits& logits, const EncodedWindow& window);

/// Probabilities over the context tokens.
Vector start_probabilities(const SpanLogits& logits);
Vector end_probabilities(const SpanLogits& logits);

/// Exact gradient of span_loss(forward(params, window), gold).
Gradients backward(const ModelParams& params, const EncodedWindow& window, TokenSpan gold);

/// Adds scale * d loss / d params into `grads` and returns the loss.
double accumulate_gradients(const ModelParams& params, const EncodedWindow& window,
                            TokenSpan gold, double scale, Gradients& grads);

// -- checkpoints -------------------------------------------------------------
// Layout is documented in docs/checkpoint-format.md.

void save_checkpoint(const ModelParams& params, const std::filesystem::path& path);
ModelParams load_checkpoint(const std::filesystem::path& path);

}  // namespace randpad
