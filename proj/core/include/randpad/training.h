// Copyright 2026 The randpad Authors
// SPDX-License-Identifier: Apache-2.0
//
// Fine-tuning loop: seeded epoch shuffles, per-step padding shift, Adam, the
// per-position update census and best-checkpoint selection on validation F1.

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "randpad/config.h"
#include "randpad/encoding.h"
#include "randpad/evaluation.h"
#include "randpad/model.h"
#include "randpad/padshift.h"

namespace randpad {

// -- optimizer ---------------------------------------------------------------

struct AdamConfig {
  double learning_rate = 3e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  Gradients m;
  Gradients v;
  std::int64_t step = 0;

  static AdamState zeros(const ModelConfig& config);
};

class NonFiniteGradient : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// One bias-corrected Adam update of a single tensor; `step` counts from 1.
void adam_update(Matrix& param, const Matrix& grad, Matrix& m, Matrix& v, std::int64_t step,
                 const AdamConfig& config);

/// Advances state.step and updates every tensor. Throws NonFiniteGradient,
/// naming the tensor and entry, before touching anything if a gradient is
/// NaN or infinite.
void adam_step(ModelParams& params, const Gradients& grads, AdamState& state, const AdamConfig& config);

// -- configuration -------------------------------------------------------------

struct TrainConfig {
  int epochs = 2;
  int batch_size = 16;
  AdamConfig adam;
  std::uint64_t seed = 0;  // shuffles and initialization
  ShiftPolicy shift;
  int eval_every = 1000;  // steps; the final step is always evaluated
  int max_answer_tokens = kDefaultMaxAnswerTokens;

  /// Throws std::invalid_argument on non-positive sizes or rates.
  void validate() const;

  /// Reads train.{epochs,batch_size,lr,beta1,beta2,eps,seed,eval_every,
  /// max_answer_tokens} and padshift.{mode,K,seed,resample}; padshift.seed
  /// defaults to train.seed.
  static TrainConfig from_config(const KeyValueConfig& config);
};

/// Reads model.{layers,heads,hidden,ffn,capacity,init_std}.
ModelConfig model_config_from(const KeyValueConfig& config, int vocab_size);

// -- census ------------------------------------------------------------------

/// counts[p]: optimizer steps in which position p held an attended token in
/// at least one loss-contributing window of the batch.
struct UpdateCensus {
  std::vector<std::int64_t> counts;
  std::int64_t total_steps = 0;

  static UpdateCensus empty(int capacity);
  /// Counts one step; `attended[p]` marks positions attended that step.
  void record(const std::vector<bool>& attended);

  friend bool operator==(const UpdateCensus&, const UpdateCensus&) = default;
};

struct CensusRow {
  int position = 0;
  std::int64_t count = 0;
  double fraction = 0.0;
};

/// One row per position. Throws std::invalid_argument when no step was
/// recorded.
std::vector<CensusRow> census_report(const UpdateCensus& census);

/// max - min update fraction over positions 1..n-1.
double census_spread(const UpdateCensus& census);

/// CSV "position,count,fraction".
void save_census_csv(const UpdateCensus& census, const std::filesystem::path& path);
std::string format_census_csv(const UpdateCensus& census);
UpdateCensus load_census_csv(const std::filesystem::path& path);

// -- run log -----------------------------------------------------------------

struct EvalPoint {
  std::int64_t step = 0;
  int epoch = 0;
  double train_loss = 0.0;  // mean batch loss since the previous point
  double val_f1 = 0.0;
  double val_em = 0.0;
};

struct RunLog {
  std::vector<EvalPoint> points;
  std::vector<std::uint64_t> epoch_order_hashes;  // one per epoch
  std::int64_t best_step = -1;
  double best_f1 = 0.0;
  std::int64_t total_steps = 0;
};

/// JSON lines: one {"kind":"epoch",...} record per epoch, one {"kind":"eval",
/// ...} per evaluation point, then a {"kind":"best",...} record.
void save_run_log(const RunLog& log, const std::filesystem::path& path);
std::string format_run_log(const RunLog& log);

// -- schedule ----------------------------------------------------------------

/// Hash of a window sequence by (example id, window index).
std::uint64_t order_hash(std::span<const EncodedWindow> windows, std::span<const std::size_t> order);

/// What the loop sees at one optimizer step.
struct StepBatch {
  std::int64_t step = 0;  // 1-based
  int epoch = 0;
  std::vector<EncodedWindow> inputs;  // shifted per policy, all with gold
};

/// Walks the training schedule without a model: per epoch, the windows
/// with gold are shuffled by a stream derived from the seed only, cut into
/// batches, and each batch member is shifted per policy. `on_epoch`
/// receives each epoch's order hash. Throws std::invalid_argument when no
/// window has gold.
void walk_schedule(std::span<const EncodedWindow> windows, const TrainConfig& config,
                   const std::function<void(const StepBatch&)>& on_step,
                   const std::function<void(int, std::uint64_t)>& on_epoch = {});

/// The census the training loop would record, computed from the schedule.
UpdateCensus simulate_census(std::span<const EncodedWindow> windows, int capacity,
                             const TrainConfig& config);

// -- training ----------------------------------------------------------------

struct TrainResult {
  ModelParams best;  // highest validation F1 (earliest on ties); final without validation
  ModelParams last;
  UpdateCensus census;
  RunLog log;
};

/// Called after the gradient of each step is accumulated, before the update.
using StepObserver = std::function<void(const StepBatch&, const Gradients&)>;

TrainResult train(const TrainConfig& config, const ModelConfig& model,
                  std::span<const EncodedWindow> train_windows, const EvalSet* validation,
                  const StepObserver& observer = {});

}  // namespace randpad
