// Copyright 2026 The randpad Authors
// SPDX-License-Identifier: Apache-2.0

#include "randpad/training.h"

#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "randpad/rng.h"

namespace randpad {

// -- optimizer ---------------------------------------------------------------

AdamState AdamState::zeros(const ModelConfig& config) {
  return {ModelParams::zeros(config), ModelParams::zeros(config), 0};
}

void adam_update(Matrix& param, const Matrix& grad, Matrix& m, Matrix& v, std::int64_t step,
                 const AdamConfig& config) {
  const double b1 = config.beta1;
  const double b2 = config.beta2;
  m = b1 * m + (1.0 - b1) * grad;
  v.array() = b2 * v.array() + (1.0 - b2) * grad.array().square();
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(step));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(step));
  param.array() -= config.learning_rate * (m.array() / c1) / ((v.array() / c2).sqrt() + config.epsilon);
}

void adam_step(ModelParams& params, const Gradients& grads, AdamState& state, const AdamConfig& config) {
  auto g = grads.tensors();
  for (const auto& t : g) {
    if (t.value->allFinite()) continue;
    for (Eigen::Index i = 0; i < t.value->size(); ++i) {
      const double x = t.value->data()[i];
      if (!std::isfinite(x)) {
        std::ostringstream msg;
        msg << "non-finite gradient " << x << " in " << t.name << " at (" << i / t.value->cols()
            << ", " << i % t.value->cols() << ") after step " << state.step;
        throw NonFiniteGradient(msg.str());
      }
    }
  }
  ++state.step;
  auto p = params.tensors();
  auto m = state.m.tensors();
  auto v = state.v.tensors();
  for (std::size_t i = 0; i < p.size(); ++i) {
    adam_update(*p[i].value, *g[i].value, *m[i].value, *v[i].value, state.step, config);
  }
}

// -- configuration -------------------------------------------------------------

void TrainConfig::validate() const {
  if (epochs < 1) throw std::invalid_argument("train.epochs must be >= 1");
  if (batch_size < 1) throw std::invalid_argument("train.batch_size must be >= 1");
  if (eval_every < 1) throw std::invalid_argument("train.eval_every must be >= 1");
  if (max_answer_tokens < 1) throw std::invalid_argument("train.max_answer_tokens must be >= 1");
  if (!(adam.learning_rate > 0.0) || !(adam.epsilon > 0.0)) {
    throw std::invalid_argument("learning rate and epsilon must be positive");
  }
  if (!(adam.beta1 > 0.0 && adam.beta1 < 1.0) || !(adam.beta2 > 0.0 && adam.beta2 < 1.0)) {
    throw std::invalid_argument("Adam betas must lie in (0, 1)");
  }
  if (shift.mode == ShiftMode::capped && shift.cap < 0) {
    throw std::invalid_argument("padshift.K must be >= 0");
  }
}

TrainConfig TrainConfig::from_config(const KeyValueConfig& c) {
  TrainConfig t;
  t.epochs = static_cast<int>(c.get_int("train.epochs", t.epochs));
  t.batch_size = static_cast<int>(c.get_int("train.batch_size", t.batch_size));
  t.adam.learning_rate = c.get_double("train.lr", t.adam.learning_rate);
  t.adam.beta1 = c.get_double("train.beta1", t.adam.beta1);
  t.adam.beta2 = c.get_double("train.beta2", t.adam.beta2);
  t.adam.epsilon = c.get_double("train.eps", t.adam.epsilon);
  t.seed = static_cast<std::uint64_t>(c.get_int("train.seed", 0));
  t.eval_every = static_cast<int>(c.get_int("train.eval_every", t.eval_every));
  t.max_answer_tokens = static_cast<int>(c.get_int("train.max_answer_tokens", t.max_answer_tokens));
  t.shift.mode = parse_shift_mode(c.get_string("padshift.mode", "off"));
  t.shift.cap = static_cast<int>(c.get_int("padshift.K", 0));
  t.shift.seed = static_cast<std::uint64_t>(c.get_int("padshift.seed", static_cast<std::int64_t>(t.seed)));
  t.shift.resample_each_epoch = c.get_bool("padshift.resample", true);
  t.validate();
  return t;
}

ModelConfig model_config_from(const KeyValueConfig& c, int vocab_size) {
  ModelConfig m;
  m.layers = static_cast<int>(c.get_int("model.layers", m.layers));
  m.heads = static_cast<int>(c.get_int("model.heads", m.heads));
  m.hidden = static_cast<int>(c.get_int("model.hidden", m.hidden));
  m.ffn = static_cast<int>(c.get_int("model.ffn", m.ffn));
  m.capacity = static_cast<int>(c.get_int("model.capacity", m.capacity));
  m.init_std = c.get_double("model.init_std", m.init_std);
  m.vocab_size = vocab_size;
  m.validate();
  return m;
}

// -- census ------------------------------------------------------------------

UpdateCensus UpdateCensus::empty(int capacity) {
  if (capacity < 1) throw std::invalid_argument("census capacity must be >= 1");
  return {std::vector<std::int64_t>(static_cast<std::size_t>(capacity), 0), 0};
}

void UpdateCensus::record(const std::vector<bool>& attended) {
  if (attended.size() != counts.size()) throw std::invalid_argument("census width mismatch");
  for (std::size_t p = 0; p < counts.size(); ++p) counts[p] += attended[p] ? 1 : 0;
  ++total_steps;
}

std::vector<CensusRow> census_report(const UpdateCensus& census) {
  if (census.total_steps <= 0) throw std::invalid_argument("census has no recorded steps");
  std::vector<CensusRow> rows;
  rows.reserve(census.counts.size());
  for (std::size_t p = 0; p < census.counts.size(); ++p) {
    rows.push_back({static_cast<int>(p), census.counts[p],
                    static_cast<double>(census.counts[p]) / static_cast<double>(census.total_steps)});
  }
  return rows;
}

double census_spread(const UpdateCensus& census) {
  const auto rows = census_report(census);
  if (rows.size() < 2) return 0.0;
  double lo = rows[1].fraction;
  double hi = rows[1].fraction;
  for (std::size_t p = 2; p < rows.size(); ++p) {
    lo = std::min(lo, rows[p].fraction);
    hi = std::max(hi, rows[p].fraction);
  }
  return hi - lo;
}

std::string format_census_csv(const UpdateCensus& census) {
  std::ostringstream out;
  out << "position,count,fraction\n";
  char buf[64];
  for (const auto& r : census_report(census)) {
    std::snprintf(buf, sizeof buf, "%.6f", r.fraction);
    out << r.position << ',' << r.count << ',' << buf << '\n';
  }
  return out.str();
}

void save_census_csv(const UpdateCensus& census, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << format_census_csv(census);
}

UpdateCensus load_census_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) || trim(line) != "position,count,fraction") {
    throw std::runtime_error(path.string() + ": expected header position,count,fraction");
  }
  UpdateCensus census;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto cells = split_list(line);
    if (cells.size() != 3) throw std::runtime_error(path.string() + ":" + std::to_string(line_no) + ": expected 3 cells");
    const auto pos = std::stoll(cells[0]);
    if (pos != static_cast<long long>(census.counts.size())) {
      throw std::runtime_error(path.string() + ":" + std::to_string(line_no) + ": positions must be consecutive");
    }
    const auto count = std::stoll(cells[1]);
    const double fraction = std::stod(cells[2]);
    census.counts.push_back(count);
    if (fraction > 0.0 && census.total_steps == 0) {
      census.total_steps = std::llround(static_cast<double>(count) / fraction);
    }
  }
  return census;
}

// -- run log -----------------------------------------------------------------

std::string format_run_log(const RunLog& log) {
  std::string out;
  for (std::size_t e = 0; e < log.epoch_order_hashes.size(); ++e) {
    nlohmann::ordered_json rec;
    rec["kind"] = "epoch";
    rec["epoch"] = e;
    char hex[17];
    std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(log.epoch_order_hashes[e]));
    rec["order_hash"] = hex;
    out += rec.dump() + '\n';
  }
  for (const auto& p : log.points) {
    nlohmann::ordered_json rec;
    rec["kind"] = "eval";
    rec["step"] = p.step;
    rec["epoch"] = p.epoch;
    rec["train_loss"] = p.train_loss;
    rec["val_f1"] = p.val_f1;
    rec["val_em"] = p.val_em;
    out += rec.dump() + '\n';
  }
  nlohmann::ordered_json best;
  best["kind"] = "best";
  best["step"] = log.best_step;
  best["val_f1"] = log.best_f1;
  best["total_steps"] = log.total_steps;
  out += best.dump() + '\n';
  return out;
}

void save_run_log(const RunLog& log, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << format_run_log(log);
}

// -- schedule ----------------------------------------------------------------

std::uint64_t order_hash(std::span<const EncodedWindow> windows, std::span<const std::size_t> order) {
  std::string bytes;
  for (auto i : order) {
    bytes += windows[i].example_id;
    bytes += '#';
    bytes += std::to_string(windows[i].window_index);
    bytes += '\n';
  }
  return hash_bytes(bytes);
}

void walk_schedule(std::span<const EncodedWindow> windows, const TrainConfig& config,
                   const std::function<void(const StepBatch&)>& on_step,
                   const std::function<void(int, std::uint64_t)>& on_epoch) {
  config.validate();
  std::vector<std::size_t> trainable;
  for (std::size_t i = 0; i < windows.size(); ++i) {
    if (!windows[i].gold.empty()) trainable.push_back(i);
  }
  if (trainable.empty()) throw std::invalid_argument("no training window has a gold span; every batch would be skipped");

  const auto batch = static_cast<std::size_t>(config.batch_size);
  std::int64_t step = 0;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::vector<std::size_t> order = trainable;
    Rng rng = make_stream(config.seed, {stream_tag::kShuffle, static_cast<std::uint64_t>(epoch)});
    shuffle(std::span<std::size_t>(order), rng);
    if (on_epoch) on_epoch(epoch, order_hash(windows, order));
    for (std::size_t b = 0; b < order.size(); b += batch) {
      StepBatch sb;
      sb.step = ++step;
      sb.epoch = epoch;
      for (std::size_t i = b; i < std::min(order.size(), b + batch); ++i) {
        const auto& w = windows[order[i]];
        sb.inputs.push_back(apply_shift(w, plan_shift(w, config.shift, epoch).k));
      }
      on_step(sb);
    }
  }
}

namespace {
std::vector<bool> attended_positions(const StepBatch& batch, int capacity) {
  std::vector<bool> seen(static_cast<std::size_t>(capacity), false);
  for (const auto& w : batch.inputs) {
    if (w.capacity() != capacity) throw std::invalid_argument("window capacity differs from the census width");
    for (int p = 0; p < capacity; ++p) {
      if (w.mask[static_cast<std::size_t>(p)] == Mask::attend) seen[static_cast<std::size_t>(p)] = true;
    }
  }
  return seen;
}
}  // namespace

UpdateCensus simulate_census(std::span<const EncodedWindow> windows, int capacity,
                             const TrainConfig& config) {
  UpdateCensus census = UpdateCensus::empty(capacity);
  walk_schedule(windows, config, [&](const StepBatch& b) { census.record(attended_positions(b, capacity)); });
  return census;
}

// -- training ----------------------------------------------------------------

TrainResult train(const TrainConfig& config, const ModelConfig& model,
                  std::span<const EncodedWindow> train_windows, const EvalSet* validation,
                  const StepObserver& observer) {
  config.validate();
  model.validate();
  TrainResult result{ModelParams::initialize(model, config.seed), {}, UpdateCensus::empty(model.capacity), {}};
  ModelParams params = result.best;
  AdamState state = AdamState::zeros(model);
  Gradients grads = ModelParams::zeros(model);

  std::int64_t total_steps = 0;
  {
    std::size_t trainable = 0;
    for (const auto& w : train_windows) trainable += w.gold.empty() ? 0 : 1;
    const auto batch = static_cast<std::size_t>(config.batch_size);
    total_steps = static_cast<std::int64_t>((trainable + batch - 1) / batch) * config.epochs;
  }

  EvalOptions eval_options;
  eval_options.max_answer_tokens = config.max_answer_tokens;
  double loss_sum = 0.0;
  std::int64_t loss_steps = 0;

  walk_schedule(
      train_windows, config,
      [&](const StepBatch& batch) {
        grads.set_zero();
        const double scale = 1.0 / static_cast<double>(batch.inputs.size());
        double loss = 0.0;
        for (const auto& w : batch.inputs) {
          loss += scale * accumulate_gradients(params, w, w.gold.front(), scale, grads);
        }
        result.census.record(attended_positions(batch, model.capacity));
        if (observer) observer(batch, grads);
        adam_step(params, grads, state, config.adam);
        loss_sum += loss;
        ++loss_steps;

        if (batch.step % config.eval_every == 0 || batch.step == total_steps) {
          EvalPoint point{batch.step, batch.epoch, loss_sum / static_cast<double>(loss_steps), 0.0, 0.0};
          loss_sum = 0.0;
          loss_steps = 0;
          if (validation) {
            const EvalReport report = evaluate(params, *validation, eval_options);
            point.val_f1 = report.f1;
            point.val_em = report.em;
            if (result.log.best_step < 0 || report.f1 > result.log.best_f1) {
              result.log.best_step = batch.step;
              result.log.best_f1 = report.f1;
              result.best = params;
            }
          }
          result.log.points.push_back(point);
        }
      },
      [&](int, std::uint64_t hash) { result.log.epoch_order_hashes.push_back(hash); });

  result.log.total_steps = total_steps;
  if (!validation) {
    result.best = params;
    result.log.best_step = total_steps;
  }
  result.last = std::move(params);
  return result;
}

}  // namespace randpad
