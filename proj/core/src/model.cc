// Copyright 2026 The randpad Authors
// SPDX-License-Identifier: Apache-2.0

#include "randpad/model.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "randpad/rng.h"

namespace randpad {

void ModelConfig::validate() const {
  if (layers < 1 || heads < 1 || hidden < 1 || ffn < 1 || capacity < 4 ||
      vocab_size < kReservedTokens) {
    throw std::invalid_argument("model config: sizes must be positive (capacity >= 4)");
  }
  if (hidden % heads != 0) throw std::invalid_argument("model config: hidden not divisible by heads");
  if (!(init_std >= 0.0) || !(ln_eps > 0.0)) throw std::invalid_argument("model config: bad init_std/ln_eps");
}

// -- parameters --------------------------------------------------------------

ModelParams ModelParams::zeros(const ModelConfig& config) {
  config.validate();
  const int h = config.hidden;
  const int f = config.ffn;
  auto z = [](int r, int c) { return Matrix::Zero(r, c); };
  ModelParams p;
  p.config = config;
  p.token_embedding = z(config.vocab_size, h);
  p.position_embedding = z(config.capacity, h);
  p.layers.resize(static_cast<std::size_t>(config.layers));
  for (auto& l : p.layers) {
    l.ln1_gain = z(1, h);
    l.ln1_bias = z(1, h);
    l.wq = z(h, h);
    l.bq = z(1, h);
    l.wk = z(h, h);
    l.bk = z(1, h);
    l.wv = z(h, h);
    l.bv = z(1, h);
    l.wo = z(h, h);
    l.bo = z(1, h);
    l.ln2_gain = z(1, h);
    l.ln2_bias = z(1, h);
    l.w1 = z(h, f);
    l.b1 = z(1, f);
    l.w2 = z(f, h);
    l.b2 = z(1, h);
  }
  p.final_gain = z(1, h);
  p.final_bias = z(1, h);
  p.start_vector = z(1, h);
  p.end_vector = z(1, h);
  return p;
}

ModelParams ModelParams::initialize(const ModelConfig& config, std::uint64_t seed) {
  ModelParams p = zeros(config);
  std::uint64_t index = 0;
  auto normal_fill = [&](Matrix& m) {
    Rng rng = make_stream(seed, {stream_tag::kInit, index});
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = config.init_std * standard_normal(rng);
  };
  for (auto& t : p.tensors()) {
    const auto& n = t.name;
    const bool gain = n.ends_with("gain");
    const bool weight = n.starts_with("embeddings.") || n.ends_with(".wq") || n.ends_with(".wk") ||
                        n.ends_with(".wv") || n.ends_with(".wo") || n.ends_with(".w1") ||
                        n.ends_with(".w2");
    if (gain) {
      t.value->setOnes();
    } else if (weight) {
      normal_fill(*t.value);
    }
    ++index;
  }
  return p;
}

namespace {
template <typename Self, typename M>
std::vector<NamedTensor<M>> collect(Self& p) {
  std::vector<NamedTensor<M>> out;
  out.push_back({"embeddings.token", &p.token_embedding});
  out.push_back({"embeddings.position", &p.position_embedding});
  for (std::size_t i = 0; i < p.layers.size(); ++i) {
    auto& l = p.layers[i];
    const std::string pre = "layers." + std::to_string(i) + ".";
    out.push_back({pre + "ln1.gain", &l.ln1_gain});
    out.push_back({pre + "ln1.bias", &l.ln1_bias});
    out.push_back({pre + "attention.wq", &l.wq});
    out.push_back({pre + "attention.bq", &l.bq});
    out.push_back({pre + "attention.wk", &l.wk});
    out.push_back({pre + "attention.bk", &l.bk});
    out.push_back({pre + "attention.wv", &l.wv});
    out.push_back({pre + "attention.bv", &l.bv});
    out.push_back({pre + "attention.wo", &l.wo});
    out.push_back({pre + "attention.bo", &l.bo});
    out.push_back({pre + "ln2.gain", &l.ln2_gain});
    out.push_back({pre + "ln2.bias", &l.ln2_bias});
    out.push_back({pre + "ffn.w1", &l.w1});
    out.push_back({pre + "ffn.b1", &l.b1});
    out.push_back({pre + "ffn.w2", &l.w2});
    out.push_back({pre + "ffn.b2", &l.b2});
  }
  out.push_back({"final_ln.gain", &p.final_gain});
  out.push_back({"final_ln.bias", &p.final_bias});
  out.push_back({"head.start", &p.start_vector});
  out.push_back({"head.end", &p.end_vector});
  return out;
}
}  // namespace

std::vector<NamedTensor<Matrix>> ModelParams::tensors() { return collect<ModelParams, Matrix>(*this); }

std::vector<NamedTensor<const Matrix>> ModelParams::tensors() const {
  return collect<const ModelParams, const Matrix>(*this);
}

std::size_t ModelParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto& t : tensors()) n += static_cast<std::size_t>(t.value->size());
  return n;
}

void ModelParams::set_zero() {
  for (auto& t : tensors()) t.value->setZero();
}

bool ModelParams::all_finite() const {
  for (const auto& t : tensors()) {
    if (!t.value->allFinite()) return false;
  }
  return true;
}

bool operator==(const ModelParams& a, const ModelParams& b) {
  if (!(a.config == b.config)) return false;
  auto ta = a.tensors();
  auto tb = b.tensors();
  if (ta.size() != tb.size()) return false;
  for (std::size_t i = 0; i < ta.size(); ++i) {
    if (ta[i].value->rows() != tb[i].value->rows() || ta[i].value->cols() != tb[i].value->cols() ||
        *ta[i].value != *tb[i].value) {
      return false;
    }
  }
  return true;
}

// -- forward -----------------------------------------------------------------

namespace {

constexpr double kGeluScale = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluCubic = 0.044715;

void layer_norm(const Matrix& x, const Matrix& gain, const Matrix& bias, double eps,
                Matrix& x_hat, Vector& rstd, Matrix& y) {
  const double inv_h = 1.0 / static_cast<double>(x.cols());
  const Vector mean = x.rowwise().sum() * inv_h;
  x_hat = x.colwise() - mean;
  rstd = ((x_hat.array().square().rowwise().sum() * inv_h) + eps).rsqrt().matrix();
  x_hat.array().colwise() *= rstd.array();
  y = (x_hat.array().rowwise() * gain.row(0).array()).rowwise() + bias.row(0).array();
}

// Returns dx; accumulates the gain/bias gradients.
Matrix layer_norm_backward(const Matrix& dy, const Matrix& x_hat, const Vector& rstd,
                           const Matrix& gain, Matrix& dgain, Matrix& dbias) {
  dgain += (dy.array() * x_hat.array()).colwise().sum().matrix();
  dbias += dy.colwise().sum();
  Matrix dxhat = (dy.array().rowwise() * gain.row(0).array()).matrix();
  Matrix dx(dy.rows(), dy.cols());
  const double inv_h = 1.0 / static_cast<double>(dy.cols());
  for (Eigen::Index r = 0; r < dy.rows(); ++r) {
    const double mean_d = dxhat.row(r).sum() * inv_h;
    const double mean_dx = dxhat.row(r).dot(x_hat.row(r)) * inv_h;
    dx.row(r) = rstd(r) * (dxhat.row(r).array() - mean_d - x_hat.row(r).array() * mean_dx).matrix();
  }
  return dx;
}

// t = tanh(sqrt(2/pi) (z + 0.044715 z^3)), written as 1 - 2 / (exp(2u) + 1)
// because Eigen vectorizes exp() but not tanh() for double.
void gelu_tanh(const Matrix& z, Matrix& t) {
  t.resize(z.rows(), z.cols());
  t.array() = (2.0 * kGeluScale) * (z.array() + kGeluCubic * z.array().cube());
  t.array() = 1.0 - 2.0 / (t.array().exp() + 1.0);
}

void gelu(const Matrix& z, Matrix& g) {
  gelu_tanh(z, g);
  g.array() = 0.5 * z.array() * (1.0 + g.array());
}

Matrix gelu_backward(const Matrix& dg, const Matrix& z) {
  Matrix t;
  gelu_tanh(z, t);
  Matrix out(z.rows(), z.cols());
  out.array() = dg.array() * (0.5 * (1.0 + t.array()) +
                              0.5 * z.array() * (1.0 - t.array().square()) * kGeluScale *
                                  (1.0 + 3.0 * kGeluCubic * z.array().square()));
  return out;
}

void softmax_rows(Matrix& s) {
  const Vector mx = s.rowwise().maxCoeff();
  s.array().colwise() -= mx.array();
  s.array() = s.array().exp();
  const Vector inv = s.rowwise().sum().cwiseInverse();
  s.array().colwise() *= inv.array();
}

Vector softmax(const Vector& v) {
  const double mx = v.maxCoeff();
  Vector e = (v.array() - mx).exp().matrix();
  return e / e.sum();
}

double log_sum_exp(const Vector& v) {
  const double mx = v.maxCoeff();
  return mx + std::log((v.array() - mx).exp().sum());
}

void check_shapes(const ModelParams& params, const EncodedWindow& window) {
  const auto& cfg = params.config;
  if (window.capacity() != cfg.capacity) {
    throw std::invalid_argument("window length " + std::to_string(window.capacity()) +
                                " does not match model capacity " + std::to_string(cfg.capacity));
  }
  if (window.mask.size() != window.ids.size()) throw std::invalid_argument("mask length mismatch");
  if (params.token_embedding.rows() != cfg.vocab_size ||
      params.position_embedding.rows() != cfg.capacity ||
      static_cast<int>(params.layers.size()) != cfg.layers) {
    throw std::invalid_argument("parameters do not match their config");
  }
  if (window.context_tokens < 1) throw std::invalid_argument("window has no context tokens");
}

struct Attended {
  std::vector<int> ids;
  std::vector<int> positions;
  int context_row = 0;
};

Attended gather_attended(const ModelParams& params, const EncodedWindow& window) {
  check_shapes(params, window);
  Attended at;
  at.ids.reserve(static_cast<std::size_t>(window.non_pad()));
  at.positions.reserve(static_cast<std::size_t>(window.non_pad()));
  for (int i = 0; i < window.capacity(); ++i) {
    if (window.mask[static_cast<std::size_t>(i)] != Mask::attend) continue;
    const int id = window.ids[static_cast<std::size_t>(i)];
    if (id < 0 || id >= params.config.vocab_size) {
      throw std::invalid_argument("token id " + std::to_string(id) + " outside vocabulary");
    }
    at.ids.push_back(id);
    at.positions.push_back(i);
  }
  const int m = static_cast<int>(at.ids.size());
  if (m != window.non_pad()) {
    throw std::invalid_argument("mask attends " + std::to_string(m) + " tokens, layout has " +
                                std::to_string(window.non_pad()));
  }
  at.context_row = window.question_tokens + 2;
  if (at.positions[static_cast<std::size_t>(at.context_row)] != window.context_begin()) {
    throw std::invalid_argument("mask does not match the window layout");
  }
  return at;
}

}  // namespace

ForwardTrace forward_trace(const ModelParams& params, const EncodedWindow& window) {
  const auto& cfg = params.config;
  ForwardTrace tr;
  {
    Attended at = gather_attended(params, window);
    tr.ids = std::move(at.ids);
    tr.positions = std::move(at.positions);
    tr.context_row = at.context_row;
  }
  const int m = static_cast<int>(tr.ids.size());

  const int h = cfg.hidden;
  const int dh = cfg.head_dim();
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  Matrix x(m, h);
  for (int r = 0; r < m; ++r) {
    x.row(r) = params.token_embedding.row(tr.ids[static_cast<std::size_t>(r)]) +
               params.position_embedding.row(tr.positions[static_cast<std::size_t>(r)]);
  }

  tr.layers.resize(params.layers.size());
  for (std::size_t li = 0; li < params.layers.size(); ++li) {
    const auto& p = params.layers[li];
    auto& lt = tr.layers[li];
    lt.x_in = x;
    layer_norm(lt.x_in, p.ln1_gain, p.ln1_bias, cfg.ln_eps, lt.a_hat, lt.a_rstd, lt.a);
    lt.q.noalias() = lt.a * p.wq;
    lt.q.rowwise() += p.bq.row(0);
    lt.k.noalias() = lt.a * p.wk;
    lt.k.rowwise() += p.bk.row(0);
    lt.v.noalias() = lt.a * p.wv;
    lt.v.rowwise() += p.bv.row(0);
    lt.ctx.resize(m, h);
    lt.probs.resize(static_cast<std::size_t>(cfg.heads));
    for (int hd = 0; hd < cfg.heads; ++hd) {
      auto& probs = lt.probs[static_cast<std::size_t>(hd)];
      probs.noalias() = scale * (lt.q.middleCols(hd * dh, dh) * lt.k.middleCols(hd * dh, dh).transpose());
      softmax_rows(probs);
      lt.ctx.middleCols(hd * dh, dh).noalias() = probs * lt.v.middleCols(hd * dh, dh);
    }
    lt.x_mid = lt.x_in;
    lt.x_mid.noalias() += lt.ctx * p.wo;
    lt.x_mid.rowwise() += p.bo.row(0);
    layer_norm(lt.x_mid, p.ln2_gain, p.ln2_bias, cfg.ln_eps, lt.b_hat, lt.b_rstd, lt.b);
    lt.z.noalias() = lt.b * p.w1;
    lt.z.rowwise() += p.b1.row(0);
    gelu(lt.z, lt.g);
    x = lt.x_mid;
    x.noalias() += lt.g * p.w2;
    x.rowwise() += p.b2.row(0);
  }
  tr.x_out = x;

  auto& out = tr.logits;
  layer_norm(tr.x_out, params.final_gain, params.final_bias, cfg.ln_eps, tr.t_hat, tr.t_rstd,
             out.representations);
  out.positions = tr.positions;
  out.context_begin = window.context_begin();
  auto ctx_rows = out.representations.middleRows(tr.context_row, window.context_tokens);
  out.start = ctx_rows * params.start_vector.row(0).transpose();
  out.end = ctx_rows * params.end_vector.row(0).transpose();
  return tr;
}

SpanLogits forward(const ModelParams& params, const EncodedWindow& window) {
  return std::move(forward_trace(params, window).logits);
}

// -- batched forward ----------------------------------------------------------

namespace {

// Parses "layers.<l>.<part>" into (l, part).
std::pair<int, std::string_view> layer_part(std::string_view name) {
  const auto rest = name.substr(7);
  const auto dot = rest.find('.');
  return {std::stoi(std::string(rest.substr(0, dot))), rest.substr(dot + 1)};
}

}  // namespace

BatchForward::BatchForward(const ModelParams& params, std::span<const EncodedWindow> windows)
    : base_(params) {
  if (windows.empty()) throw std::invalid_argument("BatchForward needs at least one window");
  row_begin_.push_back(0);
  for (const auto& w : windows) {
    Attended at = gather_attended(params, w);
    ids_.insert(ids_.end(), at.ids.begin(), at.ids.end());
    positions_.insert(positions_.end(), at.positions.begin(), at.positions.end());
    context_row_.push_back(at.context_row);
    context_tokens_.push_back(w.context_tokens);
    context_begin_.push_back(w.context_begin());
    has_gold_.push_back(!w.gold.empty());
    gold_.push_back(w.gold.empty() ? TokenSpan{} : w.gold.front());
    longest_ = std::max(longest_, static_cast<int>(at.ids.size()));
    row_begin_.push_back(static_cast<int>(ids_.size()));
  }
  cache_.resize(static_cast<std::size_t>(2 * params.config.layers));
  Matrix x = embed(params);
  for (int l = 0; l < params.config.layers; ++l) {
    attention_block(params, l, x, &cache_[static_cast<std::size_t>(2 * l)]);
    ffn_block(params, l, x, &cache_[static_cast<std::size_t>(2 * l + 1)]);
  }
}

int BatchForward::stage_of(std::string_view name) const {
  if (name.starts_with("embeddings.")) return 0;
  if (name.starts_with("layers.")) {
    const auto [layer, part] = layer_part(name);
    const bool attention = part.starts_with("ln1.") || part.starts_with("attention.");
    return (attention ? 1 : 2) + 2 * layer;
  }
  if (name.starts_with("final_ln.") || name.starts_with("head.")) return stage_count() - 1;
  throw std::invalid_argument("unknown tensor " + std::string(name));
}

Matrix BatchForward::embed(const ModelParams& params) const {
  const int rows = row_begin_.back();
  Matrix x(rows, params.config.hidden);
  for (int r = 0; r < rows; ++r) {
    x.row(r) = params.token_embedding.row(ids_[static_cast<std::size_t>(r)]) +
               params.position_embedding.row(positions_[static_cast<std::size_t>(r)]);
  }
  return x;
}

void BatchForward::attention_block(const ModelParams& params, int layer, Matrix& x,
                                   StageCache* keep) const {
  const auto& cfg = params.config;
  const auto& p = params.layers[static_cast<std::size_t>(layer)];
  const int dh = cfg.head_dim();
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  Matrix x_hat, y, q, k, v, ctx(x.rows(), x.cols()), scores(longest_, longest_);
  Vector rstd;
  layer_norm(x, p.ln1_gain, p.ln1_bias, cfg.ln_eps, x_hat, rstd, y);
  q.noalias() = y * p.wq;
  q.rowwise() += p.bq.row(0);
  k.noalias() = y * p.wk;
  k.rowwise() += p.bk.row(0);
  v.noalias() = y * p.wv;
  v.rowwise() += p.bv.row(0);
  if (keep) {
    keep->x_in = x;
    keep->probs.resize(static_cast<std::size_t>(windows() * cfg.heads));
  }
  for (int w = 0; w < windows(); ++w) {
    const int b = row_begin_[static_cast<std::size_t>(w)];
    const int m = row_begin_[static_cast<std::size_t>(w) + 1] - b;
    for (int hd = 0; hd < cfg.heads; ++hd) {
      // Windows are short; coefficient-based products avoid GEMM setup cost.
      auto sc = scores.topLeftCorner(m, m);
      sc.noalias() = scale * q.block(b, hd * dh, m, dh).lazyProduct(k.block(b, hd * dh, m, dh).transpose());
      sc.array().colwise() -= sc.rowwise().maxCoeff().array();
      sc.array() = sc.array().exp();
      sc.array().colwise() /= sc.rowwise().sum().array();
      ctx.block(b, hd * dh, m, dh).noalias() = sc * v.block(b, hd * dh, m, dh);
      if (keep) keep->probs[static_cast<std::size_t>(w * cfg.heads + hd)] = sc;
    }
  }
  x.noalias() += ctx * p.wo;
  x.rowwise() += p.bo.row(0);
  if (keep) {
    keep->y = std::move(y);
    keep->q = std::move(q);
    keep->k = std::move(k);
    keep->v = std::move(v);
    keep->ctx = std::move(ctx);
    keep->x_out = x;
  }
}

void BatchForward::ffn_block(const ModelParams& params, int layer, Matrix& x, StageCache* keep) const {
  const auto& p = params.layers[static_cast<std::size_t>(layer)];
  Matrix x_hat, y, z, g;
  Vector rstd;
  if (keep) keep->x_in = x;
  layer_norm(x, p.ln2_gain, p.ln2_bias, params.config.ln_eps, x_hat, rstd, y);
  z.noalias() = y * p.w1;
  z.rowwise() += p.b1.row(0);
  gelu(z, g);
  x.noalias() += g * p.w2;
  x.rowwise() += p.b2.row(0);
  if (keep) {
    keep->y = std::move(y);
    keep->z = std::move(z);
    keep->g = std::move(g);
    keep->x_out = x;
  }
}

Matrix BatchForward::input_of(int stage) const {
  if (stage < 1 || stage >= stage_count()) throw std::out_of_range("stage out of range");
  return stage == stage_count() - 1 ? cache_.back().x_out : cache_[static_cast<std::size_t>(stage - 1)].x_in;
}

Matrix BatchForward::propagate(const ModelParams& params, int from_stage, Matrix x) const {
  const int last = stage_count() - 1;
  for (int stage = std::max(from_stage, 1); stage < last; ++stage) {
    if (stage % 2 == 1) {
      attention_block(params, (stage - 1) / 2, x, nullptr);
    } else {
      ffn_block(params, (stage - 1) / 2, x, nullptr);
    }
  }
  Matrix x_hat, t;
  Vector rstd;
  layer_norm(x, params.final_gain, params.final_bias, params.config.ln_eps, x_hat, rstd, t);
  return t;
}

std::vector<SpanLogits> BatchForward::logits(const ModelParams& params, int from_stage) const {
  const Matrix t = propagate(params, from_stage, from_stage == 0 ? embed(params) : input_of(from_stage));
  std::vector<SpanLogits> out(static_cast<std::size_t>(windows()));
  for (std::size_t w = 0; w < out.size(); ++w) {
    const int b = row_begin_[w];
    const int m = row_begin_[w + 1] - b;
    auto& lg = out[w];
    lg.representations = t.middleRows(b, m);
    lg.positions.assign(positions_.begin() + b, positions_.begin() + b + m);
    lg.context_begin = context_begin_[w];
    const auto ctx_rows = lg.representations.middleRows(context_row_[w], context_tokens_[w]);
    lg.start = ctx_rows * params.start_vector.row(0).transpose();
    lg.end = ctx_rows * params.end_vector.row(0).transpose();
  }
  return out;
}

std::vector<double> BatchForward::head_losses(const ModelParams& params, const Matrix& t) const {
  std::vector<double> out(static_cast<std::size_t>(windows()), std::numeric_limits<double>::quiet_NaN());
  for (std::size_t w = 0; w < out.size(); ++w) {
    if (!has_gold_[w]) continue;
    const auto ctx_rows = t.middleRows(row_begin_[w] + context_row_[w], context_tokens_[w]);
    SpanLogits lg;
    lg.context_begin = context_begin_[w];
    lg.start = ctx_rows * params.start_vector.row(0).transpose();
    lg.end = ctx_rows * params.end_vector.row(0).transpose();
    out[w] = span_loss(lg, gold_[w]);
  }
  return out;
}

std::vector<double> BatchForward::losses(const ModelParams& params, int from_stage) const {
  return head_losses(params, propagate(params, from_stage,
                                       from_stage == 0 ? embed(params) : input_of(from_stage)));
}

std::vector<double> BatchForward::losses_after_change(const ModelParams& changed,
                                                      std::string_view tensor, int row,
                                                      int col) const {
  const int stage = stage_of(tensor);
  if (stage == 0 || stage == stage_count() - 1) return losses(changed, stage);
  const auto [layer, part] = layer_part(tensor);
  const auto& c = cache_[static_cast<std::size_t>(stage - 1)];
  const auto& p = changed.layers[static_cast<std::size_t>(layer)];
  const auto& base = base_.layers[static_cast<std::size_t>(layer)];
  const int heads = changed.config.heads;
  const int dh = changed.config.head_dim();
  Matrix x = c.x_out;

  if (part == "attention.wq" || part == "attention.bq" || part == "attention.wk" ||
      part == "attention.bk") {
    // One column of q or k moves: only that head's attention changes.
    const bool is_q = part.back() == 'q';
    const int hd = col / dh;
    Matrix qh = c.q.middleCols(hd * dh, dh);
    Matrix kh = c.k.middleCols(hd * dh, dh);
    const Matrix& w = is_q ? p.wq : p.wk;
    const Matrix& b = is_q ? p.bq : p.bk;
    Vector fresh = c.y * w.col(col);
    fresh.array() += b(0, col);
    (is_q ? qh : kh).col(col - hd * dh) = fresh;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    Matrix dctx(x.rows(), dh);
    Matrix sc;
    for (int wi = 0; wi < windows(); ++wi) {
      const int r0 = row_begin_[static_cast<std::size_t>(wi)];
      const int m = row_begin_[static_cast<std::size_t>(wi) + 1] - r0;
      sc.noalias() = scale * qh.middleRows(r0, m).lazyProduct(kh.middleRows(r0, m).transpose());
      sc.array().colwise() -= sc.rowwise().maxCoeff().array();
      sc.array() = sc.array().exp();
      sc.array().colwise() /= sc.rowwise().sum().array();
      dctx.middleRows(r0, m).noalias() = sc * c.v.block(r0, hd * dh, m, dh);
    }
    dctx -= c.ctx.middleCols(hd * dh, dh);
    x.noalias() += dctx * p.wo.middleRows(hd * dh, dh);
  } else if (part == "attention.wv" || part == "attention.bv") {
    // One column of v moves: ctx changes in that column only.
    const int hd = col / dh;
    Vector dv = c.y * p.wv.col(col);
    dv.array() += p.bv(0, col);
    dv -= c.v.col(col);
    Vector dctx(x.rows());
    for (int wi = 0; wi < windows(); ++wi) {
      const int r0 = row_begin_[static_cast<std::size_t>(wi)];
      const int m = row_begin_[static_cast<std::size_t>(wi) + 1] - r0;
      dctx.segment(r0, m).noalias() =
          c.probs[static_cast<std::size_t>(wi * heads + hd)] * dv.segment(r0, m);
    }
    x.noalias() += dctx * p.wo.row(col);
  } else if (part == "attention.wo") {
    x.col(col) += c.ctx.col(row) * (p.wo(row, col) - base.wo(row, col));
  } else if (part == "attention.bo") {
    x.col(col).array() += p.bo(0, col) - base.bo(0, col);
  } else if (part == "ffn.w1" || part == "ffn.b1") {
    // One hidden unit moves.
    Matrix z = c.y * p.w1.col(col);
    z.array() += p.b1(0, col);
    Matrix g;
    gelu(z, g);
    x.noalias() += (g.col(0) - c.g.col(col)) * p.w2.row(col);
  } else if (part == "ffn.w2") {
    x.col(col) += c.g.col(row) * (p.w2(row, col) - base.w2(row, col));
  } else if (part == "ffn.b2") {
    x.col(col).array() += p.b2(0, col) - base.b2(0, col);
  } else {
    x = c.x_in;
    if (stage % 2 == 1) {
      attention_block(changed, layer, x, nullptr);
    } else {
      ffn_block(changed, layer, x, nullptr);
    }
  }
  return head_losses(changed, propagate(changed, stage + 1, std::move(x)));
}

double span_score(const SpanLogits& logits, int s, int e) {
  const int first = logits.context_begin;
  const int last = logits.context_begin + logits.context_tokens() - 1;
  if (s < first || e < s || e > last) {
    throw std::out_of_range("span (" + std::to_string(s) + "," + std::to_string(e) +
                            ") outside context [" + std::to_string(first) + "," +
                            std::to_string(last) + "]");
  }
  return logits.start(s - first) + logits.end(e - first);
}

Vector start_probabilities(const SpanLogits& logits) { return softmax(logits.start); }
Vector end_probabilities(const SpanLogits& logits) { return softmax(logits.end); }

double span_loss(const SpanLogits& logits, TokenSpan gold) {
  span_score(logits, gold.start, gold.end);  // range check
  const int s = gold.start - logits.context_begin;
  const int e = gold.end - logits.context_begin;
  const double nll_start = log_sum_exp(logits.start) - logits.start(s);
  const double nll_end = log_sum_exp(logits.end) - logits.end(e);
  return 0.5 * (nll_start + nll_end);
}

std::optional<double> window_loss(const SpanLogits& logits, const EncodedWindow& window) {
  if (window.gold.empty()) return std::nullopt;
  return span_loss(logits, window.gold.front());
}

// -- backward ----------------------------------------------------------------

double accumulate_gradients(const ModelParams& params, const EncodedWindow& window,
                            TokenSpan gold, double scale, Gradients& grads) {
  const ForwardTrace tr = forward_trace(params, window);
  const auto& cfg = params.config;
  const auto& lg = tr.logits;
  const double loss = span_loss(lg, gold);
  const int mc = lg.context_tokens();
  const int m = static_cast<int>(tr.ids.size());
  const int dh = cfg.head_dim();
  const double att_scale = 1.0 / std::sqrt(static_cast<double>(dh));

  Vector d_start = softmax(lg.start);
  Vector d_end = softmax(lg.end);
  d_start(gold.start - lg.context_begin) -= 1.0;
  d_end(gold.end - lg.context_begin) -= 1.0;
  d_start *= 0.5 * scale;
  d_end *= 0.5 * scale;

  const auto ctx_rows = lg.representations.middleRows(tr.context_row, mc);
  grads.start_vector.row(0) += d_start.transpose() * ctx_rows;
  grads.end_vector.row(0) += d_end.transpose() * ctx_rows;

  Matrix d_t = Matrix::Zero(m, cfg.hidden);
  d_t.middleRows(tr.context_row, mc).noalias() =
      d_start * params.start_vector.row(0) + d_end * params.end_vector.row(0);
  Matrix dx = layer_norm_backward(d_t, tr.t_hat, tr.t_rstd, params.final_gain, grads.final_gain,
                                  grads.final_bias);

  for (std::size_t li = params.layers.size(); li-- > 0;) {
    const auto& p = params.layers[li];
    const auto& lt = tr.layers[li];
    auto& gl = grads.layers[li];

    // x_out = x_mid + gelu(LN2(x_mid) W1 + b1) W2 + b2
    gl.w2.noalias() += lt.g.transpose() * dx;
    gl.b2 += dx.colwise().sum();
    Matrix dg = dx * p.w2.transpose();
    Matrix dz = gelu_backward(dg, lt.z);
    gl.w1.noalias() += lt.b.transpose() * dz;
    gl.b1 += dz.colwise().sum();
    Matrix db = dz * p.w1.transpose();
    Matrix dx_mid = dx + layer_norm_backward(db, lt.b_hat, lt.b_rstd, p.ln2_gain, gl.ln2_gain, gl.ln2_bias);

    // x_mid = x_in + Attention(LN1(x_in)) Wo + bo
    gl.wo.noalias() += lt.ctx.transpose() * dx_mid;
    gl.bo += dx_mid.colwise().sum();
    Matrix dctx = dx_mid * p.wo.transpose();
    Matrix dq(m, cfg.hidden), dk(m, cfg.hidden), dv(m, cfg.hidden);
    for (int hd = 0; hd < cfg.heads; ++hd) {
      const auto& probs = lt.probs[static_cast<std::size_t>(hd)];
      auto dctx_h = dctx.middleCols(hd * dh, dh);
      Matrix dp = dctx_h * lt.v.middleCols(hd * dh, dh).transpose();
      dv.middleCols(hd * dh, dh).noalias() = probs.transpose() * dctx_h;
      Vector row_dot = (dp.array() * probs.array()).rowwise().sum();
      Matrix ds = (probs.array() * (dp.array().colwise() - row_dot.array())).matrix() * att_scale;
      dq.middleCols(hd * dh, dh).noalias() = ds * lt.k.middleCols(hd * dh, dh);
      dk.middleCols(hd * dh, dh).noalias() = ds.transpose() * lt.q.middleCols(hd * dh, dh);
    }
    gl.wq.noalias() += lt.a.transpose() * dq;
    gl.bq += dq.colwise().sum();
    gl.wk.noalias() += lt.a.transpose() * dk;
    gl.bk += dk.colwise().sum();
    gl.wv.noalias() += lt.a.transpose() * dv;
    gl.bv += dv.colwise().sum();
    Matrix da = dq * p.wq.transpose();
    da.noalias() += dk * p.wk.transpose();
    da.noalias() += dv * p.wv.transpose();
    dx = dx_mid + layer_norm_backward(da, lt.a_hat, lt.a_rstd, p.ln1_gain, gl.ln1_gain, gl.ln1_bias);
  }

  for (int r = 0; r < m; ++r) {
    grads.token_embedding.row(tr.ids[static_cast<std::size_t>(r)]) += dx.row(r);
    grads.position_embedding.row(tr.positions[static_cast<std::size_t>(r)]) += dx.row(r);
  }
  return loss;
}

Gradients backward(const ModelParams& params, const EncodedWindow& window, TokenSpan gold) {
  Gradients grads = ModelParams::zeros(params.config);
  accumulate_gradients(params, window, gold, 1.0, grads);
  return grads;
}

}  // namespace randpad
