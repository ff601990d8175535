// Copyright 2026 The randpad Authors
// SPDX-License-Identifier: Apache-2.0

#include "oracles.h"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>
#include <string_view>
#include <tuple>

namespace randpad::testing {

namespace {
constexpr std::string_view kPunctuation = "!\"#$%&'()*+,-./:;<=>?@[\\]^_`{|}~";
}

std::vector<std::string> oracle_tokens(const std::string& text) {
  std::string cleaned;
  for (char c : text) {
    if (kPunctuation.find(c) != std::string_view::npos) continue;
    cleaned += (c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : c;
  }
  std::istringstream in(cleaned);
  std::vector<std::string> out;
  std::string w;
  while (in >> w) out.push_back(w);
  return out;
}

double oracle_f1(const std::string& prediction, const std::vector<std::string>& golds) {
  auto pred = oracle_tokens(prediction);
  std::sort(pred.begin(), pred.end());
  double best = 0.0;
  for (const auto& g : golds) {
    auto gold = oracle_tokens(g);
    std::sort(gold.begin(), gold.end());
    std::vector<std::string> common;
    std::set_intersection(pred.begin(), pred.end(), gold.begin(), gold.end(), std::back_inserter(common));
    if (common.empty()) continue;
    const double precision = static_cast<double>(common.size()) / static_cast<double>(pred.size());
    const double recall = static_cast<double>(common.size()) / static_cast<double>(gold.size());
    best = std::max(best, 100.0 * 2.0 * precision * recall / (precision + recall));
  }
  return best;
}

double oracle_em(const std::string& prediction, const std::vector<std::string>& golds) {
  const auto pred = oracle_tokens(prediction);
  for (const auto& g : golds) {
    if (oracle_tokens(g) == pred) return 100.0;
  }
  return 0.0;
}

std::string random_phrase(Rng& rng) {
  static const char* kWords[] = {"steel", "from", "molten", "pig", "iron", "the", "a", "Lady", "Penelope", "go",
                                 "Thunderbirds", "are", "x", "y"};
  static const char* kGlue[] = {" ", "  ", ", ", ". ", " - ", "\t", "'s ", " ("};
  const int n = static_cast<int>(uniform_int(rng, 0, 6));
  std::string out;
  if (uniform_int(rng, 0, 4) == 0) out += ' ';
  for (int i = 0; i < n; ++i) {
    if (i > 0) out += kGlue[uniform_int(rng, 0, 7)];
    std::string w = kWords[uniform_int(rng, 0, 13)];
    if (uniform_int(rng, 0, 3) == 0) {
      for (auto& c : w) c = static_cast<char>(c >= 'a' && c <= 'z' ? c - 'a' + 'A' : c);
    }
    out += w;
  }
  if (uniform_int(rng, 0, 3) == 0) out += ".";
  return out;
}

SpanChoice oracle_decode(const SpanLogits& logits, int max_answer_tokens) {
  const int mc = static_cast<int>(logits.start.size());
  std::vector<std::tuple<double, int, int>> all;
  for (int s = 0; s < mc; ++s) {
    for (int e = 0; e < mc; ++e) {
      if (e < s || e - s + 1 > max_answer_tokens) continue;
      all.emplace_back(logits.start(s) + logits.end(e), s, e);
    }
  }
  const auto best = std::min_element(all.begin(), all.end(), [](const auto& a, const auto& b) {
    if (std::get<0>(a) != std::get<0>(b)) return std::get<0>(a) > std::get<0>(b);
    return std::make_pair(std::get<1>(a), std::get<2>(a)) < std::make_pair(std::get<1>(b), std::get<2>(b));
  });
  return {std::get<1>(*best) + logits.context_begin, std::get<2>(*best) + logits.context_begin, std::get<0>(*best)};
}

SpanLogits random_logits(Rng& rng, int context_tokens, int context_begin, bool coarse) {
  SpanLogits l;
  l.start.resize(context_tokens);
  l.end.resize(context_tokens);
  l.context_begin = context_begin;
  for (int i = 0; i < context_tokens; ++i) {
    l.start(i) = coarse ? static_cast<double>(uniform_int(rng, -2, 2)) : standard_normal(rng);
    l.end(i) = coarse ? static_cast<double>(uniform_int(rng, -2, 2)) : standard_normal(rng);
  }
  return l;
}

EncodedWindow random_window(Rng& rng, int capacity, int vocab, int max_question, int max_context) {
  const int mq = static_cast<int>(uniform_int(rng, 1, std::min(max_question, capacity - 4)));
  const int mc = static_cast<int>(uniform_int(rng, 1, std::min(max_context, capacity - mq - 3)));
  EncodedWindow w;
  w.example_id = "w";
  w.question_tokens = mq;
  w.context_tokens = mc;
  w.ids.assign(static_cast<std::size_t>(capacity), kPadId);
  w.mask.assign(static_cast<std::size_t>(capacity), Mask::ignore);
  const int m = mq + mc + 3;
  for (int i = 0; i < m; ++i) {
    int id = static_cast<int>(uniform_int(rng, kReservedTokens, vocab - 1));
    if (i == 0) id = kClsId;
    if (i == mq + 1 || i == m - 1) id = kSepId;
    w.ids[static_cast<std::size_t>(i)] = id;
    w.mask[static_cast<std::size_t>(i)] = Mask::attend;
  }
  const int s = static_cast<int>(uniform_int(rng, 0, mc - 1));
  const int e = static_cast<int>(uniform_int(rng, s, mc - 1));
  w.gold = {{mq + 2 + s, mq + 2 + e}};
  return w;
}

std::vector<int> oracle_mention_positions(const QAExample& example, int capacity) {
  const int mq = static_cast<int>(example.question.size());
  const int total = static_cast<int>(example.context.size());
  const int budget = capacity - mq - 3;
  const int stride = std::min(capacity / 2, budget);
  std::vector<int> out;
  for (const auto& m : example.answers) {
    int pos = -1;
    for (int offset = 0; pos < 0; offset += stride) {
      const int len = std::min(budget, total - offset);
      if (m.start >= offset && m.end < offset + len) pos = 1 + mq + 1 + (m.start - offset);
      if (offset + len >= total) break;
    }
    out.push_back(pos);
  }
  return out;
}

QAExample random_example(Rng& rng, int index, int max_context_words) {
  QAExample ex;
  ex.id = "ex-" + std::to_string(index);
  const int mq = static_cast<int>(uniform_int(rng, 1, 6));
  for (int i = 0; i < mq; ++i) ex.question.push_back("q" + std::to_string(uniform_int(rng, 0, 9)));
  const int len = static_cast<int>(uniform_int(rng, 3, max_context_words));
  for (int i = 0; i < len; ++i) ex.context.push_back("w" + std::to_string(uniform_int(rng, 0, 30)));
  const int mentions = static_cast<int>(uniform_int(rng, 1, 3));
  for (int k = 0; k < mentions; ++k) {
    const int s = static_cast<int>(uniform_int(rng, 0, len - 1));
    const int e = static_cast<int>(std::min<std::int64_t>(len - 1, s + uniform_int(rng, 0, 2)));
    std::string text;
    for (int i = s; i <= e; ++i) text += (i > s ? " " : "") + ex.context[static_cast<std::size_t>(i)];
    ex.answers.push_back({s, e, text});
  }
  return ex;
}

FdReport finite_difference_check(const ModelParams& params, std::span<const EncodedWindow> windows, double step,
                                 double rel_tol, double abs_tol) {
  ModelParams p = params;
  std::vector<Gradients> grads;
  grads.reserve(windows.size());
  for (const auto& w : windows) grads.push_back(backward(p, w, w.gold.front()));
  std::vector<std::vector<NamedTensor<const Matrix>>> grad_tensors;
  for (const auto& g : grads) grad_tensors.push_back(g.tensors());

  BatchForward batch(p, windows);
  FdReport report;
  auto tensors = p.tensors();
  for (std::size_t t = 0; t < tensors.size(); ++t) {
    Matrix& value = *tensors[t].value;
    const auto cols = value.cols();
    for (Eigen::Index i = 0; i < value.size(); ++i) {
      const int row = static_cast<int>(i / cols);
      const int col = static_cast<int>(i % cols);
      double& x = value.data()[i];
      const double original = x;
      x = original + step;
      const auto plus = batch.losses_after_change(p, tensors[t].name, row, col);
      x = original - step;
      const auto minus = batch.losses_after_change(p, tensors[t].name, row, col);
      x = original;
      for (std::size_t w = 0; w < windows.size(); ++w) {
        const double numeric = (plus[w] - minus[w]) / (2.0 * step);
        const double analytic = grad_tensors[w][t].value->data()[i];
        const double err = std::abs(numeric - analytic);
        ++report.entries;
        if (err <= abs_tol) continue;
        const double rel = err / std::max(std::abs(numeric), std::abs(analytic));
        report.worst_relative = std::max(report.worst_relative, rel);
        if (rel >= rel_tol) {
          if (report.failures == 0) {
            report.first_failure = tensors[t].name + "[" + std::to_string(row) + "," + std::to_string(col) +
                                   "] window " + std::to_string(w) + ": analytic " + std::to_string(analytic) +
                                   ", numeric " + std::to_string(numeric);
          }
          ++report.failures;
        }
      }
    }
  }
  return report;
}

}  // namespace randpad::testing
