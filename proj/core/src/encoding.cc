// Copyright 2026 The randpad Authors
// SPDX-License-Identifier: Apache-2.0

#include "randpad/encoding.h"

#include <algorithm>
#include <fstream>
#include <map>
#include <stdexcept>

namespace randpad {

namespace {
const std::vector<std::string>& reserved_names() {
  static const std::vector<std::string> names = {"[CLS]", "[SEP]", "[PAD]", "[UNK]"};
  return names;
}
}  // namespace

Vocab::Vocab() : Vocab(std::vector<std::string>{}) {}

Vocab::Vocab(std::vector<std::string> words) {
  words_ = reserved_names();
  words_.reserve(words.size() + kReservedTokens);
  for (auto& w : words) {
    if (w.empty()) throw std::invalid_argument("vocabulary word must be non-empty");
    words_.push_back(std::move(w));
  }
  index_.reserve(words_.size());
  for (int i = 0; i < static_cast<int>(words_.size()); ++i) {
    if (!index_.emplace(words_[static_cast<std::size_t>(i)], i).second) {
      throw std::invalid_argument("duplicate vocabulary word " + words_[static_cast<std::size_t>(i)]);
    }
  }
}

int Vocab::id(std::string_view word) const {
  auto it = index_.find(std::string(word));
  return it == index_.end() ? kUnkId : it->second;
}

const std::string& Vocab::word(int id) const {
  if (id < 0 || id >= size()) throw std::out_of_range("token id out of range");
  return words_[static_cast<std::size_t>(id)];
}

Vocab Vocab::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open vocabulary " + path.string());
  std::vector<std::string> words;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) throw std::runtime_error("empty line in vocabulary " + path.string());
    words.push_back(line);
  }
  return Vocab(std::move(words));
}

void Vocab::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write vocabulary " + path.string());
  for (std::size_t i = kReservedTokens; i < words_.size(); ++i) out << words_[i] << '\n';
}

Vocab build_vocab(const Dataset& dataset, std::size_t max_size) {
  std::map<std::string, std::size_t, std::less<>> counts;
  for (const auto& ex : dataset.examples) {
    for (const auto& w : ex.question) ++counts[w];
    for (const auto& w : ex.context) ++counts[w];
  }
  for (const auto& name : reserved_names()) counts.erase(name);
  std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(), counts.end());
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  const std::size_t budget = max_size > kReservedTokens ? max_size - kReservedTokens : 0;
  if (ranked.size() > budget) ranked.resize(budget);
  std::vector<std::string> words;
  words.reserve(ranked.size());
  for (auto& [w, c] : ranked) words.push_back(std::move(w));
  return Vocab(std::move(words));
}

void check_window(const EncodedWindow& w) {
  const int n = w.capacity();
  if (static_cast<int>(w.mask.size()) != n) throw std::logic_error("mask length differs from ids");
  if (w.question_tokens < 0 || w.context_tokens < 1 || w.shift < 0) {
    throw std::logic_error("bad window token counts");
  }
  if (w.non_pad() + w.shift > n) throw std::logic_error("window exceeds capacity");
  for (int i = 0; i < n; ++i) {
    const bool pad = w.ids[static_cast<std::size_t>(i)] == kPadId;
    if (pad != (w.mask[static_cast<std::size_t>(i)] == Mask::ignore)) {
      throw std::logic_error("mask disagrees with PAD ids at position " + std::to_string(i));
    }
  }
  if (w.ids[0] != kClsId) throw std::logic_error("[CLS] not at position 0");
  if (w.ids[static_cast<std::size_t>(w.context_begin() - 1)] != kSepId ||
      w.ids[static_cast<std::size_t>(w.context_end())] != kSepId) {
    throw std::logic_error("[SEP] tokens misplaced");
  }
  for (const auto& g : w.gold) {
    if (g.start < w.context_begin() || g.end < g.start || g.end >= w.context_end()) {
      throw std::logic_error("gold span outside the context");
    }
  }
}

std::vector<EncodedWindow> encode_example(const QAExample& example, const Vocab& vocab,
                                          const WindowingPolicy& policy) {
  const int n = policy.capacity;
  const int mq = static_cast<int>(example.question.size());
  const int budget = n - mq - 3;
  if (budget < 1) {
    throw std::invalid_argument("example " + example.id + ": question of " + std::to_string(mq) +
                                " tokens leaves no room for context at capacity " +
                                std::to_string(n));
  }
  if (policy.stride < 1) throw std::invalid_argument("windowing stride must be >= 1");
  if (example.context.empty()) throw std::invalid_argument("example " + example.id + ": empty context");
  const int stride = std::min(policy.stride, budget);
  const int total = static_cast<int>(example.context.size());

  std::vector<int> question_ids;
  question_ids.reserve(static_cast<std::size_t>(mq));
  for (const auto& w : example.question) question_ids.push_back(vocab.id(w));

  std::vector<EncodedWindow> windows;
  for (int offset = 0;; offset += stride) {
    const int mc = std::min(budget, total - offset);
    EncodedWindow w;
    w.example_id = example.id;
    w.window_index = static_cast<int>(windows.size());
    w.question_tokens = mq;
    w.context_tokens = mc;
    w.window_offset = offset;
    w.ids.reserve(static_cast<std::size_t>(n));
    w.ids.push_back(kClsId);
    w.ids.insert(w.ids.end(), question_ids.begin(), question_ids.end());
    w.ids.push_back(kSepId);
    for (int i = 0; i < mc; ++i) w.ids.push_back(vocab.id(example.context[static_cast<std::size_t>(offset + i)]));
    w.ids.push_back(kSepId);
    w.ids.resize(static_cast<std::size_t>(n), kPadId);
    w.mask.resize(static_cast<std::size_t>(n), Mask::ignore);
    std::fill_n(w.mask.begin(), w.non_pad(), Mask::attend);
    for (const auto& m : example.answers) {
      if (auto span = map_answer_span(w, m)) w.gold.push_back(*span);
    }
    windows.push_back(std::move(w));
    if (offset + mc >= total) break;
  }
  return windows;
}

std::vector<EncodedWindow> encode_dataset(const Dataset& dataset, const Vocab& vocab,
                                          const WindowingPolicy& policy) {
  std::vector<EncodedWindow> out;
  out.reserve(dataset.examples.size());
  for (const auto& ex : dataset.examples) {
    auto ws = encode_example(ex, vocab, policy);
    for (auto& w : ws) out.push_back(std::move(w));
  }
  return out;
}

std::optional<TokenSpan> map_answer_span(const EncodedWindow& window, const AnswerMention& mention) {
  const int first = window.window_offset;
  const int last = window.window_offset + window.context_tokens - 1;
  if (mention.start < first || mention.end > last || mention.end < mention.start) return std::nullopt;
  const int base = window.context_begin() - first;
  return TokenSpan{base + mention.start, base + mention.end};
}

std::string decode_tokens(const EncodedWindow& window, const Vocab& vocab, TokenSpan span) {
  if (span.start < 0 || span.end < span.start || span.end >= window.capacity()) {
    throw std::out_of_range("decode_tokens: span outside window");
  }
  std::string out;
  for (int i = span.start; i <= span.end; ++i) {
    if (i > span.start) out += ' ';
    out += vocab.word(window.ids[static_cast<std::size_t>(i)]);
  }
  return out;
}

}  // namespace randpad
