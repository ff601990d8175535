// Copyright 2026 The randpad Authors
// SPDX-License-Identifier: Apache-2.0
//
// Checkpoint layout (all integers little-endian):
//   [0, 8)        magic "RPADCKPT"
//   [8, 16)       u64 header byte length L
//   [16, 16+L)    UTF-8 JSON header: format, version, config, tensor table
//   [16+L, ...)   tensors in table order, row-major IEEE-754 binary64 LE

#include <bit>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "randpad/model.h"

namespace randpad {

namespace {

constexpr char kMagic[8] = {'R', 'P', 'A', 'D', 'C', 'K', 'P', 'T'};

void put_u64(std::ostream& out, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 8);
}

std::uint64_t get_u64(const unsigned char* b) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

}  // namespace

void save_checkpoint(const ModelParams& params, const std::filesystem::path& path) {
  const auto& c = params.config;
  nlohmann::ordered_json header;
  header["format"] = "randpad-checkpoint";
  header["version"] = 1;
  header["config"] = {{"layers", c.layers},       {"heads", c.heads},
                      {"hidden", c.hidden},       {"ffn", c.ffn},
                      {"capacity", c.capacity},   {"vocab_size", c.vocab_size},
                      {"init_std", c.init_std},   {"ln_eps", c.ln_eps}};
  nlohmann::ordered_json table = nlohmann::ordered_json::array();
  std::uint64_t offset = 0;
  for (const auto& t : params.tensors()) {
    const auto count = static_cast<std::uint64_t>(t.value->size());
    nlohmann::ordered_json entry;
    entry["name"] = t.name;
    entry["rows"] = t.value->rows();
    entry["cols"] = t.value->cols();
    entry["offset"] = offset;
    entry["count"] = count;
    table.push_back(std::move(entry));
    offset += count * 8;
  }
  header["tensors"] = std::move(table);
  const std::string text = header.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint " + path.string());
  out.write(kMagic, 8);
  put_u64(out, text.size());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& t : params.tensors()) {
    const double* data = t.value->data();
    for (Eigen::Index i = 0; i < t.value->size(); ++i) {
      put_u64(out, std::bit_cast<std::uint64_t>(data[i]));
    }
  }
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

ModelParams load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  auto fail = [&](const std::string& why) {
    throw std::runtime_error("checkpoint " + path.string() + ": " + why);
  };
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kMagic, 8) != 0) fail("bad magic");
  const std::uint64_t header_len = get_u64(bytes.data() + 8);
  if (header_len > bytes.size() - 16) fail("truncated header");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.begin() + 16, bytes.begin() + 16 + static_cast<std::ptrdiff_t>(header_len));
  } catch (const nlohmann::json::exception& e) {
    fail(std::string("bad header: ") + e.what());
  }
  if (header.value("format", "") != "randpad-checkpoint" || header.value("version", 0) != 1) {
    fail("unsupported format");
  }
  ModelConfig c;
  try {
    const auto& jc = header.at("config");
    c.layers = jc.at("layers").get<int>();
    c.heads = jc.at("heads").get<int>();
    c.hidden = jc.at("hidden").get<int>();
    c.ffn = jc.at("ffn").get<int>();
    c.capacity = jc.at("capacity").get<int>();
    c.vocab_size = jc.at("vocab_size").get<int>();
    c.init_std = jc.at("init_std").get<double>();
    c.ln_eps = jc.at("ln_eps").get<double>();
  } catch (const nlohmann::json::exception& e) {
    fail(std::string("bad config: ") + e.what());
  }
  ModelParams params = ModelParams::zeros(c);
  const std::size_t data_start = 16 + header_len;
  const auto& table = header.at("tensors");
  auto tensors = params.tensors();
  if (table.size() != tensors.size()) fail("tensor count mismatch");
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    const auto& entry = table[i];
    auto& t = tensors[i];
    if (entry.at("name").get<std::string>() != t.name ||
        entry.at("rows").get<Eigen::Index>() != t.value->rows() ||
        entry.at("cols").get<Eigen::Index>() != t.value->cols()) {
      fail("tensor " + t.name + " does not match the config");
    }
    const auto offset = entry.at("offset").get<std::uint64_t>();
    const auto count = static_cast<std::uint64_t>(t.value->size());
    if (data_start + offset + count * 8 > bytes.size()) fail("truncated tensor " + t.name);
    const unsigned char* src = bytes.data() + data_start + offset;
    for (std::uint64_t j = 0; j < count; ++j) {
      t.value->data()[j] = std::bit_cast<double>(get_u64(src + 8 * j));
    }
  }
  return params;
}

}  // namespace randpad
