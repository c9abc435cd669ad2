// Copyright 2026 The bevkd Authors
// SPDX-License-Identifier: Apache-2.0

#include "bevkd/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "bevkd/error.hpp"

namespace bevkd {
namespace {

constexpr char kMagic[8] = {'B', 'E', 'V', 'K', 'D', 'C', 'K', '1'};

static_assert(std::endian::native == std::endian::little, "checkpoint encoding assumes a little-endian host");

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint64_t get_u64(std::span<const std::uint8_t> b, std::size_t at) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[at + i]) << (8 * i);
  return v;
}

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt) {
  nlohmann::json tensors = nlohmann::json::array();
  for (std::size_t i = 0; i < ckpt.params.size(); ++i) {
    tensors.push_back({{"name", ckpt.params.name(i)}, {"shape", ckpt.params.value(i).shape()}});
  }
  const nlohmann::json header{{"kind", ckpt.kind},     {"epoch", ckpt.epoch}, {"config", ckpt.config},
                              {"rng", ckpt.rng},       {"tensors", tensors}};
  const std::string text = header.dump();
  std::vector<std::uint8_t> out(kMagic, kMagic + 8);
  put_u64(out, text.size());
  out.insert(out.end(), text.begin(), text.end());
  for (std::size_t i = 0; i < ckpt.params.size(); ++i) {
    const auto data = ckpt.params.value(i).data();
    const auto* raw = reinterpret_cast<const std::uint8_t*>(data.data());
    out.insert(out.end(), raw, raw + data.size() * sizeof(double));
  }
  return out;
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kMagic, 8) != 0) {
    throw ValidationError("checkpoint: missing magic header");
  }
  const std::uint64_t len = get_u64(bytes, 8);
  if (len > bytes.size() - 16) throw ValidationError("checkpoint: truncated header");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.begin() + 16, bytes.begin() + 16 + static_cast<std::ptrdiff_t>(len));
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("checkpoint: bad header: ") + e.what());
  }
  Checkpoint ckpt;
  std::size_t at = 16 + len;
  try {
    ckpt.kind = header.at("kind").get<std::string>();
    ckpt.epoch = header.at("epoch").get<std::uint64_t>();
    ckpt.config = header.at("config");
    ckpt.rng = header.at("rng");
    for (const auto& t : header.at("tensors")) {
      Shape shape = t.at("shape").get<Shape>();
      const std::size_t n = shape_product(shape);
      if (n > (bytes.size() - at) / sizeof(double)) throw ValidationError("checkpoint: truncated tensor data");
      std::vector<double> data(n);
      std::memcpy(data.data(), bytes.data() + at, n * sizeof(double));
      at += n * sizeof(double);
      ckpt.params.add(t.at("name").get<std::string>(), Tensor(std::move(shape), std::move(data)));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("checkpoint: bad header field: ") + e.what());
  }
  if (at != bytes.size()) throw ValidationError("checkpoint: trailing bytes after tensor data");
  return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  const auto bytes = encode_checkpoint(ckpt);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw RuntimeError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw RuntimeError("failed writing " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open checkpoint " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

void assign_parameters(ParameterSet& dst, const ParameterSet& src) {
  if (dst.size() != src.size()) {
    throw ValidationError("checkpoint holds " + std::to_string(src.size()) + " tensors, model expects " +
                          std::to_string(dst.size()));
  }
  for (std::size_t i = 0; i < dst.size(); ++i) {
    const std::string& name = dst.name(i);
    if (!src.contains(name)) throw ValidationError("checkpoint lacks tensor '" + name + "'");
    const Tensor& v = src.value(src.id_of(name));
    if (v.shape() != dst.value(i).shape()) {
      throw ValidationError("checkpoint tensor '" + name + "' has shape " + shape_string(v.shape()) + ", expected " +
                            shape_string(dst.value(i).shape()));
    }
    dst.value(i) = v;
  }
}

}  // namespace bevkd
