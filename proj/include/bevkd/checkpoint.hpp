// Copyright 2026 The bevkd Authors
// SPDX-License-Identifier: Apache-2.0

// Binary checkpoint: 8-byte magic, u64 header length, JSON header (kind,
// epoch, config, rng states, tensor names and shapes), then every tensor's
// values as little-endian float64 in header order.

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "bevkd/tape.hpp"

namespace bevkd {

struct Checkpoint {
  std::string kind;  // "teacher" or "student"
  std::uint64_t epoch = 0;
  nlohmann::json config;
  nlohmann::json rng = nlohmann::json::object();  // name → serialized generator state
  ParameterSet params;
};

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes);
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Copies values by name; names and shapes must agree exactly.
void assign_parameters(ParameterSet& dst, const ParameterSet& src);

}  // namespace bevkd
