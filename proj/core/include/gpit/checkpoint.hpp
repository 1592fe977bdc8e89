// Copyright 2026 The gpitlab Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "gpit/tensor.hpp"

namespace gpit {

// Binary layout (all integers uint64 little-endian, reals IEEE-754 binary64
// little-endian):
//
//   "GPITCKPT" | version:u8 | entry*
//   entry := name_len | name (UTF-8) | rank | dims[rank] | data[prod(dims)]
//
// Metadata records are entries named "meta.<key>" of rank 1 whose reals are
// the UTF-8 bytes of the value.
inline constexpr std::string_view kCheckpointMagic = "GPITCKPT";
inline constexpr std::uint8_t kCheckpointVersion = 1;

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

struct Checkpoint {
  std::vector<NamedTensor> tensors;
  std::map<std::string, std::string> metadata;

  const Tensor& get(std::string_view name) const;
  const std::string& meta(const std::string& key) const;
};

std::string serialize_checkpoint(const Checkpoint& checkpoint);
Checkpoint parse_checkpoint(std::string_view bytes);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// 64-bit FNV-1a, used for config and parameter fingerprints.
std::uint64_t fnv1a64(std::string_view bytes);
std::string hex64(std::uint64_t value);

}  // namespace gpit
