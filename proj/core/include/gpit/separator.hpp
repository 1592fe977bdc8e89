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

#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "gpit/checkpoint.hpp"
#include "gpit/signals.hpp"
#include "gpit/tensor.hpp"

namespace gpit {

struct SeparatorConfig {
  std::size_t speakers = 2;   // C
  std::size_t kernel = 16;    // P
  std::size_t stride = 8;
  std::size_t channels = 64;  // B
  std::size_t hidden = 64;
  std::size_t mask_layers = 3;
};

// Learned-basis masking separator:
//   conv1d encoder (P, stride) -> relu -> dense stack -> sigmoid masks (C x B)
//   -> masked features -> transposed-conv1d decoder (overlap-add) -> trim to L_x
struct SeparatorParams {
  SeparatorConfig config;
  std::uint64_t seed = 0;
  Tensor encoder_weight;  // [B, 1, P]
  Tensor encoder_bias;    // [B]
  std::vector<Tensor> mask_weights;  // mask_layers hidden layers, then the mask projection
  std::vector<Tensor> mask_biases;
  Tensor decoder_weight;  // [B, 1, P]
  Tensor decoder_bias;    // [1]

  std::vector<Tensor> tensors() const;
  std::vector<NamedTensor> named_tensors() const;
};

SeparatorParams init_separator(std::uint64_t seed, const SeparatorConfig& config);

struct SeparationOutput {
  std::vector<Waveform> estimates;
};

// Differentiable path; returns C tensors of shape [L_x]. Throws when L_x < P.
std::vector<Tensor> separate(Tape& tape, const SeparatorParams& params, std::span<const double> mixture);
SeparationOutput separate(const SeparatorParams& params, std::span<const double> mixture);

Checkpoint separator_checkpoint(const SeparatorParams& params, std::map<std::string, std::string> metadata = {});
SeparatorParams separator_from_checkpoint(const Checkpoint& checkpoint);

// Fingerprint of all parameter values and shapes.
std::uint64_t parameter_hash(std::span<const NamedTensor> tensors);

}  // namespace gpit
