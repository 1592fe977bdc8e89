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

#include "gpit/separator.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

namespace gpit {

namespace {

constexpr double kNormEpsilon = 1e-8;

Tensor uniform_parameter(std::mt19937_64& rng, Shape shape, std::size_t fan_in) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  std::vector<double> values(shape_size(shape));
  for (auto& v : values) v = dist(rng);
  return Tensor::parameter(std::move(shape), std::move(values));
}

Tensor zero_parameter(std::size_t n) { return Tensor::parameter({n}, std::vector<double>(n, 0.0)); }

std::size_t meta_size(const Checkpoint& ckpt, const std::string& key) {
  return static_cast<std::size_t>(std::stoull(ckpt.meta(key)));
}

}  // namespace

std::vector<Tensor> SeparatorParams::tensors() const {
  std::vector<Tensor> out{encoder_weight, encoder_bias};
  for (std::size_t i = 0; i < mask_weights.size(); ++i) {
    out.push_back(mask_weights[i]);
    out.push_back(mask_biases[i]);
  }
  out.push_back(decoder_weight);
  out.push_back(decoder_bias);
  return out;
}

std::vector<NamedTensor> SeparatorParams::named_tensors() const {
  std::vector<NamedTensor> out{{"encoder.weight", encoder_weight}, {"encoder.bias", encoder_bias}};
  for (std::size_t i = 0; i < mask_weights.size(); ++i) {
    out.push_back({"mask" + std::to_string(i) + ".weight", mask_weights[i]});
    out.push_back({"mask" + std::to_string(i) + ".bias", mask_biases[i]});
  }
  out.push_back({"decoder.weight", decoder_weight});
  out.push_back({"decoder.bias", decoder_bias});
  return out;
}

SeparatorParams init_separator(std::uint64_t seed, const SeparatorConfig& config) {
  if (config.speakers == 0 || config.kernel == 0 || config.stride == 0 || config.channels == 0 ||
      config.hidden == 0) {
    throw std::invalid_argument("separator: dimensions must be positive");
  }
  if (config.stride > config.kernel) throw std::invalid_argument("separator: stride exceeds kernel");
  std::mt19937_64 rng(seed);
  SeparatorParams p;
  p.config = config;
  p.seed = seed;
  const std::size_t b = config.channels, k = config.kernel;
  p.encoder_weight = uniform_parameter(rng, {b, 1, k}, k);
  p.encoder_bias = zero_parameter(b);
  std::size_t in = b;
  for (std::size_t l = 0; l < config.mask_layers; ++l) {
    p.mask_weights.push_back(uniform_parameter(rng, {in, config.hidden}, in));
    p.mask_biases.push_back(zero_parameter(config.hidden));
    in = config.hidden;
  }
  p.mask_weights.push_back(uniform_parameter(rng, {in, config.speakers * b}, in));
  p.mask_biases.push_back(zero_parameter(config.speakers * b));
  p.decoder_weight = uniform_parameter(rng, {b, 1, k}, b);
  p.decoder_bias = zero_parameter(1);
  return p;
}

std::vector<Tensor> separate(Tape& tape, const SeparatorParams& params, std::span<const double> mixture) {
  const auto& c = params.config;
  const std::size_t length = mixture.size();
  if (length < c.kernel) {
    throw std::invalid_argument("separate: input of " + std::to_string(length) +
                                " samples is shorter than the kernel (" + std::to_string(c.kernel) + ")");
  }
  // Pad so the last frame ends exactly at the padded length.
  const std::size_t frames = (length - c.kernel + c.stride - 1) / c.stride + 1;
  const std::size_t padded = (frames - 1) * c.stride + c.kernel;
  const double rms = std::sqrt(signal_power(mixture) + kNormEpsilon);
  std::vector<double> input(padded, 0.0);
  for (std::size_t i = 0; i < length; ++i) input[i] = mixture[i] / rms;

  Tensor x = Tensor::constant({1, padded}, std::move(input));
  Tensor features = tape.relu(tape.conv1d(x, params.encoder_weight, params.encoder_bias, c.stride));  // [B, T]
  Tensor h = tape.transpose(features);  // [T, B]
  const std::size_t last = params.mask_weights.size() - 1;
  for (std::size_t l = 0; l < last; ++l) h = tape.relu(tape.linear(h, params.mask_weights[l], params.mask_biases[l]));
  Tensor masks = tape.sigmoid(tape.linear(h, params.mask_weights[last], params.mask_biases[last]));  // [T, C*B]

  std::vector<Tensor> out;
  for (std::size_t s = 0; s < c.speakers; ++s) {
    Tensor mask = tape.transpose(tape.slice(masks, 1, s * c.channels, (s + 1) * c.channels));
    Tensor decoded = tape.conv_transpose1d(tape.mul(features, mask), params.decoder_weight, params.decoder_bias,
                                           c.stride);  // [1, padded]
    out.push_back(tape.reshape(tape.slice(decoded, 1, 0, length), {length}));
  }
  return out;
}

SeparationOutput separate(const SeparatorParams& params, std::span<const double> mixture) {
  Tape tape;
  SeparationOutput out;
  for (const auto& t : separate(tape, params, mixture)) out.estimates.emplace_back(t.data().begin(), t.data().end());
  return out;
}

Checkpoint separator_checkpoint(const SeparatorParams& params, std::map<std::string, std::string> metadata) {
  Checkpoint ckpt;
  for (auto& [name, t] : params.named_tensors()) ckpt.tensors.push_back({name, t.detach()});
  ckpt.metadata = std::move(metadata);
  const auto& c = params.config;
  ckpt.metadata["kind"] = "separator";
  ckpt.metadata["C"] = std::to_string(c.speakers);
  ckpt.metadata["P"] = std::to_string(c.kernel);
  ckpt.metadata["stride"] = std::to_string(c.stride);
  ckpt.metadata["B"] = std::to_string(c.channels);
  ckpt.metadata["hidden"] = std::to_string(c.hidden);
  ckpt.metadata["mask_layers"] = std::to_string(c.mask_layers);
  ckpt.metadata["init_seed"] = std::to_string(params.seed);
  return ckpt;
}

SeparatorParams separator_from_checkpoint(const Checkpoint& ckpt) {
  if (ckpt.meta("kind") != "separator") throw CheckpointError("checkpoint is not a separator");
  SeparatorConfig c;
  c.speakers = meta_size(ckpt, "C");
  c.kernel = meta_size(ckpt, "P");
  c.stride = meta_size(ckpt, "stride");
  c.channels = meta_size(ckpt, "B");
  c.hidden = meta_size(ckpt, "hidden");
  c.mask_layers = meta_size(ckpt, "mask_layers");
  SeparatorParams p = init_separator(std::stoull(ckpt.meta("init_seed")), c);
  for (auto& [name, t] : p.named_tensors()) {
    const Tensor& stored = ckpt.get(name);
    if (stored.shape() != t.shape()) throw CheckpointError("checkpoint: shape mismatch for " + name);
    auto dst = t.mutable_data();
    std::copy(stored.data().begin(), stored.data().end(), dst.begin());
  }
  return p;
}

std::uint64_t parameter_hash(std::span<const NamedTensor> tensors) {
  Checkpoint ckpt;
  ckpt.tensors.assign(tensors.begin(), tensors.end());
  return fnv1a64(serialize_checkpoint(ckpt));
}

}  // namespace gpit
