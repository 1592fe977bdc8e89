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
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "gpit/checkpoint.hpp"
#include "gpit/corpus.hpp"
#include "gpit/tensor.hpp"

namespace gpit {

using Transcript = SymbolSequence;

struct RecognizerConfig {
  std::size_t num_symbols = 8;
  std::size_t window = 256;
  std::size_t hop = 128;
  std::size_t channels = 32;
  std::size_t hidden = 64;
  std::uint64_t seed = 1;

  // Alphabet plus the CTC blank, which takes the last index.
  std::size_t labels() const { return num_symbols + 1; }
  int blank() const { return static_cast<int>(num_symbols); }
};

// Frame-level CTC acoustic model:
//   rms-normalise -> conv1d(window, hop) -> log(square + c) -> 2 x (dense, tanh) -> dense
struct RecognizerParams {
  RecognizerConfig config;
  Tensor frontend_weight;  // [channels, 1, window]
  Tensor frontend_bias;    // [channels]
  Tensor hidden1_weight;   // [channels, hidden]
  Tensor hidden1_bias;
  Tensor hidden2_weight;   // [hidden, hidden]
  Tensor hidden2_bias;
  Tensor output_weight;    // [hidden, labels]
  Tensor output_bias;

  std::vector<Tensor> tensors() const;
  std::vector<NamedTensor> named_tensors() const;
  // Frozen parameters never receive gradients.
  void set_trainable(bool trainable);
};

RecognizerParams init_recognizer(const RecognizerConfig& config);

// L = floor((samples - window) / hop) + 1; throws when samples < window.
std::size_t frame_count(std::size_t samples, const RecognizerConfig& config);

// L x N pre-softmax logits.
struct LogitSequence {
  std::size_t frames = 0;
  std::size_t labels = 0;
  std::vector<double> values;

  double at(std::size_t frame, std::size_t label) const { return values[frame * labels + label]; }
};

// waveform [samples] -> logits [frames, labels]
Tensor encode(Tape& tape, const RecognizerParams& params, const Tensor& waveform);
LogitSequence encode(const RecognizerParams& params, std::span<const double> waveform);

// Negative log-likelihood of `target` under the CTC forward recursion in log
// space, recorded on the tape with logaddexp primitives.
Tensor ctc_loss(Tape& tape, const Tensor& logits, std::span<const int> target, int blank);

// Per-frame argmax (ties to the lowest label), collapse repeats, drop blanks.
Transcript greedy_decode(const LogitSequence& logits, int blank);
Transcript recognize(const RecognizerParams& params, std::span<const double> waveform);

Checkpoint recognizer_checkpoint(const RecognizerParams& params,
                                 std::map<std::string, std::string> metadata = {});
RecognizerParams recognizer_from_checkpoint(const Checkpoint& checkpoint);

struct RecognizerTrainOptions {
  DatasetSpec train_spec;  // clean utterances, dynamic per epoch
  DatasetSpec test_spec;   // held-out clean utterances
  std::size_t epochs = 30;
  std::size_t batch_size = 8;
  double learning_rate = 3e-3;
  // White noise added to a random share of training items, SNR uniform in dB.
  double augment_probability = 0.0;
  double augment_min_snr_db = 0.0;
  double augment_max_snr_db = 30.0;
};

struct RecognizerTrainResult {
  RecognizerParams params;
  std::vector<double> epoch_losses;
  double clean_wer = 1.0;
};

using ProgressFn = std::function<void(const std::string&)>;

// Throws std::runtime_error on a non-finite loss, echoing seed and config.
RecognizerTrainResult train_recognizer(const RecognizerConfig& config, const VoicePool& voices,
                                       const RecognizerTrainOptions& options, const ProgressFn& progress = {});

// Corpus-level WER of greedy transcripts on held-out clean utterances.
double clean_wer(const RecognizerParams& params, const VoicePool& voices, const DatasetSpec& spec);

}  // namespace gpit
