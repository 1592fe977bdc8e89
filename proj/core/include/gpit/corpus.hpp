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
#include <optional>
#include <string_view>
#include <utility>
#include <vector>

#include "gpit/signals.hpp"

namespace gpit {

// Speakers are grouped into disjoint frequency registers; every speaker has
// its own symbol bank (the register's log-spaced frequencies scaled by a
// per-voice pitch factor). A mixture never draws two speakers from the same
// register, so a context-free separator can keep output channels consistent.
struct VoiceConfig {
  double sample_rate = 8000.0;
  std::size_t symbol_samples = 800;
  std::size_t num_symbols = 8;
  std::vector<std::pair<double, double>> registers = {{300.0, 1000.0}, {1500.0, 3400.0}};
  std::vector<double> pitch_factors = {0.97, 1.0, 1.03};
};

class VoicePool {
 public:
  explicit VoicePool(const VoiceConfig& config);

  const VoiceConfig& config() const { return config_; }
  std::size_t speakers() const { return banks_.size(); }
  std::size_t registers() const { return config_.registers.size(); }
  std::size_t voices_per_register() const { return config_.pitch_factors.size(); }
  const SymbolBank& bank(int speaker) const { return banks_.at(static_cast<std::size_t>(speaker)); }
  int speaker_id(std::size_t reg, std::size_t voice) const {
    return static_cast<int>(reg * voices_per_register() + voice);
  }

 private:
  VoiceConfig config_;
  std::vector<SymbolBank> banks_;
};

enum class Split { kTrain = 1, kValid = 2, kTest = 3 };
std::string_view split_name(Split split);

struct DatasetSpec {
  Split split = Split::kTrain;
  std::size_t items = 0;
  std::size_t speakers = 2;
  std::size_t min_symbols = 3;
  std::size_t max_symbols = 10;
  double min_mixing_snr_db = 0.0;
  double max_mixing_snr_db = 5.0;
  double min_noise_snr_db = -6.0;
  double max_noise_snr_db = 3.0;
  std::optional<double> tsl_seconds;
  std::uint64_t master_seed = 0;
  RirOptions rir;
};

// Mixture plus the per-speaker symbol sequences, aligned with example.refs.
struct LabeledMixture {
  MixtureExample example;
  std::vector<SymbolSequence> transcripts;
  std::vector<int> speaker_ids;
};

struct CleanUtterance {
  Waveform waveform;
  SymbolSequence symbols;
  int speaker_id = 0;
};

// Deterministic per-item seed. Train items depend on the epoch (dynamic
// mixing); valid and test items ignore it.
std::uint64_t item_seed(const DatasetSpec& spec, std::size_t index, std::size_t epoch, std::uint64_t stream);

MixtureExample make_mixture(const DatasetSpec& spec, const VoicePool& voices, std::size_t index,
                            std::size_t epoch = 0);
LabeledMixture make_labeled_mixture(const DatasetSpec& spec, const VoicePool& voices, std::size_t index,
                                    std::size_t epoch = 0);
// One speaker, no reverberation or noise, with random leading/trailing
// silence of up to two symbol durations.
CleanUtterance make_clean_utterance(const DatasetSpec& spec, const VoicePool& voices, std::size_t index,
                                    std::size_t epoch = 0);

// Number of calls that produced transcripts (labelled mixtures or clean
// utterances) in this process.
std::uint64_t transcript_requests();

}  // namespace gpit
