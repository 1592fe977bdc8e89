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
#include <filesystem>
#include <limits>
#include <random>
#include <span>
#include <stdexcept>
#include <vector>

namespace gpit {

using Waveform = std::vector<double>;
using SymbolSequence = std::vector<int>;

class SignalError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// K fixed symbol waveforms: a sinusoid at a per-symbol base frequency under a
// Hann (raised-cosine) envelope, all of length symbol_samples.
struct SymbolBank {
  double sample_rate = 8000.0;
  std::size_t symbol_samples = 800;
  std::vector<double> frequencies;
  std::vector<Waveform> templates;

  std::size_t size() const { return templates.size(); }
};

SymbolBank make_symbol_bank(std::span<const double> frequencies, std::size_t symbol_samples,
                            double sample_rate, double amplitude = 0.9);

struct Utterance {
  SymbolSequence symbols;
  Waveform waveform;
  int speaker_id = 0;
};

// Concatenation of the symbol templates.
Utterance synth_utterance(std::span<const int> symbols, const SymbolBank& bank, int speaker_id = 0);

struct RirTap {
  std::size_t delay = 0;
  double gain = 1.0;
};

// Sparse impulse response; taps[0] is the direct path (0, 1.0).
struct Rir {
  std::vector<RirTap> taps;
};

struct RirOptions {
  std::size_t reflections = 3;
  double min_delay_ms = 5.0;
  double max_delay_ms = 30.0;
  double min_gain = 0.1;
  double max_gain = 0.5;
  double sample_rate = 8000.0;
};

Rir identity_rir();
Rir sample_rir(std::mt19937_64& rng, const RirOptions& options);
// Causal sparse convolution truncated to the input length.
Waveform apply_rir(const Rir& rir, std::span<const double> signal);

// One noisy reverberant mixture x = sum_c h_c * (g_c dry_c) + noise.
// refs[c] = gains[c] * dry[c] is the anechoic separation target.
struct MixtureExample {
  Waveform mixture;
  std::vector<Waveform> dry;
  std::vector<Waveform> refs;
  std::vector<Rir> rirs;
  Waveform noise;
  std::vector<double> gains;
  std::vector<std::size_t> onsets;
  double mixing_snr_db = 0.0;
  double noise_snr_db = 0.0;
  double sample_rate = 8000.0;
  std::uint64_t seed = 0;

  std::size_t length() const { return mixture.size(); }
  std::size_t speakers() const { return refs.size(); }
};

double signal_power(std::span<const double> x);

// Pads every utterance to the longest one at a random onset (at most
// max_onset), scales speakers 2..C so that P_1 / P_c equals mixing_snr_db,
// reverberates and adds white Gaussian noise at noise_snr_db below the
// loudest scaled source.
MixtureExample mix(std::span<const Utterance> utterances, std::span<const Rir> rirs, double mixing_snr_db,
                   double noise_snr_db, std::mt19937_64& rng,
                   std::size_t max_onset = std::numeric_limits<std::size_t>::max());

// Scale-invariant SDR in dB of `estimate` against `reference`, both mean
// centred, with 1e-8 added to the error energy.
inline constexpr double kSisdrEpsilon = 1e-8;
double sisdr(std::span<const double> reference, std::span<const double> estimate);

MixtureExample truncate(const MixtureExample& example, double tsl_seconds);

// PCM16 little-endian mono. Samples are clipped to [-1, 1].
void write_wav(const std::filesystem::path& path, std::span<const double> samples, double sample_rate);

}  // namespace gpit
