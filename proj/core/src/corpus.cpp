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

#include "gpit/corpus.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numeric>

namespace gpit {

namespace {

constexpr std::uint64_t kMixtureStream = 0x6d6978;  // "mix"
constexpr std::uint64_t kCleanStream = 0x636c6e;    // "cln"

std::atomic<std::uint64_t> transcript_counter{0};

LabeledMixture generate_mixture(const DatasetSpec& spec, const VoicePool& voices, std::size_t index,
                                std::size_t epoch) {
  if (spec.speakers < 2) throw SignalError("dataset: mixtures need at least two speakers");
  if (spec.speakers > voices.registers()) throw SignalError("dataset: more speakers than voice registers");
  if (spec.min_symbols == 0 || spec.max_symbols < spec.min_symbols) {
    throw SignalError("dataset: invalid symbol length range");
  }
  const std::uint64_t seed = item_seed(spec, index, epoch, kMixtureStream);
  std::mt19937_64 rng(seed);

  std::vector<std::size_t> regs(voices.registers());
  std::iota(regs.begin(), regs.end(), 0);
  std::shuffle(regs.begin(), regs.end(), rng);

  std::uniform_int_distribution<std::size_t> voice_dist(0, voices.voices_per_register() - 1);
  std::uniform_int_distribution<std::size_t> len_dist(spec.min_symbols, spec.max_symbols);
  std::uniform_int_distribution<int> sym_dist(0, static_cast<int>(voices.config().num_symbols) - 1);

  LabeledMixture out;
  std::vector<Utterance> utterances;
  for (std::size_t c = 0; c < spec.speakers; ++c) {
    int speaker = voices.speaker_id(regs[c], voice_dist(rng));
    SymbolSequence symbols(len_dist(rng));
    for (auto& s : symbols) s = sym_dist(rng);
    utterances.push_back(synth_utterance(symbols, voices.bank(speaker), speaker));
    out.transcripts.push_back(std::move(symbols));
    out.speaker_ids.push_back(speaker);
  }
  std::vector<Rir> rirs;
  for (std::size_t c = 0; c < spec.speakers; ++c) rirs.push_back(sample_rir(rng, spec.rir));
  std::uniform_real_distribution<double> mix_dist(spec.min_mixing_snr_db, spec.max_mixing_snr_db);
  std::uniform_real_distribution<double> noise_dist(spec.min_noise_snr_db, spec.max_noise_snr_db);
  const double mixing_snr = mix_dist(rng);
  const double noise_snr = noise_dist(rng);

  // Keep at least one whole symbol of every speaker inside a truncated window.
  std::size_t max_onset = std::numeric_limits<std::size_t>::max();
  const double fs = voices.config().sample_rate;
  const std::size_t sym = voices.config().symbol_samples;
  if (spec.tsl_seconds) {
    auto window = static_cast<std::size_t>(std::floor(*spec.tsl_seconds * fs));
    max_onset = window > sym ? window - sym : 0;
  }
  out.example = mix(utterances, rirs, mixing_snr, noise_snr, rng, max_onset);
  out.example.sample_rate = fs;
  out.example.seed = seed;
  if (spec.tsl_seconds) out.example = truncate(out.example, *spec.tsl_seconds);
  return out;
}

}  // namespace

VoicePool::VoicePool(const VoiceConfig& config) : config_(config) {
  if (config_.num_symbols == 0) throw SignalError("voices: need at least one symbol");
  if (config_.registers.empty() || config_.pitch_factors.empty()) {
    throw SignalError("voices: need at least one register and one pitch factor");
  }
  for (const auto& [lo, hi] : config_.registers) {
    if (!(lo > 0 && hi > lo)) throw SignalError("voices: invalid register range");
    for (double factor : config_.pitch_factors) {
      std::vector<double> freqs(config_.num_symbols);
      for (std::size_t k = 0; k < config_.num_symbols; ++k) {
        double frac = config_.num_symbols == 1 ? 0.0
                                               : static_cast<double>(k) / static_cast<double>(config_.num_symbols - 1);
        freqs[k] = factor * lo * std::pow(hi / lo, frac);
      }
      banks_.push_back(make_symbol_bank(freqs, config_.symbol_samples, config_.sample_rate));
    }
  }
}

std::string_view split_name(Split split) {
  switch (split) {
    case Split::kTrain: return "train";
    case Split::kValid: return "valid";
    case Split::kTest: return "test";
  }
  return "unknown";
}

std::uint64_t item_seed(const DatasetSpec& spec, std::size_t index, std::size_t epoch, std::uint64_t stream) {
  const std::uint64_t e = spec.split == Split::kTrain ? epoch : 0;
  auto lo = [](std::uint64_t v) { return static_cast<std::uint32_t>(v & 0xffffffffu); };
  auto hi = [](std::uint64_t v) { return static_cast<std::uint32_t>(v >> 32); };
  std::seed_seq seq{lo(spec.master_seed), hi(spec.master_seed), static_cast<std::uint32_t>(spec.split),
                    lo(index),           hi(index),           lo(e),
                    hi(e),               lo(stream)};
  std::uint32_t words[2];
  seq.generate(words, words + 2);
  return (static_cast<std::uint64_t>(words[0]) << 32) | words[1];
}

MixtureExample make_mixture(const DatasetSpec& spec, const VoicePool& voices, std::size_t index,
                            std::size_t epoch) {
  return generate_mixture(spec, voices, index, epoch).example;
}

LabeledMixture make_labeled_mixture(const DatasetSpec& spec, const VoicePool& voices, std::size_t index,
                                    std::size_t epoch) {
  transcript_counter.fetch_add(1);
  return generate_mixture(spec, voices, index, epoch);
}

CleanUtterance make_clean_utterance(const DatasetSpec& spec, const VoicePool& voices, std::size_t index,
                                    std::size_t epoch) {
  transcript_counter.fetch_add(1);
  std::mt19937_64 rng(item_seed(spec, index, epoch, kCleanStream));
  std::uniform_int_distribution<int> speaker_dist(0, static_cast<int>(voices.speakers()) - 1);
  std::uniform_int_distribution<std::size_t> len_dist(spec.min_symbols, spec.max_symbols);
  std::uniform_int_distribution<int> sym_dist(0, static_cast<int>(voices.config().num_symbols) - 1);
  const std::size_t sym = voices.config().symbol_samples;
  std::uniform_int_distribution<std::size_t> pad_dist(0, 2 * sym);

  CleanUtterance out;
  out.speaker_id = speaker_dist(rng);
  out.symbols.resize(len_dist(rng));
  for (auto& s : out.symbols) s = sym_dist(rng);
  auto utt = synth_utterance(out.symbols, voices.bank(out.speaker_id), out.speaker_id);
  const std::size_t lead = pad_dist(rng);
  const std::size_t trail = pad_dist(rng);
  out.waveform.assign(lead, 0.0);
  out.waveform.insert(out.waveform.end(), utt.waveform.begin(), utt.waveform.end());
  out.waveform.resize(out.waveform.size() + trail, 0.0);
  return out;
}

std::uint64_t transcript_requests() { return transcript_counter.load(); }

}  // namespace gpit
