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

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "gpit/corpus.hpp"
#include "gpit/signals.hpp"
#include "mixture_checks.hpp"

namespace gpit {
namespace {

SymbolBank small_bank() {
  const std::vector<double> freqs = {300.0, 450.0, 700.0};
  return make_symbol_bank(freqs, 800, 8000.0);
}

TEST(SymbolBank, TemplatesAreDistinctAndBounded) {
  SymbolBank bank = small_bank();
  ASSERT_EQ(bank.size(), 3u);
  for (const auto& t : bank.templates) {
    EXPECT_EQ(t.size(), 800u);
    for (double v : t) EXPECT_LE(std::abs(v), 1.0);
  }
  const std::vector<double> dup = {300.0, 300.0};
  EXPECT_THROW(make_symbol_bank(dup, 800, 8000.0), SignalError);
  const std::vector<double> nyquist = {4000.0};
  EXPECT_THROW(make_symbol_bank(nyquist, 800, 8000.0), SignalError);
}

TEST(Synth, ConcatenatesTemplates) {
  SymbolBank bank = small_bank();
  EXPECT_EQ(synth_utterance(std::vector<int>{1}, bank).waveform.size(), 800u);
  EXPECT_EQ(synth_utterance(std::vector<int>{0, 1, 2, 1, 0}, bank).waveform.size(), 4000u);
  Utterance aa = synth_utterance(std::vector<int>{0, 0}, bank);
  for (std::size_t i = 0; i < 800; ++i) {
    ASSERT_EQ(aa.waveform[i], bank.templates[0][i]);
    ASSERT_EQ(aa.waveform[800 + i], bank.templates[0][i]);
  }
  EXPECT_THROW(synth_utterance(std::vector<int>{}, bank), SignalError);
  EXPECT_THROW(synth_utterance(std::vector<int>{3}, bank), SignalError);
}

TEST(Rir, IdentityAndSampledTaps) {
  std::mt19937_64 rng(3);
  RirOptions opts;
  opts.reflections = 0;
  Rir id = sample_rir(rng, opts);
  ASSERT_EQ(id.taps.size(), 1u);
  const std::vector<double> s = {1, -2, 3, 0.5};
  EXPECT_EQ(apply_rir(id, s), s);

  opts.reflections = 2;
  for (int trial = 0; trial < 50; ++trial) {
    Rir r = sample_rir(rng, opts);
    ASSERT_EQ(r.taps.size(), 3u);
    EXPECT_EQ(r.taps[0].delay, 0u);
    EXPECT_EQ(r.taps[0].gain, 1.0);
    for (std::size_t i = 1; i < r.taps.size(); ++i) {
      EXPECT_GT(r.taps[i].delay, r.taps[i - 1].delay);
      EXPECT_GE(r.taps[i].delay, 40u);   // 5 ms
      EXPECT_LE(r.taps[i].delay, 240u);  // 30 ms
      EXPECT_GE(r.taps[i].gain, 0.1);
      EXPECT_LE(r.taps[i].gain, 0.5);
    }
  }
}

TEST(Mix, DegenerateCaseIsPlainSum) {
  SymbolBank bank = small_bank();
  // Identical sources at 0 dB mixing SNR give g = (1, 1); noise removed below.
  std::vector<Utterance> utts(2, synth_utterance(std::vector<int>{0, 1}, bank));
  std::vector<Rir> rirs = {identity_rir(), identity_rir()};
  std::mt19937_64 rng(1);
  MixtureExample ex = mix(utts, rirs, 0.0, 0.0, rng);
  for (std::size_t i = 0; i < ex.length(); ++i) {
    ASSERT_NEAR(ex.mixture[i] - ex.noise[i], ex.refs[0][i] + ex.refs[1][i], 1e-14);
  }
  EXPECT_EQ(ex.gains, (std::vector<double>{1.0, 1.0}));
}

TEST(Mix, NoisePowerAtMinusSixDb) {
  SymbolBank bank = small_bank();
  std::vector<Utterance> utts = {synth_utterance(std::vector<int>{0, 1, 2}, bank),
                                 synth_utterance(std::vector<int>{2, 2}, bank)};
  std::vector<Rir> rirs = {identity_rir(), identity_rir()};
  std::mt19937_64 rng(11);
  MixtureExample ex = mix(utts, rirs, 2.0, -6.0, rng);
  const double loudest = std::max(signal_power(ex.refs[0]), signal_power(ex.refs[1]));
  // Relative to a unit-power loudest speaker the noise power is 10^(6/10) = 3.981...
  EXPECT_NEAR(signal_power(ex.noise) / loudest, 3.9810717055349722, 1e-9);
  EXPECT_NEAR(10.0 * std::log10(signal_power(ex.refs[0]) / signal_power(ex.refs[1])), 2.0, 1e-9);
  EXPECT_EQ(ex.gains[0], 1.0);
}

TEST(Mix, RejectsSilentSources) {
  SymbolBank bank = small_bank();
  Utterance silent;
  silent.waveform.assign(800, 0.0);
  silent.symbols = {0};
  std::vector<Utterance> utts = {synth_utterance(std::vector<int>{0}, bank), silent};
  std::vector<Rir> rirs = {identity_rir(), identity_rir()};
  std::mt19937_64 rng(1);
  EXPECT_THROW(mix(utts, rirs, 0.0, 0.0, rng), SignalError);
  EXPECT_THROW(mix(std::span(utts).first(1), std::span(rirs).first(1), 0.0, 0.0, rng), SignalError);
}

TEST(Sisdr, WorkedExampleAndInvariances) {
  const std::vector<double> s = {1, 0, -1, 0};
  const std::vector<double> est = {1, 1, -1, -1};
  EXPECT_NEAR(sisdr(s, est), 0.0, 1e-7);
  EXPECT_GE(sisdr(s, s), 80.0);

  // Energies large enough that the epsilon term stays below 1e-9 dB.
  std::mt19937_64 rng(4);
  std::normal_distribution<double> d(0.0, 10.0);
  std::vector<double> ref(2000), noisy(2000);
  for (std::size_t i = 0; i < ref.size(); ++i) {
    ref[i] = d(rng);
    noisy[i] = ref[i] + 0.5 * d(rng);
  }
  for (double c : {0.1, 3.0}) {
    std::vector<double> scaled = noisy;
    for (auto& v : scaled) v *= c;
    EXPECT_NEAR(sisdr(ref, scaled), sisdr(ref, noisy), 1e-9);
  }
  EXPECT_THROW(sisdr(std::vector<double>{0, 0, 0, 0}, s), SignalError);
  EXPECT_THROW(sisdr(s, std::vector<double>{1, 2}), SignalError);
}

TEST(Truncate, CutsEveryWaveform) {
  SymbolBank bank = small_bank();
  std::vector<Utterance> utts(2, synth_utterance(std::vector<int>{0, 1, 2, 0, 1, 2, 0, 1, 2, 0, 1, 2, 0, 1, 2, 0, 1, 2, 0, 1}, bank));
  std::vector<Rir> rirs = {identity_rir(), identity_rir()};
  std::mt19937_64 rng(1);
  MixtureExample ex = mix(utts, rirs, 1.0, 0.0, rng);
  ex.sample_rate = 8000.0;
  ASSERT_EQ(ex.length(), 16000u);
  MixtureExample cut = truncate(ex, 1.0);
  EXPECT_EQ(cut.length(), 8000u);
  for (const auto& r : cut.refs) EXPECT_EQ(r.size(), 8000u);
  EXPECT_EQ(truncate(ex, 5.0).length(), 16000u);
  EXPECT_LE(max_reconstruction_error(cut), 1e-12);
  EXPECT_THROW(truncate(ex, 0.0), SignalError);
}

TEST(Corpus, ReconstructionIdentityAndSnrsHoldForGeneratedItems) {
  VoicePool voices{VoiceConfig{}};
  DatasetSpec spec;
  spec.items = 40;
  spec.master_seed = 17;
  for (Split split : {Split::kTrain, Split::kValid, Split::kTest}) {
    spec.split = split;
    for (std::size_t i = 0; i < spec.items; ++i) {
      auto ex = make_labeled_mixture(spec, voices, i, 2).example;
      EXPECT_LE(max_reconstruction_error(ex), 1e-12);
      EXPECT_LE(snr_error(ex), 1e-9);
      EXPECT_GE(ex.mixing_snr_db, 0.0);
      EXPECT_LE(ex.mixing_snr_db, 5.0);
      EXPECT_GE(ex.noise_snr_db, -6.0);
      EXPECT_LE(ex.noise_snr_db, 3.0);
    }
  }
}

TEST(Corpus, DynamicMixingIsReproducible) {
  VoicePool voices{VoiceConfig{}};
  DatasetSpec spec;
  spec.items = 4;
  spec.master_seed = 5;
  auto a = make_mixture(spec, voices, 2, 0);
  auto b = make_mixture(spec, voices, 2, 0);
  auto c = make_mixture(spec, voices, 2, 1);
  EXPECT_EQ(a.mixture, b.mixture);
  EXPECT_NE(a.mixture, c.mixture);

  spec.split = Split::kTest;
  EXPECT_EQ(make_mixture(spec, voices, 2, 0).mixture, make_mixture(spec, voices, 2, 7).mixture);
}

TEST(Corpus, TruncatedItemsKeepEverySpeakerAudible) {
  VoicePool voices{VoiceConfig{}};
  DatasetSpec spec;
  spec.items = 50;
  spec.master_seed = 8;
  spec.tsl_seconds = 0.25;
  for (std::size_t i = 0; i < spec.items; ++i) {
    auto ex = make_mixture(spec, voices, i);
    EXPECT_LE(ex.length(), 2000u);
    for (const auto& r : ex.refs) EXPECT_GT(signal_power(r), 0.0);
    EXPECT_LE(max_reconstruction_error(ex), 1e-12);
  }
}

TEST(Corpus, SpeakersComeFromDistinctRegisters) {
  VoicePool voices{VoiceConfig{}};
  DatasetSpec spec;
  spec.items = 30;
  for (std::size_t i = 0; i < spec.items; ++i) {
    auto lm = make_labeled_mixture(spec, voices, i);
    ASSERT_EQ(lm.speaker_ids.size(), 2u);
    const auto reg = [&](int id) { return static_cast<std::size_t>(id) / voices.voices_per_register(); };
    EXPECT_NE(reg(lm.speaker_ids[0]), reg(lm.speaker_ids[1]));
    for (std::size_t c = 0; c < 2; ++c) {
      EXPECT_GE(lm.transcripts[c].size(), spec.min_symbols);
      EXPECT_LE(lm.transcripts[c].size(), spec.max_symbols);
    }
  }
}

TEST(Wav, WritesPcm16Header) {
  auto path = std::filesystem::temp_directory_path() / "gpit_wav_test.wav";
  const std::vector<double> samples = {0.0, 0.5, -0.5, 1.0};
  write_wav(path, samples, 8000.0);
  EXPECT_EQ(std::filesystem::file_size(path), 44u + 2 * samples.size());
  std::ifstream in(path, std::ios::binary);
  char riff[4];
  in.read(riff, 4);
  EXPECT_EQ(std::string(riff, 4), "RIFF");
  std::filesystem::remove(path);
}

}  // namespace
}  // namespace gpit
