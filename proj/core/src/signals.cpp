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

#include "gpit/signals.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>
#include <string>

namespace gpit {

SymbolBank make_symbol_bank(std::span<const double> frequencies, std::size_t symbol_samples,
                            double sample_rate, double amplitude) {
  if (frequencies.empty()) throw SignalError("symbol bank: no frequencies");
  if (symbol_samples < 2) throw SignalError("symbol bank: symbols need at least two samples");
  if (amplitude <= 0 || amplitude > 1) throw SignalError("symbol bank: amplitude must lie in (0, 1]");
  std::vector<double> sorted(frequencies.begin(), frequencies.end());
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
    throw SignalError("symbol bank: base frequencies must be distinct");
  }
  if (sorted.back() >= sample_rate / 2) throw SignalError("symbol bank: frequency above Nyquist");

  SymbolBank bank;
  bank.sample_rate = sample_rate;
  bank.symbol_samples = symbol_samples;
  bank.frequencies.assign(frequencies.begin(), frequencies.end());
  const double n_minus_1 = static_cast<double>(symbol_samples - 1);
  for (double f : frequencies) {
    Waveform w(symbol_samples);
    for (std::size_t n = 0; n < symbol_samples; ++n) {
      double t = static_cast<double>(n);
      double envelope = 0.5 * (1.0 - std::cos(2.0 * std::numbers::pi * t / n_minus_1));
      w[n] = amplitude * envelope * std::sin(2.0 * std::numbers::pi * f * t / sample_rate);
    }
    bank.templates.push_back(std::move(w));
  }
  return bank;
}

Utterance synth_utterance(std::span<const int> symbols, const SymbolBank& bank, int speaker_id) {
  if (symbols.empty()) throw SignalError("synth_utterance: empty symbol sequence");
  Utterance u;
  u.speaker_id = speaker_id;
  u.symbols.assign(symbols.begin(), symbols.end());
  u.waveform.reserve(symbols.size() * bank.symbol_samples);
  for (int s : symbols) {
    if (s < 0 || static_cast<std::size_t>(s) >= bank.size()) {
      throw SignalError("synth_utterance: unknown symbol " + std::to_string(s));
    }
    const auto& t = bank.templates[static_cast<std::size_t>(s)];
    u.waveform.insert(u.waveform.end(), t.begin(), t.end());
  }
  return u;
}

Rir identity_rir() { return Rir{{RirTap{0, 1.0}}}; }

Rir sample_rir(std::mt19937_64& rng, const RirOptions& options) {
  if (options.min_delay_ms <= 0 || options.max_delay_ms < options.min_delay_ms) {
    throw SignalError("sample_rir: invalid delay range");
  }
  if (options.min_gain < 0 || options.max_gain > 1 || options.max_gain < options.min_gain) {
    throw SignalError("sample_rir: invalid gain range");
  }
  auto lo = static_cast<std::size_t>(std::ceil(options.min_delay_ms * options.sample_rate / 1000.0));
  auto hi = static_cast<std::size_t>(std::floor(options.max_delay_ms * options.sample_rate / 1000.0));
  lo = std::max<std::size_t>(lo, 1);
  if (hi < lo || hi - lo + 1 < options.reflections) throw SignalError("sample_rir: delay range too narrow");

  std::uniform_int_distribution<std::size_t> delay_dist(lo, hi);
  std::uniform_real_distribution<double> gain_dist(options.min_gain, options.max_gain);
  std::vector<std::size_t> delays;
  while (delays.size() < options.reflections) {
    auto d = delay_dist(rng);
    if (std::find(delays.begin(), delays.end(), d) == delays.end()) delays.push_back(d);
  }
  std::sort(delays.begin(), delays.end());
  Rir rir = identity_rir();
  for (auto d : delays) rir.taps.push_back({d, gain_dist(rng)});
  return rir;
}

Waveform apply_rir(const Rir& rir, std::span<const double> signal) {
  Waveform out(signal.size(), 0.0);
  for (const auto& tap : rir.taps) {
    for (std::size_t i = tap.delay; i < signal.size(); ++i) out[i] += tap.gain * signal[i - tap.delay];
  }
  return out;
}

double signal_power(std::span<const double> x) {
  if (x.empty()) return 0.0;
  double e = 0.0;
  for (double v : x) e += v * v;
  return e / static_cast<double>(x.size());
}

MixtureExample mix(std::span<const Utterance> utterances, std::span<const Rir> rirs, double mixing_snr_db,
                   double noise_snr_db, std::mt19937_64& rng, std::size_t max_onset) {
  const std::size_t speakers = utterances.size();
  if (speakers < 2) throw SignalError("mix: need at least two utterances");
  if (rirs.size() != speakers) throw SignalError("mix: one RIR per utterance required");

  MixtureExample ex;
  ex.mixing_snr_db = mixing_snr_db;
  ex.noise_snr_db = noise_snr_db;
  std::size_t length = 0;
  for (const auto& u : utterances) length = std::max(length, u.waveform.size());

  for (const auto& u : utterances) {
    std::size_t slack = std::min(length - u.waveform.size(), max_onset);
    std::uniform_int_distribution<std::size_t> onset_dist(0, slack);
    std::size_t onset = onset_dist(rng);
    Waveform padded(length, 0.0);
    std::copy(u.waveform.begin(), u.waveform.end(), padded.begin() + static_cast<std::ptrdiff_t>(onset));
    if (signal_power(padded) == 0.0) throw SignalError("mix: zero-power source");
    ex.onsets.push_back(onset);
    ex.dry.push_back(std::move(padded));
  }

  const double p1 = signal_power(ex.dry[0]);
  ex.gains.push_back(1.0);
  for (std::size_t c = 1; c < speakers; ++c) {
    double pc = signal_power(ex.dry[c]);
    ex.gains.push_back(std::sqrt(p1 / (pc * std::pow(10.0, mixing_snr_db / 10.0))));
  }

  double loudest = 0.0;
  for (std::size_t c = 0; c < speakers; ++c) {
    Waveform ref(length);
    for (std::size_t i = 0; i < length; ++i) ref[i] = ex.gains[c] * ex.dry[c][i];
    loudest = std::max(loudest, signal_power(ref));
    ex.refs.push_back(std::move(ref));
  }

  std::normal_distribution<double> gauss(0.0, 1.0);
  ex.noise.resize(length);
  for (auto& v : ex.noise) v = gauss(rng);
  const double target_noise_power = loudest / std::pow(10.0, noise_snr_db / 10.0);
  const double noise_scale = std::sqrt(target_noise_power / signal_power(ex.noise));
  for (auto& v : ex.noise) v *= noise_scale;

  ex.mixture = ex.noise;
  for (std::size_t c = 0; c < speakers; ++c) {
    ex.rirs.push_back(rirs[c]);
    auto image = apply_rir(rirs[c], ex.refs[c]);
    for (std::size_t i = 0; i < length; ++i) ex.mixture[i] += image[i];
  }
  return ex;
}

double sisdr(std::span<const double> reference, std::span<const double> estimate) {
  if (reference.size() != estimate.size()) throw SignalError("sisdr: length mismatch");
  if (reference.empty()) throw SignalError("sisdr: empty signals");
  const double n = static_cast<double>(reference.size());
  const double ref_mean = std::accumulate(reference.begin(), reference.end(), 0.0) / n;
  const double est_mean = std::accumulate(estimate.begin(), estimate.end(), 0.0) / n;
  double dot = 0.0, ref_energy = 0.0;
  for (std::size_t i = 0; i < reference.size(); ++i) {
    double s = reference[i] - ref_mean;
    dot += (estimate[i] - est_mean) * s;
    ref_energy += s * s;
  }
  if (ref_energy == 0.0) throw SignalError("sisdr: zero reference");
  const double alpha = dot / ref_energy;
  double target_energy = 0.0, error_energy = 0.0;
  for (std::size_t i = 0; i < reference.size(); ++i) {
    double target = alpha * (reference[i] - ref_mean);
    double error = (estimate[i] - est_mean) - target;
    target_energy += target * target;
    error_energy += error * error;
  }
  return 10.0 * std::log10(target_energy / (error_energy + kSisdrEpsilon));
}

MixtureExample truncate(const MixtureExample& example, double tsl_seconds) {
  if (!(tsl_seconds > 0)) throw SignalError("truncate: limit must be positive");
  const double limit = std::floor(tsl_seconds * example.sample_rate);
  const std::size_t keep = std::min(example.length(), static_cast<std::size_t>(limit));
  MixtureExample out = example;
  auto cut = [keep](Waveform& w) { w.resize(std::min(w.size(), keep)); };
  cut(out.mixture);
  cut(out.noise);
  for (auto& w : out.dry) cut(w);
  for (auto& w : out.refs) cut(w);
  return out;
}

void write_wav(const std::filesystem::path& path, std::span<const double> samples, double sample_rate) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("write_wav: cannot open " + path.string());
  auto put = [&out](std::uint32_t v, int bytes) {
    for (int i = 0; i < bytes; ++i) out.put(static_cast<char>((v >> (8 * i)) & 0xffu));
  };
  const auto rate = static_cast<std::uint32_t>(sample_rate);
  const auto data_bytes = static_cast<std::uint32_t>(samples.size() * 2);
  out.write("RIFF", 4);
  put(36 + data_bytes, 4);
  out.write("WAVEfmt ", 8);
  put(16, 4);
  put(1, 2);  // PCM
  put(1, 2);  // mono
  put(rate, 4);
  put(rate * 2, 4);
  put(2, 2);
  put(16, 2);
  out.write("data", 4);
  put(data_bytes, 4);
  for (double v : samples) {
    double c = std::clamp(v, -1.0, 1.0);
    auto s = static_cast<std::int16_t>(std::lround(c * 32767.0));
    put(static_cast<std::uint16_t>(s), 2);
  }
}

}  // namespace gpit
