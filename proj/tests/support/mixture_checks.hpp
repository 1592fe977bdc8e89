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

#include <algorithm>
#include <cmath>

#include "gpit/signals.hpp"

namespace gpit {

// max_i |x[i] - (sum_c (h_c * g_c dry_c)[i] + noise[i])|, with the
// convolution written out directly instead of through apply_rir.
inline double max_reconstruction_error(const MixtureExample& ex) {
  double worst = 0.0;
  for (std::size_t i = 0; i < ex.length(); ++i) {
    double expected = ex.noise[i];
    for (std::size_t c = 0; c < ex.speakers(); ++c) {
      for (const auto& tap : ex.rirs[c].taps) {
        if (tap.delay <= i) expected += tap.gain * ex.gains[c] * ex.dry[c][i - tap.delay];
      }
    }
    worst = std::max(worst, std::abs(ex.mixture[i] - expected));
  }
  return worst;
}

// Largest deviation (dB) of the realised mixing and noise SNRs from the
// requested ones. Only meaningful before truncation.
inline double snr_error(const MixtureExample& ex) {
  auto power = [](const Waveform& w) {
    double e = 0.0;
    for (double v : w) e += v * v;
    return e / static_cast<double>(w.size());
  };
  double loudest = 0.0;
  double worst = 0.0;
  const double p1 = power(ex.refs[0]);
  for (std::size_t c = 0; c < ex.speakers(); ++c) {
    const double pc = power(ex.refs[c]);
    loudest = std::max(loudest, pc);
    if (c > 0) worst = std::max(worst, std::abs(10.0 * std::log10(p1 / pc) - ex.mixing_snr_db));
  }
  return std::max(worst, std::abs(10.0 * std::log10(loudest / power(ex.noise)) - ex.noise_snr_db));
}

}  // namespace gpit
