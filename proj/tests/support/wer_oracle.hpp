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

// Brute-force multi-speaker WER written independently of gpit::metrics:
// recursive edit distance with memoisation, permutations built by recursive
// swapping, assignments by recursion from the last utterance down.

#pragma once

#include <algorithm>
#include <functional>
#include <limits>
#include <map>
#include <random>
#include <utility>
#include <vector>

#include "gpit/metrics.hpp"

namespace gpit::oracle {

inline std::size_t edit_distance(const Tokens& a, const Tokens& b) {
  std::map<std::pair<std::size_t, std::size_t>, std::size_t> memo;
  std::function<std::size_t(std::size_t, std::size_t)> go = [&](std::size_t i, std::size_t j) -> std::size_t {
    if (i == a.size()) return b.size() - j;
    if (j == b.size()) return a.size() - i;
    auto key = std::make_pair(i, j);
    if (auto it = memo.find(key); it != memo.end()) return it->second;
    std::size_t best = go(i + 1, j + 1) + (a[i] == b[j] ? 0 : 1);
    best = std::min(best, go(i + 1, j) + 1);
    best = std::min(best, go(i, j + 1) + 1);
    return memo[key] = best;
  };
  return go(0, 0);
}

inline std::size_t word_count(const std::vector<Tokens>& refs) {
  std::size_t n = 0;
  for (const auto& r : refs) n += r.size();
  return n;
}

inline double cp_wer(const std::vector<Tokens>& refs, const std::vector<Tokens>& hyps) {
  std::vector<std::size_t> p(hyps.size());
  for (std::size_t i = 0; i < p.size(); ++i) p[i] = p.size() - 1 - i;  // start from the reversed order
  std::size_t best = std::numeric_limits<std::size_t>::max();
  std::function<void(std::size_t)> permute = [&](std::size_t k) {
    if (k == p.size()) {
      std::size_t e = 0;
      for (std::size_t r = 0; r < refs.size(); ++r) e += edit_distance(refs[r], hyps[p[r]]);
      best = std::min(best, e);
      return;
    }
    for (std::size_t i = k; i < p.size(); ++i) {
      std::swap(p[k], p[i]);
      permute(k + 1);
      std::swap(p[k], p[i]);
    }
  };
  permute(0);
  return static_cast<double>(best) / static_cast<double>(word_count(refs));
}

inline double orc_wer(const std::vector<RefUtterance>& utts, const std::vector<Tokens>& hyps) {
  std::vector<std::size_t> assign(utts.size());
  std::size_t words = 0;
  for (const auto& u : utts) words += u.tokens.size();
  std::size_t best = std::numeric_limits<std::size_t>::max();
  std::function<void(std::size_t)> go = [&](std::size_t k) {
    if (k == 0) {
      std::size_t e = 0;
      for (std::size_t ch = 0; ch < hyps.size(); ++ch) {
        // Concatenate this channel's utterances by onset, ties by input position.
        std::vector<std::pair<std::size_t, std::size_t>> mine;
        for (std::size_t u = 0; u < utts.size(); ++u) {
          if (assign[u] == ch) mine.push_back({utts[u].onset_index, u});
        }
        std::sort(mine.begin(), mine.end());
        Tokens joined;
        for (auto [onset, u] : mine) joined.insert(joined.end(), utts[u].tokens.begin(), utts[u].tokens.end());
        e += edit_distance(joined, hyps[ch]);
      }
      best = std::min(best, e);
      return;
    }
    for (std::size_t ch = hyps.size(); ch-- > 0;) {
      assign[k - 1] = ch;
      go(k - 1);
    }
  };
  go(utts.size());
  return static_cast<double>(best) / static_cast<double>(words);
}

inline Tokens random_tokens(std::mt19937_64& rng, std::size_t max_len, int alphabet) {
  std::uniform_int_distribution<std::size_t> len(0, max_len);
  std::uniform_int_distribution<int> sym(0, alphabet - 1);
  Tokens t(len(rng));
  for (auto& s : t) s = sym(rng);
  return t;
}

struct WerInstance {
  std::vector<RefUtterance> utterances;
  std::vector<Tokens> speaker_refs;  // utterances of a speaker joined by onset
  std::vector<Tokens> hyps;
};

// C channels, U >= C utterances, every speaker owns at least one utterance
// and the references hold at least one word.
inline WerInstance random_wer_instance(std::mt19937_64& rng, std::size_t channels, std::size_t utterances) {
  WerInstance w;
  while (true) {
    w = {};
    std::vector<std::size_t> onsets(utterances);
    for (std::size_t i = 0; i < utterances; ++i) onsets[i] = i;
    std::shuffle(onsets.begin(), onsets.end(), rng);
    std::uniform_int_distribution<std::size_t> spk(0, channels - 1);
    for (std::size_t u = 0; u < utterances; ++u) {
      int speaker = static_cast<int>(u < channels ? u : spk(rng));
      w.utterances.push_back({speaker, onsets[u], random_tokens(rng, 3, 3)});
    }
    w.speaker_refs.assign(channels, {});
    std::vector<std::size_t> order(utterances);
    for (std::size_t i = 0; i < utterances; ++i) order[i] = i;
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return w.utterances[a].onset_index < w.utterances[b].onset_index; });
    for (std::size_t u : order) {
      auto& dst = w.speaker_refs[static_cast<std::size_t>(w.utterances[u].speaker)];
      dst.insert(dst.end(), w.utterances[u].tokens.begin(), w.utterances[u].tokens.end());
    }
    for (std::size_t c = 0; c < channels; ++c) w.hyps.push_back(random_tokens(rng, 5, 3));
    if (word_count(w.speaker_refs) > 0) return w;
  }
}

}  // namespace gpit::oracle
