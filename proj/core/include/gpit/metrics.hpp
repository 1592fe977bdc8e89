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
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "gpit/signals.hpp"

namespace gpit {

// One word per alphabet symbol.
using Tokens = SymbolSequence;

struct EditCounts {
  std::size_t errors = 0;
  std::size_t substitutions = 0;
  std::size_t insertions = 0;
  std::size_t deletions = 0;

  EditCounts& operator+=(const EditCounts& other);
};

// Unit-cost Levenshtein alignment; among minimal alignments, prefers
// substitutions, then deletions, then insertions when backtracking.
EditCounts word_edit_distance(std::span<const int> ref, std::span<const int> hyp);

// Throws on an empty reference.
double wer(std::span<const int> ref, std::span<const int> hyp);

struct AssignmentResult {
  EditCounts counts;
  std::size_t words = 0;
  // cp: assignment[c] = hypothesis channel for reference speaker c.
  // orc: assignment[u] = hypothesis channel for reference utterance u.
  std::vector<std::size_t> assignment;

  double wer() const { return static_cast<double>(counts.errors) / static_cast<double>(words); }
};

inline constexpr std::size_t kMaxChannels = 6;
inline constexpr std::size_t kMaxUtterances = 8;

AssignmentResult cp_wer_counts(std::span<const Tokens> refs, std::span<const Tokens> hyps);
double cp_wer(std::span<const Tokens> refs, std::span<const Tokens> hyps);

struct RefUtterance {
  int speaker = 0;
  std::size_t onset_index = 0;
  Tokens tokens;
};

AssignmentResult orc_wer_counts(std::span<const RefUtterance> refs, std::span<const Tokens> hyps);
double orc_wer(std::span<const RefUtterance> refs, std::span<const Tokens> hyps);

// One utterance per speaker, onset order equal to speaker order.
std::vector<RefUtterance> single_utterance_refs(std::span<const Tokens> refs);

struct ItemEval {
  AssignmentResult cp;
  AssignmentResult orc;
  double sisdr_db = 0.0;
};

// Corpus-level aggregates: total errors over total reference words.
struct EvalReport {
  std::vector<ItemEval> items;
  EditCounts cp_counts;
  EditCounts orc_counts;
  std::size_t words = 0;
  double sisdr_sum = 0.0;

  void add(ItemEval item);
  double cp_wer() const;
  double orc_wer() const;
  double mean_cp_wer_per_item() const;
  double mean_sisdr() const;
};

// Interchange: one line per channel, tokens separated by single spaces.
std::string format_tokens(std::span<const int> tokens);
Tokens parse_tokens(const std::string& line);
void write_hypotheses(const std::filesystem::path& path, std::span<const Tokens> channels);
std::vector<Tokens> read_hypotheses(const std::filesystem::path& path);
// Reference files: speaker<TAB>onset_index<TAB>tokens
void write_references(const std::filesystem::path& path, std::span<const RefUtterance> refs);
std::vector<RefUtterance> read_references(const std::filesystem::path& path);

}  // namespace gpit
