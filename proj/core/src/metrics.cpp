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

#include "gpit/metrics.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace gpit {

EditCounts& EditCounts::operator+=(const EditCounts& other) {
  errors += other.errors;
  substitutions += other.substitutions;
  insertions += other.insertions;
  deletions += other.deletions;
  return *this;
}

EditCounts word_edit_distance(std::span<const int> ref, std::span<const int> hyp) {
  const std::size_t n = ref.size(), m = hyp.size();
  std::vector<std::size_t> d((n + 1) * (m + 1));
  auto at = [&](std::size_t i, std::size_t j) -> std::size_t& { return d[i * (m + 1) + j]; };
  for (std::size_t i = 0; i <= n; ++i) at(i, 0) = i;
  for (std::size_t j = 0; j <= m; ++j) at(0, j) = j;
  for (std::size_t i = 1; i <= n; ++i) {
    for (std::size_t j = 1; j <= m; ++j) {
      const std::size_t sub = at(i - 1, j - 1) + (ref[i - 1] == hyp[j - 1] ? 0 : 1);
      at(i, j) = std::min({sub, at(i - 1, j) + 1, at(i, j - 1) + 1});
    }
  }
  EditCounts counts;
  counts.errors = at(n, m);
  std::size_t i = n, j = m;
  while (i > 0 || j > 0) {
    if (i > 0 && j > 0 && at(i, j) == at(i - 1, j - 1) + (ref[i - 1] == hyp[j - 1] ? 0 : 1)) {
      if (ref[i - 1] != hyp[j - 1]) ++counts.substitutions;
      --i;
      --j;
    } else if (i > 0 && at(i, j) == at(i - 1, j) + 1) {
      ++counts.deletions;
      --i;
    } else {
      ++counts.insertions;
      --j;
    }
  }
  return counts;
}

double wer(std::span<const int> ref, std::span<const int> hyp) {
  if (ref.empty()) throw std::invalid_argument("wer: empty reference");
  return static_cast<double>(word_edit_distance(ref, hyp).errors) / static_cast<double>(ref.size());
}

AssignmentResult cp_wer_counts(std::span<const Tokens> refs, std::span<const Tokens> hyps) {
  if (refs.size() != hyps.size()) throw std::invalid_argument("cp_wer: speaker and channel counts differ");
  if (refs.empty() || refs.size() > kMaxChannels) throw std::invalid_argument("cp_wer: unsupported channel count");
  const std::size_t c = refs.size();
  std::size_t words = 0;
  for (const auto& r : refs) words += r.size();
  if (words == 0) throw std::invalid_argument("cp_wer: all references are empty");

  std::vector<EditCounts> pair(c * c);
  for (std::size_t r = 0; r < c; ++r) {
    for (std::size_t h = 0; h < c; ++h) pair[r * c + h] = word_edit_distance(refs[r], hyps[h]);
  }
  AssignmentResult best;
  best.words = words;
  std::vector<std::size_t> perm(c);
  std::iota(perm.begin(), perm.end(), 0);
  bool first = true;
  do {
    EditCounts total;
    for (std::size_t r = 0; r < c; ++r) total += pair[r * c + perm[r]];
    if (first || total.errors < best.counts.errors) {
      best.counts = total;
      best.assignment = perm;
      first = false;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

double cp_wer(std::span<const Tokens> refs, std::span<const Tokens> hyps) { return cp_wer_counts(refs, hyps).wer(); }

AssignmentResult orc_wer_counts(std::span<const RefUtterance> refs, std::span<const Tokens> hyps) {
  if (refs.empty()) throw std::invalid_argument("orc_wer: empty reference set");
  if (refs.size() > kMaxUtterances) throw std::invalid_argument("orc_wer: too many reference utterances");
  if (hyps.empty() || hyps.size() > kMaxChannels) throw std::invalid_argument("orc_wer: unsupported channel count");
  const std::size_t u = refs.size(), c = hyps.size();
  std::size_t words = 0;
  for (const auto& r : refs) words += r.tokens.size();
  if (words == 0) throw std::invalid_argument("orc_wer: all references are empty");

  // Stable onset order decides the concatenation order within a channel.
  std::vector<std::size_t> order(u);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return refs[a].onset_index < refs[b].onset_index; });

  AssignmentResult best;
  best.words = words;
  std::vector<std::size_t> assign(u, 0);
  bool first = true;
  while (true) {
    EditCounts total;
    for (std::size_t ch = 0; ch < c; ++ch) {
      Tokens joined;
      for (std::size_t k : order) {
        if (assign[k] == ch) joined.insert(joined.end(), refs[k].tokens.begin(), refs[k].tokens.end());
      }
      total += word_edit_distance(joined, hyps[ch]);
    }
    if (first || total.errors < best.counts.errors) {
      best.counts = total;
      best.assignment = assign;
      first = false;
    }
    // Odometer with the last utterance varying fastest: lexicographic order.
    std::size_t pos = u;
    while (pos > 0 && ++assign[pos - 1] == c) assign[--pos] = 0;
    if (pos == 0) break;
  }
  return best;
}

double orc_wer(std::span<const RefUtterance> refs, std::span<const Tokens> hyps) {
  return orc_wer_counts(refs, hyps).wer();
}

std::vector<RefUtterance> single_utterance_refs(std::span<const Tokens> refs) {
  std::vector<RefUtterance> out;
  for (std::size_t c = 0; c < refs.size(); ++c) out.push_back({static_cast<int>(c), c, refs[c]});
  return out;
}

void EvalReport::add(ItemEval item) {
  cp_counts += item.cp.counts;
  orc_counts += item.orc.counts;
  words += item.cp.words;
  sisdr_sum += item.sisdr_db;
  items.push_back(std::move(item));
}

double EvalReport::cp_wer() const { return static_cast<double>(cp_counts.errors) / static_cast<double>(words); }
double EvalReport::orc_wer() const { return static_cast<double>(orc_counts.errors) / static_cast<double>(words); }

double EvalReport::mean_cp_wer_per_item() const {
  double total = 0.0;
  for (const auto& item : items) total += item.cp.wer();
  return total / static_cast<double>(items.size());
}

double EvalReport::mean_sisdr() const { return sisdr_sum / static_cast<double>(items.size()); }

std::string format_tokens(std::span<const int> tokens) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out += ' ';
    out += std::to_string(tokens[i]);
  }
  return out;
}

Tokens parse_tokens(const std::string& line) {
  Tokens out;
  std::istringstream in(line);
  std::string word;
  while (in >> word) {
    std::size_t used = 0;
    int value = std::stoi(word, &used);
    if (used != word.size() || value < 0) throw std::invalid_argument("transcript: bad token '" + word + "'");
    out.push_back(value);
  }
  return out;
}

void write_hypotheses(const std::filesystem::path& path, std::span<const Tokens> channels) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  for (const auto& ch : channels) out << format_tokens(ch) << '\n';
}

std::vector<Tokens> read_hypotheses(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::vector<Tokens> out;
  std::string line;
  while (std::getline(in, line)) out.push_back(parse_tokens(line));
  return out;
}

void write_references(const std::filesystem::path& path, std::span<const RefUtterance> refs) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  for (const auto& r : refs) out << r.speaker << '\t' << r.onset_index << '\t' << format_tokens(r.tokens) << '\n';
}

std::vector<RefUtterance> read_references(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::vector<RefUtterance> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto t1 = line.find('\t');
    auto t2 = t1 == std::string::npos ? std::string::npos : line.find('\t', t1 + 1);
    if (t2 == std::string::npos) throw std::invalid_argument("reference line needs three tab-separated fields");
    out.push_back({std::stoi(line.substr(0, t1)), std::stoull(line.substr(t1 + 1, t2 - t1 - 1)),
                   parse_tokens(line.substr(t2 + 1))});
  }
  return out;
}

}  // namespace gpit
