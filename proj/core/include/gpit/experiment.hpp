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
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "gpit/config.hpp"
#include "gpit/corpus.hpp"
#include "gpit/losses.hpp"
#include "gpit/recognizer.hpp"
#include "gpit/separator.hpp"

namespace gpit {

// RFC-4180 CSV with `#` provenance comments ahead of the header row.
class CsvTable {
 public:
  explicit CsvTable(std::vector<std::string> header) : header_(std::move(header)) {}

  void add_comment(std::string line) { comments_.push_back(std::move(line)); }
  void add_row(std::vector<std::string> row);
  const std::vector<std::vector<std::string>>& rows() const { return rows_; }
  const std::vector<std::string>& header() const { return header_; }

  std::string str() const;
  void write(const std::filesystem::path& path) const;

 private:
  std::vector<std::string> comments_;
  std::vector<std::string> header_;
  std::vector<std::vector<std::string>> rows_;
};

// Parses the data rows back (comments skipped, header returned first).
std::vector<std::vector<std::string>> read_csv(const std::filesystem::path& path);

double median(std::vector<double> values);

struct Arm {
  enum class Kind { kSisdr, kAe, kJoint };
  Kind kind = Kind::kSisdr;
  double alpha = 1.0;  // joint only

  // "sisdr", "ae", "joint_a0.4"
  std::string name() const;
};

// "sisdr" | "ae" | "joint" (alpha from the config) | "joint:<alpha>"
Arm parse_arm(std::string_view text, double default_alpha);

struct GenDataResult {
  std::vector<std::filesystem::path> manifests;
  std::vector<std::string> manifest_hashes;
};

struct RecognizerSet {
  RecognizerParams a;
  RecognizerParams b;
  double clean_wer_a = 1.0;
  double clean_wer_b = 1.0;
};

struct PretrainEpoch {
  std::size_t epoch = 0;
  double learning_rate = 0.0;
  double train_loss = 0.0;
  double valid_sisdr = 0.0;
  double valid_sisdri = 0.0;
};

struct PretrainResult {
  SeparatorParams params;
  std::vector<PretrainEpoch> epochs;
};

struct FinetuneOptions {
  std::optional<double> tsl_seconds;  // defaults to the config's train_tsl
  std::optional<std::size_t> ates;    // defaults to the config's ates
  std::string directory;              // defaults to the arm name
};

struct FinetuneResult {
  SeparatorParams params;
  std::vector<double> step_losses;
  std::vector<double> ate_losses;
  std::vector<double> ate_seconds;  // wall clock, excluded from CSVs compared for determinism
  std::vector<std::string> recognizer_hashes;  // recognizer A before ATE 1, then after every ATE
  std::uint64_t transcript_inputs = 0;
  std::vector<std::filesystem::path> checkpoints;
};

struct MetricsRow {
  std::string system;
  double cp_wer = 0.0;   // percent
  double orc_wer = 0.0;  // percent
  std::optional<double> sisdr_db;
};

// Rows: oracle, mixture, baseline, sisdr_ates, ae_ates. Deltas are derived
// against the mixture row on output.
struct MetricsTable {
  std::vector<MetricsRow> rows;

  const MetricsRow& row(std::string_view system) const;
  double delta_cp(std::string_view system) const;
  double delta_orc(std::string_view system) const;
  CsvTable to_csv() const;
};

MetricsTable median_table(const std::vector<MetricsTable>& tables);

struct AlphaPoint {
  std::size_t seed_index = 0;
  double alpha = 0.0;
  double cp_wer = 0.0;
  double orc_wer = 0.0;
  double sisdr_db = 0.0;
};

struct TslPoint {
  std::size_t seed_index = 0;
  double limit = 0.0;
  double cp_wer = 0.0;
  double orc_wer = 0.0;
  double sisdr_db = 0.0;
  std::uint64_t transcript_inputs = 0;
  double seconds_per_ate = 0.0;
};

struct LogitDump {
  std::vector<LogitSequence> references;                  // per speaker
  std::vector<std::pair<std::string, std::vector<LogitSequence>>> estimates;  // per system, speaker-aligned
  std::vector<std::pair<std::string, double>> ae_distance;  // per system, summed over speakers
  std::vector<std::filesystem::path> files;
};

class Experiment {
 public:
  explicit Experiment(ExperimentConfig config, ProgressFn progress = {});

  const ExperimentConfig& config() const { return config_; }
  const VoicePool& voices() const { return voices_; }
  const std::filesystem::path& root() const { return root_; }
  std::string hash() const { return hash_; }

  std::uint64_t run_seed(std::size_t seed_index) const { return config_.seed + seed_index; }
  DatasetSpec train_spec(std::size_t seed_index, std::optional<double> tsl_seconds) const;
  DatasetSpec valid_spec() const;
  DatasetSpec test_spec() const;
  DatasetSpec recognizer_train_spec() const;
  DatasetSpec recognizer_test_spec() const;
  SeparatorConfig separator_config() const;
  RecognizerConfig recognizer_config(char which) const;

  std::filesystem::path seed_dir(std::size_t seed_index) const;
  std::filesystem::path recognizer_path(char which) const;
  std::filesystem::path pretrain_path(std::size_t seed_index) const;
  std::filesystem::path arm_dir(std::size_t seed_index, const std::string& directory) const;
  std::filesystem::path ate_path(std::size_t seed_index, const std::string& directory, std::size_t ate) const;

  GenDataResult gen_data(std::size_t wav_items = 0);
  RecognizerSet train_recognizers();
  RecognizerParams load_recognizer(char which) const;
  PretrainResult pretrain(std::size_t seed_index);
  FinetuneResult finetune(std::size_t seed_index, const Arm& arm, const FinetuneOptions& options = {});
  SeparatorParams load_separator(const std::filesystem::path& path) const;

  // Per-seed table for one seed (written to seed<i>/eval_<rec>.csv).
  MetricsTable evaluate(std::size_t seed_index, char recognizer);
  // Every seed plus the median table (eval_<rec>_median.csv).
  MetricsTable evaluate_all(char recognizer, std::vector<MetricsTable>* per_seed = nullptr);
  // Trains any missing arm; alpha 1 and 0 reuse the sisdr and ae arms.
  std::vector<AlphaPoint> sweep_alpha();
  std::vector<TslPoint> sweep_tsl();
  LogitDump dump_logits(std::size_t seed_index, char recognizer, std::size_t item, bool write_files = true);

  // Trains whatever is missing for the seed: recognizers, pretraining, both arms.
  void ensure_seed(std::size_t seed_index);
  bool has_recognizers() const;

  // Evaluates a single separator on the test split.
  MetricsRow evaluate_separator(const SeparatorParams& params, const RecognizerParams& recognizer,
                                const std::string& name);

 private:
  void log(const std::string& message) const;
  void stamp(CsvTable& table, std::optional<std::size_t> seed_index) const;
  std::map<std::string, std::string> checkpoint_metadata(std::optional<std::size_t> seed_index) const;
  Checkpoint load_artifact(const std::filesystem::path& path, std::string_view hint) const;

  ExperimentConfig config_;
  ProgressFn progress_;
  VoicePool voices_;
  std::filesystem::path root_;
  std::string hash_;
};

}  // namespace gpit
