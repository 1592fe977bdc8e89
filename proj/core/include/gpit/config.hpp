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
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace gpit {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Every key of the flat `key = value` config file. See docs/config.md.
struct ExperimentConfig {
  std::uint64_t seed = 1;
  std::size_t num_seeds = 5;
  std::string output_dir = "runs";

  // corpus
  double sample_rate = 8000.0;
  std::size_t symbol_samples = 800;
  std::size_t num_symbols = 8;
  std::size_t min_symbols = 3;
  std::size_t max_symbols = 10;
  double min_mixing_snr_db = 0.0;
  double max_mixing_snr_db = 5.0;
  double min_noise_snr_db = -6.0;
  double max_noise_snr_db = 3.0;
  std::size_t rir_reflections = 3;

  // dataset sizes (items per epoch for the training splits)
  std::size_t train_items = 512;
  std::size_t finetune_items = 256;
  std::size_t valid_items = 64;
  std::size_t test_items = 200;
  std::size_t rec_train_items = 256;
  std::size_t rec_test_items = 200;
  double train_tsl = 0.5;  // seconds; 0 disables truncation

  // separator
  std::size_t sep_kernel = 32;
  std::size_t sep_stride = 16;
  std::size_t sep_channels = 64;
  std::size_t sep_hidden = 64;
  std::size_t sep_layers = 3;

  // recognizers
  std::size_t rec_window = 256;
  std::size_t rec_hop = 128;
  std::size_t rec_channels = 32;
  std::size_t rec_hidden_a = 64;
  std::size_t rec_hidden_b = 48;
  std::uint64_t rec_seed_a = 101;
  std::uint64_t rec_seed_b = 202;
  std::size_t rec_epochs = 12;
  std::size_t rec_batch = 8;
  double rec_lr = 3e-3;
  double rec_aug_prob = 0.5;        // share of training utterances with added white noise
  double rec_aug_snr_min = 0.0;
  double rec_aug_snr_max = 30.0;

  // optimisation
  double lr_pretrain = 1e-3;
  double lr_finetune = 1e-4;
  std::size_t pretrain_epochs = 40;
  std::size_t plateau_patience = 3;
  std::size_t plateau_warmup = 10;
  std::size_t ates = 30;
  std::size_t batch_size = 4;

  // fine-tuning arms and sweeps
  double alpha = 0.5;
  std::vector<double> alphas = {0.0, 0.2, 0.4, 0.6, 0.8, 1.0};
  std::size_t alpha_seeds = 3;
  std::vector<double> tsl_limits = {0.25, 0.5, 1.0};
  std::size_t tsl_seeds = 1;
  std::size_t tsl_ates = 30;
  std::string ae_on = "logits";
};

// Parses `key = value` lines; `#` starts a comment. Unknown keys, duplicate
// keys and malformed values throw ConfigError naming the line.
ExperimentConfig parse_config(std::string_view text);
ExperimentConfig load_config(const std::filesystem::path& path);
// Applies one `key=value` override on top of a config.
void apply_override(ExperimentConfig& config, std::string_view assignment);
void validate(const ExperimentConfig& config);

// One `key = value` line per key in a fixed order; values use the shortest
// round-trip representation. parse_config(to_text(c)) == c.
std::string to_text(const ExperimentConfig& config);
// FNV-1a 64 of to_text with output_dir cleared.
std::string config_hash(const ExperimentConfig& config);
std::vector<std::string> config_keys();

std::string format_real(double value);

}  // namespace gpit
