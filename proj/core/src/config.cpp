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

#include "gpit/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <variant>

#include "gpit/checkpoint.hpp"

namespace gpit {

namespace {

static_assert(std::is_same_v<std::uint64_t, std::size_t>, "seed keys share the size_t parser");

using Field = std::variant<std::size_t ExperimentConfig::*,
                           double ExperimentConfig::*, std::string ExperimentConfig::*,
                           std::vector<double> ExperimentConfig::*>;

struct Key {
  std::string_view name;
  Field field;
};

// Serialization order.
const std::vector<Key>& keys() {
  using C = ExperimentConfig;
  static const std::vector<Key> table = {
      {"seed", &C::seed},
      {"num_seeds", &C::num_seeds},
      {"output_dir", &C::output_dir},
      {"sample_rate", &C::sample_rate},
      {"symbol_samples", &C::symbol_samples},
      {"num_symbols", &C::num_symbols},
      {"min_symbols", &C::min_symbols},
      {"max_symbols", &C::max_symbols},
      {"min_mixing_snr_db", &C::min_mixing_snr_db},
      {"max_mixing_snr_db", &C::max_mixing_snr_db},
      {"min_noise_snr_db", &C::min_noise_snr_db},
      {"max_noise_snr_db", &C::max_noise_snr_db},
      {"rir_reflections", &C::rir_reflections},
      {"train_items", &C::train_items},
      {"finetune_items", &C::finetune_items},
      {"valid_items", &C::valid_items},
      {"test_items", &C::test_items},
      {"rec_train_items", &C::rec_train_items},
      {"rec_test_items", &C::rec_test_items},
      {"train_tsl", &C::train_tsl},
      {"sep_kernel", &C::sep_kernel},
      {"sep_stride", &C::sep_stride},
      {"sep_channels", &C::sep_channels},
      {"sep_hidden", &C::sep_hidden},
      {"sep_layers", &C::sep_layers},
      {"rec_window", &C::rec_window},
      {"rec_hop", &C::rec_hop},
      {"rec_channels", &C::rec_channels},
      {"rec_hidden_a", &C::rec_hidden_a},
      {"rec_hidden_b", &C::rec_hidden_b},
      {"rec_seed_a", &C::rec_seed_a},
      {"rec_seed_b", &C::rec_seed_b},
      {"rec_epochs", &C::rec_epochs},
      {"rec_batch", &C::rec_batch},
      {"rec_lr", &C::rec_lr},
      {"rec_aug_prob", &C::rec_aug_prob},
      {"rec_aug_snr_min", &C::rec_aug_snr_min},
      {"rec_aug_snr_max", &C::rec_aug_snr_max},
      {"lr_pretrain", &C::lr_pretrain},
      {"lr_finetune", &C::lr_finetune},
      {"pretrain_epochs", &C::pretrain_epochs},
      {"plateau_patience", &C::plateau_patience},
      {"plateau_warmup", &C::plateau_warmup},
      {"ates", &C::ates},
      {"batch_size", &C::batch_size},
      {"alpha", &C::alpha},
      {"alphas", &C::alphas},
      {"alpha_seeds", &C::alpha_seeds},
      {"tsl_limits", &C::tsl_limits},
      {"tsl_seeds", &C::tsl_seeds},
      {"tsl_ates", &C::tsl_ates},
      {"ae_on", &C::ae_on},
  };
  return table;
}

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

template <typename T>
T parse_number(std::string_view key, std::string_view text) {
  T value{};
  auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || end != text.data() + text.size() || text.empty()) {
    throw ConfigError("config: bad value '" + std::string(text) + "' for key '" + std::string(key) + "'");
  }
  if constexpr (std::is_floating_point_v<T>) {
    if (!std::isfinite(value)) throw ConfigError("config: non-finite value for key '" + std::string(key) + "'");
  }
  return value;
}

void assign(ExperimentConfig& c, const Key& key, std::string_view text) {
  std::visit(
      [&](auto member) {
        using T = std::remove_cvref_t<decltype(c.*member)>;
        if constexpr (std::is_same_v<T, std::string>) {
          c.*member = std::string(text);
        } else if constexpr (std::is_same_v<T, std::vector<double>>) {
          std::vector<double> values;
          while (!text.empty()) {
            auto comma = text.find(',');
            values.push_back(parse_number<double>(key.name, trim(text.substr(0, comma))));
            text = comma == std::string_view::npos ? std::string_view{} : text.substr(comma + 1);
          }
          c.*member = std::move(values);
        } else {
          c.*member = parse_number<T>(key.name, text);
        }
      },
      key.field);
}

std::string render(const ExperimentConfig& c, const Key& key) {
  return std::visit(
      [&](auto member) -> std::string {
        using T = std::remove_cvref_t<decltype(c.*member)>;
        if constexpr (std::is_same_v<T, std::string>) {
          return c.*member;
        } else if constexpr (std::is_same_v<T, std::vector<double>>) {
          std::string out;
          for (std::size_t i = 0; i < (c.*member).size(); ++i) {
            if (i) out += ',';
            out += format_real((c.*member)[i]);
          }
          return out;
        } else if constexpr (std::is_floating_point_v<T>) {
          return format_real(c.*member);
        } else {
          return std::to_string(c.*member);
        }
      },
      key.field);
}

const Key& find_key(std::string_view name) {
  for (const auto& k : keys()) {
    if (k.name == name) return k;
  }
  throw ConfigError("config: unknown key '" + std::string(name) + "'");
}

}  // namespace

std::string format_real(double value) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, value);
  return std::string(buf, end);
}

std::vector<std::string> config_keys() {
  std::vector<std::string> out;
  for (const auto& k : keys()) out.emplace_back(k.name);
  return out;
}

ExperimentConfig parse_config(std::string_view text) {
  ExperimentConfig c;
  std::set<std::string, std::less<>> seen;
  std::size_t line_no = 0;
  while (!text.empty()) {
    auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError("config line " + std::to_string(line_no) + ": expected 'key = value'");
    }
    auto name = trim(line.substr(0, eq));
    auto value = trim(line.substr(eq + 1));
    if (!seen.insert(std::string(name)).second) {
      throw ConfigError("config line " + std::to_string(line_no) + ": duplicate key '" + std::string(name) + "'");
    }
    try {
      assign(c, find_key(name), value);
    } catch (const ConfigError& e) {
      throw ConfigError("config line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  validate(c);
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

void apply_override(ExperimentConfig& config, std::string_view assignment) {
  auto eq = assignment.find('=');
  if (eq == std::string_view::npos) throw ConfigError("override must be key=value: " + std::string(assignment));
  assign(config, find_key(trim(assignment.substr(0, eq))), trim(assignment.substr(eq + 1)));
}

void validate(const ExperimentConfig& c) {
  auto require = [](bool ok, const char* what) {
    if (!ok) throw ConfigError(std::string("config: ") + what);
  };
  require(c.num_seeds >= 1, "num_seeds must be at least 1");
  require(c.num_symbols >= 1, "num_symbols must be positive");
  require(c.min_symbols >= 1 && c.min_symbols <= c.max_symbols, "need 1 <= min_symbols <= max_symbols");
  require(c.min_mixing_snr_db <= c.max_mixing_snr_db, "mixing SNR range is empty");
  require(c.min_noise_snr_db <= c.max_noise_snr_db, "noise SNR range is empty");
  require(c.train_tsl >= 0, "train_tsl must be >= 0");
  require(c.sep_stride >= 1 && c.sep_stride <= c.sep_kernel, "need 1 <= sep_stride <= sep_kernel");
  require(c.rec_hop >= 1 && c.rec_window >= 1, "recognizer window and hop must be positive");
  require(c.batch_size >= 1 && c.rec_batch >= 1, "batch sizes must be positive");
  require(c.rec_aug_prob >= 0 && c.rec_aug_prob <= 1, "rec_aug_prob must lie in [0, 1]");
  require(c.rec_aug_snr_min <= c.rec_aug_snr_max, "rec_aug_snr_min exceeds rec_aug_snr_max");
  require(c.lr_pretrain > 0 && c.lr_finetune > 0 && c.rec_lr > 0, "learning rates must be positive");
  require(c.alpha >= 0 && c.alpha <= 1, "alpha must lie in [0, 1]");
  for (double a : c.alphas) require(a >= 0 && a <= 1, "alphas must lie in [0, 1]");
  for (double t : c.tsl_limits) require(t > 0, "tsl_limits must be positive");
  require(c.ae_on == "logits" || c.ae_on == "log_probs", "ae_on must be logits or log_probs");
  require(c.test_items >= 1 && c.valid_items >= 1, "evaluation splits must be non-empty");
}

std::string to_text(const ExperimentConfig& config) {
  std::string out;
  for (const auto& k : keys()) out += std::string(k.name) + " = " + render(config, k) + "\n";
  return out;
}

std::string config_hash(const ExperimentConfig& config) {
  ExperimentConfig copy = config;
  copy.output_dir.clear();
  return hex64(fnv1a64(to_text(copy)));
}

}  // namespace gpit
