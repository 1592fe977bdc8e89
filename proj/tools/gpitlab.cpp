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

// gpitlab <gen-data|train-recognizers|pretrain|finetune|evaluate|sweep-alpha|sweep-tsl|dump-logits>

#include <cctype>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "gpit/experiment.hpp"

namespace {

struct Common {
  std::string config_path;
  std::vector<std::string> overrides;
  bool quiet = false;
};

gpit::ExperimentConfig resolve(const Common& common) {
  gpit::ExperimentConfig config = common.config_path.empty() ? gpit::ExperimentConfig{}
                                                             : gpit::load_config(common.config_path);
  for (const auto& o : common.overrides) gpit::apply_override(config, o);
  gpit::validate(config);
  return config;
}

gpit::Experiment make(const Common& common) {
  gpit::ProgressFn log;
  if (!common.quiet) log = [](const std::string& line) { std::cerr << line << '\n'; };
  return gpit::Experiment(resolve(common), log);
}

std::vector<std::size_t> seed_list(const gpit::Experiment& exp, const std::optional<std::size_t>& seed) {
  if (seed) {
    if (*seed >= exp.config().num_seeds) throw std::invalid_argument("--seed-index beyond num_seeds");
    return {*seed};
  }
  std::vector<std::size_t> all(exp.config().num_seeds);
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  return all;
}

char recognizer_letter(const std::string& text) {
  if (text.size() == 1 && (std::toupper(text[0]) == 'A' || std::toupper(text[0]) == 'B')) {
    return static_cast<char>(std::toupper(text[0]));
  }
  throw std::invalid_argument("--recognizer must be A or B");
}

void print_table(const gpit::MetricsTable& table) { std::cout << table.to_csv().str(); }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Guided permutation-invariant training laboratory"};
  app.require_subcommand(1);
  Common common;
  auto add_common = [&common](CLI::App* sub) {
    sub->add_option("-c,--config", common.config_path, "Config file (key = value)")->check(CLI::ExistingFile);
    sub->add_option("-s,--set", common.overrides, "Override a config key (key=value), repeatable");
    sub->add_flag("-q,--quiet", common.quiet, "Suppress progress output");
  };

  std::optional<std::size_t> seed_index;
  std::string arm_text = "ae";
  std::string recognizer_text = "A";
  std::size_t item = 0;
  std::size_t wav_items = 0;

  auto* gen = app.add_subcommand("gen-data", "Write dataset manifests (optionally WAV examples)");
  add_common(gen);
  gen->add_option("--wav", wav_items, "Export this many test mixtures and references as WAV");

  auto* rec = app.add_subcommand("train-recognizers", "Train recognizers A and B on clean speech");
  add_common(rec);

  auto* pre = app.add_subcommand("pretrain", "Pretrain the separator with PIT on SI-SDR");
  add_common(pre);
  pre->add_option("--seed-index", seed_index, "Only this seed (default: all)");

  auto* fine = app.add_subcommand("finetune", "Fine-tune a pretrained separator for the configured ATEs");
  add_common(fine);
  fine->add_option("--arm", arm_text, "sisdr | ae | joint | joint:<alpha>");
  fine->add_option("--seed-index", seed_index, "Only this seed (default: all)");

  auto* eval = app.add_subcommand("evaluate", "Evaluate oracle, mixture, baseline and both arms");
  add_common(eval);
  eval->add_option("--recognizer", recognizer_text, "A (fine-tuning recognizer) or B (unseen)");
  eval->add_option("--seed-index", seed_index, "Only this seed (default: all seeds plus the median)");

  auto* alpha = app.add_subcommand("sweep-alpha", "Fine-tune and evaluate every configured alpha");
  add_common(alpha);

  auto* tsl = app.add_subcommand("sweep-tsl", "Fine-tune the AE arm under every training-length limit");
  add_common(tsl);

  auto* dump = app.add_subcommand("dump-logits", "Write recognizer logits of references and estimates");
  add_common(dump);
  dump->add_option("--recognizer", recognizer_text, "A or B");
  dump->add_option("--seed-index", seed_index, "Seed (default 0)");
  dump->add_option("--item", item, "Test item index");

  CLI11_PARSE(app, argc, argv);

  try {
    gpit::Experiment exp = make(common);
    if (gen->parsed()) {
      auto result = exp.gen_data(wav_items);
      for (std::size_t i = 0; i < result.manifests.size(); ++i) {
        std::cout << result.manifests[i].string() << ' ' << result.manifest_hashes[i] << '\n';
      }
    } else if (rec->parsed()) {
      auto set = exp.train_recognizers();
      std::cout << "clean_wer_a=" << gpit::format_real(set.clean_wer_a)
                << " clean_wer_b=" << gpit::format_real(set.clean_wer_b) << '\n';
    } else if (pre->parsed()) {
      for (auto s : seed_list(exp, seed_index)) {
        auto result = exp.pretrain(s);
        std::cout << "seed " << s << " valid_sisdri=" << gpit::format_real(result.epochs.back().valid_sisdri) << '\n';
      }
    } else if (fine->parsed()) {
      const gpit::Arm arm = gpit::parse_arm(arm_text, exp.config().alpha);
      for (auto s : seed_list(exp, seed_index)) {
        auto result = exp.finetune(s, arm);
        std::cout << "seed " << s << " arm " << arm.name() << " checkpoints=" << result.checkpoints.size()
                  << " final_loss=" << gpit::format_real(result.ate_losses.back()) << '\n';
      }
    } else if (eval->parsed()) {
      const char which = recognizer_letter(recognizer_text);
      if (seed_index) {
        print_table(exp.evaluate(*seed_index, which));
      } else {
        print_table(exp.evaluate_all(which));
      }
    } else if (alpha->parsed()) {
      auto points = exp.sweep_alpha();
      std::cout << "alpha points: " << points.size() << " (see " << (exp.root() / "sweep_alpha.csv").string()
                << ")\n";
    } else if (tsl->parsed()) {
      auto points = exp.sweep_tsl();
      for (const auto& p : points) {
        std::cout << "tsl " << gpit::format_real(p.limit) << " cp_wer=" << gpit::format_real(p.cp_wer)
                  << " transcript_inputs=" << p.transcript_inputs
                  << " seconds_per_ate=" << gpit::format_real(p.seconds_per_ate) << '\n';
      }
    } else if (dump->parsed()) {
      auto result = exp.dump_logits(seed_index.value_or(0), recognizer_letter(recognizer_text), item);
      for (const auto& [name, d] : result.ae_distance) std::cout << name << " ae_distance=" << gpit::format_real(d) << '\n';
    }
  } catch (const std::exception& e) {
    std::cerr << "gpitlab: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
