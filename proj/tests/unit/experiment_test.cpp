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

#include <filesystem>
#include <fstream>
#include <sstream>

#include "gpit/experiment.hpp"

namespace gpit {
namespace {

namespace fs = std::filesystem;

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

TEST(Csv, QuotesAndReadsBack) {
  auto path = fs::temp_directory_path() / "gpit_csv_test" / "t.csv";
  CsvTable t({"name", "value"});
  t.add_comment("config_hash = abc");
  t.add_row({"plain", "1"});
  t.add_row({"with,comma", "say \"hi\""});
  EXPECT_THROW(t.add_row({"short"}), std::invalid_argument);
  t.write(path);
  const std::string text = slurp(path);
  EXPECT_EQ(text.substr(0, 20), "# config_hash = abc\n");
  EXPECT_NE(text.find("name,value\r\n"), std::string::npos);
  auto rows = read_csv(path);
  ASSERT_EQ(rows.size(), 3u);
  EXPECT_EQ(rows[2][0], "with,comma");
  EXPECT_EQ(rows[2][1], "say \"hi\"");
  fs::remove_all(path.parent_path());
}

TEST(Median, OddEvenAndEmpty) {
  EXPECT_EQ(median({3, 1, 2}), 2.0);
  EXPECT_EQ(median({4, 1, 3, 2}), 2.5);
  EXPECT_THROW(median({}), std::invalid_argument);
}

TEST(Arm, ParseAndName) {
  EXPECT_EQ(parse_arm("sisdr", 0.5).name(), "sisdr");
  EXPECT_EQ(parse_arm("ae", 0.5).alpha, 0.0);
  Arm j = parse_arm("joint", 0.5);
  EXPECT_EQ(j.kind, Arm::Kind::kJoint);
  EXPECT_EQ(j.alpha, 0.5);
  EXPECT_EQ(parse_arm("joint:0.4", 0.5).name(), "joint_a0.4");
  EXPECT_THROW(parse_arm("joint:1.5", 0.5), std::invalid_argument);
  EXPECT_THROW(parse_arm("joint:0.4x", 0.5), std::invalid_argument);
  EXPECT_THROW(parse_arm("pit", 0.5), std::invalid_argument);
}

MetricsTable table(double mix_cp, double ae_cp, double ae_sdr) {
  MetricsTable t;
  t.rows.push_back({"mixture", mix_cp, mix_cp - 5, std::nullopt});
  t.rows.push_back({"ae", ae_cp, ae_cp - 1, ae_sdr});
  return t;
}

TEST(MetricsTable, DeltasAndMedians) {
  MetricsTable t = table(70, 20, 3);
  EXPECT_EQ(t.delta_cp("ae"), 50.0);
  EXPECT_EQ(t.delta_orc("ae"), 46.0);
  EXPECT_THROW(t.row("nope"), std::out_of_range);
  MetricsTable m = median_table({table(70, 20, 3), table(60, 30, 1), table(80, 10, 2)});
  EXPECT_EQ(m.row("mixture").cp_wer, 70.0);
  EXPECT_EQ(m.row("ae").cp_wer, 20.0);
  EXPECT_EQ(m.row("ae").sisdr_db, 2.0);
  EXPECT_FALSE(m.row("mixture").sisdr_db.has_value());
}

ExperimentConfig tiny_config(const fs::path& dir) {
  ExperimentConfig cfg = parse_config(
      "num_seeds = 1\n"
      "max_symbols = 4\n"
      "train_items = 6\nfinetune_items = 4\nvalid_items = 3\ntest_items = 3\n"
      "rec_train_items = 6\nrec_test_items = 3\n"
      "sep_channels = 6\nsep_hidden = 6\nsep_layers = 1\n"
      "rec_channels = 4\nrec_hidden_a = 6\nrec_hidden_b = 5\nrec_epochs = 1\n"
      "pretrain_epochs = 2\nates = 2\n");
  cfg.output_dir = dir.string();
  return cfg;
}

class TinyPipeline : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() / ("gpit_pipeline_" + std::to_string(::getpid()));
    fs::remove_all(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }
  fs::path dir_;
};

TEST_F(TinyPipeline, EvaluateNeedsArtifacts) {
  Experiment exp(tiny_config(dir_));
  EXPECT_FALSE(exp.has_recognizers());
  EXPECT_THROW(exp.evaluate(0, 'A'), std::runtime_error);
}

TEST_F(TinyPipeline, FinetuningLeavesTheRecognizerAloneAndIsDeterministic) {
  std::string first_ckpt;
  for (int run = 0; run < 2; ++run) {
    fs::remove_all(dir_);
    Experiment exp(tiny_config(dir_));
    exp.train_recognizers();
    exp.pretrain(0);
    FinetuneResult ae = exp.finetune(0, parse_arm("ae", 0.5));
    EXPECT_EQ(ae.transcript_inputs, 0u);
    ASSERT_EQ(ae.recognizer_hashes.size(), 3u);
    for (const auto& h : ae.recognizer_hashes) EXPECT_EQ(h, ae.recognizer_hashes.front());
    ASSERT_EQ(ae.checkpoints.size(), 2u);
    const std::string bytes = slurp(ae.checkpoints.back());
    if (run == 0) {
      first_ckpt = bytes;
    } else {
      EXPECT_EQ(bytes, first_ckpt);
    }
  }
  Experiment exp(tiny_config(dir_));
  exp.finetune(0, parse_arm("sisdr", 0.5));
  MetricsTable t = exp.evaluate(0, 'A');
  for (const char* system : {"oracle", "mixture", "baseline", "sisdr_ates", "ae_ates"}) EXPECT_NO_THROW(t.row(system));
  EXPECT_TRUE(fs::exists(exp.seed_dir(0) / "eval_a.csv"));
}

}  // namespace
}  // namespace gpit
