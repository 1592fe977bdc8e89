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

#include <cmath>
#include <random>

#include "ctc_oracle.hpp"
#include "gpit/recognizer.hpp"

namespace gpit {
namespace {

std::vector<double> random_logits(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> d(0.0, 1.5);
  std::vector<double> v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

double ctc_value(const std::vector<double>& logits, std::size_t frames, std::size_t labels,
                 const std::vector<int>& target, int blank) {
  Tape tape;
  return ctc_loss(tape, Tensor::constant({frames, labels}, logits), target, blank).item();
}

TEST(Ctc, MatchesExhaustiveAlignmentSum) {
  std::size_t checked = 0;
  std::uint64_t seed = 1;
  for (const auto& c : all_ctc_cases()) {
    const int blank = static_cast<int>(c.labels - 1);
    auto logits = random_logits(c.frames * c.labels, seed++);
    if (!ctc_feasible(c)) {
      EXPECT_THROW(ctc_value(logits, c.frames, c.labels, c.target, blank), std::invalid_argument);
      EXPECT_TRUE(std::isinf(ctc_brute_force(logits, c.frames, c.labels, c.target, blank)));
      continue;
    }
    const double expected = ctc_brute_force(logits, c.frames, c.labels, c.target, blank);
    EXPECT_NEAR(ctc_value(logits, c.frames, c.labels, c.target, blank), expected, 1e-9)
        << "L=" << c.frames << " N=" << c.labels << " |t|=" << c.target.size();
    ++checked;
  }
  EXPECT_EQ(checked, 216u);  // feasible subset of the 336 enumerated cases
}

TEST(Ctc, UniformTwoFramesSingleSymbol) {
  // Paths "a a", "a -", "- a" out of four.
  EXPECT_NEAR(ctc_value({0, 0, 0, 0}, 2, 2, {0}, 1), -std::log(0.75), 1e-12);
}

TEST(Ctc, EmptyTargetIsAllBlank) {
  auto logits = random_logits(3 * 3, 42);
  double expected = 0.0;
  for (std::size_t t = 0; t < 3; ++t) {
    double z = 0.0;
    for (std::size_t n = 0; n < 3; ++n) z += std::exp(logits[t * 3 + n]);
    expected -= logits[t * 3 + 2] - std::log(z);
  }
  EXPECT_NEAR(ctc_value(logits, 3, 3, {}, 2), expected, 1e-12);
}

TEST(Ctc, RejectsBadTargets) {
  EXPECT_THROW(ctc_value({0, 0, 0, 0}, 2, 2, {1}, 1), std::invalid_argument);  // blank in target
  EXPECT_THROW(ctc_value({0, 0, 0, 0}, 2, 2, {2}, 1), std::invalid_argument);
  EXPECT_THROW(ctc_value({0, 0, 0, 0}, 2, 2, {0, 0}, 1), std::invalid_argument);  // needs 3 frames
}

TEST(Ctc, GradientMatchesFiniteDifferences) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const std::size_t frames = 3 + seed % 4, labels = 3 + seed % 2;
    std::vector<int> target = {0, static_cast<int>(seed % (labels - 1))};
    Tensor x = Tensor::constant({frames, labels}, random_logits(frames * labels, 100 + seed));
    const int blank = static_cast<int>(labels - 1);
    double err = grad_check([&](Tape& t, const Tensor& v) { return ctc_loss(t, v, target, blank); }, x, 1e-6);
    EXPECT_LE(err, 1e-5) << "seed " << seed;
  }
}

LogitSequence sequence(std::size_t labels, const std::vector<int>& argmaxes) {
  LogitSequence s;
  s.frames = argmaxes.size();
  s.labels = labels;
  s.values.assign(s.frames * labels, 0.0);
  for (std::size_t t = 0; t < argmaxes.size(); ++t) s.values[t * labels + argmaxes[t]] = 1.0;
  return s;
}

TEST(GreedyDecode, CollapsesRepeatsAndDropsBlanks) {
  EXPECT_EQ(greedy_decode(sequence(3, {0, 0, 2, 0, 1, 1, 2}), 2), (Transcript{0, 0, 1}));
  EXPECT_TRUE(greedy_decode(sequence(3, {2, 2, 2}), 2).empty());
}

TEST(GreedyDecode, TiesGoToTheLowestLabel) {
  LogitSequence s;
  s.frames = 1;
  s.labels = 3;
  s.values = {0.5, 0.5, 0.1};
  EXPECT_EQ(greedy_decode(s, 2), (Transcript{0}));
}

TEST(Recognizer, FrameCountAndShapes) {
  RecognizerConfig cfg;
  EXPECT_EQ(frame_count(256, cfg), 1u);
  EXPECT_EQ(frame_count(8000, cfg), (8000 - 256) / 128 + 1);
  EXPECT_THROW(frame_count(255, cfg), std::invalid_argument);
  EXPECT_EQ(cfg.labels(), 9u);

  cfg.channels = 4;
  cfg.hidden = 5;
  RecognizerParams params = init_recognizer(cfg);
  std::vector<double> wave(1000);
  for (std::size_t i = 0; i < wave.size(); ++i) wave[i] = std::sin(0.3 * static_cast<double>(i));
  LogitSequence out = encode(params, wave);
  EXPECT_EQ(out.frames, frame_count(1000, cfg));
  EXPECT_EQ(out.labels, 9u);
  for (double v : out.values) EXPECT_TRUE(std::isfinite(v));

  Tape tape;
  Tensor logits = encode(tape, params, Tensor::vector(wave));
  ASSERT_EQ(logits.shape(), (Shape{out.frames, out.labels}));
  for (std::size_t i = 0; i < out.values.size(); ++i) EXPECT_NEAR(logits.data()[i], out.values[i], 1e-12);
}

TEST(Recognizer, CheckpointRoundTripIsFrozen) {
  RecognizerConfig cfg;
  cfg.channels = 4;
  cfg.hidden = 6;
  cfg.seed = 9;
  RecognizerParams params = init_recognizer(cfg);
  Checkpoint ckpt = parse_checkpoint(serialize_checkpoint(recognizer_checkpoint(params, {{"note", "x"}})));
  EXPECT_EQ(ckpt.meta("note"), "x");
  RecognizerParams back = recognizer_from_checkpoint(ckpt);
  EXPECT_EQ(back.config.hidden, 6u);
  EXPECT_EQ(back.config.seed, 9u);
  for (const auto& t : back.tensors()) EXPECT_FALSE(t.requires_grad());
  auto a = params.tensors(), b = back.tensors();
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    ASSERT_EQ(a[i].shape(), b[i].shape());
    for (std::size_t j = 0; j < a[i].size(); ++j) EXPECT_EQ(a[i].data()[j], b[i].data()[j]);
  }
}

TEST(Recognizer, InitIsDeterministic) {
  RecognizerConfig cfg;
  cfg.seed = 5;
  auto a = init_recognizer(cfg).tensors(), b = init_recognizer(cfg).tensors();
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (std::size_t j = 0; j < a[i].size(); ++j) ASSERT_EQ(a[i].data()[j], b[i].data()[j]);
  }
}

TEST(Recognizer, EncoderGradientMatchesFiniteDifferences) {
  RecognizerConfig cfg;
  cfg.num_symbols = 2;
  cfg.window = 8;
  cfg.hop = 4;
  cfg.channels = 3;
  cfg.hidden = 4;
  RecognizerParams params = init_recognizer(cfg);
  Tensor wave = Tensor::constant({24}, random_logits(24, 77));
  const std::vector<int> target = {0, 1};
  double err = grad_check(
      [&](Tape& t, const Tensor& x) { return ctc_loss(t, encode(t, params, x), target, cfg.blank()); }, wave, 1e-6);
  EXPECT_LE(err, 1e-5);
}

}  // namespace
}  // namespace gpit
