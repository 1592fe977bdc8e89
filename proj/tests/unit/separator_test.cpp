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

#include "gpit/corpus.hpp"
#include "gpit/losses.hpp"
#include "gpit/separator.hpp"
#include "loss_fixtures.hpp"

namespace gpit {
namespace {

SeparatorConfig mini_config() {
  SeparatorConfig cfg;
  cfg.kernel = 8;
  cfg.stride = 4;
  cfg.channels = 4;
  cfg.hidden = 5;
  cfg.mask_layers = 2;
  return cfg;
}

TEST(Separator, OutputShapesAndMaskRange) {
  SeparatorParams p = init_separator(1, SeparatorConfig{});
  std::vector<double> x(8000);
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = std::sin(0.01 * static_cast<double>(i * i % 9973));
  SeparationOutput out = separate(p, x);
  ASSERT_EQ(out.estimates.size(), 2u);
  for (const auto& e : out.estimates) {
    EXPECT_EQ(e.size(), 8000u);
    for (double v : e) ASSERT_TRUE(std::isfinite(v));
  }
  EXPECT_THROW(separate(p, std::vector<double>(10, 0.1)), std::invalid_argument);
}

TEST(Separator, TapeAndValuePathsAgree) {
  SeparatorParams p = init_separator(2, mini_config());
  auto x = random_signals(1, 203, 3)[0];
  SeparationOutput direct = separate(p, x.data());
  Tape tape;
  auto taped = separate(tape, p, x.data());
  ASSERT_EQ(taped.size(), 2u);
  for (std::size_t c = 0; c < 2; ++c) {
    ASSERT_EQ(taped[c].size(), 203u);
    for (std::size_t i = 0; i < 203; ++i) EXPECT_EQ(taped[c].data()[i], direct.estimates[c][i]);
  }
}

TEST(Separator, InitIsDeterministicAndValidated) {
  auto a = init_separator(5, mini_config()).tensors();
  auto b = init_separator(5, mini_config()).tensors();
  auto c = init_separator(6, mini_config()).tensors();
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (std::size_t j = 0; j < a[i].size(); ++j) ASSERT_EQ(a[i].data()[j], b[i].data()[j]);
  }
  EXPECT_NE(a[0].data()[0], c[0].data()[0]);
  SeparatorConfig bad = mini_config();
  bad.stride = 9;
  EXPECT_THROW(init_separator(1, bad), std::invalid_argument);
}

TEST(Separator, SisdrLossGradientOnMiniatureInstance) {
  SeparatorParams base = init_separator(3, mini_config());
  auto x = random_signals(1, 64, 4)[0];
  auto refs = random_signals(2, 64, 5);
  auto loss_with = [&](auto setter) {
    return [&, setter](Tape& t, const Tensor& v) {
      SeparatorParams p = base;
      setter(p, v);
      return loss_sisdr(t, refs, separate(t, p, x.data()));
    };
  };
  EXPECT_LE(grad_check(loss_with([](SeparatorParams& p, const Tensor& v) { p.encoder_weight = v; }),
                       base.encoder_weight, 1e-6),
            1e-5);
  EXPECT_LE(grad_check(loss_with([](SeparatorParams& p, const Tensor& v) { p.mask_weights[0] = v; }),
                       base.mask_weights[0], 1e-6),
            1e-5);
  EXPECT_LE(grad_check(loss_with([](SeparatorParams& p, const Tensor& v) { p.decoder_weight = v; }),
                       base.decoder_weight, 1e-6),
            1e-5);
}

TEST(Separator, UntrainedOutputsDoNotBeatTheMixture) {
  VoicePool voices{VoiceConfig{}};
  DatasetSpec spec;
  spec.split = Split::kTest;
  spec.items = 10;
  spec.master_seed = 9;
  SeparatorParams p = init_separator(1, SeparatorConfig{});
  double est_total = 0.0, mix_total = 0.0;
  for (std::size_t i = 0; i < spec.items; ++i) {
    auto ex = make_mixture(spec, voices, i);
    auto est = separate(p, ex.mixture).estimates;
    for (std::size_t c = 0; c < 2; ++c) {
      mix_total += sisdr(ex.refs[c], ex.mixture);
      est_total += std::max(sisdr(ex.refs[c], est[0]), sisdr(ex.refs[c], est[1]));
    }
  }
  EXPECT_LE(est_total / 20.0, mix_total / 20.0 + 1.0);
}

TEST(Separator, CheckpointRoundTripAndHash) {
  SeparatorParams p = init_separator(4, mini_config());
  Checkpoint ckpt = parse_checkpoint(serialize_checkpoint(separator_checkpoint(p, {{"arm", "ae"}})));
  SeparatorParams back = separator_from_checkpoint(ckpt);
  EXPECT_EQ(back.config.kernel, 8u);
  EXPECT_EQ(back.config.mask_layers, 2u);
  EXPECT_EQ(back.seed, 4u);
  EXPECT_EQ(parameter_hash(back.named_tensors()), parameter_hash(p.named_tensors()));
  back.decoder_bias.mutable_data()[0] += 1e-12;
  EXPECT_NE(parameter_hash(back.named_tensors()), parameter_hash(p.named_tensors()));

  Checkpoint wrong;
  wrong.metadata["kind"] = "recognizer";
  EXPECT_THROW(separator_from_checkpoint(wrong), CheckpointError);
}

}  // namespace
}  // namespace gpit
