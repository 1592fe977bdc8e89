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
#include <filesystem>
#include <limits>

#include "gpit/adam.hpp"
#include "gpit/checkpoint.hpp"

namespace gpit {
namespace {

Checkpoint sample() {
  Checkpoint c;
  c.tensors.push_back({"w", Tensor::constant({2, 3}, {1, -2, 3.5, 1e-300, -0.0, 7})});
  c.tensors.push_back({"scalar", Tensor::constant({1}, {std::numeric_limits<double>::denorm_min()})});
  c.metadata["kind"] = "test";
  c.metadata["note"] = "utf-8 \xc3\xa9";
  return c;
}

TEST(Checkpoint, ByteLayout) {
  Checkpoint c;
  c.tensors.push_back({"a", Tensor::constant({1}, {1.0})});
  const std::string bytes = serialize_checkpoint(c);
  // magic, version, then name_len=1 | "a" | rank=1 | dim=1 | 1.0
  ASSERT_EQ(bytes.size(), 8u + 1u + 8u + 1u + 8u + 8u + 8u);
  EXPECT_EQ(bytes.substr(0, 8), "GPITCKPT");
  EXPECT_EQ(static_cast<unsigned char>(bytes[8]), kCheckpointVersion);
  EXPECT_EQ(static_cast<unsigned char>(bytes[9]), 1u);
  EXPECT_EQ(bytes[17], 'a');
  EXPECT_EQ(static_cast<unsigned char>(bytes[bytes.size() - 2]), 0xf0u);  // 1.0 = 0x3ff0000000000000 LE
  EXPECT_EQ(static_cast<unsigned char>(bytes[bytes.size() - 1]), 0x3fu);
}

TEST(Checkpoint, RoundTripIsBitExact) {
  Checkpoint c = sample();
  const std::string bytes = serialize_checkpoint(c);
  Checkpoint back = parse_checkpoint(bytes);
  EXPECT_EQ(serialize_checkpoint(back), bytes);
  EXPECT_EQ(back.meta("note"), "utf-8 \xc3\xa9");
  const Tensor& w = back.get("w");
  ASSERT_EQ(w.shape(), (Shape{2, 3}));
  EXPECT_TRUE(std::signbit(w.data()[4]));
  EXPECT_EQ(back.get("scalar").data()[0], std::numeric_limits<double>::denorm_min());
}

TEST(Checkpoint, RejectsCorruptInput) {
  const std::string bytes = serialize_checkpoint(sample());
  EXPECT_THROW(parse_checkpoint(bytes.substr(0, bytes.size() - 3)), CheckpointError);
  std::string bad = bytes;
  bad[0] = 'X';
  EXPECT_THROW(parse_checkpoint(bad), CheckpointError);
  std::string version = bytes;
  version[8] = 9;
  EXPECT_THROW(parse_checkpoint(version), CheckpointError);
  Checkpoint c = parse_checkpoint(bytes);
  EXPECT_THROW(c.get("missing"), CheckpointError);
  EXPECT_THROW(c.meta("missing"), CheckpointError);
  Checkpoint reserved;
  reserved.tensors.push_back({"meta.x", Tensor::constant({1}, {0})});
  EXPECT_THROW(serialize_checkpoint(reserved), CheckpointError);
}

TEST(Checkpoint, SavesAndLoadsFiles) {
  auto path = std::filesystem::temp_directory_path() / "gpit_ckpt_test" / "x.ckpt";
  std::filesystem::create_directories(path.parent_path());
  save_checkpoint(path, sample());
  EXPECT_EQ(serialize_checkpoint(load_checkpoint(path)), serialize_checkpoint(sample()));
  EXPECT_THROW(load_checkpoint(path.parent_path() / "absent.ckpt"), CheckpointError);
  std::filesystem::remove_all(path.parent_path());
}

TEST(Fnv, KnownVectors) {
  EXPECT_EQ(fnv1a64(""), 0xcbf29ce484222325ull);
  EXPECT_EQ(fnv1a64("a"), 0xaf63dc4c8601ec8cull);
  EXPECT_EQ(hex64(0xabcull), "0000000000000abc");
}

TEST(Adam, FirstStepMovesByLearningRate) {
  Tensor p = Tensor::parameter({2}, {1.0, -1.0});
  Adam adam({p}, AdamOptions{.learning_rate = 0.1});
  Tape tape;
  tape.backward(tape.sum(tape.mul(p, Tensor::constant({2}, {3.0, -0.5}))));
  adam.step();
  // Bias-corrected first step is lr * g / (|g| + eps') = lr * sign(g).
  EXPECT_NEAR(p.data()[0], 0.9, 1e-8);
  EXPECT_NEAR(p.data()[1], -0.9, 1e-8);
  adam.zero_grad();
  EXPECT_FALSE(p.has_grad());
}

}  // namespace
}  // namespace gpit
