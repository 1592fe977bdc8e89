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

#include <benchmark/benchmark.h>

#include <random>

#include "gpit/losses.hpp"
#include "gpit/recognizer.hpp"
#include "gpit/separator.hpp"

namespace gpit {
namespace {

std::vector<double> noise(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> d(0.0, 1.0);
  std::vector<double> v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

// Separator encoder shape: 1 channel in, 64 out, kernel 32, stride 16.
void BM_Conv1d(benchmark::State& state) {
  const std::size_t length = static_cast<std::size_t>(state.range(0));
  Tensor x = Tensor::constant({1, length}, noise(length, 1));
  Tensor w = Tensor::parameter({64, 1, 32}, noise(64 * 32, 2));
  Tensor b = Tensor::parameter({64}, noise(64, 3));
  for (auto _ : state) {
    Tape tape;
    benchmark::DoNotOptimize(tape.conv1d(x, w, b, 16));
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(length));
}
BENCHMARK(BM_Conv1d)->Arg(4000)->Arg(16000);

void BM_SeparatorForward(benchmark::State& state) {
  SeparatorParams p = init_separator(1, SeparatorConfig{});
  const auto mixture = noise(static_cast<std::size_t>(state.range(0)), 4);
  for (auto _ : state) benchmark::DoNotOptimize(separate(p, mixture));
}
BENCHMARK(BM_SeparatorForward)->Arg(4000)->Arg(16000);

void BM_SeparatorTrainStep(benchmark::State& state) {
  SeparatorParams p = init_separator(1, SeparatorConfig{});
  const std::size_t n = static_cast<std::size_t>(state.range(0));
  const auto mixture = noise(n, 5);
  std::vector<Tensor> refs = {Tensor::constant({n}, noise(n, 6)), Tensor::constant({n}, noise(n, 7))};
  for (auto _ : state) {
    Tape tape;
    auto ests = separate(tape, p, mixture);
    tape.backward(pit_loss(tape, ests, sisdr_criterion(refs)));
    for (auto& t : p.tensors()) t.zero_grad();
  }
}
BENCHMARK(BM_SeparatorTrainStep)->Arg(4000);

void BM_CtcLoss(benchmark::State& state) {
  const std::size_t frames = static_cast<std::size_t>(state.range(0)), labels = 9;
  Tensor logits = Tensor::parameter({frames, labels}, noise(frames * labels, 8));
  const std::vector<int> target = {0, 3, 5, 5, 1, 7, 2, 4, 6, 0};
  for (auto _ : state) {
    Tape tape;
    tape.backward(ctc_loss(tape, logits, target, 8));
    logits.zero_grad();
  }
}
BENCHMARK(BM_CtcLoss)->Arg(62)->Arg(250);

}  // namespace
}  // namespace gpit

BENCHMARK_MAIN();
