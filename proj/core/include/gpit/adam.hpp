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

#include <cstdint>
#include <span>
#include <vector>

#include "gpit/tensor.hpp"

namespace gpit {

struct AdamOptions {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  AdamOptions options;
  std::uint64_t step = 0;
  std::vector<std::vector<double>> first_moment;
  std::vector<std::vector<double>> second_moment;
};

// One bias-corrected Adam update of every parameter from its accumulated
// gradient. Throws if a parameter has no gradient.
void adam_step(std::span<Tensor> params, AdamState& state);

class Adam {
 public:
  Adam(std::vector<Tensor> params, AdamOptions options);

  void step() { adam_step(params_, state_); }
  void zero_grad();
  void set_learning_rate(double lr) { state_.options.learning_rate = lr; }
  double learning_rate() const { return state_.options.learning_rate; }
  const AdamState& state() const { return state_; }

 private:
  std::vector<Tensor> params_;
  AdamState state_;
};

}  // namespace gpit
