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
#include <functional>
#include <span>
#include <string_view>
#include <vector>

#include "gpit/recognizer.hpp"
#include "gpit/tensor.hpp"

namespace gpit {

// References are constants; estimates live on the tape. All signal tensors
// are rank 1 of equal length within a pair.

// SI-SDR in dB as a [1] tensor, same formula as gpit::sisdr.
Tensor sisdr(Tape& tape, const Tensor& reference, const Tensor& estimate);

// -mean_c SI-SDR(ref_c, est_c)
Tensor loss_sisdr(Tape& tape, std::span<const Tensor> refs, std::span<const Tensor> ests);

enum class AeInput { kLogits, kLogProbs };
AeInput parse_ae_input(std::string_view text);
std::string_view ae_input_name(AeInput input);

// Mean over the L x N entries of the squared embedding difference.
Tensor ae_distance(Tape& tape, const Tensor& estimate, const Tensor& reference);

// sum_c 1/(L N) sum_{l,n} (V(est_c) - V(ref_c))^2 with a frozen recognizer.
Tensor loss_ae(Tape& tape, std::span<const Tensor> refs, std::span<const Tensor> ests,
               const RecognizerParams& recognizer, AeInput input = AeInput::kLogits);

// A separable multi-speaker loss: reduction * sum_c pair(ref_c, est_perm(c)).
struct Criterion {
  std::function<Tensor(Tape&, std::size_t ref_index, const Tensor& estimate)> pair;
  double reduction = 1.0;
};

Criterion sisdr_criterion(std::span<const Tensor> refs);
Criterion ae_criterion(std::span<const Tensor> refs, const RecognizerParams& recognizer,
                       AeInput input = AeInput::kLogits);

// permutation[c] is the estimate paired with reference c.
struct PermutationResult {
  std::vector<std::size_t> permutation;
  double total = 0.0;               // reduced guide loss at the chosen permutation
  std::vector<double> pair_losses;  // [ref * C + est], unreduced
  std::size_t count = 0;            // C!
};

inline constexpr std::size_t kMaxPermutationSpeakers = 6;

// Exhaustive search; ties go to the lexicographically smallest permutation.
PermutationResult solve_permutation(std::span<const double> pair_losses, std::size_t speakers,
                                    double reduction = 1.0);
// Guide values are computed on detached copies of the estimates.
PermutationResult solve_permutation(std::span<const Tensor> ests, const Criterion& guide);

Tensor apply_permutation(Tape& tape, std::span<const Tensor> ests, const Criterion& criterion,
                         std::span<const std::size_t> permutation);

Tensor gpit_loss(Tape& tape, std::span<const Tensor> ests, const Criterion& guide, const Criterion& applied,
                 PermutationResult* result = nullptr);
Tensor pit_loss(Tape& tape, std::span<const Tensor> ests, const Criterion& criterion,
                PermutationResult* result = nullptr);

struct JointLossConfig {
  double alpha = 0.0;
  AeInput ae_input = AeInput::kLogits;
};

// (1 - alpha) AE + alpha SISDR, both at the SI-SDR-guided permutation. A term
// with zero weight is not evaluated.
Tensor joint_loss(Tape& tape, std::span<const Tensor> refs, std::span<const Tensor> ests,
                  const RecognizerParams& recognizer, const JointLossConfig& config,
                  PermutationResult* result = nullptr);

}  // namespace gpit
