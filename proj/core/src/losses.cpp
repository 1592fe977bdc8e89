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

#include "gpit/losses.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numbers>
#include <numeric>
#include <stdexcept>
#include <string>

#include "gpit/signals.hpp"

namespace gpit {

namespace {

void check_pairs(std::span<const Tensor> refs, std::span<const Tensor> ests) {
  if (refs.size() != ests.size()) throw std::invalid_argument("loss: reference and estimate counts differ");
  if (refs.empty()) throw std::invalid_argument("loss: no signals");
  for (std::size_t c = 0; c < refs.size(); ++c) {
    if (refs[c].size() != ests[c].size()) {
      throw std::invalid_argument("loss: length mismatch for speaker " + std::to_string(c));
    }
  }
}

Tensor encode_for_ae(Tape& tape, const RecognizerParams& recognizer, const Tensor& signal, AeInput input) {
  Tensor logits = encode(tape, recognizer, signal);
  return input == AeInput::kLogProbs ? tape.log_softmax(logits) : logits;
}

}  // namespace

Tensor sisdr(Tape& tape, const Tensor& reference, const Tensor& estimate) {
  if (reference.size() != estimate.size()) throw std::invalid_argument("sisdr: length mismatch");
  if (reference.size() == 0) throw std::invalid_argument("sisdr: empty signals");
  const auto ref = reference.data();
  const double n = static_cast<double>(ref.size());
  const double ref_mean = std::accumulate(ref.begin(), ref.end(), 0.0) / n;
  std::vector<double> centred(ref.size());
  double energy = 0.0;
  for (std::size_t i = 0; i < ref.size(); ++i) {
    centred[i] = ref[i] - ref_mean;
    energy += centred[i] * centred[i];
  }
  if (energy == 0.0) throw SignalError("sisdr: zero reference");
  const Shape shape = estimate.shape();
  Tensor r = Tensor::constant(shape, std::move(centred));

  Tensor e = tape.sub(estimate, tape.mean(estimate));
  Tensor alpha = tape.scale(tape.sum(tape.mul(e, r)), 1.0 / energy);
  Tensor target = tape.mul(r, alpha);
  Tensor error = tape.sub(e, target);
  Tensor ratio = tape.sub(tape.log(tape.sum(tape.square(target))),
                          tape.log(tape.add_scalar(tape.sum(tape.square(error)), kSisdrEpsilon)));
  return tape.reshape(tape.scale(ratio, 10.0 / std::numbers::ln10), {1});
}

Tensor loss_sisdr(Tape& tape, std::span<const Tensor> refs, std::span<const Tensor> ests) {
  check_pairs(refs, ests);
  std::vector<std::size_t> identity(refs.size());
  std::iota(identity.begin(), identity.end(), 0);
  return apply_permutation(tape, ests, sisdr_criterion(refs), identity);
}

AeInput parse_ae_input(std::string_view text) {
  if (text == "logits") return AeInput::kLogits;
  if (text == "log_probs") return AeInput::kLogProbs;
  throw std::invalid_argument("ae_on must be logits or log_probs, got '" + std::string(text) + "'");
}

std::string_view ae_input_name(AeInput input) { return input == AeInput::kLogits ? "logits" : "log_probs"; }

Tensor loss_ae(Tape& tape, std::span<const Tensor> refs, std::span<const Tensor> ests,
               const RecognizerParams& recognizer, AeInput input) {
  check_pairs(refs, ests);
  std::vector<std::size_t> identity(refs.size());
  std::iota(identity.begin(), identity.end(), 0);
  return apply_permutation(tape, ests, ae_criterion(refs, recognizer, input), identity);
}

Tensor ae_distance(Tape& tape, const Tensor& estimate, const Tensor& reference) {
  if (estimate.shape() != reference.shape()) throw std::invalid_argument("loss_ae: embedding shape mismatch");
  return tape.reshape(tape.mean(tape.square(tape.sub(estimate, reference))), {1});
}

Criterion sisdr_criterion(std::span<const Tensor> refs) {
  auto stored = std::make_shared<std::vector<Tensor>>(refs.begin(), refs.end());
  Criterion c;
  c.reduction = 1.0 / static_cast<double>(refs.size());
  c.pair = [stored](Tape& tape, std::size_t ref, const Tensor& est) {
    return tape.scale(sisdr(tape, stored->at(ref), est), -1.0);
  };
  return c;
}

Criterion ae_criterion(std::span<const Tensor> refs, const RecognizerParams& recognizer, AeInput input) {
  for (const auto& t : recognizer.tensors()) {
    if (t.requires_grad()) throw std::invalid_argument("loss_ae: recognizer must be frozen");
  }
  // Reference embeddings are constants; compute them once.
  auto embeddings = std::make_shared<std::vector<Tensor>>();
  for (const auto& ref : refs) {
    Tape scratch;
    embeddings->push_back(encode_for_ae(scratch, recognizer, ref.detach(), input).detach());
  }
  Criterion c;
  c.reduction = 1.0;
  c.pair = [embeddings, recognizer, input](Tape& tape, std::size_t ref, const Tensor& est) {
    const Tensor& target = embeddings->at(ref);
    Tensor v = encode_for_ae(tape, recognizer, est, input);
    return ae_distance(tape, v, target);
  };
  return c;
}

PermutationResult solve_permutation(std::span<const double> pair_losses, std::size_t speakers, double reduction) {
  if (speakers == 0) throw std::invalid_argument("solve_permutation: no speakers");
  if (speakers > kMaxPermutationSpeakers) {
    throw std::invalid_argument("solve_permutation: " + std::to_string(speakers) + " speakers exceed the limit of " +
                                std::to_string(kMaxPermutationSpeakers));
  }
  if (pair_losses.size() != speakers * speakers) throw std::invalid_argument("solve_permutation: bad matrix size");
  PermutationResult result;
  result.pair_losses.assign(pair_losses.begin(), pair_losses.end());
  std::vector<std::size_t> perm(speakers);
  std::iota(perm.begin(), perm.end(), 0);
  double best = 0.0;
  do {
    double total = 0.0;
    for (std::size_t c = 0; c < speakers; ++c) total += pair_losses[c * speakers + perm[c]];
    // next_permutation visits in lexicographic order, so strict < keeps the smallest on ties.
    if (result.count == 0 || total < best) {
      best = total;
      result.permutation = perm;
    }
    ++result.count;
  } while (std::next_permutation(perm.begin(), perm.end()));
  result.total = reduction * best;
  return result;
}

PermutationResult solve_permutation(std::span<const Tensor> ests, const Criterion& guide) {
  const std::size_t speakers = ests.size();
  if (speakers > kMaxPermutationSpeakers) {
    throw std::invalid_argument("solve_permutation: " + std::to_string(speakers) + " speakers exceed the limit of " +
                                std::to_string(kMaxPermutationSpeakers));
  }
  std::vector<double> matrix(speakers * speakers);
  for (std::size_t r = 0; r < speakers; ++r) {
    for (std::size_t e = 0; e < speakers; ++e) {
      Tape scratch;
      matrix[r * speakers + e] = guide.pair(scratch, r, ests[e].detach()).item();
    }
  }
  return solve_permutation(matrix, speakers, guide.reduction);
}

Tensor apply_permutation(Tape& tape, std::span<const Tensor> ests, const Criterion& criterion,
                         std::span<const std::size_t> permutation) {
  if (permutation.size() != ests.size()) throw std::invalid_argument("apply_permutation: size mismatch");
  Tensor total;
  for (std::size_t c = 0; c < permutation.size(); ++c) {
    Tensor term = criterion.pair(tape, c, ests[permutation[c]]);
    total = c == 0 ? term : tape.add(total, term);
  }
  return criterion.reduction == 1.0 ? total : tape.scale(total, criterion.reduction);
}

Tensor gpit_loss(Tape& tape, std::span<const Tensor> ests, const Criterion& guide, const Criterion& applied,
                 PermutationResult* result) {
  PermutationResult solved = solve_permutation(ests, guide);
  Tensor loss = apply_permutation(tape, ests, applied, solved.permutation);
  if (result) *result = std::move(solved);
  return loss;
}

Tensor pit_loss(Tape& tape, std::span<const Tensor> ests, const Criterion& criterion, PermutationResult* result) {
  return gpit_loss(tape, ests, criterion, criterion, result);
}

Tensor joint_loss(Tape& tape, std::span<const Tensor> refs, std::span<const Tensor> ests,
                  const RecognizerParams& recognizer, const JointLossConfig& config, PermutationResult* result) {
  if (!(config.alpha >= 0.0 && config.alpha <= 1.0)) {
    throw std::invalid_argument("joint_loss: alpha must lie in [0, 1], got " + std::to_string(config.alpha));
  }
  check_pairs(refs, ests);
  const Criterion guide = sisdr_criterion(refs);
  PermutationResult solved = solve_permutation(ests, guide);
  Tensor loss;
  if (config.alpha > 0.0) {
    Tensor s = apply_permutation(tape, ests, guide, solved.permutation);
    loss = config.alpha == 1.0 ? s : tape.scale(s, config.alpha);
  }
  if (config.alpha < 1.0) {
    Tensor a = apply_permutation(tape, ests, ae_criterion(refs, recognizer, config.ae_input), solved.permutation);
    if (config.alpha > 0.0) a = tape.scale(a, 1.0 - config.alpha);
    loss = loss.defined() ? tape.add(loss, a) : a;
  }
  if (result) *result = std::move(solved);
  return loss;
}

}  // namespace gpit
