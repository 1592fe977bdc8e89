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

// Random finite-difference probes for every op kind, shared by the unit
// tests and the acceptance runner.

#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "gpit/tensor.hpp"

namespace gpit {

inline constexpr std::uint64_t kGradInstances = 10;
inline constexpr double kGradStep = 1e-6;
inline constexpr double kGradTolerance = 1e-5;

struct GradProbe {
  std::string label;
  ScalarFunction f;
  Tensor x;
};

inline std::vector<OpKind> all_op_kinds() {
  std::vector<OpKind> kinds;
  for (int k = static_cast<int>(OpKind::kAdd); k <= static_cast<int>(OpKind::kShiftRight); ++k) {
    kinds.push_back(static_cast<OpKind>(k));
  }
  return kinds;
}

namespace grad_detail {

// Values in [lo, hi] with magnitude at least `gap` (keeps relu away from its kink).
inline Tensor random_tensor(std::mt19937_64& rng, Shape shape, double lo = -1.0, double hi = 1.0,
                            double gap = 0.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(shape_size(shape));
  for (auto& e : v) {
    do e = u(rng);
    while (std::abs(e) < gap);
  }
  return Tensor::constant(std::move(shape), std::move(v));
}

// Contracts the op output with fixed random weights so every output element
// contributes to the scalar with a distinct coefficient.
inline Tensor contract(Tape& tape, const Tensor& y) {
  std::mt19937_64 rng(0x5eed + y.size());
  Tensor w = random_tensor(rng, y.shape(), 0.5, 1.5);
  return tape.sum(tape.mul(y, w));
}

inline std::size_t pick(std::mt19937_64& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

}  // namespace grad_detail

// One probe per differentiable input of the op; the others are held constant.
inline std::vector<GradProbe> grad_probes(OpKind kind, std::uint64_t instance) {
  using grad_detail::contract;
  using grad_detail::pick;
  using grad_detail::random_tensor;
  std::mt19937_64 rng(0x9e3779b97f4a7c15ull ^ (static_cast<std::uint64_t>(kind) << 32) ^ instance);
  std::vector<GradProbe> out;

  auto binary = [&](auto op, double lo, double hi, bool broadcast = true) {
    const Shape shape{pick(rng, 1, 4), pick(rng, 1, 5)};
    Tensor a = random_tensor(rng, shape, lo, hi);
    // Every other instance broadcasts a one-element right operand.
    Tensor b = random_tensor(rng, broadcast && instance % 2 ? Shape{1} : shape, lo, hi);
    out.push_back({"lhs", [=](Tape& t, const Tensor& x) { return contract(t, op(t, x, b)); }, a});
    out.push_back({"rhs", [=](Tape& t, const Tensor& x) { return contract(t, op(t, a, x)); }, b});
  };
  auto unary = [&](auto op, double lo, double hi, double gap = 0.0) {
    Tensor a = random_tensor(rng, {pick(rng, 1, 4), pick(rng, 1, 5)}, lo, hi, gap);
    out.push_back({"x", [=](Tape& t, const Tensor& x) { return contract(t, op(t, x)); }, a});
  };

  switch (kind) {
    case OpKind::kAdd:
      binary([](Tape& t, const Tensor& a, const Tensor& b) { return t.add(a, b); }, -1, 1);
      break;
    case OpKind::kSub:
      binary([](Tape& t, const Tensor& a, const Tensor& b) { return t.sub(a, b); }, -1, 1);
      break;
    case OpKind::kMul:
      binary([](Tape& t, const Tensor& a, const Tensor& b) { return t.mul(a, b); }, -1, 1);
      break;
    case OpKind::kDiv:
      binary([](Tape& t, const Tensor& a, const Tensor& b) { return t.div(a, b); }, 0.5, 2.0);
      break;
    case OpKind::kLogAddExp:
      binary([](Tape& t, const Tensor& a, const Tensor& b) { return t.logaddexp(a, b); }, -3, 3, false);
      break;
    case OpKind::kScale: {
      const double factor = std::uniform_real_distribution<double>(-2, 2)(rng);
      unary([factor](Tape& t, const Tensor& x) { return t.scale(x, factor); }, -1, 1);
      break;
    }
    case OpKind::kAddScalar: {
      const double value = std::uniform_real_distribution<double>(-2, 2)(rng);
      unary([value](Tape& t, const Tensor& x) { return t.square(t.add_scalar(x, value)); }, -1, 1);
      break;
    }
    case OpKind::kMatmul: {
      const std::size_t m = pick(rng, 1, 4), k = pick(rng, 1, 4), n = pick(rng, 1, 4);
      Tensor a = random_tensor(rng, {m, k});
      Tensor b = random_tensor(rng, {k, n});
      out.push_back({"lhs", [=](Tape& t, const Tensor& x) { return contract(t, t.matmul(x, b)); }, a});
      out.push_back({"rhs", [=](Tape& t, const Tensor& x) { return contract(t, t.matmul(a, x)); }, b});
      break;
    }
    case OpKind::kLinear: {
      const std::size_t rows = pick(rng, 1, 4), in = pick(rng, 1, 4), outs = pick(rng, 1, 4);
      Tensor x0 = random_tensor(rng, {rows, in});
      Tensor w = random_tensor(rng, {in, outs});
      Tensor b = random_tensor(rng, {outs});
      out.push_back({"x", [=](Tape& t, const Tensor& x) { return contract(t, t.linear(x, w, b)); }, x0});
      out.push_back({"weight", [=](Tape& t, const Tensor& x) { return contract(t, t.linear(x0, x, b)); }, w});
      out.push_back({"bias", [=](Tape& t, const Tensor& x) { return contract(t, t.linear(x0, w, x)); }, b});
      break;
    }
    case OpKind::kConv1d: {
      const std::size_t cin = pick(rng, 1, 3), cout = pick(rng, 1, 3), k = pick(rng, 1, 4);
      const std::size_t stride = pick(rng, 1, 3), frames = pick(rng, 1, 4);
      Tensor x0 = random_tensor(rng, {cin, (frames - 1) * stride + k + pick(rng, 0, stride - 1)});
      Tensor w = random_tensor(rng, {cout, cin, k});
      Tensor b = random_tensor(rng, {cout});
      out.push_back({"x", [=](Tape& t, const Tensor& x) { return contract(t, t.conv1d(x, w, b, stride)); }, x0});
      out.push_back({"weight", [=](Tape& t, const Tensor& x) { return contract(t, t.conv1d(x0, x, b, stride)); }, w});
      out.push_back({"bias", [=](Tape& t, const Tensor& x) { return contract(t, t.conv1d(x0, w, x, stride)); }, b});
      break;
    }
    case OpKind::kConvTranspose1d: {
      const std::size_t cin = pick(rng, 1, 3), cout = pick(rng, 1, 3), k = pick(rng, 1, 4);
      const std::size_t stride = pick(rng, 1, 3), frames = pick(rng, 1, 4);
      Tensor x0 = random_tensor(rng, {cin, frames});
      Tensor w = random_tensor(rng, {cin, cout, k});
      Tensor b = random_tensor(rng, {cout});
      out.push_back({"x", [=](Tape& t, const Tensor& x) { return contract(t, t.conv_transpose1d(x, w, b, stride)); }, x0});
      out.push_back({"weight", [=](Tape& t, const Tensor& x) { return contract(t, t.conv_transpose1d(x0, x, b, stride)); }, w});
      out.push_back({"bias", [=](Tape& t, const Tensor& x) { return contract(t, t.conv_transpose1d(x0, w, x, stride)); }, b});
      break;
    }
    case OpKind::kRelu:
      unary([](Tape& t, const Tensor& x) { return t.relu(x); }, -1, 1, 0.05);
      break;
    case OpKind::kTanh:
      unary([](Tape& t, const Tensor& x) { return t.tanh(x); }, -2, 2);
      break;
    case OpKind::kSigmoid:
      unary([](Tape& t, const Tensor& x) { return t.sigmoid(x); }, -3, 3);
      break;
    case OpKind::kLog:
      unary([](Tape& t, const Tensor& x) { return t.log(x); }, 0.5, 2.0);
      break;
    case OpKind::kSqrt:
      unary([](Tape& t, const Tensor& x) { return t.sqrt(x); }, 0.5, 2.0);
      break;
    case OpKind::kSquare:
      unary([](Tape& t, const Tensor& x) { return t.square(x); }, -1, 1);
      break;
    case OpKind::kLogSoftmax:
      unary([](Tape& t, const Tensor& x) { return t.log_softmax(x); }, -3, 3);
      break;
    case OpKind::kSum:
      unary([](Tape& t, const Tensor& x) { return t.square(t.sum(x)); }, -1, 1);
      break;
    case OpKind::kMean:
      unary([](Tape& t, const Tensor& x) { return t.square(t.mean(x)); }, -1, 1);
      break;
    case OpKind::kConcat: {
      const std::size_t axis = instance % 2;
      const std::size_t rows = pick(rng, 1, 3), cols = pick(rng, 1, 3);
      Tensor a = random_tensor(rng, {rows, cols});
      Tensor b = random_tensor(rng, axis == 0 ? Shape{pick(rng, 1, 3), cols} : Shape{rows, pick(rng, 1, 3)});
      out.push_back({"first", [=](Tape& t, const Tensor& x) {
                       std::vector<Tensor> parts{x, b};
                       return contract(t, t.concat(parts, axis));
                     }, a});
      out.push_back({"second", [=](Tape& t, const Tensor& x) {
                       std::vector<Tensor> parts{a, x};
                       return contract(t, t.concat(parts, axis));
                     }, b});
      break;
    }
    case OpKind::kSlice: {
      const std::size_t axis = instance % 2;
      Tensor a = random_tensor(rng, {pick(rng, 2, 4), pick(rng, 2, 5)});
      const std::size_t n = a.dim(axis);
      const std::size_t begin = pick(rng, 0, n - 1), end = pick(rng, begin + 1, n);
      unary([axis, begin, end](Tape& t, const Tensor& x) { return t.slice(x, axis, begin, end); }, -1, 1);
      out.back().x = a;
      break;
    }
    case OpKind::kTranspose:
      unary([](Tape& t, const Tensor& x) { return t.transpose(x); }, -1, 1);
      break;
    case OpKind::kReshape:
      unary([](Tape& t, const Tensor& x) { return t.reshape(x, {x.size()}); }, -1, 1);
      break;
    case OpKind::kGatherColumns: {
      Tensor a = random_tensor(rng, {pick(rng, 1, 3), pick(rng, 2, 4)});
      std::vector<std::size_t> columns(pick(rng, 1, 6));
      for (auto& c : columns) c = pick(rng, 0, a.dim(1) - 1);  // repeats exercise accumulation
      out.push_back({"x", [=](Tape& t, const Tensor& x) { return contract(t, t.gather_columns(x, columns)); }, a});
      break;
    }
    case OpKind::kShiftRight: {
      Tensor a = random_tensor(rng, {pick(rng, 1, 3), pick(rng, 2, 5)});
      const std::size_t shift = pick(rng, 0, a.dim(1));
      out.push_back({"x", [=](Tape& t, const Tensor& x) { return contract(t, t.shift_right(x, shift, 0.25)); }, a});
      break;
    }
  }
  return out;
}

}  // namespace gpit
