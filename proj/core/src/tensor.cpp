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

#include "gpit/tensor.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

namespace gpit {

namespace {

using detail::Buffer;
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<RowMatrix>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;

std::atomic<std::uint64_t> next_tape_id{1};

ConstMatrixMap as_matrix(std::span<const double> v, std::size_t rows, std::size_t cols) {
  return ConstMatrixMap(v.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

MatrixMap as_matrix(std::span<double> v, std::size_t rows, std::size_t cols) {
  return MatrixMap(v.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

[[noreturn]] void shape_error(OpKind kind, const Shape& a, const Shape& b, std::string_view what = {}) {
  std::ostringstream os;
  os << op_name(kind) << ": shape mismatch " << shape_string(a) << " vs " << shape_string(b);
  if (!what.empty()) os << " (" << what << ")";
  throw ShapeError(os.str());
}

[[noreturn]] void shape_error(OpKind kind, const Shape& a, std::string_view what) {
  std::ostringstream os;
  os << op_name(kind) << ": invalid shape " << shape_string(a) << " (" << what << ")";
  throw ShapeError(os.str());
}

}  // namespace

std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

std::string_view op_name(OpKind kind) {
  switch (kind) {
    case OpKind::kAdd: return "add";
    case OpKind::kSub: return "sub";
    case OpKind::kMul: return "mul";
    case OpKind::kDiv: return "div";
    case OpKind::kScale: return "scale";
    case OpKind::kAddScalar: return "add_scalar";
    case OpKind::kMatmul: return "matmul";
    case OpKind::kLinear: return "linear";
    case OpKind::kConv1d: return "conv1d";
    case OpKind::kConvTranspose1d: return "conv_transpose1d";
    case OpKind::kRelu: return "relu";
    case OpKind::kTanh: return "tanh";
    case OpKind::kSigmoid: return "sigmoid";
    case OpKind::kLog: return "log";
    case OpKind::kSqrt: return "sqrt";
    case OpKind::kSquare: return "square";
    case OpKind::kLogSoftmax: return "log_softmax";
    case OpKind::kSum: return "sum";
    case OpKind::kMean: return "mean";
    case OpKind::kConcat: return "concat";
    case OpKind::kSlice: return "slice";
    case OpKind::kTranspose: return "transpose";
    case OpKind::kReshape: return "reshape";
    case OpKind::kLogAddExp: return "logaddexp";
    case OpKind::kGatherColumns: return "gather_columns";
    case OpKind::kShiftRight: return "shift_right";
  }
  return "unknown";
}

// ---------------------------------------------------------------------------
// Tensor

Tensor Tensor::zeros(Shape shape) {
  auto n = shape_size(shape);
  return constant(std::move(shape), std::vector<double>(n, 0.0));
}

Tensor Tensor::constant(Shape shape, std::vector<double> values) {
  return from_buffer(std::move(shape), detail::Buffer(values.begin(), values.end()));
}

Tensor Tensor::from_buffer(Shape shape, detail::Buffer values) {
  if (shape_size(shape) != values.size()) {
    throw ShapeError("tensor: shape " + shape_string(shape) + " does not hold " +
                     std::to_string(values.size()) + " values");
  }
  auto s = std::make_shared<Storage>();
  s->shape = std::move(shape);
  s->data = std::move(values);
  return Tensor(std::move(s));
}

Tensor Tensor::scalar(double value) { return constant({1}, {value}); }

Tensor Tensor::vector(std::vector<double> values) {
  auto n = values.size();
  return constant({n}, std::move(values));
}

Tensor Tensor::parameter(Shape shape, std::vector<double> values) {
  Tensor t = constant(std::move(shape), std::move(values));
  t.impl_->requires_grad = true;
  return t;
}

const Shape& Tensor::shape() const { return impl_->shape; }

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= impl_->shape.size()) {
    throw ShapeError("tensor: axis " + std::to_string(axis) + " out of range for " +
                     shape_string(impl_->shape));
  }
  return impl_->shape[axis];
}

std::size_t Tensor::size() const { return impl_->data.size(); }

std::span<const double> Tensor::data() const { return impl_->data; }

std::span<double> Tensor::mutable_data() {
  if (impl_->tape_id != 0) throw AutodiffError("tensor: cannot mutate a tape-recorded tensor");
  return impl_->data;
}

double Tensor::item() const {
  if (impl_->data.size() != 1) {
    throw ShapeError("tensor: item() on non-scalar shape " + shape_string(impl_->shape));
  }
  return impl_->data[0];
}

bool Tensor::requires_grad() const { return impl_ && impl_->requires_grad; }

void Tensor::set_requires_grad(bool value) {
  if (impl_->tape_id != 0) throw AutodiffError("tensor: requires_grad is fixed for recorded tensors");
  impl_->requires_grad = value;
  if (!value) impl_->grad.clear();
}

bool Tensor::has_grad() const { return impl_ && !impl_->grad.empty(); }

std::span<const double> Tensor::grad() const { return impl_->grad; }

void Tensor::zero_grad() { impl_->grad.clear(); }

std::uint64_t Tensor::tape_id() const { return impl_ ? impl_->tape_id : 0; }

Tensor Tensor::detach() const { return from_buffer(impl_->shape, impl_->data); }

namespace detail {

struct GradAccess {
  // Zero-initialised on first use; nullptr when t does not require grad.
  static double* buffer(const Tensor& t) {
    if (!t.requires_grad()) return nullptr;
    auto& g = t.impl_->grad;
    if (g.empty()) g.assign(t.impl_->data.size(), 0.0);
    return g.data();
  }
  static void seed(const Tensor& t, double value) { t.impl_->grad.assign(t.impl_->data.size(), value); }
};

}  // namespace detail

namespace {

using detail::GradAccess;

void accumulate(const Tensor& t, std::span<const double> g) {
  if (double* dst = GradAccess::buffer(t)) {
    for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i];
  }
}

struct BroadcastPlan {
  Shape shape;
  bool a_scalar = false;
  bool b_scalar = false;
};

BroadcastPlan plan_broadcast(OpKind kind, const Tensor& a, const Tensor& b) {
  if (a.shape() == b.shape()) return {a.shape(), false, false};
  if (b.size() == 1) return {a.shape(), false, true};
  if (a.size() == 1) return {b.shape(), true, false};
  shape_error(kind, a.shape(), b.shape());
}

// Strides for an axis split: outer * axis_len * inner == size.
struct AxisSplit {
  std::size_t outer = 1;
  std::size_t len = 1;
  std::size_t inner = 1;
};

AxisSplit split_axis(const Shape& shape, std::size_t axis) {
  AxisSplit s;
  for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
  s.len = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

}  // namespace

// ---------------------------------------------------------------------------
// Tape plumbing

Tape::Tape() : id_(next_tape_id.fetch_add(1)) {}

void Tape::check_inputs(OpKind kind, std::span<const Tensor> inputs) const {
  for (const auto& t : inputs) {
    if (!t.defined()) throw AutodiffError(std::string(op_name(kind)) + ": undefined input tensor");
    if (t.tape_id() != 0 && t.tape_id() != id_) {
      throw AutodiffError(std::string(op_name(kind)) + ": input belongs to a different tape");
    }
  }
}

Tensor Tape::emit(OpKind kind, std::vector<Tensor> inputs, Shape shape, Buffer values,
                  BackwardFn backward) {
  bool needs_grad = std::any_of(inputs.begin(), inputs.end(),
                                [](const Tensor& t) { return t.requires_grad(); });
  Tensor out = Tensor::from_buffer(std::move(shape), std::move(values));
  if (!needs_grad) return out;
  if (consumed_) throw AutodiffError("tape: recording after backward()");
  out.impl_->requires_grad = true;
  out.impl_->tape_id = id_;
  records_.push_back(Record{kind, std::move(inputs), out, std::move(backward)});
  return out;
}

void Tape::backward(const Tensor& loss) {
  if (consumed_) throw AutodiffError("backward: tape already consumed");
  if (!loss.defined() || loss.size() != 1) {
    throw AutodiffError("backward: loss must be scalar, got shape " +
                        (loss.defined() ? shape_string(loss.shape()) : std::string("<undefined>")));
  }
  if (loss.tape_id() != id_) throw AutodiffError("backward: loss is not on this tape");
  GradAccess::seed(loss, 1.0);
  for (auto it = records_.rbegin(); it != records_.rend(); ++it) {
    if (!it->output.has_grad()) continue;
    it->backward(it->output.grad(), it->output.data());
  }
  consumed_ = true;
}

// ---------------------------------------------------------------------------
// Elementwise binary ops

Tensor Tape::add(const Tensor& a, const Tensor& b) {
  const Tensor in[] = {a, b};
  check_inputs(OpKind::kAdd, in);
  auto plan = plan_broadcast(OpKind::kAdd, a, b);
  std::size_t n = shape_size(plan.shape);
  Buffer y(n);
  auto ad = a.data(), bd = b.data();
  for (std::size_t i = 0; i < n; ++i) y[i] = ad[plan.a_scalar ? 0 : i] + bd[plan.b_scalar ? 0 : i];
  return emit(OpKind::kAdd, {a, b}, plan.shape, std::move(y),
              [a, b, plan](std::span<const double> g, std::span<const double>) {
                for (int side = 0; side < 2; ++side) {
                  const Tensor& t = side == 0 ? a : b;
                  bool scalar = side == 0 ? plan.a_scalar : plan.b_scalar;
                  double* dst = GradAccess::buffer(t);
                  if (!dst) continue;
                  if (scalar) {
                    dst[0] += std::accumulate(g.begin(), g.end(), 0.0);
                  } else {
                    for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i];
                  }
                }
              });
}

Tensor Tape::sub(const Tensor& a, const Tensor& b) {
  const Tensor in[] = {a, b};
  check_inputs(OpKind::kSub, in);
  auto plan = plan_broadcast(OpKind::kSub, a, b);
  std::size_t n = shape_size(plan.shape);
  Buffer y(n);
  auto ad = a.data(), bd = b.data();
  for (std::size_t i = 0; i < n; ++i) y[i] = ad[plan.a_scalar ? 0 : i] - bd[plan.b_scalar ? 0 : i];
  return emit(OpKind::kSub, {a, b}, plan.shape, std::move(y),
              [a, b, plan](std::span<const double> g, std::span<const double>) {
                for (int side = 0; side < 2; ++side) {
                  const Tensor& t = side == 0 ? a : b;
                  bool scalar = side == 0 ? plan.a_scalar : plan.b_scalar;
                  double sign = side == 0 ? 1.0 : -1.0;
                  double* dst = GradAccess::buffer(t);
                  if (!dst) continue;
                  if (scalar) {
                    dst[0] += sign * std::accumulate(g.begin(), g.end(), 0.0);
                  } else {
                    for (std::size_t i = 0; i < g.size(); ++i) dst[i] += sign * g[i];
                  }
                }
              });
}

Tensor Tape::mul(const Tensor& a, const Tensor& b) {
  const Tensor in[] = {a, b};
  check_inputs(OpKind::kMul, in);
  auto plan = plan_broadcast(OpKind::kMul, a, b);
  std::size_t n = shape_size(plan.shape);
  Buffer y(n);
  auto ad = a.data(), bd = b.data();
  for (std::size_t i = 0; i < n; ++i) y[i] = ad[plan.a_scalar ? 0 : i] * bd[plan.b_scalar ? 0 : i];
  return emit(OpKind::kMul, {a, b}, plan.shape, std::move(y),
              [a, b, plan](std::span<const double> g, std::span<const double>) {
                auto ad = a.data(), bd = b.data();
                if (double* da = GradAccess::buffer(a)) {
                  for (std::size_t i = 0; i < g.size(); ++i) {
                    da[plan.a_scalar ? 0 : i] += g[i] * bd[plan.b_scalar ? 0 : i];
                  }
                }
                if (double* db = GradAccess::buffer(b)) {
                  for (std::size_t i = 0; i < g.size(); ++i) {
                    db[plan.b_scalar ? 0 : i] += g[i] * ad[plan.a_scalar ? 0 : i];
                  }
                }
              });
}

Tensor Tape::div(const Tensor& a, const Tensor& b) {
  const Tensor in[] = {a, b};
  check_inputs(OpKind::kDiv, in);
  auto plan = plan_broadcast(OpKind::kDiv, a, b);
  std::size_t n = shape_size(plan.shape);
  Buffer y(n);
  auto ad = a.data(), bd = b.data();
  for (std::size_t i = 0; i < n; ++i) y[i] = ad[plan.a_scalar ? 0 : i] / bd[plan.b_scalar ? 0 : i];
  return emit(OpKind::kDiv, {a, b}, plan.shape, std::move(y),
              [a, b, plan](std::span<const double> g, std::span<const double> y) {
                auto bd = b.data();
                if (double* da = GradAccess::buffer(a)) {
                  for (std::size_t i = 0; i < g.size(); ++i) {
                    da[plan.a_scalar ? 0 : i] += g[i] / bd[plan.b_scalar ? 0 : i];
                  }
                }
                if (double* db = GradAccess::buffer(b)) {
                  for (std::size_t i = 0; i < g.size(); ++i) {
                    db[plan.b_scalar ? 0 : i] -= g[i] * y[i] / bd[plan.b_scalar ? 0 : i];
                  }
                }
              });
}

Tensor Tape::logaddexp(const Tensor& a, const Tensor& b) {
  const Tensor in[] = {a, b};
  check_inputs(OpKind::kLogAddExp, in);
  if (a.shape() != b.shape()) shape_error(OpKind::kLogAddExp, a.shape(), b.shape());
  constexpr double kNegInf = -std::numeric_limits<double>::infinity();
  std::size_t n = a.size();
  Buffer y(n);
  auto ad = a.data(), bd = b.data();
  for (std::size_t i = 0; i < n; ++i) {
    double m = std::max(ad[i], bd[i]);
    y[i] = m == kNegInf ? kNegInf : m + std::log(std::exp(ad[i] - m) + std::exp(bd[i] - m));
  }
  return emit(OpKind::kLogAddExp, {a, b}, a.shape(), std::move(y),
              [a, b](std::span<const double> g, std::span<const double> y) {
                auto ad = a.data(), bd = b.data();
                double* da = GradAccess::buffer(a);
                double* db = GradAccess::buffer(b);
                for (std::size_t i = 0; i < g.size(); ++i) {
                  if (y[i] == kNegInf || g[i] == 0.0) continue;
                  if (da) da[i] += g[i] * std::exp(ad[i] - y[i]);
                  if (db) db[i] += g[i] * std::exp(bd[i] - y[i]);
                }
              });
}

Tensor Tape::scale(const Tensor& x, double factor) {
  const Tensor in[] = {x};
  check_inputs(OpKind::kScale, in);
  Buffer y(x.data().begin(), x.data().end());
  for (auto& v : y) v *= factor;
  return emit(OpKind::kScale, {x}, x.shape(), std::move(y),
              [x, factor](std::span<const double> g, std::span<const double>) {
                if (double* dx = GradAccess::buffer(x)) {
                  for (std::size_t i = 0; i < g.size(); ++i) dx[i] += factor * g[i];
                }
              });
}

Tensor Tape::add_scalar(const Tensor& x, double value) {
  const Tensor in[] = {x};
  check_inputs(OpKind::kAddScalar, in);
  Buffer y(x.data().begin(), x.data().end());
  for (auto& v : y) v += value;
  return emit(OpKind::kAddScalar, {x}, x.shape(), std::move(y),
              [x](std::span<const double> g, std::span<const double>) { accumulate(x, g); });
}

// ---------------------------------------------------------------------------
// Linear algebra and convolutions

Tensor Tape::matmul(const Tensor& a, const Tensor& b) {
  const Tensor in[] = {a, b};
  check_inputs(OpKind::kMatmul, in);
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    shape_error(OpKind::kMatmul, a.shape(), b.shape());
  }
  std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Buffer y(m * n);
  as_matrix(std::span<double>(y), m, n).noalias() = as_matrix(a.data(), m, k) * as_matrix(b.data(), k, n);
  return emit(OpKind::kMatmul, {a, b}, {m, n}, std::move(y),
              [a, b, m, k, n](std::span<const double> g, std::span<const double>) {
                auto G = as_matrix(g, m, n);
                if (double* da = GradAccess::buffer(a)) {
                  MatrixMap(da, m, k).noalias() += G * as_matrix(b.data(), k, n).transpose();
                }
                if (double* db = GradAccess::buffer(b)) {
                  MatrixMap(db, k, n).noalias() += as_matrix(a.data(), m, k).transpose() * G;
                }
              });
}

Tensor Tape::linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  const Tensor in[] = {x, weight, bias};
  check_inputs(OpKind::kLinear, in);
  if (x.rank() != 2 || weight.rank() != 2 || x.dim(1) != weight.dim(0)) {
    shape_error(OpKind::kLinear, x.shape(), weight.shape());
  }
  if (bias.size() != weight.dim(1)) shape_error(OpKind::kLinear, weight.shape(), bias.shape(), "bias");
  std::size_t rows = x.dim(0), in_dim = x.dim(1), out_dim = weight.dim(1);
  Buffer y(rows * out_dim);
  auto Y = as_matrix(std::span<double>(y), rows, out_dim);
  Y.noalias() = as_matrix(x.data(), rows, in_dim) * as_matrix(weight.data(), in_dim, out_dim);
  Y.rowwise() += as_matrix(bias.data(), 1, out_dim).row(0);
  return emit(OpKind::kLinear, {x, weight, bias}, {rows, out_dim}, std::move(y),
              [x, weight, bias, rows, in_dim, out_dim](std::span<const double> g,
                                                       std::span<const double>) {
                auto G = as_matrix(g, rows, out_dim);
                if (double* dx = GradAccess::buffer(x)) {
                  MatrixMap(dx, rows, in_dim).noalias() +=
                      G * as_matrix(weight.data(), in_dim, out_dim).transpose();
                }
                if (double* dw = GradAccess::buffer(weight)) {
                  MatrixMap(dw, in_dim, out_dim).noalias() +=
                      as_matrix(x.data(), rows, in_dim).transpose() * G;
                }
                if (double* db = GradAccess::buffer(bias)) {
                  MatrixMap(db, 1, out_dim) += G.colwise().sum();
                }
              });
}

Tensor Tape::conv1d(const Tensor& x, const Tensor& weight, const Tensor& bias, std::size_t stride) {
  std::vector<Tensor> inputs = {x, weight};
  if (bias.defined()) inputs.push_back(bias);
  check_inputs(OpKind::kConv1d, inputs);
  if (x.rank() != 2 || weight.rank() != 3 || weight.dim(1) != x.dim(0)) {
    shape_error(OpKind::kConv1d, x.shape(), weight.shape());
  }
  if (stride == 0) shape_error(OpKind::kConv1d, weight.shape(), "stride must be positive");
  std::size_t c_in = x.dim(0), len = x.dim(1), c_out = weight.dim(0), k = weight.dim(2);
  if (len < k) shape_error(OpKind::kConv1d, x.shape(), weight.shape(), "input shorter than kernel");
  if (bias.defined() && bias.size() != c_out) {
    shape_error(OpKind::kConv1d, weight.shape(), bias.shape(), "bias");
  }
  std::size_t frames = (len - k) / stride + 1;
  std::size_t rows = c_in * k;

  // im2col: col[ci*k + j, t] = x[ci, t*stride + j]
  auto col = std::make_shared<Buffer>(rows * frames);
  auto xd = x.data();
  for (std::size_t ci = 0; ci < c_in; ++ci) {
    for (std::size_t j = 0; j < k; ++j) {
      double* dst = col->data() + (ci * k + j) * frames;
      const double* src = xd.data() + ci * len + j;
      for (std::size_t t = 0; t < frames; ++t) dst[t] = src[t * stride];
    }
  }
  Buffer y(c_out * frames);
  auto Y = as_matrix(std::span<double>(y), c_out, frames);
  Y.noalias() = as_matrix(weight.data(), c_out, rows) * as_matrix(std::span<const double>(*col), rows, frames);
  if (bias.defined()) Y.colwise() += as_matrix(bias.data(), c_out, 1).col(0);

  return emit(OpKind::kConv1d, std::move(inputs), {c_out, frames}, std::move(y),
              [x, weight, bias, col, c_in, len, c_out, k, frames, rows, stride](
                  std::span<const double> g, std::span<const double>) {
                auto G = as_matrix(g, c_out, frames);
                if (double* dw = GradAccess::buffer(weight)) {
                  MatrixMap(dw, c_out, rows).noalias() +=
                      G * as_matrix(std::span<const double>(*col), rows, frames).transpose();
                }
                if (bias.defined()) {
                  if (double* db = GradAccess::buffer(bias)) {
                    MatrixMap(db, c_out, 1) += G.rowwise().sum();
                  }
                }
                if (double* dx = GradAccess::buffer(x)) {
                  RowMatrix dcol = as_matrix(weight.data(), c_out, rows).transpose() * G;
                  for (std::size_t ci = 0; ci < c_in; ++ci) {
                    for (std::size_t j = 0; j < k; ++j) {
                      const double* src = dcol.data() + (ci * k + j) * frames;
                      double* dst = dx + ci * len + j;
                      for (std::size_t t = 0; t < frames; ++t) dst[t * stride] += src[t];
                    }
                  }
                }
              });
}

Tensor Tape::conv_transpose1d(const Tensor& x, const Tensor& weight, const Tensor& bias,
                              std::size_t stride) {
  std::vector<Tensor> inputs = {x, weight};
  if (bias.defined()) inputs.push_back(bias);
  check_inputs(OpKind::kConvTranspose1d, inputs);
  if (x.rank() != 2 || weight.rank() != 3 || weight.dim(0) != x.dim(0)) {
    shape_error(OpKind::kConvTranspose1d, x.shape(), weight.shape());
  }
  if (stride == 0) shape_error(OpKind::kConvTranspose1d, weight.shape(), "stride must be positive");
  std::size_t c_in = x.dim(0), frames = x.dim(1), c_out = weight.dim(1), k = weight.dim(2);
  if (frames == 0) shape_error(OpKind::kConvTranspose1d, x.shape(), "no frames");
  if (bias.defined() && bias.size() != c_out) {
    shape_error(OpKind::kConvTranspose1d, weight.shape(), bias.shape(), "bias");
  }
  std::size_t len = (frames - 1) * stride + k;
  std::size_t rows = c_out * k;

  // col[co*k + j, t] = sum_ci w[ci, co, j] x[ci, t]; y[co, t*stride + j] += col[co*k + j, t]
  RowMatrix col = as_matrix(weight.data(), c_in, rows).transpose() * as_matrix(x.data(), c_in, frames);
  Buffer y(c_out * len, 0.0);
  for (std::size_t co = 0; co < c_out; ++co) {
    double b = bias.defined() ? bias.data()[co] : 0.0;
    double* dst_row = y.data() + co * len;
    if (b != 0.0) std::fill(dst_row, dst_row + len, b);
    for (std::size_t j = 0; j < k; ++j) {
      const double* src = col.data() + (co * k + j) * frames;
      double* dst = dst_row + j;
      for (std::size_t t = 0; t < frames; ++t) dst[t * stride] += src[t];
    }
  }

  return emit(OpKind::kConvTranspose1d, std::move(inputs), {c_out, len}, std::move(y),
              [x, weight, bias, c_in, frames, c_out, k, len, rows, stride](
                  std::span<const double> g, std::span<const double>) {
                RowMatrix dcol(rows, frames);
                for (std::size_t co = 0; co < c_out; ++co) {
                  for (std::size_t j = 0; j < k; ++j) {
                    const double* src = g.data() + co * len + j;
                    double* dst = dcol.data() + (co * k + j) * frames;
                    for (std::size_t t = 0; t < frames; ++t) dst[t] = src[t * stride];
                  }
                }
                if (double* dx = GradAccess::buffer(x)) {
                  MatrixMap(dx, c_in, frames).noalias() += as_matrix(weight.data(), c_in, rows) * dcol;
                }
                if (double* dw = GradAccess::buffer(weight)) {
                  MatrixMap(dw, c_in, rows).noalias() += as_matrix(x.data(), c_in, frames) * dcol.transpose();
                }
                if (bias.defined()) {
                  if (double* db = GradAccess::buffer(bias)) {
                    MatrixMap(db, c_out, 1) += as_matrix(g, c_out, len).rowwise().sum();
                  }
                }
              });
}

// ---------------------------------------------------------------------------
// Unary ops

namespace {

template <class Forward>
Buffer map_values(std::span<const double> x, Forward f) {
  Buffer y(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = f(x[i]);
  return y;
}

}  // namespace

Tensor Tape::relu(const Tensor& x) {
  const Tensor in[] = {x};
  check_inputs(OpKind::kRelu, in);
  return emit(OpKind::kRelu, {x}, x.shape(), map_values(x.data(), [](double v) { return v > 0 ? v : 0.0; }),
              [x](std::span<const double> g, std::span<const double>) {
                if (double* dx = GradAccess::buffer(x)) {
                  auto xd = x.data();
                  for (std::size_t i = 0; i < g.size(); ++i) {
                    if (xd[i] > 0) dx[i] += g[i];
                  }
                }
              });
}

Tensor Tape::tanh(const Tensor& x) {
  const Tensor in[] = {x};
  check_inputs(OpKind::kTanh, in);
  return emit(OpKind::kTanh, {x}, x.shape(), map_values(x.data(), [](double v) { return std::tanh(v); }),
              [x](std::span<const double> g, std::span<const double> y) {
                if (double* dx = GradAccess::buffer(x)) {
                  for (std::size_t i = 0; i < g.size(); ++i) dx[i] += g[i] * (1.0 - y[i] * y[i]);
                }
              });
}

Tensor Tape::sigmoid(const Tensor& x) {
  const Tensor in[] = {x};
  check_inputs(OpKind::kSigmoid, in);
  auto f = [](double v) {
    if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
    double e = std::exp(v);
    return e / (1.0 + e);
  };
  return emit(OpKind::kSigmoid, {x}, x.shape(), map_values(x.data(), f),
              [x](std::span<const double> g, std::span<const double> y) {
                if (double* dx = GradAccess::buffer(x)) {
                  for (std::size_t i = 0; i < g.size(); ++i) dx[i] += g[i] * y[i] * (1.0 - y[i]);
                }
              });
}

Tensor Tape::log(const Tensor& x) {
  const Tensor in[] = {x};
  check_inputs(OpKind::kLog, in);
  return emit(OpKind::kLog, {x}, x.shape(), map_values(x.data(), [](double v) { return std::log(v); }),
              [x](std::span<const double> g, std::span<const double>) {
                if (double* dx = GradAccess::buffer(x)) {
                  auto xd = x.data();
                  for (std::size_t i = 0; i < g.size(); ++i) dx[i] += g[i] / xd[i];
                }
              });
}

Tensor Tape::sqrt(const Tensor& x) {
  const Tensor in[] = {x};
  check_inputs(OpKind::kSqrt, in);
  return emit(OpKind::kSqrt, {x}, x.shape(), map_values(x.data(), [](double v) { return std::sqrt(v); }),
              [x](std::span<const double> g, std::span<const double> y) {
                if (double* dx = GradAccess::buffer(x)) {
                  for (std::size_t i = 0; i < g.size(); ++i) dx[i] += g[i] * 0.5 / y[i];
                }
              });
}

Tensor Tape::square(const Tensor& x) {
  const Tensor in[] = {x};
  check_inputs(OpKind::kSquare, in);
  return emit(OpKind::kSquare, {x}, x.shape(), map_values(x.data(), [](double v) { return v * v; }),
              [x](std::span<const double> g, std::span<const double>) {
                if (double* dx = GradAccess::buffer(x)) {
                  auto xd = x.data();
                  for (std::size_t i = 0; i < g.size(); ++i) dx[i] += 2.0 * xd[i] * g[i];
                }
              });
}

Tensor Tape::log_softmax(const Tensor& x) {
  const Tensor in[] = {x};
  check_inputs(OpKind::kLogSoftmax, in);
  if (x.rank() == 0 || x.size() == 0) shape_error(OpKind::kLogSoftmax, x.shape(), "empty");
  std::size_t cols = x.shape().back();
  std::size_t rows = x.size() / cols;
  Buffer y(x.size());
  auto xd = x.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = xd.data() + r * cols;
    double m = *std::max_element(row, row + cols);
    double s = 0.0;
    for (std::size_t c = 0; c < cols; ++c) s += std::exp(row[c] - m);
    double lse = m + std::log(s);
    for (std::size_t c = 0; c < cols; ++c) y[r * cols + c] = row[c] - lse;
  }
  return emit(OpKind::kLogSoftmax, {x}, x.shape(), std::move(y),
              [x, rows, cols](std::span<const double> g, std::span<const double> y) {
                double* dx = GradAccess::buffer(x);
                if (!dx) return;
                for (std::size_t r = 0; r < rows; ++r) {
                  double gs = 0.0;
                  for (std::size_t c = 0; c < cols; ++c) gs += g[r * cols + c];
                  for (std::size_t c = 0; c < cols; ++c) {
                    dx[r * cols + c] += g[r * cols + c] - std::exp(y[r * cols + c]) * gs;
                  }
                }
              });
}

// ---------------------------------------------------------------------------
// Reductions and layout

Tensor Tape::sum(const Tensor& x) {
  const Tensor in[] = {x};
  check_inputs(OpKind::kSum, in);
  double total = std::accumulate(x.data().begin(), x.data().end(), 0.0);
  return emit(OpKind::kSum, {x}, {1}, {total}, [x](std::span<const double> g, std::span<const double>) {
    if (double* dx = GradAccess::buffer(x)) {
      for (std::size_t i = 0; i < x.size(); ++i) dx[i] += g[0];
    }
  });
}

Tensor Tape::mean(const Tensor& x) {
  const Tensor in[] = {x};
  check_inputs(OpKind::kMean, in);
  if (x.size() == 0) shape_error(OpKind::kMean, x.shape(), "empty");
  double n = static_cast<double>(x.size());
  double total = std::accumulate(x.data().begin(), x.data().end(), 0.0);
  return emit(OpKind::kMean, {x}, {1}, {total / n}, [x, n](std::span<const double> g, std::span<const double>) {
    if (double* dx = GradAccess::buffer(x)) {
      for (std::size_t i = 0; i < x.size(); ++i) dx[i] += g[0] / n;
    }
  });
}

Tensor Tape::concat(std::span<const Tensor> parts, std::size_t axis) {
  check_inputs(OpKind::kConcat, parts);
  if (parts.empty()) throw ShapeError("concat: no inputs");
  const Shape& first = parts[0].shape();
  if (axis >= first.size()) shape_error(OpKind::kConcat, first, "axis out of range");
  Shape out_shape = first;
  out_shape[axis] = 0;
  for (const auto& p : parts) {
    if (p.rank() != first.size()) shape_error(OpKind::kConcat, first, p.shape());
    for (std::size_t d = 0; d < first.size(); ++d) {
      if (d != axis && p.shape()[d] != first[d]) shape_error(OpKind::kConcat, first, p.shape());
    }
    out_shape[axis] += p.shape()[axis];
  }
  auto out_split = split_axis(out_shape, axis);
  Buffer y(shape_size(out_shape));
  std::vector<std::size_t> offsets;
  std::size_t offset = 0;
  for (const auto& p : parts) {
    offsets.push_back(offset);
    std::size_t block = p.shape()[axis] * out_split.inner;
    auto pd = p.data();
    for (std::size_t o = 0; o < out_split.outer; ++o) {
      std::copy_n(pd.data() + o * block, block,
                  y.data() + o * out_split.len * out_split.inner + offset * out_split.inner);
    }
    offset += p.shape()[axis];
  }
  std::vector<Tensor> inputs(parts.begin(), parts.end());
  return emit(OpKind::kConcat, inputs, out_shape, std::move(y),
              [inputs, offsets, out_split, axis](std::span<const double> g, std::span<const double>) {
                for (std::size_t i = 0; i < inputs.size(); ++i) {
                  double* dp = GradAccess::buffer(inputs[i]);
                  if (!dp) continue;
                  std::size_t block = inputs[i].shape()[axis] * out_split.inner;
                  for (std::size_t o = 0; o < out_split.outer; ++o) {
                    const double* src =
                        g.data() + o * out_split.len * out_split.inner + offsets[i] * out_split.inner;
                    for (std::size_t j = 0; j < block; ++j) dp[o * block + j] += src[j];
                  }
                }
              });
}

Tensor Tape::slice(const Tensor& x, std::size_t axis, std::size_t begin, std::size_t end) {
  const Tensor in[] = {x};
  check_inputs(OpKind::kSlice, in);
  if (axis >= x.rank()) shape_error(OpKind::kSlice, x.shape(), "axis out of range");
  if (begin > end || end > x.shape()[axis]) shape_error(OpKind::kSlice, x.shape(), "range out of bounds");
  auto split = split_axis(x.shape(), axis);
  Shape out_shape = x.shape();
  out_shape[axis] = end - begin;
  std::size_t block = (end - begin) * split.inner;
  Buffer y(split.outer * block);
  auto xd = x.data();
  for (std::size_t o = 0; o < split.outer; ++o) {
    std::copy_n(xd.data() + o * split.len * split.inner + begin * split.inner, block, y.data() + o * block);
  }
  return emit(OpKind::kSlice, {x}, out_shape, std::move(y),
              [x, split, begin, block](std::span<const double> g, std::span<const double>) {
                double* dx = GradAccess::buffer(x);
                if (!dx) return;
                for (std::size_t o = 0; o < split.outer; ++o) {
                  double* dst = dx + o * split.len * split.inner + begin * split.inner;
                  for (std::size_t j = 0; j < block; ++j) dst[j] += g[o * block + j];
                }
              });
}

Tensor Tape::transpose(const Tensor& x) {
  const Tensor in[] = {x};
  check_inputs(OpKind::kTranspose, in);
  if (x.rank() != 2) shape_error(OpKind::kTranspose, x.shape(), "rank must be 2");
  std::size_t r = x.dim(0), c = x.dim(1);
  Buffer y(x.size());
  as_matrix(std::span<double>(y), c, r) = as_matrix(x.data(), r, c).transpose();
  return emit(OpKind::kTranspose, {x}, {c, r}, std::move(y),
              [x, r, c](std::span<const double> g, std::span<const double>) {
                if (double* dx = GradAccess::buffer(x)) {
                  MatrixMap(dx, r, c) += as_matrix(g, c, r).transpose();
                }
              });
}

Tensor Tape::reshape(const Tensor& x, Shape shape) {
  const Tensor in[] = {x};
  check_inputs(OpKind::kReshape, in);
  if (shape_size(shape) != x.size()) shape_error(OpKind::kReshape, x.shape(), shape);
  Buffer y(x.data().begin(), x.data().end());
  return emit(OpKind::kReshape, {x}, std::move(shape), std::move(y),
              [x](std::span<const double> g, std::span<const double>) { accumulate(x, g); });
}

Tensor Tape::gather_columns(const Tensor& x, std::span<const std::size_t> columns) {
  const Tensor in[] = {x};
  check_inputs(OpKind::kGatherColumns, in);
  if (x.rank() != 2) shape_error(OpKind::kGatherColumns, x.shape(), "rank must be 2");
  std::size_t rows = x.dim(0), cols = x.dim(1), m = columns.size();
  for (auto c : columns) {
    if (c >= cols) shape_error(OpKind::kGatherColumns, x.shape(), "column index out of range");
  }
  std::vector<std::size_t> idx(columns.begin(), columns.end());
  Buffer y(rows * m);
  auto xd = x.data();
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t j = 0; j < m; ++j) y[r * m + j] = xd[r * cols + idx[j]];
  }
  return emit(OpKind::kGatherColumns, {x}, {rows, m}, std::move(y),
              [x, idx, rows, cols, m](std::span<const double> g, std::span<const double>) {
                double* dx = GradAccess::buffer(x);
                if (!dx) return;
                for (std::size_t r = 0; r < rows; ++r) {
                  for (std::size_t j = 0; j < m; ++j) dx[r * cols + idx[j]] += g[r * m + j];
                }
              });
}

Tensor Tape::shift_right(const Tensor& x, std::size_t shift, double fill) {
  const Tensor in[] = {x};
  check_inputs(OpKind::kShiftRight, in);
  if (x.rank() == 0) shape_error(OpKind::kShiftRight, x.shape(), "rank must be positive");
  std::size_t cols = x.shape().back();
  std::size_t rows = x.size() / std::max<std::size_t>(cols, 1);
  Buffer y(x.size(), fill);
  auto xd = x.data();
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = shift; c < cols; ++c) y[r * cols + c] = xd[r * cols + c - shift];
  }
  return emit(OpKind::kShiftRight, {x}, x.shape(), std::move(y),
              [x, rows, cols, shift](std::span<const double> g, std::span<const double>) {
                double* dx = GradAccess::buffer(x);
                if (!dx) return;
                for (std::size_t r = 0; r < rows; ++r) {
                  for (std::size_t c = shift; c < cols; ++c) dx[r * cols + c - shift] += g[r * cols + c];
                }
              });
}

// ---------------------------------------------------------------------------
// Generic dispatch

Tensor Tape::forward(OpKind kind, std::span<const Tensor> inputs, const OpAttributes& attrs) {
  auto need = [&](std::size_t n) {
    if (inputs.size() < n) {
      throw AutodiffError(std::string(op_name(kind)) + ": expected " + std::to_string(n) + " inputs");
    }
  };
  switch (kind) {
    case OpKind::kAdd: need(2); return add(inputs[0], inputs[1]);
    case OpKind::kSub: need(2); return sub(inputs[0], inputs[1]);
    case OpKind::kMul: need(2); return mul(inputs[0], inputs[1]);
    case OpKind::kDiv: need(2); return div(inputs[0], inputs[1]);
    case OpKind::kScale: need(1); return scale(inputs[0], attrs.value);
    case OpKind::kAddScalar: need(1); return add_scalar(inputs[0], attrs.value);
    case OpKind::kMatmul: need(2); return matmul(inputs[0], inputs[1]);
    case OpKind::kLinear: need(3); return linear(inputs[0], inputs[1], inputs[2]);
    case OpKind::kConv1d:
      need(2);
      return conv1d(inputs[0], inputs[1], inputs.size() > 2 ? inputs[2] : Tensor(), attrs.stride);
    case OpKind::kConvTranspose1d:
      need(2);
      return conv_transpose1d(inputs[0], inputs[1], inputs.size() > 2 ? inputs[2] : Tensor(), attrs.stride);
    case OpKind::kRelu: need(1); return relu(inputs[0]);
    case OpKind::kTanh: need(1); return tanh(inputs[0]);
    case OpKind::kSigmoid: need(1); return sigmoid(inputs[0]);
    case OpKind::kLog: need(1); return log(inputs[0]);
    case OpKind::kSqrt: need(1); return sqrt(inputs[0]);
    case OpKind::kSquare: need(1); return square(inputs[0]);
    case OpKind::kLogSoftmax: need(1); return log_softmax(inputs[0]);
    case OpKind::kSum: need(1); return sum(inputs[0]);
    case OpKind::kMean: need(1); return mean(inputs[0]);
    case OpKind::kConcat: need(1); return concat(inputs, attrs.axis);
    case OpKind::kSlice: need(1); return slice(inputs[0], attrs.axis, attrs.begin, attrs.end);
    case OpKind::kTranspose: need(1); return transpose(inputs[0]);
    case OpKind::kReshape: need(1); return reshape(inputs[0], attrs.shape);
    case OpKind::kLogAddExp: need(2); return logaddexp(inputs[0], inputs[1]);
    case OpKind::kGatherColumns: need(1); return gather_columns(inputs[0], attrs.indices);
    case OpKind::kShiftRight: need(1); return shift_right(inputs[0], attrs.stride, attrs.value);
  }
  throw AutodiffError("forward: unknown op kind");
}

// ---------------------------------------------------------------------------

double grad_check(const ScalarFunction& f, const Tensor& x, double h) {
  if (!(h > 0)) throw std::invalid_argument("grad_check: step must be positive");
  Tensor probe = Tensor::parameter(x.shape(), std::vector<double>(x.data().begin(), x.data().end()));

  std::vector<double> analytic(probe.size(), 0.0);
  {
    Tape tape;
    Tensor y = f(tape, probe);
    if (y.requires_grad()) {
      tape.backward(y);
      if (probe.has_grad()) analytic.assign(probe.grad().begin(), probe.grad().end());
    } else if (y.size() != 1) {
      throw AutodiffError("grad_check: function must return a scalar");
    }
  }

  probe.set_requires_grad(false);
  auto values = probe.mutable_data();
  double worst = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    double saved = values[i];
    values[i] = saved + h;
    double up;
    {
      Tape tape;
      up = f(tape, probe).item();
    }
    values[i] = saved - h;
    double down;
    {
      Tape tape;
      down = f(tape, probe).item();
    }
    values[i] = saved;
    double numeric = (up - down) / (2.0 * h);
    double denom = std::max({std::abs(analytic[i]), std::abs(numeric), 1e-8});
    worst = std::max(worst, std::abs(analytic[i] - numeric) / denom);
  }
  return worst;
}

}  // namespace gpit
