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
#include <cstdint>
#include <functional>
#include <memory>
#include <new>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace gpit {

namespace detail {
struct GradAccess;

// Eigen chooses vectorised code paths from pointer alignment. Allocating every
// buffer on a 64-byte boundary makes results depend on shapes only, not on
// allocation history, so reruns are bit-identical.
template <typename T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlignment{64};

  AlignedAllocator() = default;
  template <typename U>
  AlignedAllocator(const AlignedAllocator<U>&) {}

  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlignment)); }
  void deallocate(T* p, std::size_t) { ::operator delete(p, kAlignment); }
  template <typename U>
  bool operator==(const AlignedAllocator<U>&) const { return true; }
};

using Buffer = std::vector<double, AlignedAllocator<double>>;
}  // namespace detail

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_string(const Shape& shape);

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class AutodiffError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class OpKind {
  kAdd,
  kSub,
  kMul,
  kDiv,
  kScale,
  kAddScalar,
  kMatmul,
  kLinear,
  kConv1d,
  kConvTranspose1d,
  kRelu,
  kTanh,
  kSigmoid,
  kLog,
  kSqrt,
  kSquare,
  kLogSoftmax,
  kSum,
  kMean,
  kConcat,
  kSlice,
  kTranspose,
  kReshape,
  kLogAddExp,
  kGatherColumns,
  kShiftRight,
};

std::string_view op_name(OpKind kind);

// Dense row-major array of doubles. Copies share storage; a Tensor is a
// handle. Leaves (constants and parameters) carry tape_id 0, tensors produced
// by a recording Tape carry that tape's id.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape);
  static Tensor constant(Shape shape, std::vector<double> values);
  static Tensor scalar(double value);
  static Tensor vector(std::vector<double> values);
  // A leaf that requires grad.
  static Tensor parameter(Shape shape, std::vector<double> values);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t size() const;

  std::span<const double> data() const;
  // Only leaves may be mutated in place (optimizer updates, checkpoint loads).
  std::span<double> mutable_data();
  double item() const;

  bool requires_grad() const;
  void set_requires_grad(bool value);
  bool has_grad() const;
  std::span<const double> grad() const;
  void zero_grad();

  std::uint64_t tape_id() const;

  // Constant copy of the current values, detached from any tape.
  Tensor detach() const;
  bool same_as(const Tensor& other) const { return impl_ == other.impl_; }

 private:
  friend class Tape;
  friend struct detail::GradAccess;
  struct Storage {
    Shape shape;
    detail::Buffer data;
    detail::Buffer grad;
    bool requires_grad = false;
    std::uint64_t tape_id = 0;
  };
  explicit Tensor(std::shared_ptr<Storage> impl) : impl_(std::move(impl)) {}
  static Tensor from_buffer(Shape shape, detail::Buffer values);

  std::shared_ptr<Storage> impl_;
};

// Attributes for the generic forward() entry point.
struct OpAttributes {
  std::size_t stride = 1;
  std::size_t axis = 0;
  std::size_t begin = 0;
  std::size_t end = 0;
  double value = 0.0;
  std::vector<std::size_t> indices;
  Shape shape;
};

// Define-by-run reverse-mode tape. Ops whose inputs all lack requires_grad
// are evaluated but not recorded. backward() may be called once.
class Tape {
 public:
  Tape();
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  std::uint64_t id() const { return id_; }
  std::size_t size() const { return records_.size(); }
  OpKind kind(std::size_t record) const { return records_.at(record).kind; }

  // Elementwise; either operand may be a single-element tensor (scalar
  // broadcast). Anything else must match exactly.
  Tensor add(const Tensor& a, const Tensor& b);
  Tensor sub(const Tensor& a, const Tensor& b);
  Tensor mul(const Tensor& a, const Tensor& b);
  Tensor div(const Tensor& a, const Tensor& b);
  // log(exp(a) + exp(b)) for equal shapes; -inf inputs are allowed.
  Tensor logaddexp(const Tensor& a, const Tensor& b);

  Tensor scale(const Tensor& x, double factor);
  Tensor add_scalar(const Tensor& x, double value);

  // [m,k] x [k,n] -> [m,n]
  Tensor matmul(const Tensor& a, const Tensor& b);
  // x [rows,in], weight [in,out], bias [out] -> [rows,out]
  Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias);
  // x [c_in,len], weight [c_out,c_in,k], bias [c_out] (optional) -> [c_out,frames]
  // with frames = (len - k) / stride + 1 (valid padding).
  Tensor conv1d(const Tensor& x, const Tensor& weight, const Tensor& bias, std::size_t stride);
  // x [c_in,frames], weight [c_in,c_out,k], bias [c_out] (optional)
  // -> [c_out,(frames - 1) * stride + k], overlap-add synthesis.
  Tensor conv_transpose1d(const Tensor& x, const Tensor& weight, const Tensor& bias,
                          std::size_t stride);

  Tensor relu(const Tensor& x);
  Tensor tanh(const Tensor& x);
  Tensor sigmoid(const Tensor& x);
  Tensor log(const Tensor& x);
  Tensor sqrt(const Tensor& x);
  Tensor square(const Tensor& x);
  Tensor log_softmax(const Tensor& x);

  Tensor sum(const Tensor& x);
  Tensor mean(const Tensor& x);

  Tensor concat(std::span<const Tensor> parts, std::size_t axis);
  Tensor slice(const Tensor& x, std::size_t axis, std::size_t begin, std::size_t end);
  Tensor transpose(const Tensor& x);
  Tensor reshape(const Tensor& x, Shape shape);
  // x [rows,n] -> [rows,|columns|], y[r,j] = x[r,columns[j]]
  Tensor gather_columns(const Tensor& x, std::span<const std::size_t> columns);
  // Shift along the last axis by `shift` positions, filling with `fill`.
  Tensor shift_right(const Tensor& x, std::size_t shift, double fill);

  Tensor forward(OpKind kind, std::span<const Tensor> inputs, const OpAttributes& attrs = {});

  void backward(const Tensor& loss);

 private:
  // Receives the output gradient and the output values.
  using BackwardFn = std::function<void(std::span<const double>, std::span<const double>)>;
  struct Record {
    OpKind kind;
    std::vector<Tensor> inputs;
    Tensor output;
    BackwardFn backward;
  };

  void check_inputs(OpKind kind, std::span<const Tensor> inputs) const;
  Tensor emit(OpKind kind, std::vector<Tensor> inputs, Shape shape, detail::Buffer values,
              BackwardFn backward);

  std::uint64_t id_;
  std::vector<Record> records_;
  bool consumed_ = false;
};

// Maximum relative error between the tape gradient of `f` at `x` and central
// finite differences with step h. Relative error uses the denominator
// max(|analytic|, |numeric|, 1e-8).
using ScalarFunction = std::function<Tensor(Tape&, const Tensor&)>;
double grad_check(const ScalarFunction& f, const Tensor& x, double h);

}  // namespace gpit
