#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "zsml/rng.hpp"

namespace zsml {

using Shape = std::vector<std::size_t>;

std::string shape_string(const Shape& shape);

/// Dense rank-1 or rank-2 float tensor with shared ownership.
///
/// Copies of a Tensor alias the same storage; use clone() or detach() for a
/// value copy. A tensor is "tracked" when it requires grad itself or was
/// produced by a recorded op from a tracked input.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, float value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<float> values, bool requires_grad = false);
  static Tensor scalar(float value, bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }

  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t size() const;
  /// Leading dimension; rank-1 tensors are treated as a single row.
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<float> data();
  std::span<const float> data() const;
  float operator[](std::size_t i) const { return data()[i]; }
  float at(std::size_t r, std::size_t c) const { return data()[r * cols() + c]; }
  float item() const;

  bool requires_grad() const;
  void set_requires_grad(bool value);
  bool tracked() const;

  bool has_grad() const;
  std::span<float> grad();
  std::span<const float> grad() const;
  /// Allocates (if needed) and zero-fills the gradient buffer.
  void zero_grad();
  void clear_grad();

  /// Value copy that is not linked to any tape and does not require grad.
  Tensor detach() const;
  /// Value copy that keeps the requires_grad flag but drops any gradient.
  Tensor clone() const;

  bool same_storage(const Tensor& other) const { return impl_ == other.impl_; }

 private:
  struct Impl;
  explicit Tensor(std::shared_ptr<Impl> impl) : impl_(std::move(impl)) {}
  std::shared_ptr<Impl> impl_;

  friend class Tape;
  friend Tensor make_result(Shape shape, std::vector<float> values, bool tracked);
};

/// Builds an op output; `tracked` marks it as a node on the gradient path.
Tensor make_result(Shape shape, std::vector<float> values, bool tracked);

/// Ordered record of executed ops. backward() replays the backward rules in
/// exact reverse execution order and then resets the record.
class Tape {
 public:
  using BackwardFn = std::function<void()>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;
  Tape(Tape&&) = default;
  Tape& operator=(Tape&&) = default;

  /// Records an op. The backward rule reads output.grad() and accumulates
  /// into the grads of tracked inputs (allocated before it is called).
  void record(std::string name, std::vector<Tensor> inputs, Tensor output, BackwardFn backward);

  std::size_t size() const { return entries_.size(); }
  std::vector<std::string> op_names() const;
  void clear() { entries_.clear(); }

  void backward(const Tensor& loss);

 private:
  struct Entry {
    std::string name;
    std::vector<Tensor> inputs;
    Tensor output;
    BackwardFn backward;
  };
  std::vector<Entry> entries_;
};

/// Throws NumericalError naming `what` if any entry is NaN or Inf.
void check_finite(std::span<const float> values, const std::string& what);

namespace ops {

Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b);
/// x[b x f] + bias[f] broadcast over rows.
Tensor add_bias(Tape& tape, const Tensor& x, const Tensor& bias);
/// Column-wise concatenation of two matrices with equal row counts.
Tensor concat_cols(Tape& tape, const Tensor& a, const Tensor& b);
Tensor add(Tape& tape, const Tensor& a, const Tensor& b);
Tensor sub(Tape& tape, const Tensor& a, const Tensor& b);
Tensor mul(Tape& tape, const Tensor& a, const Tensor& b);
Tensor scale(Tape& tape, const Tensor& x, float factor);
Tensor sum(Tape& tape, const Tensor& x);
Tensor mean(Tape& tape, const Tensor& x);

/// max(x, slope * x); the identity branch is used at exactly zero.
Tensor leaky_relu(Tape& tape, const Tensor& x, float slope);

/// Inverted dropout: survivors are scaled by 1/(1-p) in training mode.
Tensor dropout(Tape& tape, const Tensor& x, float p, bool training, Rng& rng);

/// Per-feature standardization with current-batch statistics, then affine.
/// No running statistics are kept.
Tensor batchnorm(Tape& tape, const Tensor& x, const Tensor& gamma, const Tensor& beta,
                 float eps = 1e-5f, bool training = true);

/// Mean negative log-softmax of the true class over the batch.
Tensor softmax_cross_entropy(Tape& tape, const Tensor& logits, std::span<const std::uint32_t> labels);

}  // namespace ops

/// Row-wise softmax of a logits matrix (no tape).
std::vector<float> softmax_rows(const Tensor& logits);

/// n x dim tensor of i.i.d. N(0, std^2) entries.
Tensor gaussian_sample(Rng& rng, std::size_t n, std::size_t dim, float std);

}  // namespace zsml
