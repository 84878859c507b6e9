#include "zsml/tensor.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "zsml/error.hpp"

namespace zsml {

namespace {

using RowMatrix = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMatrix>;
using ConstMatMap = Eigen::Map<const RowMatrix>;

ConstMatMap as_matrix(std::span<const float> v, std::size_t r, std::size_t c) {
  return ConstMatMap(v.data(), static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
}

MatMap as_matrix(std::span<float> v, std::size_t r, std::size_t c) {
  return MatMap(v.data(), static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
}

std::size_t shape_product(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

void require_defined(const Tensor& t, const char* op) {
  if (!t.defined()) throw ContractError(std::string(op) + ": undefined tensor");
}

void require_matrix(const Tensor& t, const char* op) {
  require_defined(t, op);
  if (t.rank() != 2) {
    throw DimensionError(std::string(op) + ": expected a matrix, got shape " + shape_string(t.shape()));
  }
}

Tensor finish(const char* op, Shape shape, std::vector<float> values, bool tracked) {
  check_finite(values, op);
  return make_result(std::move(shape), std::move(values), tracked);
}

}  // namespace

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

void check_finite(std::span<const float> values, const std::string& what) {
  for (float v : values) {
    if (!std::isfinite(v)) throw NumericalError(what + ": non-finite value");
  }
}

struct Tensor::Impl {
  Shape shape;
  std::vector<float> data;
  std::vector<float> grad;
  bool requires_grad = false;
  bool op_tracked = false;
};

Tensor make_result(Shape shape, std::vector<float> values, bool tracked) {
  auto impl = std::make_shared<Tensor::Impl>();
  impl->shape = std::move(shape);
  impl->data = std::move(values);
  impl->op_tracked = tracked;
  return Tensor(std::move(impl));
}

Tensor Tensor::from(Shape shape, std::vector<float> values, bool requires_grad) {
  if (shape.empty() || shape.size() > 2) {
    throw DimensionError("Tensor: rank must be 1 or 2, got shape " + shape_string(shape));
  }
  if (shape_product(shape) != values.size()) {
    throw DimensionError("Tensor: shape " + shape_string(shape) + " does not hold " +
                         std::to_string(values.size()) + " values");
  }
  check_finite(values, "Tensor");
  auto impl = std::make_shared<Impl>();
  impl->shape = std::move(shape);
  impl->data = std::move(values);
  impl->requires_grad = requires_grad;
  return Tensor(std::move(impl));
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0f, requires_grad); }

Tensor Tensor::full(Shape shape, float value, bool requires_grad) {
  const std::size_t n = shape_product(shape);
  return from(std::move(shape), std::vector<float>(n, value), requires_grad);
}

Tensor Tensor::scalar(float value, bool requires_grad) { return from({1}, {value}, requires_grad); }

const Shape& Tensor::shape() const {
  require_defined(*this, "Tensor::shape");
  return impl_->shape;
}

std::size_t Tensor::size() const { return impl_ ? impl_->data.size() : 0; }

std::size_t Tensor::rows() const { return rank() == 2 ? impl_->shape[0] : 1; }

std::size_t Tensor::cols() const { return rank() == 2 ? impl_->shape[1] : impl_->shape[0]; }

std::span<float> Tensor::data() { return impl_->data; }

std::span<const float> Tensor::data() const { return impl_->data; }

float Tensor::item() const {
  if (size() != 1) throw ContractError("Tensor::item on tensor of shape " + shape_string(shape()));
  return impl_->data[0];
}

bool Tensor::requires_grad() const { return impl_ && impl_->requires_grad; }

void Tensor::set_requires_grad(bool value) { impl_->requires_grad = value; }

bool Tensor::tracked() const { return impl_ && (impl_->requires_grad || impl_->op_tracked); }

bool Tensor::has_grad() const { return impl_ && !impl_->grad.empty(); }

std::span<float> Tensor::grad() { return impl_->grad; }

std::span<const float> Tensor::grad() const { return impl_->grad; }

void Tensor::zero_grad() { impl_->grad.assign(impl_->data.size(), 0.0f); }

void Tensor::clear_grad() {
  impl_->grad.clear();
  impl_->grad.shrink_to_fit();
}

Tensor Tensor::detach() const {
  auto impl = std::make_shared<Impl>();
  impl->shape = impl_->shape;
  impl->data = impl_->data;
  return Tensor(std::move(impl));
}

Tensor Tensor::clone() const {
  Tensor t = detach();
  t.impl_->requires_grad = impl_->requires_grad;
  return t;
}

void Tape::record(std::string name, std::vector<Tensor> inputs, Tensor output, BackwardFn backward) {
  entries_.push_back({std::move(name), std::move(inputs), std::move(output), std::move(backward)});
}

std::vector<std::string> Tape::op_names() const {
  std::vector<std::string> names;
  names.reserve(entries_.size());
  for (const auto& e : entries_) names.push_back(e.name);
  return names;
}

void Tape::backward(const Tensor& loss) {
  require_defined(loss, "backward");
  if (loss.size() != 1) {
    throw ContractError("backward: loss must be scalar, got shape " + shape_string(loss.shape()));
  }
  if (!loss.tracked()) throw ContractError("backward: loss is not on the tape");
  Tensor seed = loss;
  if (!seed.has_grad()) seed.zero_grad();
  seed.grad()[0] += 1.0f;

  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
    if (!it->output.has_grad()) continue;  // not an ancestor of the loss
    for (auto& in : it->inputs) {
      if (in.tracked() && !in.has_grad()) in.zero_grad();
    }
    it->backward();
    for (const auto& in : it->inputs) {
      if (in.tracked()) check_finite(in.grad(), it->name + " backward");
    }
  }
  entries_.clear();
}

namespace ops {

Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul");
  require_matrix(b, "matmul");
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  if (b.rows() != k) {
    throw DimensionError("matmul: inner dimensions disagree for " + shape_string(a.shape()) + " and " +
                         shape_string(b.shape()));
  }
  std::vector<float> out(m * n);
  as_matrix(std::span<float>(out), m, n).noalias() = as_matrix(a.data(), m, k) * as_matrix(b.data(), k, n);
  const bool tr = a.tracked() || b.tracked();
  Tensor y = finish("matmul", {m, n}, std::move(out), tr);
  if (tr) {
    tape.record("matmul", {a, b}, y, [a = Tensor(a), b = Tensor(b), y, m, k, n]() mutable {
      const auto gy = as_matrix(std::as_const(y).grad(), m, n);
      if (a.tracked()) as_matrix(a.grad(), m, k).noalias() += gy * as_matrix(std::as_const(b).data(), k, n).transpose();
      if (b.tracked()) as_matrix(b.grad(), k, n).noalias() += as_matrix(std::as_const(a).data(), m, k).transpose() * gy;
    });
  }
  return y;
}

Tensor add_bias(Tape& tape, const Tensor& x, const Tensor& bias) {
  require_matrix(x, "add_bias");
  require_defined(bias, "add_bias");
  const std::size_t r = x.rows(), c = x.cols();
  if (bias.size() != c) {
    throw DimensionError("add_bias: bias " + shape_string(bias.shape()) + " does not match " +
                         shape_string(x.shape()));
  }
  std::vector<float> out(x.data().begin(), x.data().end());
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] += bias[j];
  const bool tr = x.tracked() || bias.tracked();
  Tensor y = finish("add_bias", x.shape(), std::move(out), tr);
  if (tr) {
    tape.record("add_bias", {x, bias}, y, [x = Tensor(x), bias = Tensor(bias), y, r, c]() mutable {
      auto gy = std::as_const(y).grad();
      if (x.tracked()) {
        auto gx = x.grad();
        for (std::size_t i = 0; i < r * c; ++i) gx[i] += gy[i];
      }
      if (bias.tracked()) {
        auto gb = bias.grad();
        for (std::size_t i = 0; i < r; ++i)
          for (std::size_t j = 0; j < c; ++j) gb[j] += gy[i * c + j];
      }
    });
  }
  return y;
}

Tensor concat_cols(Tape& tape, const Tensor& a, const Tensor& b) {
  require_matrix(a, "concat_cols");
  require_matrix(b, "concat_cols");
  if (a.rows() != b.rows()) {
    throw DimensionError("concat_cols: row counts differ for " + shape_string(a.shape()) + " and " +
                         shape_string(b.shape()));
  }
  const std::size_t r = a.rows(), ca = a.cols(), cb = b.cols(), c = ca + cb;
  std::vector<float> out(r * c);
  for (std::size_t i = 0; i < r; ++i) {
    std::copy_n(a.data().begin() + i * ca, ca, out.begin() + i * c);
    std::copy_n(b.data().begin() + i * cb, cb, out.begin() + i * c + ca);
  }
  const bool tr = a.tracked() || b.tracked();
  Tensor y = finish("concat_cols", {r, c}, std::move(out), tr);
  if (tr) {
    tape.record("concat_cols", {a, b}, y, [a = Tensor(a), b = Tensor(b), y, r, ca, cb, c]() mutable {
      auto gy = std::as_const(y).grad();
      for (std::size_t i = 0; i < r; ++i) {
        if (a.tracked())
          for (std::size_t j = 0; j < ca; ++j) a.grad()[i * ca + j] += gy[i * c + j];
        if (b.tracked())
          for (std::size_t j = 0; j < cb; ++j) b.grad()[i * cb + j] += gy[i * c + ca + j];
      }
    });
  }
  return y;
}

namespace {

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  require_defined(a, op);
  require_defined(b, op);
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shapes differ, " + shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
  }
}

}  // namespace

Tensor add(Tape& tape, const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  std::vector<float> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b[i];
  const bool tr = a.tracked() || b.tracked();
  Tensor y = finish("add", a.shape(), std::move(out), tr);
  if (tr) {
    tape.record("add", {a, b}, y, [a = Tensor(a), b = Tensor(b), y]() mutable {
      auto gy = std::as_const(y).grad();
      for (std::size_t i = 0; i < gy.size(); ++i) {
        if (a.tracked()) a.grad()[i] += gy[i];
        if (b.tracked()) b.grad()[i] += gy[i];
      }
    });
  }
  return y;
}

Tensor sub(Tape& tape, const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  std::vector<float> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] - b[i];
  const bool tr = a.tracked() || b.tracked();
  Tensor y = finish("sub", a.shape(), std::move(out), tr);
  if (tr) {
    tape.record("sub", {a, b}, y, [a = Tensor(a), b = Tensor(b), y]() mutable {
      auto gy = std::as_const(y).grad();
      for (std::size_t i = 0; i < gy.size(); ++i) {
        if (a.tracked()) a.grad()[i] += gy[i];
        if (b.tracked()) b.grad()[i] -= gy[i];
      }
    });
  }
  return y;
}

Tensor mul(Tape& tape, const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  std::vector<float> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * b[i];
  const bool tr = a.tracked() || b.tracked();
  Tensor y = finish("mul", a.shape(), std::move(out), tr);
  if (tr) {
    tape.record("mul", {a, b}, y, [a = Tensor(a), b = Tensor(b), y]() mutable {
      auto gy = std::as_const(y).grad();
      for (std::size_t i = 0; i < gy.size(); ++i) {
        const float ai = std::as_const(a)[i], bi = std::as_const(b)[i];
        if (a.tracked()) a.grad()[i] += gy[i] * bi;
        if (b.tracked()) b.grad()[i] += gy[i] * ai;
      }
    });
  }
  return y;
}

Tensor scale(Tape& tape, const Tensor& x, float factor) {
  require_defined(x, "scale");
  std::vector<float> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * factor;
  const bool tr = x.tracked();
  Tensor y = finish("scale", x.shape(), std::move(out), tr);
  if (tr) {
    tape.record("scale", {x}, y, [x = Tensor(x), y, factor]() mutable {
      auto gy = std::as_const(y).grad();
      auto gx = x.grad();
      for (std::size_t i = 0; i < gy.size(); ++i) gx[i] += gy[i] * factor;
    });
  }
  return y;
}

Tensor sum(Tape& tape, const Tensor& x) {
  require_defined(x, "sum");
  double acc = 0.0;
  for (float v : x.data()) acc += v;
  const bool tr = x.tracked();
  Tensor y = finish("sum", {1}, {static_cast<float>(acc)}, tr);
  if (tr) {
    tape.record("sum", {x}, y, [x = Tensor(x), y]() mutable {
      const float g = std::as_const(y).grad()[0];
      for (auto& v : x.grad()) v += g;
    });
  }
  return y;
}

Tensor mean(Tape& tape, const Tensor& x) {
  require_defined(x, "mean");
  if (x.size() == 0) throw DimensionError("mean: empty tensor");
  return scale(tape, sum(tape, x), 1.0f / static_cast<float>(x.size()));
}

Tensor leaky_relu(Tape& tape, const Tensor& x, float slope) {
  require_defined(x, "leaky_relu");
  if (!(slope > 0.0f && slope < 1.0f)) {
    throw ParameterError("leaky_relu: slope must lie in (0,1), got " + std::to_string(slope));
  }
  std::vector<float> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] >= 0.0f ? x[i] : slope * x[i];
  const bool tr = x.tracked();
  Tensor y = finish("leaky_relu", x.shape(), std::move(out), tr);
  if (tr) {
    tape.record("leaky_relu", {x}, y, [x = Tensor(x), y, slope]() mutable {
      auto gy = std::as_const(y).grad();
      auto gx = x.grad();
      for (std::size_t i = 0; i < gy.size(); ++i) gx[i] += std::as_const(x)[i] >= 0.0f ? gy[i] : slope * gy[i];
    });
  }
  return y;
}

Tensor dropout(Tape& tape, const Tensor& x, float p, bool training, Rng& rng) {
  require_defined(x, "dropout");
  if (!(p >= 0.0f && p < 1.0f)) {
    throw ParameterError("dropout: p must lie in [0,1), got " + std::to_string(p));
  }
  if (!training || p == 0.0f) return x;
  const float keep_scale = 1.0f / (1.0f - p);
  std::vector<float> mask(x.size());
  std::vector<float> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    mask[i] = rng.uniform() < p ? 0.0f : keep_scale;
    out[i] = x[i] * mask[i];
  }
  const bool tr = x.tracked();
  Tensor y = finish("dropout", x.shape(), std::move(out), tr);
  if (tr) {
    tape.record("dropout", {x}, y, [x = Tensor(x), y, mask = std::move(mask)]() mutable {
      auto gy = std::as_const(y).grad();
      auto gx = x.grad();
      for (std::size_t i = 0; i < gy.size(); ++i) gx[i] += gy[i] * mask[i];
    });
  }
  return y;
}

Tensor batchnorm(Tape& tape, const Tensor& x, const Tensor& gamma, const Tensor& beta, float eps,
                 bool training) {
  require_matrix(x, "batchnorm");
  require_defined(gamma, "batchnorm");
  require_defined(beta, "batchnorm");
  const std::size_t b = x.rows(), f = x.cols();
  if (gamma.size() != f || beta.size() != f) {
    throw DimensionError("batchnorm: gamma/beta " + shape_string(gamma.shape()) + "/" +
                         shape_string(beta.shape()) + " do not match " + shape_string(x.shape()));
  }
  if (training && b < 2) throw DimensionError("batchnorm: batch size must be >= 2 in training, got " + std::to_string(b));
  if (!(eps > 0.0f)) throw ParameterError("batchnorm: eps must be positive");

  // Kept in double: the backward rule subtracts nearly equal terms.
  std::vector<double> xhat(b * f);
  std::vector<double> inv_std(f);
  std::vector<float> out(b * f);
  for (std::size_t j = 0; j < f; ++j) {
    double mu = 0.0;
    for (std::size_t i = 0; i < b; ++i) mu += x.at(i, j);
    mu /= static_cast<double>(b);
    double var = 0.0;
    for (std::size_t i = 0; i < b; ++i) {
      const double d = x.at(i, j) - mu;
      var += d * d;
    }
    var /= static_cast<double>(b);
    inv_std[j] = 1.0 / std::sqrt(var + eps);
    for (std::size_t i = 0; i < b; ++i) {
      xhat[i * f + j] = (x.at(i, j) - mu) * inv_std[j];
      out[i * f + j] = static_cast<float>(gamma[j] * xhat[i * f + j] + beta[j]);
    }
  }
  const bool tr = x.tracked() || gamma.tracked() || beta.tracked();
  Tensor y = finish("batchnorm", x.shape(), std::move(out), tr);
  if (tr) {
    tape.record("batchnorm", {x, gamma, beta}, y,
                [x = Tensor(x), gamma = Tensor(gamma), beta = Tensor(beta), y, b, f, xhat = std::move(xhat), inv_std = std::move(inv_std)]() mutable {
                  auto gy = std::as_const(y).grad();
                  for (std::size_t j = 0; j < f; ++j) {
                    double sum_gy = 0.0, sum_gy_xhat = 0.0;
                    for (std::size_t i = 0; i < b; ++i) {
                      sum_gy += gy[i * f + j];
                      sum_gy_xhat += gy[i * f + j] * xhat[i * f + j];
                    }
                    if (gamma.tracked()) gamma.grad()[j] += static_cast<float>(sum_gy_xhat);
                    if (beta.tracked()) beta.grad()[j] += static_cast<float>(sum_gy);
                    if (x.tracked()) {
                      const double g = std::as_const(gamma)[j];
                      const double scale = g * inv_std[j] / static_cast<double>(b);
                      for (std::size_t i = 0; i < b; ++i) {
                        const double d = static_cast<double>(b) * gy[i * f + j] - sum_gy - xhat[i * f + j] * sum_gy_xhat;
                        x.grad()[i * f + j] += static_cast<float>(scale * d);
                      }
                    }
                  }
                });
  }
  return y;
}

Tensor softmax_cross_entropy(Tape& tape, const Tensor& logits, std::span<const std::uint32_t> labels) {
  require_matrix(logits, "softmax_cross_entropy");
  const std::size_t b = logits.rows(), k = logits.cols();
  if (b == 0) throw DimensionError("softmax_cross_entropy: empty batch");
  if (labels.size() != b) {
    throw DimensionError("softmax_cross_entropy: " + std::to_string(labels.size()) + " labels for logits " +
                         shape_string(logits.shape()));
  }
  for (auto l : labels) {
    if (l >= k) {
      throw LabelError("softmax_cross_entropy: label " + std::to_string(l) + " out of range for " +
                       std::to_string(k) + " classes");
    }
  }
  std::vector<float> probs = softmax_rows(logits);
  double loss = 0.0;
  for (std::size_t i = 0; i < b; ++i) {
    const auto row = logits.data().subspan(i * k, k);
    const float mx = *std::max_element(row.begin(), row.end());
    double z = 0.0;
    for (float v : row) z += std::exp(static_cast<double>(v - mx));
    loss += std::log(z) - static_cast<double>(row[labels[i]] - mx);
  }
  loss /= static_cast<double>(b);
  const bool tr = logits.tracked();
  Tensor y = finish("softmax_cross_entropy", {1}, {static_cast<float>(loss)}, tr);
  if (tr) {
    std::vector<std::uint32_t> lab(labels.begin(), labels.end());
    tape.record("softmax_cross_entropy", {logits}, y,
                [logits = Tensor(logits), y, b, k, probs = std::move(probs), lab = std::move(lab)]() mutable {
                  const float g = std::as_const(y).grad()[0] / static_cast<float>(b);
                  auto gl = logits.grad();
                  for (std::size_t i = 0; i < b; ++i)
                    for (std::size_t j = 0; j < k; ++j)
                      gl[i * k + j] += g * (probs[i * k + j] - (j == lab[i] ? 1.0f : 0.0f));
                });
  }
  return y;
}

}  // namespace ops

std::vector<float> softmax_rows(const Tensor& logits) {
  const std::size_t b = logits.rows(), k = logits.cols();
  std::vector<float> probs(b * k);
  for (std::size_t i = 0; i < b; ++i) {
    const auto row = logits.data().subspan(i * k, k);
    const float mx = *std::max_element(row.begin(), row.end());
    double z = 0.0;
    for (float v : row) z += std::exp(static_cast<double>(v - mx));
    for (std::size_t j = 0; j < k; ++j) probs[i * k + j] = static_cast<float>(std::exp(static_cast<double>(row[j] - mx)) / z);
  }
  return probs;
}

Tensor gaussian_sample(Rng& rng, std::size_t n, std::size_t dim, float std) {
  if (!(std > 0.0f)) throw ParameterError("gaussian_sample: std must be positive, got " + std::to_string(std));
  std::vector<float> values(n * dim);
  for (auto& v : values) v = static_cast<float>(rng.normal() * std);
  return Tensor::from({n, dim}, std::move(values));
}

}  // namespace zsml
