#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "zsml/rng.hpp"
#include "zsml/tensor.hpp"

namespace zsml {

enum class OutputActivation { kLinear, kLeaky };

/// Fully connected network description.
///
/// Each hidden layer is Linear -> [BatchNorm] -> LeakyReLU -> Dropout; the
/// output layer is Linear, optionally followed by LeakyReLU.
struct NetConfig {
  std::size_t input_dim = 1;
  std::vector<std::size_t> hidden_dims;
  std::size_t output_dim = 1;
  float leaky_slope = 0.2f;
  float dropout_p = 0.5f;
  bool use_batchnorm = false;
  /// Applies dropout to the network input (the single-layer eval classifier).
  bool input_dropout = false;
  OutputActivation output_activation = OutputActivation::kLinear;

  void validate() const;
  std::size_t layer_count() const { return hidden_dims.size() + 1; }
  /// input_dim, hidden..., output_dim
  std::vector<std::size_t> widths() const;

  bool operator==(const NetConfig&) const = default;
};

/// Hidden widths and regularization shared by the three adversarial networks.
struct Architecture {
  std::vector<std::size_t> generator_hidden;
  std::vector<std::size_t> critic_hidden;
  std::vector<std::size_t> classifier_hidden;
  float leaky_slope = 0.2f;
  float dropout_p = 0.5f;
  bool generator_batchnorm = true;

  /// Widths of the published networks: G 2048/2048, D 1024/1024/512, C 512/512.
  static Architecture paper();
  /// Narrow variant used for the desk-scale synthetic benchmark.
  static Architecture compact();

  static Architecture by_name(const std::string& name);
};

namespace presets {

NetConfig generator(const Architecture& arch, std::size_t noise_dim, std::size_t attr_dim, std::size_t feat_dim);
NetConfig critic(const Architecture& arch, std::size_t feat_dim, std::size_t attr_dim);
NetConfig classifier(const Architecture& arch, std::size_t feat_dim, std::size_t n_classes);
/// Single linear layer with input dropout 0.5.
NetConfig eval_softmax(std::size_t feat_dim, std::size_t n_classes);

}  // namespace presets

/// Parameters of one network. weights[l] is [in x out] so a layer computes x W + b.
struct NetParams {
  NetConfig config;
  std::vector<Tensor> weights;
  std::vector<Tensor> biases;
  std::vector<Tensor> gammas;
  std::vector<Tensor> betas;

  /// Every parameter tensor in a fixed order (layer-major: W, b, gamma, beta).
  std::vector<Tensor> tensors() const;
  std::vector<std::pair<std::string, Tensor>> named_tensors(const std::string& prefix) const;
  std::size_t parameter_count() const;

  /// Deep copy; every tensor gets the given requires_grad flag.
  NetParams copy(bool requires_grad) const;
  void zero_grad();
  /// Concatenated gradients in tensors() order (zeros where absent).
  std::vector<float> flat_grad() const;
  std::vector<float> flat_values() const;
  void assign_flat(std::span<const float> values);
};

NetParams init_params(const NetConfig& config, Rng& rng, bool requires_grad = true);

/// Rebuilds parameters for `config` from named tensors (checkpoint order).
NetParams params_from_named(const NetConfig& config, const std::string& prefix,
                            const std::vector<std::pair<std::string, Tensor>>& named);

Tensor mlp_forward(Tape& tape, const NetParams& params, const Tensor& x, bool training, Rng& rng);

Tensor generator_forward(Tape& tape, const NetParams& g, const Tensor& z, const Tensor& attrs, bool training,
                         Rng& rng);
/// Unbounded critic score, b x 1.
Tensor discriminator_forward(Tape& tape, const NetParams& d, const Tensor& x, const Tensor& attrs, bool training,
                             Rng& rng);
Tensor classifier_forward(Tape& tape, const NetParams& c, const Tensor& x_hat, bool training, Rng& rng);

/// One-vs-rest linear max-margin model; scores = x W^T + b.
struct LinearModel {
  std::size_t n_classes = 0;
  std::size_t n_features = 0;
  std::vector<float> weights;  // n_classes x n_features
  std::vector<float> biases;   // n_classes

  std::vector<float> scores(std::span<const float> features, std::size_t n) const;
};

struct SvmOptions {
  float c_penalty = 1.0f;
  std::size_t epochs = 200;
};

/// Class-balanced one-vs-rest L2-regularized hinge loss, solved by
/// stochastic sub-gradient descent with step 1/(lambda t), lambda = 1/(C n).
/// labels must be dense indices in [0, K).
LinearModel train_linear_svm(const Tensor& features, std::span<const std::uint32_t> labels, const SvmOptions& opts,
                             Rng& rng);

}  // namespace zsml
