#include "zsml/nets.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "zsml/error.hpp"

namespace zsml {

void NetConfig::validate() const {
  if (input_dim < 1 || output_dim < 1) throw ParameterError("NetConfig: input and output dims must be >= 1");
  for (auto h : hidden_dims) {
    if (h < 1) throw ParameterError("NetConfig: hidden dims must be >= 1");
  }
  if (!(dropout_p >= 0.0f && dropout_p < 1.0f)) throw ParameterError("NetConfig: dropout_p must lie in [0,1)");
  if (!(leaky_slope > 0.0f && leaky_slope < 1.0f)) throw ParameterError("NetConfig: leaky_slope must lie in (0,1)");
}

std::vector<std::size_t> NetConfig::widths() const {
  std::vector<std::size_t> w{input_dim};
  w.insert(w.end(), hidden_dims.begin(), hidden_dims.end());
  w.push_back(output_dim);
  return w;
}

Architecture Architecture::paper() {
  return Architecture{{2048, 2048}, {1024, 1024, 512}, {512, 512}, 0.2f, 0.5f, true};
}

Architecture Architecture::compact() { return Architecture{{64, 64}, {64, 64, 32}, {32, 32}, 0.2f, 0.0f, true}; }

Architecture Architecture::by_name(const std::string& name) {
  if (name == "paper") return paper();
  if (name == "compact") return compact();
  throw ParameterError("unknown architecture '" + name + "' (expected paper or compact)");
}

namespace presets {

NetConfig generator(const Architecture& arch, std::size_t noise_dim, std::size_t attr_dim, std::size_t feat_dim) {
  NetConfig c;
  c.input_dim = noise_dim + attr_dim;
  c.hidden_dims = arch.generator_hidden;
  c.output_dim = feat_dim;
  c.leaky_slope = arch.leaky_slope;
  c.dropout_p = arch.dropout_p;
  c.use_batchnorm = arch.generator_batchnorm;
  return c;
}

NetConfig critic(const Architecture& arch, std::size_t feat_dim, std::size_t attr_dim) {
  NetConfig c;
  c.input_dim = feat_dim + attr_dim;
  c.hidden_dims = arch.critic_hidden;
  c.output_dim = 1;
  c.leaky_slope = arch.leaky_slope;
  c.dropout_p = arch.dropout_p;
  return c;
}

NetConfig classifier(const Architecture& arch, std::size_t feat_dim, std::size_t n_classes) {
  NetConfig c;
  c.input_dim = feat_dim;
  c.hidden_dims = arch.classifier_hidden;
  c.output_dim = n_classes;
  c.leaky_slope = arch.leaky_slope;
  c.dropout_p = arch.dropout_p;
  return c;
}

NetConfig eval_softmax(std::size_t feat_dim, std::size_t n_classes) {
  NetConfig c;
  c.input_dim = feat_dim;
  c.output_dim = n_classes;
  c.dropout_p = 0.5f;
  c.input_dropout = true;
  return c;
}

}  // namespace presets

std::vector<Tensor> NetParams::tensors() const {
  std::vector<Tensor> out;
  for (std::size_t l = 0; l < weights.size(); ++l) {
    out.push_back(weights[l]);
    out.push_back(biases[l]);
    if (l < gammas.size()) {
      out.push_back(gammas[l]);
      out.push_back(betas[l]);
    }
  }
  return out;
}

std::vector<std::pair<std::string, Tensor>> NetParams::named_tensors(const std::string& prefix) const {
  std::vector<std::pair<std::string, Tensor>> out;
  for (std::size_t l = 0; l < weights.size(); ++l) {
    const std::string base = prefix + "." + std::to_string(l) + ".";
    out.emplace_back(base + "weight", weights[l]);
    out.emplace_back(base + "bias", biases[l]);
    if (l < gammas.size()) {
      out.emplace_back(base + "bn_gamma", gammas[l]);
      out.emplace_back(base + "bn_beta", betas[l]);
    }
  }
  return out;
}

std::size_t NetParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto& t : tensors()) n += t.size();
  return n;
}

NetParams NetParams::copy(bool requires_grad) const {
  auto dup = [requires_grad](const std::vector<Tensor>& src) {
    std::vector<Tensor> out;
    out.reserve(src.size());
    for (const auto& t : src) {
      Tensor c = t.detach();
      c.set_requires_grad(requires_grad);
      out.push_back(std::move(c));
    }
    return out;
  };
  return NetParams{config, dup(weights), dup(biases), dup(gammas), dup(betas)};
}

void NetParams::zero_grad() {
  for (auto t : tensors()) t.zero_grad();
}

std::vector<float> NetParams::flat_grad() const {
  std::vector<float> out;
  out.reserve(parameter_count());
  for (const auto& t : tensors()) {
    if (t.has_grad()) {
      out.insert(out.end(), t.grad().begin(), t.grad().end());
    } else {
      out.insert(out.end(), t.size(), 0.0f);
    }
  }
  return out;
}

std::vector<float> NetParams::flat_values() const {
  std::vector<float> out;
  out.reserve(parameter_count());
  for (const auto& t : tensors()) out.insert(out.end(), t.data().begin(), t.data().end());
  return out;
}

void NetParams::assign_flat(std::span<const float> values) {
  if (values.size() != parameter_count()) {
    throw DimensionError("NetParams::assign_flat: expected " + std::to_string(parameter_count()) + " values, got " +
                         std::to_string(values.size()));
  }
  check_finite(values, "NetParams::assign_flat");
  std::size_t off = 0;
  for (auto t : tensors()) {
    std::copy_n(values.begin() + off, t.size(), t.data().begin());
    off += t.size();
  }
}

NetParams init_params(const NetConfig& config, Rng& rng, bool requires_grad) {
  config.validate();
  NetParams p;
  p.config = config;
  const auto w = config.widths();
  for (std::size_t l = 0; l + 1 < w.size(); ++l) {
    const std::size_t fan_in = w[l], fan_out = w[l + 1];
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    std::vector<float> values(fan_in * fan_out);
    for (auto& v : values) v = static_cast<float>(rng.uniform(-bound, bound));
    p.weights.push_back(Tensor::from({fan_in, fan_out}, std::move(values), requires_grad));
    p.biases.push_back(Tensor::zeros({fan_out}, requires_grad));
    const bool hidden = l + 2 < w.size();
    if (hidden && config.use_batchnorm) {
      p.gammas.push_back(Tensor::full({fan_out}, 1.0f, requires_grad));
      p.betas.push_back(Tensor::zeros({fan_out}, requires_grad));
    }
  }
  return p;
}

NetParams params_from_named(const NetConfig& config, const std::string& prefix,
                            const std::vector<std::pair<std::string, Tensor>>& named) {
  std::map<std::string, Tensor> lookup(named.begin(), named.end());
  Rng unused(0);
  NetParams p = init_params(config, unused, true);
  for (auto& [name, t] : p.named_tensors(prefix)) {
    auto it = lookup.find(name);
    if (it == lookup.end()) throw FormatError("checkpoint is missing tensor '" + name + "'");
    if (it->second.shape() != t.shape()) {
      throw DimensionError("checkpoint tensor '" + name + "' has shape " + shape_string(it->second.shape()) +
                           ", expected " + shape_string(t.shape()));
    }
    std::copy(it->second.data().begin(), it->second.data().end(), t.data().begin());
  }
  return p;
}

Tensor mlp_forward(Tape& tape, const NetParams& params, const Tensor& x, bool training, Rng& rng) {
  const NetConfig& cfg = params.config;
  if (x.rank() != 2 || x.cols() != cfg.input_dim) {
    throw DimensionError("network expects input [b x " + std::to_string(cfg.input_dim) + "], got " +
                         shape_string(x.shape()));
  }
  Tensor h = x;
  if (cfg.input_dropout) h = ops::dropout(tape, h, cfg.dropout_p, training, rng);
  const std::size_t last = params.weights.size() - 1;
  for (std::size_t l = 0; l < params.weights.size(); ++l) {
    h = ops::add_bias(tape, ops::matmul(tape, h, params.weights[l]), params.biases[l]);
    if (l < last) {
      if (cfg.use_batchnorm) h = ops::batchnorm(tape, h, params.gammas[l], params.betas[l], 1e-5f, training);
      h = ops::leaky_relu(tape, h, cfg.leaky_slope);
      h = ops::dropout(tape, h, cfg.dropout_p, training, rng);
    } else if (cfg.output_activation == OutputActivation::kLeaky) {
      h = ops::leaky_relu(tape, h, cfg.leaky_slope);
    }
  }
  return h;
}

Tensor generator_forward(Tape& tape, const NetParams& g, const Tensor& z, const Tensor& attrs, bool training,
                         Rng& rng) {
  if (z.rows() != attrs.rows()) {
    throw DimensionError("generator: noise " + shape_string(z.shape()) + " and attributes " +
                         shape_string(attrs.shape()) + " have different batch sizes");
  }
  return mlp_forward(tape, g, ops::concat_cols(tape, z, attrs), training, rng);
}

Tensor discriminator_forward(Tape& tape, const NetParams& d, const Tensor& x, const Tensor& attrs, bool training,
                             Rng& rng) {
  if (x.rows() != attrs.rows()) {
    throw DimensionError("critic: features " + shape_string(x.shape()) + " and attributes " +
                         shape_string(attrs.shape()) + " have different batch sizes");
  }
  return mlp_forward(tape, d, ops::concat_cols(tape, x, attrs), training, rng);
}

Tensor classifier_forward(Tape& tape, const NetParams& c, const Tensor& x_hat, bool training, Rng& rng) {
  return mlp_forward(tape, c, x_hat, training, rng);
}

std::vector<float> LinearModel::scores(std::span<const float> features, std::size_t n) const {
  if (features.size() != n * n_features) {
    throw DimensionError("LinearModel: expected " + std::to_string(n_features) + " features per row");
  }
  std::vector<float> out(n * n_classes);
  for (std::size_t i = 0; i < n; ++i) {
    const float* x = features.data() + i * n_features;
    for (std::size_t k = 0; k < n_classes; ++k) {
      const float* w = weights.data() + k * n_features;
      double s = biases[k];
      for (std::size_t j = 0; j < n_features; ++j) s += static_cast<double>(w[j]) * x[j];
      out[i * n_classes + k] = static_cast<float>(s);
    }
  }
  return out;
}

LinearModel train_linear_svm(const Tensor& features, std::span<const std::uint32_t> labels, const SvmOptions& opts,
                             Rng& rng) {
  if (features.rank() != 2) throw DimensionError("train_linear_svm: features must be a matrix");
  const std::size_t n = features.rows(), f = features.cols();
  if (labels.size() != n) throw DimensionError("train_linear_svm: label count does not match feature rows");
  if (!(opts.c_penalty > 0.0f)) throw ParameterError("train_linear_svm: C must be positive");
  if (opts.epochs == 0) throw ParameterError("train_linear_svm: epochs must be >= 1");
  if (n == 0) throw DataError("train_linear_svm: no training examples");
  const std::size_t k = *std::max_element(labels.begin(), labels.end()) + 1;
  std::vector<std::size_t> counts(k, 0);
  for (auto l : labels) ++counts[l];
  if (k < 2) throw DataError("train_linear_svm: need at least 2 classes, all labels are identical");
  for (std::size_t c = 0; c < k; ++c) {
    if (counts[c] == 0) throw DataError("train_linear_svm: class " + std::to_string(c) + " has no examples");
  }
  if (n < k) throw DataError("train_linear_svm: fewer examples than classes");

  std::vector<double> class_weight(k);
  for (std::size_t c = 0; c < k; ++c) {
    class_weight[c] = static_cast<double>(n) / (static_cast<double>(k) * static_cast<double>(counts[c]));
  }

  // The bias is carried as an extra constant-1 feature.
  const std::size_t fa = f + 1;
  const double lambda = 1.0 / (static_cast<double>(opts.c_penalty) * static_cast<double>(n));
  const double radius = 1.0 / std::sqrt(lambda);
  std::vector<double> w(k * fa, 0.0);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::size_t t = 0;
  const auto x = features.data();
  for (std::size_t epoch = 0; epoch < opts.epochs; ++epoch) {
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.index(i)]);
    for (std::size_t idx : order) {
      ++t;
      const double eta = 1.0 / (lambda * static_cast<double>(t));
      const double shrink = 1.0 - eta * lambda;
      const float* xi = x.data() + idx * f;
      const double cw = class_weight[labels[idx]];
      for (std::size_t c = 0; c < k; ++c) {
        double* wc = w.data() + c * fa;
        double margin = wc[f];
        for (std::size_t j = 0; j < f; ++j) margin += wc[j] * xi[j];
        const double y = labels[idx] == c ? 1.0 : -1.0;
        for (std::size_t j = 0; j < fa; ++j) wc[j] *= shrink;
        if (y * margin < 1.0) {
          const double step = eta * cw * y;
          for (std::size_t j = 0; j < f; ++j) wc[j] += step * xi[j];
          wc[f] += step;
        }
        double norm2 = 0.0;
        for (std::size_t j = 0; j < fa; ++j) norm2 += wc[j] * wc[j];
        if (norm2 > radius * radius) {
          const double s = radius / std::sqrt(norm2);
          for (std::size_t j = 0; j < fa; ++j) wc[j] *= s;
        }
      }
    }
  }

  LinearModel model;
  model.n_classes = k;
  model.n_features = f;
  model.weights.resize(k * f);
  model.biases.resize(k);
  for (std::size_t c = 0; c < k; ++c) {
    for (std::size_t j = 0; j < f; ++j) model.weights[c * f + j] = static_cast<float>(w[c * fa + j]);
    model.biases[c] = static_cast<float>(w[c * fa + f]);
  }
  check_finite(model.weights, "train_linear_svm");
  return model;
}

}  // namespace zsml
