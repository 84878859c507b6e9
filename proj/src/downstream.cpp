#include "zsml/downstream.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <set>

#include "zsml/error.hpp"

namespace zsml {

std::string to_string(ClassifierKind kind) { return kind == ClassifierKind::kSoftmax ? "softmax" : "svm"; }

std::string to_string(Protocol protocol) { return protocol == Protocol::kZsl ? "zsl" : "gzsl"; }

ClassifierKind classifier_kind_from_string(const std::string& name) {
  if (name == "softmax") return ClassifierKind::kSoftmax;
  if (name == "svm") return ClassifierKind::kSvm;
  throw ParameterError("unknown classifier '" + name + "' (expected softmax or svm)");
}

Protocol protocol_from_string(const std::string& name) {
  if (name == "zsl") return Protocol::kZsl;
  if (name == "gzsl") return Protocol::kGzsl;
  throw ParameterError("unknown protocol '" + name + "' (expected zsl or gzsl)");
}

void SynthesisSpec::validate() const {
  if (per_class_count < 1) throw ParameterError("synthesis: per_class_count must be >= 1");
  if (!(noise_std > 0.0f)) throw ParameterError("synthesis: noise_std must be > 0");
  if (target_classes.empty()) throw ParameterError("synthesis: no target classes");
}

LabeledFeatures synthesize(const NetParams& g, std::span<const float> attributes, std::size_t attr_dim,
                           const SynthesisSpec& spec, Rng& rng) {
  spec.validate();
  if (attr_dim == 0 || attributes.size() % attr_dim != 0) throw DimensionError("synthesize: malformed attribute matrix");
  const std::size_t n_rows = attributes.size() / attr_dim;
  if (g.config.input_dim <= attr_dim) throw DimensionError("synthesize: generator input is narrower than the attributes");
  const std::size_t noise_dim = g.config.input_dim - attr_dim;
  const std::size_t n = spec.target_classes.size() * spec.per_class_count;

  std::vector<float> a;
  a.reserve(n * attr_dim);
  LabeledFeatures out;
  out.labels.reserve(n);
  for (auto c : spec.target_classes) {
    if (c >= n_rows) throw AttributeError("synthesize: class " + std::to_string(c) + " has no attribute row");
    for (std::size_t i = 0; i < spec.per_class_count; ++i) {
      a.insert(a.end(), attributes.begin() + static_cast<std::ptrdiff_t>(c * attr_dim),
               attributes.begin() + static_cast<std::ptrdiff_t>((c + 1) * attr_dim));
      out.labels.push_back(c);
    }
  }
  const Tensor z = gaussian_sample(rng, n, noise_dim, spec.noise_std);
  Tape tape;
  const NetParams frozen = g.copy(false);
  const Tensor x = generator_forward(tape, frozen, z, Tensor::from({n, attr_dim}, std::move(a)), false, rng);
  out.feat_dim = x.cols();
  out.features.assign(x.data().begin(), x.data().end());
  return out;
}

namespace {

/// Dense label indices into the sorted label space.
std::vector<std::uint32_t> dense_labels(const LabeledFeatures& data, std::vector<std::uint32_t>& classes) {
  std::set<std::uint32_t> ids(data.labels.begin(), data.labels.end());
  classes.assign(ids.begin(), ids.end());
  std::vector<std::uint32_t> dense(data.size());
  for (std::size_t i = 0; i < dense.size(); ++i) {
    dense[i] = static_cast<std::uint32_t>(std::lower_bound(classes.begin(), classes.end(), data.labels[i]) - classes.begin());
  }
  return dense;
}

/// Minibatch Adam; plain SGD at the fixed 1e-3 rate underfits within 100 epochs.
struct Adam {
  explicit Adam(float learning_rate) : lr(learning_rate) {}

  float lr;
  float beta1 = 0.9f, beta2 = 0.999f, eps = 1e-8f;
  std::vector<float> m, v;
  std::size_t t = 0;

  void step(std::span<float> params, std::span<const float> grad) {
    if (m.empty()) m.assign(params.size(), 0.0f), v.assign(params.size(), 0.0f);
    ++t;
    const float c1 = 1.0f - std::pow(beta1, static_cast<float>(t));
    const float c2 = 1.0f - std::pow(beta2, static_cast<float>(t));
    for (std::size_t i = 0; i < params.size(); ++i) {
      m[i] = beta1 * m[i] + (1.0f - beta1) * grad[i];
      v[i] = beta2 * v[i] + (1.0f - beta2) * grad[i] * grad[i];
      params[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps);
    }
  }
};

LinearModel fit_softmax(const LabeledFeatures& data, std::span<const std::uint32_t> dense, std::size_t k,
                        const SoftmaxOptions& opts, Rng& rng) {
  if (opts.batch_size == 0) throw ParameterError("softmax: batch_size must be >= 1");
  if (!(opts.learning_rate > 0.0f)) throw ParameterError("softmax: learning_rate must be > 0");
  const std::size_t n = data.size(), f = data.feat_dim;
  NetParams p = init_params(presets::eval_softmax(f, k), rng);
  Adam adam_w(opts.learning_rate), adam_b(opts.learning_rate);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (std::size_t epoch = 0; epoch < opts.epochs; ++epoch) {
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.index(i)]);
    for (std::size_t start = 0; start < n; start += opts.batch_size) {
      const std::size_t b = std::min(opts.batch_size, n - start);
      std::vector<float> x;
      x.reserve(b * f);
      std::vector<std::uint32_t> y(b);
      for (std::size_t i = 0; i < b; ++i) {
        const std::size_t idx = order[start + i];
        x.insert(x.end(), data.features.begin() + static_cast<std::ptrdiff_t>(idx * f),
                 data.features.begin() + static_cast<std::ptrdiff_t>((idx + 1) * f));
        y[i] = dense[idx];
      }
      p.zero_grad();
      Tape tape;
      Tensor logits = mlp_forward(tape, p, Tensor::from({b, f}, std::move(x)), true, rng);
      Tensor loss = ops::softmax_cross_entropy(tape, logits, y);
      tape.backward(loss);
      adam_w.step(p.weights[0].data(), p.weights[0].grad());
      adam_b.step(p.biases[0].data(), p.biases[0].grad());
    }
  }
  LinearModel model;
  model.n_classes = k;
  model.n_features = f;
  model.weights.resize(k * f);
  for (std::size_t j = 0; j < f; ++j)
    for (std::size_t c = 0; c < k; ++c) model.weights[c * f + j] = p.weights[0].at(j, c);
  model.biases.assign(p.biases[0].data().begin(), p.biases[0].data().end());
  check_finite(model.weights, "softmax classifier");
  return model;
}

}  // namespace

EvalClassifier fit_eval_classifier(const LabeledFeatures& data, ClassifierKind kind, Rng& rng,
                                   const SoftmaxOptions& softmax, const SvmOptions& svm) {
  if (data.feat_dim == 0 || data.features.size() != data.size() * data.feat_dim) {
    throw DimensionError("fit_eval_classifier: malformed feature set");
  }
  EvalClassifier clf;
  clf.kind = kind;
  const auto dense = dense_labels(data, clf.classes);
  if (clf.classes.size() < 2) {
    throw DataError("fit_eval_classifier: need at least 2 classes, got " + std::to_string(clf.classes.size()));
  }
  if (kind == ClassifierKind::kSoftmax) {
    clf.model = fit_softmax(data, dense, clf.classes.size(), softmax, rng);
  } else {
    const Tensor x = Tensor::from({data.size(), data.feat_dim}, data.features);
    clf.model = train_linear_svm(x, dense, svm, rng);
  }
  return clf;
}

double softmax_loss(const EvalClassifier& clf, const LabeledFeatures& data) {
  const auto scores = clf.model.scores(data.features, data.size());
  const std::size_t k = clf.model.n_classes;
  double loss = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto it = std::lower_bound(clf.classes.begin(), clf.classes.end(), data.labels[i]);
    if (it == clf.classes.end() || *it != data.labels[i]) {
      throw LabelError("softmax_loss: label " + std::to_string(data.labels[i]) + " is outside the label space");
    }
    const float* row = scores.data() + i * k;
    const float mx = *std::max_element(row, row + k);
    double z = 0.0;
    for (std::size_t c = 0; c < k; ++c) z += std::exp(static_cast<double>(row[c] - mx));
    loss += std::log(z) - (row[it - clf.classes.begin()] - mx);
  }
  return loss / static_cast<double>(data.size());
}

std::vector<std::uint32_t> argmax_classes(std::span<const float> scores, std::span<const std::uint32_t> classes) {
  const std::size_t k = classes.size();
  if (k == 0 || scores.size() % k != 0) throw DimensionError("argmax_classes: score matrix does not match label space");
  const std::size_t n = scores.size() / k;
  std::vector<std::uint32_t> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < k; ++c) {
      const float s = scores[i * k + c], b = scores[i * k + best];
      if (s > b || (s == b && classes[c] < classes[best])) best = c;
    }
    out[i] = classes[best];
  }
  return out;
}

std::vector<std::uint32_t> predict(const EvalClassifier& clf, std::span<const float> features, std::size_t n) {
  if (features.size() != n * clf.model.n_features) {
    throw DimensionError("predict: expected " + std::to_string(clf.model.n_features) + " features per row");
  }
  return argmax_classes(clf.model.scores(features, n), clf.classes);
}

PerClassAccuracy per_class_accuracy(std::span<const std::uint32_t> truth, std::span<const std::uint32_t> predicted,
                                    std::span<const std::uint32_t> classes) {
  if (truth.size() != predicted.size()) throw DimensionError("per_class_accuracy: length mismatch");
  std::map<std::uint32_t, std::pair<std::size_t, std::size_t>> tally;  // correct, total
  for (auto c : classes) tally[c] = {0, 0};
  for (std::size_t i = 0; i < truth.size(); ++i) {
    auto it = tally.find(truth[i]);
    if (it == tally.end()) continue;
    ++it->second.second;
    if (predicted[i] == truth[i]) ++it->second.first;
  }
  PerClassAccuracy out;
  std::size_t counted = 0;
  for (const auto& [c, ct] : tally) {
    if (ct.second == 0) continue;
    const double acc = static_cast<double>(ct.first) / static_cast<double>(ct.second);
    out.per_class[c] = acc;
    out.mean += acc;
    ++counted;
  }
  if (counted) out.mean /= static_cast<double>(counted);
  return out;
}

double harmonic_mean(double u, double s) {
  if (u < 0.0 || s < 0.0 || !std::isfinite(u) || !std::isfinite(s)) {
    throw ParameterError("harmonic_mean: inputs must be finite and non-negative");
  }
  return u + s > 0.0 ? 2.0 * u * s / (u + s) : 0.0;
}

std::string to_json(const EvalReport& r) {
  auto fmt = [](double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return std::string(buf);
  };
  std::string out = "{\"protocol\":\"" + to_string(r.protocol) + "\",\"classifier\":\"" + to_string(r.classifier) +
                    "\",\"U\":" + fmt(r.unseen) + ",\"S\":" + fmt(r.seen) + ",\"H\":" + fmt(r.harmonic) +
                    ",\"per_class\":{";
  bool first = true;
  for (const auto& [c, acc] : r.per_class) {
    if (!first) out += ',';
    first = false;
    out += "\"" + std::to_string(c) + "\":" + fmt(acc);
  }
  out += "}}";
  return out;
}

namespace {

std::pair<std::vector<float>, std::vector<std::uint32_t>> gather(const DatasetBundle& dataset,
                                                                 const std::vector<std::uint64_t>& indices) {
  std::vector<float> x;
  x.reserve(indices.size() * dataset.feat_dim);
  std::vector<std::uint32_t> y;
  y.reserve(indices.size());
  for (auto idx : indices) {
    x.insert(x.end(), dataset.feature_row(idx), dataset.feature_row(idx) + dataset.feat_dim);
    y.push_back(dataset.labels[idx]);
  }
  return {std::move(x), std::move(y)};
}

void check_compatible(const ModelState& model, const DatasetBundle& dataset) {
  if (model.dims.feat_dim != dataset.feat_dim || model.dims.attr_dim != dataset.attr_dim) {
    throw DimensionError("model dims (feat " + std::to_string(model.dims.feat_dim) + ", attr " +
                         std::to_string(model.dims.attr_dim) + ") do not match dataset (feat " +
                         std::to_string(dataset.feat_dim) + ", attr " + std::to_string(dataset.attr_dim) + ")");
  }
}

LabeledFeatures synth_for(const ModelState& model, const DatasetBundle& dataset, const EvalOptions& opts,
                          std::vector<std::uint32_t> classes, Rng& rng) {
  SynthesisSpec spec{opts.per_class_count, opts.noise_std, std::move(classes)};
  return synthesize(model.g, dataset.attributes, dataset.attr_dim, spec, rng);
}

}  // namespace

EvalReport eval_zsl(const ModelState& model, const DatasetBundle& dataset, const EvalOptions& opts, Rng& rng) {
  check_compatible(model, dataset);
  if (dataset.unseen_test_indices.empty()) throw ProtocolError("zsl: dataset has no unseen test samples");
  const auto synth = synth_for(model, dataset, opts, dataset.unseen_classes, rng);
  const auto clf = fit_eval_classifier(synth, opts.kind, rng, opts.softmax, opts.svm);
  const auto [x, y] = gather(dataset, dataset.unseen_test_indices);
  const auto pred = predict(clf, x, y.size());
  const auto acc = per_class_accuracy(y, pred, dataset.unseen_classes);
  EvalReport r;
  r.protocol = Protocol::kZsl;
  r.classifier = opts.kind;
  r.per_class = acc.per_class;
  r.unseen = acc.mean;
  return r;
}

EvalReport eval_gzsl(const ModelState& model, const DatasetBundle& dataset, const EvalOptions& opts, Rng& rng) {
  check_compatible(model, dataset);
  if (dataset.unseen_test_indices.empty()) throw ProtocolError("gzsl: dataset has no unseen test samples");
  if (dataset.seen_test_indices.empty()) throw ProtocolError("gzsl: dataset has no seen test samples");
  LabeledFeatures train;
  if (opts.real_seen) {
    train = synth_for(model, dataset, opts, dataset.unseen_classes, rng);
    auto [x, y] = gather(dataset, dataset.train_indices);
    train.features.insert(train.features.end(), x.begin(), x.end());
    train.labels.insert(train.labels.end(), y.begin(), y.end());
  } else {
    std::vector<std::uint32_t> all = dataset.seen_classes;
    all.insert(all.end(), dataset.unseen_classes.begin(), dataset.unseen_classes.end());
    std::sort(all.begin(), all.end());
    train = synth_for(model, dataset, opts, all, rng);
  }
  const auto clf = fit_eval_classifier(train, opts.kind, rng, opts.softmax, opts.svm);

  const auto [xs, ys] = gather(dataset, dataset.seen_test_indices);
  const auto [xu, yu] = gather(dataset, dataset.unseen_test_indices);
  const auto seen = per_class_accuracy(ys, predict(clf, xs, ys.size()), dataset.seen_classes);
  const auto unseen = per_class_accuracy(yu, predict(clf, xu, yu.size()), dataset.unseen_classes);

  EvalReport r;
  r.protocol = Protocol::kGzsl;
  r.classifier = opts.kind;
  r.per_class = seen.per_class;
  r.per_class.insert(unseen.per_class.begin(), unseen.per_class.end());
  r.unseen = unseen.mean;
  r.seen = seen.mean;
  r.harmonic = harmonic_mean(r.unseen, r.seen);
  return r;
}

}  // namespace zsml
