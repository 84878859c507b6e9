#include "zsml/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <map>
#include <thread>

#include "zsml/error.hpp"

namespace zsml {

void HyperParams::validate() const {
  if (!(inner_lr_d >= 0.0f && inner_lr_gc >= 0.0f)) throw ParameterError("hyperparams: inner learning rates must be >= 0");
  if (!(meta_lr_d > 0.0f && meta_lr_gc > 0.0f)) throw ParameterError("hyperparams: meta learning rates must be > 0");
  if (inner_steps < 1) throw ParameterError("hyperparams: inner_steps must be >= 1");
  if (n_critic < 1) throw ParameterError("hyperparams: n_critic must be >= 1");
  if (!(clip_c > 0.0f)) throw ParameterError("hyperparams: clip_c must be > 0");
  if (!(train_noise_std > 0.0f)) throw ParameterError("hyperparams: train_noise_std must be > 0");
}

HyperParams HyperParams::paper(std::size_t iterations) {
  HyperParams hp;
  hp.iterations = iterations;
  return hp;
}

HyperParams HyperParams::synthetic() {
  HyperParams hp;
  hp.inner_lr_d = 1e-2f;
  hp.inner_lr_gc = 1e-2f;
  hp.meta_lr_d = 1e-2f;
  hp.meta_lr_gc = 1e-2f;
  hp.n_critic = 5;
  hp.clip_c = 0.1f;  // with n_critic = 1 a 0.1 clip lets the critic run away
  hp.iterations = 2000;
  return hp;
}

std::size_t preset_iterations(const std::string& preset) {
  if (preset == "awa-like") return 20000;
  if (preset == "cub-like") return 5000;
  if (preset == "apy-like") return 500;
  if (preset == "synthetic") return 2000;
  throw ParameterError("unknown preset '" + preset + "' (expected awa-like, cub-like, apy-like or synthetic)");
}

ModelDims ModelDims::for_dataset(const DatasetBundle& dataset, std::size_t noise_dim) {
  return ModelDims{dataset.feat_dim, dataset.attr_dim, noise_dim == 0 ? dataset.attr_dim : noise_dim,
                   dataset.n_classes()};
}

NamedTensors ModelState::named_tensors() const {
  NamedTensors out = d.named_tensors("d");
  for (auto& nt : g.named_tensors("g")) out.push_back(std::move(nt));
  for (auto& nt : c.named_tensors("c")) out.push_back(std::move(nt));
  return out;
}

std::uint64_t ModelState::checksum() const { return zsml::checksum(named_tensors()); }

float ModelState::max_abs_critic_weight() const {
  float m = 0.0f;
  for (const auto& t : d.tensors())
    for (float v : t.data()) m = std::max(m, std::abs(v));
  return m;
}

ModelState init_model(const ModelDims& dims, const Architecture& arch, std::uint64_t seed) {
  Rng master(seed);
  ModelState s;
  s.dims = dims;
  s.arch = arch;
  s.d = init_params(presets::critic(arch, dims.feat_dim, dims.attr_dim), master);
  s.g = init_params(presets::generator(arch, dims.noise_dim, dims.attr_dim, dims.feat_dim), master);
  s.c = init_params(presets::classifier(arch, dims.feat_dim, dims.n_classes), master);
  s.rng = master.split();
  return s;
}

namespace {

/// Hidden widths and batchnorm presence of the network stored under `prefix`.
struct StoredNet {
  std::vector<std::size_t> widths;
  bool batchnorm = false;
};

StoredNet inspect(const std::map<std::string, Tensor>& lookup, const std::string& prefix) {
  StoredNet net;
  for (std::size_t l = 0;; ++l) {
    auto it = lookup.find(prefix + "." + std::to_string(l) + ".weight");
    if (it == lookup.end()) break;
    if (it->second.rank() != 2) throw FormatError("checkpoint: '" + it->first + "' is not a matrix");
    if (l == 0) net.widths.push_back(it->second.rows());
    if (it->second.rows() != net.widths.back()) throw DimensionError("checkpoint: '" + it->first + "' breaks the layer chain");
    net.widths.push_back(it->second.cols());
    if (lookup.count(prefix + "." + std::to_string(l) + ".bn_gamma")) net.batchnorm = true;
  }
  if (net.widths.size() < 2) throw FormatError("checkpoint: no layers stored for network '" + prefix + "'");
  return net;
}

std::vector<std::size_t> hidden_of(const StoredNet& n) { return {n.widths.begin() + 1, n.widths.end() - 1}; }

}  // namespace

ModelState model_from_checkpoint(const NamedTensors& tensors, const Architecture& arch) {
  const std::map<std::string, Tensor> lookup(tensors.begin(), tensors.end());
  const StoredNet d = inspect(lookup, "d"), g = inspect(lookup, "g"), c = inspect(lookup, "c");
  ModelDims dims;
  dims.feat_dim = c.widths.front();
  dims.n_classes = c.widths.back();
  if (d.widths.front() <= dims.feat_dim || d.widths.back() != 1) throw DimensionError("checkpoint: critic shape is inconsistent");
  dims.attr_dim = d.widths.front() - dims.feat_dim;
  if (g.widths.front() <= dims.attr_dim || g.widths.back() != dims.feat_dim) {
    throw DimensionError("checkpoint: generator shape is inconsistent");
  }
  dims.noise_dim = g.widths.front() - dims.attr_dim;

  Architecture a = arch;
  a.generator_hidden = hidden_of(g);
  a.critic_hidden = hidden_of(d);
  a.classifier_hidden = hidden_of(c);
  a.generator_batchnorm = g.batchnorm;

  ModelState s;
  s.dims = dims;
  s.arch = a;
  s.d = params_from_named(presets::critic(a, dims.feat_dim, dims.attr_dim), "d", tensors);
  s.g = params_from_named(presets::generator(a, dims.noise_dim, dims.attr_dim, dims.feat_dim), "g", tensors);
  s.c = params_from_named(presets::classifier(a, dims.feat_dim, dims.n_classes), "c", tensors);
  return s;
}

TaskBatch make_batch(const DatasetBundle& dataset, std::span<const std::uint32_t> classes,
                     const std::vector<std::vector<std::uint64_t>>& items) {
  if (classes.size() != items.size()) throw DimensionError("make_batch: one item list per class is required");
  std::size_t n = 0;
  for (const auto& it : items) n += it.size();
  if (n == 0) throw DimensionError("make_batch: empty batch");
  const std::size_t f = dataset.feat_dim, d = dataset.attr_dim;
  std::vector<float> x, a;
  x.reserve(n * f);
  a.reserve(n * d);
  TaskBatch b;
  b.labels.reserve(n);
  for (std::size_t k = 0; k < classes.size(); ++k) {
    for (auto idx : items[k]) {
      if (dataset.labels[idx] != classes[k]) throw LabelError("make_batch: sample label does not match its class");
      x.insert(x.end(), dataset.feature_row(idx), dataset.feature_row(idx) + f);
      a.insert(a.end(), dataset.attribute_row(classes[k]), dataset.attribute_row(classes[k]) + d);
      b.labels.push_back(classes[k]);
    }
  }
  b.features = Tensor::from({n, f}, std::move(x));
  b.attrs = Tensor::from({n, d}, std::move(a));
  return b;
}

Tensor critic_loss(Tape& tape, const NetParams& d, const NetParams& g, const Tensor& x, const Tensor& attrs,
                   const Tensor& noise, bool training, Rng& rng) {
  if (x.rows() == 0) throw DimensionError("critic_loss: empty batch");
  if (noise.rows() != x.rows()) {
    throw DimensionError("critic_loss: noise batch " + std::to_string(noise.rows()) + " differs from real batch " +
                         std::to_string(x.rows()));
  }
  Tensor fake;
  {
    Tape scratch;
    fake = generator_forward(scratch, g, noise, attrs, training, rng).detach();
  }
  Tensor real_score = ops::mean(tape, discriminator_forward(tape, d, x, attrs, training, rng));
  Tensor fake_score = ops::mean(tape, discriminator_forward(tape, d, fake, attrs, training, rng));
  return ops::sub(tape, real_score, fake_score);
}

Tensor gen_cls_loss(Tape& tape, const NetParams& d, const NetParams& g, const NetParams& c, const Tensor& attrs,
                    std::span<const std::uint32_t> labels, const Tensor& noise, bool training, Rng& rng) {
  if (attrs.rows() != labels.size() || noise.rows() != labels.size()) {
    throw DimensionError("gen_cls_loss: attributes, labels and noise must share a batch size");
  }
  const NetParams frozen_d = d.copy(false);
  Tensor fake = generator_forward(tape, g, noise, attrs, training, rng);
  Tensor adv = ops::scale(tape, ops::mean(tape, discriminator_forward(tape, frozen_d, fake, attrs, training, rng)), -1.0f);
  Tensor cls = ops::softmax_cross_entropy(tape, classifier_forward(tape, c, fake, training, rng), labels);
  return ops::add(tape, adv, cls);
}

CriticGradient critic_gradient(const NetParams& d, const NetParams& g, const TaskBatch& batch, float noise_std,
                               Rng& rng) {
  NetParams dd = d.copy(true);
  const Tensor noise = gaussian_sample(rng, batch.size(), g.config.input_dim - batch.attrs.cols(), noise_std);
  Tape tape;
  Tensor loss = critic_loss(tape, dd, g, batch.features, batch.attrs, noise, true, rng);
  tape.backward(loss);
  return {loss.item(), dd.flat_grad()};
}

GenClsGradient gen_cls_gradient(const NetParams& d, const NetParams& g, const NetParams& c, const TaskBatch& batch,
                                float noise_std, Rng& rng) {
  NetParams gg = g.copy(true);
  NetParams cc = c.copy(true);
  const Tensor noise = gaussian_sample(rng, batch.size(), gg.config.input_dim - batch.attrs.cols(), noise_std);
  Tape tape;
  Tensor loss = gen_cls_loss(tape, d, gg, cc, batch.attrs, batch.labels, noise, true, rng);
  tape.backward(loss);
  return {loss.item(), gg.flat_grad(), cc.flat_grad()};
}

void clip_weights(NetParams& params, float clip) {
  for (auto t : params.tensors())
    for (auto& v : t.data()) v = std::clamp(v, -clip, clip);
}

namespace {

void axpy(std::vector<float>& acc, std::span<const float> v) {
  if (acc.empty()) acc.assign(v.size(), 0.0f);
  for (std::size_t i = 0; i < v.size(); ++i) acc[i] += v[i];
}

void step(NetParams& params, std::span<const float> grad, float lr) {
  std::vector<float> values = params.flat_values();
  for (std::size_t i = 0; i < values.size(); ++i) values[i] += lr * grad[i];
  params.assign_flat(values);
}

}  // namespace

AdaptedParams adapt(const NetParams& d, const NetParams& g, const NetParams& c, std::span<const TaskBatch> batches,
                    const HyperParams& hp, Rng& rng) {
  if (batches.empty()) throw DimensionError("adapt: no train batches");
  AdaptedParams out{d.copy(false), g.copy(false), c.copy(false)};
  for (std::size_t s = 0; s < hp.inner_steps; ++s) {
    for (std::size_t k = 0; k < hp.n_critic; ++k) {
      std::vector<float> grad;
      for (const auto& b : batches) axpy(grad, critic_gradient(out.d, out.g, b, hp.train_noise_std, rng).d);
      step(out.d, grad, hp.inner_lr_d);
      clip_weights(out.d, hp.clip_c);
    }
    std::vector<float> grad_g, grad_c;
    for (const auto& b : batches) {
      auto gr = gen_cls_gradient(out.d, out.g, out.c, b, hp.train_noise_std, rng);
      axpy(grad_g, gr.g);
      axpy(grad_c, gr.c);
    }
    step(out.g, grad_g, -hp.inner_lr_gc);
    step(out.c, grad_c, -hp.inner_lr_gc);
  }
  return out;
}

AdaptedParams inner_adapt(const ModelState& state, const DatasetBundle& dataset, const TaskEpisode& episode,
                          const HyperParams& hp, Rng& rng) {
  const TaskBatch train = make_batch(dataset, episode.train_classes, episode.train_items);
  return adapt(state.d, state.g, state.c, std::span(&train, 1), hp, rng);
}

namespace {

struct EpisodeResult {
  CriticGradient critic;
  GenClsGradient gencls;
  std::exception_ptr error;
};

template <typename Fn>
void run_indexed(std::size_t n, std::size_t threads, Fn&& fn) {
  threads = std::clamp<std::size_t>(threads, 1, std::max<std::size_t>(n, 1));
  if (threads == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::jthread> pool;
  for (std::size_t t = 0; t < threads; ++t) {
    pool.emplace_back([&, t] {
      for (std::size_t i = t; i < n; i += threads) fn(i);
    });
  }
}

}  // namespace

MetaStepResult meta_update(ModelState& state, const DatasetBundle& dataset, std::span<const TaskEpisode> episodes,
                           const HyperParams& hp, std::size_t threads) {
  hp.validate();
  if (episodes.empty()) throw DimensionError("meta_update: empty task batch");
  const std::size_t n = episodes.size();

  std::vector<TaskBatch> train(n), val(n);
  for (std::size_t i = 0; i < n; ++i) {
    train[i] = make_batch(dataset, episodes[i].train_classes, episodes[i].train_items);
    val[i] = make_batch(dataset, episodes[i].val_classes, episodes[i].val_items);
  }

  std::optional<AdaptedParams> shared;
  if (hp.shared_inner) {
    Rng shared_rng = state.rng.split();
    shared = adapt(state.d, state.g, state.c, train, hp, shared_rng);
  }
  std::vector<Rng> rngs;
  rngs.reserve(n);
  for (std::size_t i = 0; i < n; ++i) rngs.push_back(state.rng.split());

  std::vector<EpisodeResult> results(n);
  run_indexed(n, threads, [&](std::size_t i) {
    try {
      const AdaptedParams adapted =
          shared ? *shared : adapt(state.d, state.g, state.c, std::span(&train[i], 1), hp, rngs[i]);
      results[i].critic = critic_gradient(adapted.d, adapted.g, val[i], hp.train_noise_std, rngs[i]);
      results[i].gencls = gen_cls_gradient(adapted.d, adapted.g, adapted.c, val[i], hp.train_noise_std, rngs[i]);
    } catch (...) {
      results[i].error = std::current_exception();
    }
  });

  std::vector<float> sum_d, sum_g, sum_c;
  MetaStepResult out;
  for (auto& r : results) {
    if (r.error) std::rethrow_exception(r.error);
    axpy(sum_d, r.critic.d);
    axpy(sum_g, r.gencls.g);
    axpy(sum_c, r.gencls.c);
    out.critic_loss_val += r.critic.loss;
    out.gencls_loss_val += r.gencls.loss;
  }
  out.critic_loss_val /= static_cast<float>(n);
  out.gencls_loss_val /= static_cast<float>(n);

  step(state.d, sum_d, hp.meta_lr_d);
  clip_weights(state.d, hp.clip_c);
  step(state.g, sum_g, -hp.meta_lr_gc);
  step(state.c, sum_c, -hp.meta_lr_gc);
  ++state.iteration;
  return out;
}

std::string to_json_line(const IterationMetrics& m) {
  char buf[256];
  std::snprintf(buf, sizeof buf, R"({"iter":%llu,"critic_loss_val":%.9g,"gencls_loss_val":%.9g,"wall_ms":%.3f})",
                static_cast<unsigned long long>(m.iter), static_cast<double>(m.critic_loss_val),
                static_cast<double>(m.gencls_loss_val), m.wall_ms);
  return buf;
}

ModelState train_loop(const DatasetBundle& dataset, const EpisodeSpec& spec, const HyperParams& hp,
                      const TrainOptions& options) {
  hp.validate();
  const EpisodeSampler sampler(dataset, spec);
  ModelState state = init_model(ModelDims::for_dataset(dataset, options.noise_dim), options.arch, options.seed);
  for (std::size_t it = 0; it < hp.iterations; ++it) {
    const auto start = std::chrono::steady_clock::now();
    MetaStepResult r;
    try {
      const auto batch = sampler.sample_batch(state.rng);
      r = meta_update(state, dataset, batch, hp, options.threads);
      if (!std::isfinite(r.critic_loss_val) || !std::isfinite(r.gencls_loss_val)) {
        throw NumericalError("non-finite validation loss");
      }
    } catch (const NumericalError& e) {
      throw NumericalError("iteration " + std::to_string(it) + ": " + e.what());
    }
    const IterationMetrics m{state.iteration, r.critic_loss_val, r.gencls_loss_val,
                             std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count()};
    if (options.on_iteration) options.on_iteration(m, state);
    if (options.checkpoint_every && options.on_checkpoint && state.iteration % options.checkpoint_every == 0) {
      options.on_checkpoint(state);
    }
  }
  return state;
}

}  // namespace zsml
