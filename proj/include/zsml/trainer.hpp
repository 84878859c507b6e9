#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "zsml/checkpoint.hpp"
#include "zsml/dataset.hpp"
#include "zsml/episodic.hpp"
#include "zsml/nets.hpp"
#include "zsml/rng.hpp"
#include "zsml/tensor.hpp"

namespace zsml {

/// Step sizes and schedule of the adversarial meta-learner.
///
/// Inner rates (eta) drive per-task adaptation; meta rates (beta) move the
/// base parameters. Critic updates ascend, generator+classifier updates descend.
struct HyperParams {
  float inner_lr_d = 1e-3f;
  float inner_lr_gc = 1e-3f;
  float meta_lr_d = 1e-5f;
  float meta_lr_gc = 1e-5f;
  std::size_t inner_steps = 1;
  std::size_t n_critic = 1;
  float clip_c = 0.01f;
  std::size_t iterations = 0;
  float train_noise_std = 0.5f;
  /// Sum train gradients over the whole task batch before one shared adaptation.
  bool shared_inner = false;

  void validate() const;

  /// eta1 = eta2 = 1e-3, beta1 = beta2 = 1e-5, with the given iteration budget.
  static HyperParams paper(std::size_t iterations);
  /// Rates and budget tuned for the desk-scale synthetic benchmark.
  static HyperParams synthetic();
};

/// Iteration budgets of the named dataset presets.
std::size_t preset_iterations(const std::string& preset);

struct ModelDims {
  std::size_t feat_dim = 0;
  std::size_t attr_dim = 0;
  std::size_t noise_dim = 0;
  std::size_t n_classes = 0;

  /// noise_dim defaults to attr_dim when 0 is passed.
  static ModelDims for_dataset(const DatasetBundle& dataset, std::size_t noise_dim = 0);
};

/// Critic parameters and the joint generator+classifier parameters.
struct ModelState {
  ModelDims dims;
  Architecture arch;
  NetParams d;
  NetParams g;
  NetParams c;
  std::uint64_t iteration = 0;
  Rng rng;

  NamedTensors named_tensors() const;
  std::uint64_t checksum() const;
  float max_abs_critic_weight() const;
};

ModelState init_model(const ModelDims& dims, const Architecture& arch, std::uint64_t seed);

/// Rebuilds a model from a ZSMP checkpoint. Layer widths and dims come from
/// the tensors; slope and dropout come from `arch`.
ModelState model_from_checkpoint(const NamedTensors& tensors, const Architecture& arch);

/// Real features, their class attributes and global class labels.
struct TaskBatch {
  Tensor features;
  Tensor attrs;
  std::vector<std::uint32_t> labels;

  std::size_t size() const { return labels.size(); }
};

TaskBatch make_batch(const DatasetBundle& dataset, std::span<const std::uint32_t> classes,
                     const std::vector<std::vector<std::uint64_t>>& items);

/// mean D(x, a) - mean D(G(z, a), a). Generator outputs are detached, so only
/// the critic receives gradient. The trainer maximizes this.
Tensor critic_loss(Tape& tape, const NetParams& d, const NetParams& g, const Tensor& x, const Tensor& attrs,
                   const Tensor& noise, bool training, Rng& rng);

/// -mean D(G(z, a), a) + CE(C(G(z, a)), labels). The critic is frozen. The
/// trainer minimizes this.
Tensor gen_cls_loss(Tape& tape, const NetParams& d, const NetParams& g, const NetParams& c, const Tensor& attrs,
                    std::span<const std::uint32_t> labels, const Tensor& noise, bool training, Rng& rng);

struct CriticGradient {
  float loss = 0.0f;
  std::vector<float> d;
};

struct GenClsGradient {
  float loss = 0.0f;
  std::vector<float> g;
  std::vector<float> c;
};

/// Gradient of critic_loss w.r.t. the critic at the given parameters, with
/// fresh noise of the configured std drawn from rng.
CriticGradient critic_gradient(const NetParams& d, const NetParams& g, const TaskBatch& batch, float noise_std,
                               Rng& rng);
GenClsGradient gen_cls_gradient(const NetParams& d, const NetParams& g, const NetParams& c, const TaskBatch& batch,
                                float noise_std, Rng& rng);

/// Clamps every critic parameter to [-clip, clip].
void clip_weights(NetParams& params, float clip);

struct AdaptedParams {
  NetParams d;
  NetParams g;
  NetParams c;
};

/// Inner-loop adaptation on the given train batches (one batch for per-task
/// adaptation, the whole task batch for shared adaptation). Gradients are
/// summed over batches. The inputs are not modified.
AdaptedParams adapt(const NetParams& d, const NetParams& g, const NetParams& c, std::span<const TaskBatch> batches,
                    const HyperParams& hp, Rng& rng);

/// Per-task adaptation of `state` on the episode's train split.
AdaptedParams inner_adapt(const ModelState& state, const DatasetBundle& dataset, const TaskEpisode& episode,
                          const HyperParams& hp, Rng& rng);

struct MetaStepResult {
  /// Mean over episodes of the validation objectives at adapted parameters.
  float critic_loss_val = 0.0f;
  float gencls_loss_val = 0.0f;
};

/// First-order meta step over a task batch. Validation gradients taken at the
/// adapted parameters are summed in episode order and applied to the base
/// parameters; the critic is clipped afterwards. `threads` bounds the number
/// of episodes adapted concurrently and does not affect the result.
MetaStepResult meta_update(ModelState& state, const DatasetBundle& dataset, std::span<const TaskEpisode> episodes,
                           const HyperParams& hp, std::size_t threads = 1);

struct IterationMetrics {
  std::uint64_t iter = 0;
  float critic_loss_val = 0.0f;
  float gencls_loss_val = 0.0f;
  double wall_ms = 0.0;
};

/// {"iter":..,"critic_loss_val":..,"gencls_loss_val":..,"wall_ms":..}
std::string to_json_line(const IterationMetrics& m);

struct TrainOptions {
  std::uint64_t seed = 0;
  std::size_t noise_dim = 0;
  std::size_t threads = 1;
  Architecture arch = Architecture::compact();
  std::function<void(const IterationMetrics&, const ModelState&)> on_iteration;
  /// Called every checkpoint_every iterations (0 disables).
  std::size_t checkpoint_every = 0;
  std::function<void(const ModelState&)> on_checkpoint;
};

/// Runs hp.iterations rounds of task-batch sampling and meta_update. A
/// non-finite value aborts with a NumericalError naming the iteration.
ModelState train_loop(const DatasetBundle& dataset, const EpisodeSpec& spec, const HyperParams& hp,
                      const TrainOptions& options);

}  // namespace zsml
