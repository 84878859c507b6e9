#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "zsml/dataset.hpp"
#include "zsml/nets.hpp"
#include "zsml/rng.hpp"
#include "zsml/trainer.hpp"

namespace zsml {

enum class ClassifierKind { kSoftmax, kSvm };
enum class Protocol { kZsl, kGzsl };

std::string to_string(ClassifierKind kind);
std::string to_string(Protocol protocol);
ClassifierKind classifier_kind_from_string(const std::string& name);
Protocol protocol_from_string(const std::string& name);

struct SynthesisSpec {
  /// 200 for AWA/aPY-like data, 100 for CUB/SUN-like data.
  std::size_t per_class_count = 200;
  float noise_std = 0.25f;
  std::vector<std::uint32_t> target_classes;

  void validate() const;
};

struct LabeledFeatures {
  std::size_t feat_dim = 0;
  std::vector<float> features;  // n x feat_dim
  std::vector<std::uint32_t> labels;

  std::size_t size() const { return labels.size(); }
};

/// Generates per_class_count samples for every target class in one generator
/// batch, class-major. Dropout is off; batchnorm uses the generation batch.
LabeledFeatures synthesize(const NetParams& g, std::span<const float> attributes, std::size_t attr_dim,
                           const SynthesisSpec& spec, Rng& rng);

struct SoftmaxOptions {
  std::size_t epochs = 100;
  float learning_rate = 1e-3f;
  std::size_t batch_size = 64;
};

/// Linear scorer over an explicit label space.
struct EvalClassifier {
  ClassifierKind kind = ClassifierKind::kSoftmax;
  std::vector<std::uint32_t> classes;  // ascending class ids; column k scores classes[k]
  LinearModel model;
};

/// Fits a classifier whose label space is the set of labels in `data`.
EvalClassifier fit_eval_classifier(const LabeledFeatures& data, ClassifierKind kind, Rng& rng,
                                   const SoftmaxOptions& softmax = {}, const SvmOptions& svm = {});

/// Cross-entropy of the softmax classifier on `data` (diagnostics and tests).
double softmax_loss(const EvalClassifier& clf, const LabeledFeatures& data);

/// Argmax over scores; ties go to the lowest class id.
std::vector<std::uint32_t> argmax_classes(std::span<const float> scores, std::span<const std::uint32_t> classes);

std::vector<std::uint32_t> predict(const EvalClassifier& clf, std::span<const float> features, std::size_t n);

struct PerClassAccuracy {
  std::map<std::uint32_t, double> per_class;
  double mean = 0.0;
};

/// Mean over `classes` of each class's top-1 rate on the samples labeled with it.
PerClassAccuracy per_class_accuracy(std::span<const std::uint32_t> truth, std::span<const std::uint32_t> predicted,
                                    std::span<const std::uint32_t> classes);

/// 2us/(u+s), or 0 when u+s = 0.
double harmonic_mean(double u, double s);

struct EvalReport {
  Protocol protocol = Protocol::kZsl;
  ClassifierKind classifier = ClassifierKind::kSoftmax;
  std::map<std::uint32_t, double> per_class;
  double unseen = 0.0;  // U
  double seen = 0.0;    // S (GZSL only)
  double harmonic = 0.0;  // H (GZSL only)
};

/// {"protocol","classifier","U","S","H","per_class":{id:acc}}, 6 decimals.
std::string to_json(const EvalReport& report);

struct EvalOptions {
  ClassifierKind kind = ClassifierKind::kSoftmax;
  std::size_t per_class_count = 200;
  float noise_std = 0.25f;
  /// GZSL: train on real seen-class train features instead of generated ones.
  bool real_seen = false;
  SoftmaxOptions softmax;
  SvmOptions svm;
};

/// Synthesizes unseen classes, fits over them, scores real unseen test data.
EvalReport eval_zsl(const ModelState& model, const DatasetBundle& dataset, const EvalOptions& opts, Rng& rng);

/// Synthesizes seen and unseen classes, fits over both, scores real seen and
/// unseen test data.
EvalReport eval_gzsl(const ModelState& model, const DatasetBundle& dataset, const EvalOptions& opts, Rng& rng);

}  // namespace zsml
