#include <cmath>
#include <set>

#include "doctest.h"
#include "zsml/downstream.hpp"
#include "zsml/error.hpp"

using namespace zsml;

namespace {

/// k well separated Gaussian blobs with ids 10, 20, ...; k <= f keeps every
/// class linearly separable from the rest.
LabeledFeatures blobs(std::size_t k, std::size_t per, std::size_t f, double sd, std::uint64_t seed) {
  Rng rng(seed);
  LabeledFeatures out;
  out.feat_dim = f;
  for (std::size_t c = 0; c < k; ++c)
    for (std::size_t i = 0; i < per; ++i) {
      for (std::size_t j = 0; j < f; ++j) out.features.push_back(static_cast<float>((j == c % f ? 6.0 * (1 + c / f) : 0.0) + sd * rng.normal()));
      out.labels.push_back(static_cast<std::uint32_t>(10 * (c + 1)));
    }
  return out;
}

double train_accuracy(const EvalClassifier& clf, const LabeledFeatures& d) {
  const auto pred = predict(clf, d.features, d.size());
  std::size_t hit = 0;
  for (std::size_t i = 0; i < d.size(); ++i) hit += pred[i] == d.labels[i];
  return static_cast<double>(hit) / static_cast<double>(d.size());
}

DatasetBundle small_dataset() {
  SyntheticSpec s;
  s.n_classes = 8;
  s.seen_fraction = 0.5f;
  s.samples_per_class = 10;
  s.feat_dim = 4;
  s.attr_dim = 3;
  return gen_synthetic(s);
}

EvalOptions quick(ClassifierKind kind) {
  EvalOptions o;
  o.kind = kind;
  o.per_class_count = 20;
  o.softmax.epochs = 5;
  o.svm.epochs = 5;
  return o;
}

}  // namespace

TEST_CASE("synthesis") {
  const DatasetBundle data = small_dataset();
  const ModelState m = init_model(ModelDims::for_dataset(data), Architecture::compact(), 1);
  SynthesisSpec spec;
  spec.target_classes = data.unseen_classes;
  Rng rng(2);
  const LabeledFeatures out = synthesize(m.g, data.attributes, data.attr_dim, spec, rng);
  CHECK(out.size() == 200 * data.unseen_classes.size());
  CHECK(out.feat_dim == data.feat_dim);
  for (std::size_t k = 0; k < data.unseen_classes.size(); ++k)
    for (std::size_t i = 0; i < 200; ++i) CHECK(out.labels[k * 200 + i] == data.unseen_classes[k]);
  for (float v : out.features) CHECK(std::isfinite(v));

  Rng r1(3), r2(3);
  CHECK(synthesize(m.g, data.attributes, data.attr_dim, spec, r1).features ==
        synthesize(m.g, data.attributes, data.attr_dim, spec, r2).features);

  spec.target_classes = {static_cast<std::uint32_t>(data.n_classes())};
  CHECK_THROWS_AS(synthesize(m.g, data.attributes, data.attr_dim, spec, rng), AttributeError);
  spec.target_classes = data.unseen_classes;
  spec.noise_std = 0.0f;
  CHECK_THROWS_AS(synthesize(m.g, data.attributes, data.attr_dim, spec, rng), ParameterError);
}

TEST_CASE("both classifiers fit separable classes over a sparse label space") {
  const LabeledFeatures d = blobs(4, 250, 4, 0.3, 1);
  for (auto kind : {ClassifierKind::kSoftmax, ClassifierKind::kSvm}) {
    Rng rng(5);
    const EvalClassifier clf = fit_eval_classifier(d, kind, rng);
    CHECK(clf.kind == kind);
    CHECK(clf.classes == std::vector<std::uint32_t>{10, 20, 30, 40});
    CHECK(clf.model.n_classes == 4);
    CHECK(clf.model.n_features == 4);
    CHECK(train_accuracy(clf, d) == 1.0);
  }
}

TEST_CASE("softmax classifier starts near uniform") {
  LabeledFeatures d = blobs(6, 5, 3, 0.1, 2);
  for (auto& v : d.features) v *= 1e-4f;
  SoftmaxOptions none;
  none.epochs = 0;
  Rng rng(1);
  const EvalClassifier clf = fit_eval_classifier(d, ClassifierKind::kSoftmax, rng, none);
  CHECK(softmax_loss(clf, d) == doctest::Approx(std::log(6.0)).epsilon(1e-3));

  LabeledFeatures foreign = d;
  foreign.labels[0] = 999;
  CHECK_THROWS_AS(softmax_loss(clf, foreign), LabelError);
}

TEST_CASE("single-class data is rejected") {
  LabeledFeatures d = blobs(1, 10, 2, 0.1, 3);
  Rng rng(1);
  CHECK_THROWS_AS(fit_eval_classifier(d, ClassifierKind::kSoftmax, rng), DataError);
  CHECK_THROWS_AS(fit_eval_classifier(d, ClassifierKind::kSvm, rng), DataError);
}

TEST_CASE("argmax ties go to the lowest class id") {
  const std::vector<std::uint32_t> classes{3, 7, 9};
  CHECK(argmax_classes(std::vector<float>{1, 1, 1}, classes) == std::vector<std::uint32_t>{3});
  CHECK(argmax_classes(std::vector<float>{0, 2, 2, 5, 1, 0}, classes) == std::vector<std::uint32_t>{7, 3});
  CHECK_THROWS_AS(argmax_classes(std::vector<float>{1, 2}, classes), DimensionError);
}

TEST_CASE("per-class accuracy") {
  const std::vector<std::uint32_t> truth{1, 1, 1, 1, 2, 5, 5};
  const std::vector<std::uint32_t> pred{1, 1, 1, 2, 2, 1, 5};
  const auto acc = per_class_accuracy(truth, pred, std::vector<std::uint32_t>{1, 2, 5});
  CHECK(acc.per_class.at(1) == 0.75);
  CHECK(acc.per_class.at(2) == 1.0);
  CHECK(acc.per_class.at(5) == 0.5);
  CHECK(acc.mean == doctest::Approx((0.75 + 1.0 + 0.5) / 3));

  SUBCASE("duplicating one class's samples leaves the metric unchanged") {
    std::vector<std::uint32_t> t2 = truth, p2 = pred;
    for (std::size_t i = 0; i < truth.size(); ++i)
      if (truth[i] == 1)
        for (int rep = 0; rep < 5; ++rep) t2.push_back(truth[i]), p2.push_back(pred[i]);
    const auto again = per_class_accuracy(t2, p2, std::vector<std::uint32_t>{1, 2, 5});
    CHECK(again.per_class == acc.per_class);
    CHECK(again.mean == doctest::Approx(acc.mean));
  }
  SUBCASE("samples outside the protocol's classes are ignored") {
    const auto only = per_class_accuracy(truth, pred, std::vector<std::uint32_t>{5});
    CHECK(only.per_class.size() == 1);
    CHECK(only.mean == 0.5);
  }
}

TEST_CASE("harmonic mean") {
  CHECK(std::round(harmonic_mean(57.4, 71.1) * 10) / 10 == 63.5);
  CHECK(harmonic_mean(0.0, 0.9) == 0.0);
  CHECK(harmonic_mean(0.0, 0.0) == 0.0);
  CHECK(harmonic_mean(0.4, 0.4) == doctest::Approx(0.4));
  CHECK(harmonic_mean(0.2, 0.6) == doctest::Approx(0.3));
  CHECK_THROWS_AS(harmonic_mean(-0.1, 0.5), ParameterError);

  Rng rng(1);
  for (int i = 0; i < 1000; ++i) {
    const double u = rng.uniform(), s = rng.uniform();
    const double h = harmonic_mean(u, s);
    CHECK(h >= std::min(u, s) - 1e-12);
    CHECK(h <= std::max(u, s) + 1e-12);
    CHECK(h == doctest::Approx(harmonic_mean(s, u)));
  }
}

TEST_CASE("evaluation protocols respect their label spaces") {
  const DatasetBundle data = small_dataset();
  const ModelState m = init_model(ModelDims::for_dataset(data), Architecture::compact(), 4);
  const std::set<std::uint32_t> unseen(data.unseen_classes.begin(), data.unseen_classes.end());
  for (auto kind : {ClassifierKind::kSoftmax, ClassifierKind::kSvm}) {
    Rng rng(6);
    const EvalReport z = eval_zsl(m, data, quick(kind), rng);
    CHECK(z.protocol == Protocol::kZsl);
    CHECK(z.classifier == kind);
    CHECK(z.per_class.size() == unseen.size());
    for (const auto& [c, a] : z.per_class) CHECK(unseen.count(c) == 1);
    CHECK(z.seen == 0.0);
    CHECK(z.harmonic == 0.0);

    const EvalReport g = eval_gzsl(m, data, quick(kind), rng);
    CHECK(g.per_class.size() == data.n_classes());
    CHECK(g.harmonic == doctest::Approx(harmonic_mean(g.unseen, g.seen)));
    CHECK(g.unseen >= 0.0);
    CHECK(g.unseen <= 1.0);
  }

  SUBCASE("a classifier fit on unseen classes only predicts unseen classes") {
    SynthesisSpec spec;
    spec.per_class_count = 20;
    spec.target_classes = data.unseen_classes;
    Rng rng(7);
    const EvalClassifier clf = fit_eval_classifier(synthesize(m.g, data.attributes, data.attr_dim, spec, rng),
                                                   ClassifierKind::kSoftmax, rng);
    for (auto p : predict(clf, data.features, data.size())) CHECK(unseen.count(p) == 1);
  }
  SUBCASE("missing test splits are protocol errors") {
    DatasetBundle empty = data;
    empty.unseen_test_indices.clear();
    Rng rng(1);
    CHECK_THROWS_AS(eval_zsl(m, empty, quick(ClassifierKind::kSoftmax), rng), ProtocolError);
    DatasetBundle no_seen = data;
    no_seen.seen_test_indices.clear();
    CHECK_THROWS_AS(eval_gzsl(m, no_seen, quick(ClassifierKind::kSoftmax), rng), ProtocolError);
  }
  SUBCASE("model and data must agree on dimensions") {
    const ModelState other = init_model(ModelDims{5, 3, 3, 8}, Architecture::compact(), 1);
    Rng rng(1);
    CHECK_THROWS_AS(eval_zsl(other, data, quick(ClassifierKind::kSoftmax), rng), DimensionError);
  }
}

TEST_CASE("report JSON") {
  EvalReport r;
  r.protocol = Protocol::kGzsl;
  r.classifier = ClassifierKind::kSvm;
  r.unseen = 0.5;
  r.seen = 2.0 / 3.0;
  r.harmonic = harmonic_mean(r.unseen, r.seen);
  r.per_class = {{2, 1.0}, {11, 0.25}};
  CHECK(to_json(r) ==
        R"({"protocol":"gzsl","classifier":"svm","U":0.500000,"S":0.666667,"H":0.571429,"per_class":{"2":1.000000,"11":0.250000}})");
  CHECK(to_string(classifier_kind_from_string("softmax")) == "softmax");
  CHECK(protocol_from_string("zsl") == Protocol::kZsl);
  CHECK_THROWS_AS(protocol_from_string("fsl"), ParameterError);
}
