#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "zsml/checkpoint.hpp"
#include "zsml/downstream.hpp"
#include "zsml/error.hpp"
#include "zsml/gradcheck.hpp"
#include "zsml/trainer.hpp"

namespace py = pybind11;
using namespace zsml;

namespace {

template <typename T>
py::array_t<T> matrix(const std::vector<T>& v, std::size_t cols) {
  const std::size_t rows = cols ? v.size() / cols : 0;
  py::array_t<T> out({rows, cols});
  std::copy(v.begin(), v.end(), out.mutable_data());
  return out;
}

py::dict summary_dict(const DatasetBundle& b) {
  const BundleSummary s = summarize(b);
  py::dict d;
  d["n_samples"] = s.n_samples;
  d["n_classes"] = s.n_classes;
  d["n_seen"] = s.n_seen;
  d["n_unseen"] = s.n_unseen;
  d["feat_dim"] = s.feat_dim;
  d["attr_dim"] = s.attr_dim;
  d["n_train"] = s.n_train;
  d["n_seen_test"] = s.n_seen_test;
  d["n_unseen_test"] = s.n_unseen_test;
  return d;
}

py::dict report_dict(const EvalReport& r) {
  py::dict d;
  d["protocol"] = to_string(r.protocol);
  d["classifier"] = to_string(r.classifier);
  d["U"] = r.unseen;
  d["S"] = r.seen;
  d["H"] = r.harmonic;
  d["per_class"] = r.per_class;
  d["json"] = to_json(r);
  return d;
}

EvalOptions eval_options(const std::string& classifier, std::size_t per_class_count, float noise_std, bool real_seen) {
  EvalOptions o;
  o.kind = classifier_kind_from_string(classifier);
  o.per_class_count = per_class_count;
  o.noise_std = noise_std;
  o.real_seen = real_seen;
  return o;
}

}  // namespace

PYBIND11_MODULE(_zsml, m) {
  m.doc() = "Meta-learned adversarial feature synthesis for zero-shot classification";

  // Library errors surface as ValueError (parameters, data, formats) or
  // ArithmeticError (numerical failures).
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const NumericalError& e) {
      PyErr_SetString(PyExc_ArithmeticError, e.what());
    } catch (const Error& e) {
      PyErr_SetString(PyExc_ValueError, e.what());
    }
  });

  py::class_<SyntheticSpec>(m, "SyntheticSpec")
      .def(py::init<>())
      .def_readwrite("n_classes", &SyntheticSpec::n_classes)
      .def_readwrite("attr_dim", &SyntheticSpec::attr_dim)
      .def_readwrite("feat_dim", &SyntheticSpec::feat_dim)
      .def_readwrite("samples_per_class", &SyntheticSpec::samples_per_class)
      .def_readwrite("noise_sigma", &SyntheticSpec::noise_sigma)
      .def_readwrite("seen_fraction", &SyntheticSpec::seen_fraction)
      .def_readwrite("seed", &SyntheticSpec::seed);

  py::class_<DatasetBundle>(m, "DatasetBundle")
      .def_property_readonly("features", [](const DatasetBundle& b) { return matrix(b.features, b.feat_dim); })
      .def_property_readonly("attributes", [](const DatasetBundle& b) { return matrix(b.attributes, b.attr_dim); })
      .def_readonly("labels", &DatasetBundle::labels)
      .def_readonly("seen_classes", &DatasetBundle::seen_classes)
      .def_readonly("unseen_classes", &DatasetBundle::unseen_classes)
      .def_readonly("train_indices", &DatasetBundle::train_indices)
      .def_readonly("seen_test_indices", &DatasetBundle::seen_test_indices)
      .def_readonly("unseen_test_indices", &DatasetBundle::unseen_test_indices)
      .def("summary", &summary_dict)
      .def("checksum", [](const DatasetBundle& b) { return checksum(b); })
      .def("save", [](const DatasetBundle& b, const std::filesystem::path& p) { save_zsb(b, p); });

  m.def("gen_synthetic", &gen_synthetic, py::arg("spec") = SyntheticSpec{});
  m.def("load_zsb", &load_zsb, py::arg("path"));
  m.def(
      "fewshot_subsample",
      [](const DatasetBundle& b, std::size_t k, std::uint64_t seed) {
        Rng rng(seed);
        return fewshot_subsample(b, k, rng);
      },
      py::arg("bundle"), py::arg("k"), py::arg("seed") = 0);
  m.def("minmax_scale_attributes", &minmax_scale_attributes, py::arg("bundle"));

  py::enum_<EpisodeMode>(m, "EpisodeMode").value("zsml", EpisodeMode::kZsml).value("maml", EpisodeMode::kMaml);

  py::class_<EpisodeSpec>(m, "EpisodeSpec")
      .def(py::init<>())
      .def(py::init([](std::size_t nt, std::size_t kt, std::size_t nv, std::size_t kv, EpisodeMode mode, std::size_t b) {
             return EpisodeSpec{nt, kt, nv, kv, mode, b};
           }),
           py::arg("n_way_train"), py::arg("k_shot_train"), py::arg("n_way_val"), py::arg("k_shot_val"),
           py::arg("mode") = EpisodeMode::kZsml, py::arg("tasks_per_batch") = 10)
      .def_readwrite("n_way_train", &EpisodeSpec::n_way_train)
      .def_readwrite("k_shot_train", &EpisodeSpec::k_shot_train)
      .def_readwrite("n_way_val", &EpisodeSpec::n_way_val)
      .def_readwrite("k_shot_val", &EpisodeSpec::k_shot_val)
      .def_readwrite("mode", &EpisodeSpec::mode)
      .def_readwrite("tasks_per_batch", &EpisodeSpec::tasks_per_batch);

  py::class_<HyperParams>(m, "HyperParams")
      .def(py::init<>())
      .def_static("paper", &HyperParams::paper, py::arg("iterations"))
      .def_static("synthetic", &HyperParams::synthetic)
      .def_readwrite("inner_lr_d", &HyperParams::inner_lr_d)
      .def_readwrite("inner_lr_gc", &HyperParams::inner_lr_gc)
      .def_readwrite("meta_lr_d", &HyperParams::meta_lr_d)
      .def_readwrite("meta_lr_gc", &HyperParams::meta_lr_gc)
      .def_readwrite("inner_steps", &HyperParams::inner_steps)
      .def_readwrite("n_critic", &HyperParams::n_critic)
      .def_readwrite("clip_c", &HyperParams::clip_c)
      .def_readwrite("iterations", &HyperParams::iterations)
      .def_readwrite("train_noise_std", &HyperParams::train_noise_std)
      .def_readwrite("shared_inner", &HyperParams::shared_inner);

  py::class_<ModelState>(m, "Model")
      .def_readonly("iteration", &ModelState::iteration)
      .def("checksum", &ModelState::checksum)
      .def("max_abs_critic_weight", &ModelState::max_abs_critic_weight)
      .def("save", [](const ModelState& s, const std::filesystem::path& p) { save_zsmp(s.named_tensors(), p); });

  m.def(
      "train",
      [](const DatasetBundle& data, const EpisodeSpec& spec, const HyperParams& hp, std::uint64_t seed,
         const std::string& arch, std::size_t threads, py::object on_iteration) {
        TrainOptions opt;
        opt.seed = seed;
        opt.arch = Architecture::by_name(arch);
        opt.threads = threads;
        if (!on_iteration.is_none()) {
          opt.on_iteration = [&](const IterationMetrics& it, const ModelState&) {
            on_iteration(py::dict(py::arg("iter") = it.iter, py::arg("critic_loss_val") = it.critic_loss_val,
                                  py::arg("gencls_loss_val") = it.gencls_loss_val, py::arg("wall_ms") = it.wall_ms));
          };
        }
        return train_loop(data, spec, hp, opt);
      },
      py::arg("dataset"), py::arg("episodes"), py::arg("hyperparams"), py::arg("seed"), py::arg("arch") = "compact",
      py::arg("threads") = 1, py::arg("on_iteration") = py::none());

  m.def(
      "load_model",
      [](const std::filesystem::path& p, const std::string& arch) {
        return model_from_checkpoint(load_zsmp(p), Architecture::by_name(arch));
      },
      py::arg("path"), py::arg("arch") = "compact");

  m.def(
      "eval_zsl",
      [](const ModelState& model, const DatasetBundle& data, const std::string& classifier, std::size_t per_class_count,
         float noise_std, std::uint64_t seed) {
        Rng rng(seed);
        return report_dict(eval_zsl(model, data, eval_options(classifier, per_class_count, noise_std, false), rng));
      },
      py::arg("model"), py::arg("dataset"), py::arg("classifier") = "softmax", py::arg("per_class_count") = 200,
      py::arg("noise_std") = 0.25f, py::arg("seed") = 0);

  m.def(
      "eval_gzsl",
      [](const ModelState& model, const DatasetBundle& data, const std::string& classifier, std::size_t per_class_count,
         float noise_std, bool real_seen, std::uint64_t seed) {
        Rng rng(seed);
        return report_dict(eval_gzsl(model, data, eval_options(classifier, per_class_count, noise_std, real_seen), rng));
      },
      py::arg("model"), py::arg("dataset"), py::arg("classifier") = "softmax", py::arg("per_class_count") = 200,
      py::arg("noise_std") = 0.25f, py::arg("real_seen") = false, py::arg("seed") = 0);

  m.def("harmonic_mean", &harmonic_mean, py::arg("u"), py::arg("s"));

  m.def(
      "gradcheck",
      [](std::size_t configs, std::uint64_t seed, bool inject_fault) {
        GradCheckOptions opt;
        opt.configs = configs;
        opt.seed = seed;
        opt.inject_fault = inject_fault;
        py::list rows;
        for (const auto& r : run_gradcheck(opt)) {
          rows.append(py::dict(py::arg("name") = r.name, py::arg("configs") = r.configs,
                               py::arg("coordinates") = r.coordinates, py::arg("skipped") = r.skipped,
                               py::arg("max_rel_error") = r.max_rel_error, py::arg("passed") = r.passed));
        }
        return rows;
      },
      py::arg("configs") = 20, py::arg("seed") = 0, py::arg("inject_fault") = false);
}
