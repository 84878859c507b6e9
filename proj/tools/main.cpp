// zsml: gen-data, train, eval, gradcheck and subsample.
//
// Machine-readable results go to stdout as JSON; one human summary line goes
// to stderr. Exit codes: 0 success, 2 usage or parameter error, 3 numerical
// failure.

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "json.hpp"
#include "run_config.hpp"
#include "zsml/checkpoint.hpp"
#include "zsml/error.hpp"
#include "zsml/gradcheck.hpp"

namespace fs = std::filesystem;
using nlohmann::ordered_json;
using namespace zsml;
using namespace zsml::cli;

namespace {

constexpr int kUsage = 2;
constexpr int kNumerical = 3;

std::string hex(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

/// ZSML_THREADS, default 1.
std::size_t env_threads() {
  const char* v = std::getenv("ZSML_THREADS");
  if (!v || !*v) return 1;
  char* end = nullptr;
  const long n = std::strtol(v, &end, 10);
  if (*end != '\0' || n < 1) throw ParameterError(std::string("ZSML_THREADS must be a positive integer, got '") + v + "'");
  return static_cast<std::size_t>(n);
}

ordered_json summary_json(const DatasetBundle& b) {
  const BundleSummary s = summarize(b);
  return {{"checksum", hex(checksum(b))}, {"n_samples", s.n_samples}, {"n_classes", s.n_classes},
          {"n_seen", s.n_seen},           {"n_unseen", s.n_unseen},   {"feat_dim", s.feat_dim},
          {"attr_dim", s.attr_dim},       {"n_train", s.n_train},     {"n_seen_test", s.n_seen_test},
          {"n_unseen_test", s.n_unseen_test}};
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw ParameterError("cannot write " + path.string());
}

/// Copies the config file verbatim and records the resolved settings beside it.
void record_config(const fs::path& config_file, const RunConfig& c) {
  fs::create_directories(c.output_dir);
  if (!config_file.empty()) fs::copy_file(config_file, c.output_dir / "config.json", fs::copy_options::overwrite_existing);
  write_text(c.output_dir / "resolved_config.json", c.to_json().dump(2) + "\n");
}

/// Loads the bundle and applies the optional attribute scaling and few-shot cut.
DatasetBundle load_dataset(const RunConfig& c, Rng& rng) {
  DatasetBundle d = load_zsb(c.dataset);
  if (c.minmax_attributes) d = minmax_scale_attributes(d);
  if (c.fewshot_k) d = fewshot_subsample(d, *c.fewshot_k, rng);
  return d;
}

struct RunFlags {
  fs::path config;
  std::string dataset, out_dir, preset, arch, mode, protocol, classifier;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> iterations, fewshot, checkpoint_every, per_class_count;
  bool minmax = false, real_seen = false;
};

void add_run_flags(CLI::App* cmd, RunFlags& f) {
  cmd->add_option("--config", f.config, "JSON run configuration")->check(CLI::ExistingFile);
  cmd->add_option("--dataset", f.dataset, "ZSB1 dataset");
  cmd->add_option("--out-dir", f.out_dir, "output directory");
  cmd->add_option("--seed", f.seed, "random seed (required here or in the config)");
  cmd->add_option("--preset", f.preset, "synthetic, awa-like, cub-like or apy-like");
  cmd->add_option("--arch", f.arch, "network widths: compact or paper");
  cmd->add_option("--fewshot", f.fewshot, "keep K train samples per seen class");
  cmd->add_flag("--minmax-attributes", f.minmax, "rescale attribute columns to [0, 1]");
}

RunConfig resolve(const RunFlags& f) {
  RunConfig c = load_config(f.config, f.preset.empty() ? std::nullopt : std::optional(f.preset));
  if (!f.dataset.empty()) c.dataset = f.dataset;
  if (!f.out_dir.empty()) c.output_dir = f.out_dir;
  if (f.seed) c.seed = f.seed;
  if (!f.arch.empty()) c.architecture = f.arch;
  if (!f.mode.empty()) c.episode.mode = episode_mode_from_string(f.mode);
  if (!f.protocol.empty()) c.protocol = protocol_from_string(f.protocol);
  if (!f.classifier.empty()) c.classifier = classifier_kind_from_string(f.classifier);
  if (f.iterations) c.hyper.iterations = *f.iterations;
  if (f.fewshot) c.fewshot_k = f.fewshot;
  if (f.checkpoint_every) c.checkpoint_every = *f.checkpoint_every;
  if (f.per_class_count) c.per_class_count = *f.per_class_count;
  if (f.minmax) c.minmax_attributes = true;
  if (f.real_seen) c.real_seen = true;
  validate(c);
  return c;
}

// --- commands ---------------------------------------------------------------

struct GenDataFlags {
  fs::path out;
  SyntheticSpec spec;
};

int cmd_gen_data(const GenDataFlags& f) {
  const DatasetBundle b = gen_synthetic(f.spec);
  if (f.out.has_parent_path()) fs::create_directories(f.out.parent_path());
  save_zsb(b, f.out);
  ordered_json j = {{"path", f.out.string()}};
  j.update(summary_json(b));
  std::cout << j.dump() << "\n";
  std::cerr << "gen-data: " << b.seen_classes.size() << " seen / " << b.unseen_classes.size() << " unseen classes, "
            << b.size() << " samples -> " << f.out.string() << "\n";
  return 0;
}

struct SubsampleFlags {
  fs::path in, out;
  std::size_t k = 0;
  std::uint64_t seed = 0;
};

int cmd_subsample(const SubsampleFlags& f) {
  Rng rng(f.seed);
  const DatasetBundle b = fewshot_subsample(load_zsb(f.in), f.k, rng);
  if (f.out.has_parent_path()) fs::create_directories(f.out.parent_path());
  save_zsb(b, f.out);
  ordered_json j = {{"path", f.out.string()}, {"k", f.k}};
  j.update(summary_json(b));
  std::cout << j.dump() << "\n";
  std::cerr << "subsample: kept " << b.train_indices.size() << " train samples (k=" << f.k << ") -> " << f.out.string()
            << "\n";
  return 0;
}

int cmd_train(const RunFlags& f) {
  const RunConfig c = resolve(f);
  record_config(f.config, c);
  Rng master(*c.seed);
  Rng data_rng = master.split();
  const DatasetBundle data = load_dataset(c, data_rng);

  TrainOptions opt;
  opt.seed = *c.seed;
  opt.noise_dim = c.noise_dim;
  opt.threads = env_threads();
  opt.arch = c.arch();
  std::ofstream metrics(c.output_dir / "metrics.jsonl", std::ios::binary);
  IterationMetrics last;
  opt.on_iteration = [&](const IterationMetrics& m, const ModelState&) {
    metrics << to_json_line(m) << "\n";
    last = m;
  };
  opt.checkpoint_every = c.checkpoint_every;
  opt.on_checkpoint = [&](const ModelState& s) {
    save_zsmp(s.named_tensors(), c.output_dir / ("model_iter" + std::to_string(s.iteration) + ".zsmp"));
  };

  const ModelState s = train_loop(data, c.episode, c.hyper, opt);
  const fs::path ckpt = c.output_dir / "model.zsmp";
  save_zsmp(s.named_tensors(), ckpt);
  ordered_json j = {{"checkpoint", ckpt.string()},
                    {"checksum", hex(s.checksum())},
                    {"iterations", s.iteration},
                    {"critic_loss_val", last.critic_loss_val},
                    {"gencls_loss_val", last.gencls_loss_val}};
  std::cout << j.dump() << "\n";
  std::cerr << "train: " << s.iteration << " iterations, " << to_string(c.episode.mode) << " episodes, checkpoint "
            << ckpt.string() << "\n";
  return 0;
}

/// Splices a provenance block into the 6-decimal report document.
std::string with_provenance(const EvalReport& r, const ordered_json& provenance) {
  std::string doc = to_json(r);
  doc.pop_back();
  return doc + ",\"provenance\":" + provenance.dump() + "}";
}

int cmd_eval(const RunFlags& f, const fs::path& checkpoint) {
  const RunConfig c = resolve(f);
  record_config(f.config, c);
  Rng master(*c.seed);
  Rng data_rng = master.split();
  Rng eval_rng = master.split();
  const DatasetBundle data = load_dataset(c, data_rng);
  const NamedTensors tensors = load_zsmp(checkpoint);
  const ModelState model = model_from_checkpoint(tensors, c.arch());

  const EvalOptions opts = c.eval_options();
  const EvalReport r = c.protocol == Protocol::kZsl ? eval_zsl(model, data, opts, eval_rng)
                                                    : eval_gzsl(model, data, opts, eval_rng);
  ordered_json prov = {{"dataset_checksum", hex(checksum(load_zsb(c.dataset)))},
                       {"checkpoint_checksum", hex(checksum(tensors))},
                       {"seed", *c.seed},
                       {"train_size", data.train_indices.size()},
                       {"fewshot_k", c.fewshot_k ? ordered_json(*c.fewshot_k) : ordered_json(nullptr)},
                       {"per_class_count", c.per_class_count}};
  const std::string doc = with_provenance(r, prov);
  write_text(c.output_dir / ("eval_" + to_string(r.protocol) + "_" + to_string(r.classifier) + ".json"), doc + "\n");
  std::cout << doc << "\n";

  char line[160];
  if (r.protocol == Protocol::kZsl) {
    std::snprintf(line, sizeof line, "eval: ZSL %s  U=%.1f", to_string(r.classifier).c_str(), 100.0 * r.unseen);
  } else {
    std::snprintf(line, sizeof line, "eval: GZSL %s  U=%.1f S=%.1f H=%.1f", to_string(r.classifier).c_str(),
                  100.0 * r.unseen, 100.0 * r.seen, 100.0 * r.harmonic);
  }
  std::cerr << line << "\n";
  return 0;
}

int cmd_gradcheck(const GradCheckOptions& opt) {
  const auto rows = run_gradcheck(opt);
  std::cout << to_json(rows, opt.tolerance) << "\n";
  for (const auto& r : rows) {
    std::fprintf(stderr, "  %-28s %-4s max_rel=%.3e  (%zu configs, %zu coords, %zu skipped)\n", r.name.c_str(),
                 r.passed ? "ok" : "FAIL", r.max_rel_error, r.configs, r.coordinates, r.skipped);
  }
  const bool ok = all_passed(rows);
  std::cerr << "gradcheck: " << (ok ? "all checks passed" : "FAILED") << "\n";
  return ok ? 0 : kNumerical;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Meta-learned adversarial feature synthesis for zero-shot classification"};
  app.require_subcommand(1);

  GenDataFlags gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "write a synthetic attribute-conditioned benchmark");
  gen_cmd->add_option("--out", gen.out, "output ZSB1 file")->required();
  gen_cmd->add_option("--n-classes", gen.spec.n_classes);
  gen_cmd->add_option("--attr-dim", gen.spec.attr_dim);
  gen_cmd->add_option("--feat-dim", gen.spec.feat_dim);
  gen_cmd->add_option("--samples-per-class", gen.spec.samples_per_class);
  gen_cmd->add_option("--noise-sigma", gen.spec.noise_sigma);
  gen_cmd->add_option("--seen-fraction", gen.spec.seen_fraction);
  gen_cmd->add_option("--seed", gen.spec.seed);

  RunFlags train;
  auto* train_cmd = app.add_subcommand("train", "meta-train the generator, critic and classifier");
  add_run_flags(train_cmd, train);
  train_cmd->add_option("--iterations", train.iterations, "meta-iterations");
  train_cmd->add_option("--mode", train.mode, "episode split: zsml or maml");
  train_cmd->add_option("--checkpoint-every", train.checkpoint_every, "also save every N iterations");

  RunFlags eval;
  fs::path checkpoint;
  auto* eval_cmd = app.add_subcommand("eval", "synthesize features and score a ZSL/GZSL protocol");
  add_run_flags(eval_cmd, eval);
  eval_cmd->add_option("--checkpoint", checkpoint, "ZSMP checkpoint")->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--protocol", eval.protocol, "zsl or gzsl");
  eval_cmd->add_option("--classifier", eval.classifier, "softmax or svm");
  eval_cmd->add_option("--per-class-count", eval.per_class_count, "synthesized samples per class");
  eval_cmd->add_flag("--real-seen", eval.real_seen, "GZSL: train on real seen-class features");

  GradCheckOptions gc;
  auto* gc_cmd = app.add_subcommand("gradcheck", "finite-difference check of every op and network");
  gc_cmd->add_option("--configs", gc.configs, "random configurations per check");
  gc_cmd->add_option("--seed", gc.seed);
  gc_cmd->add_option("--tolerance", gc.tolerance);
  gc_cmd->add_flag("--inject-fault", gc.inject_fault, "include an op with a deliberately wrong backward rule");

  SubsampleFlags sub;
  auto* sub_cmd = app.add_subcommand("subsample", "keep K train samples per seen class");
  sub_cmd->add_option("--in", sub.in, "input ZSB1 file")->required()->check(CLI::ExistingFile);
  sub_cmd->add_option("--out", sub.out, "output ZSB1 file")->required();
  sub_cmd->add_option("--k", sub.k, "samples per class")->required();
  sub_cmd->add_option("--seed", sub.seed)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kUsage;
  }

  try {
    if (*gen_cmd) return cmd_gen_data(gen);
    if (*train_cmd) return cmd_train(train);
    if (*eval_cmd) return cmd_eval(eval, checkpoint);
    if (*gc_cmd) return cmd_gradcheck(gc);
    if (*sub_cmd) return cmd_subsample(sub);
  } catch (const NumericalError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kNumerical;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  }
  return kUsage;
}
