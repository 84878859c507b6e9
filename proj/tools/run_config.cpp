#include "run_config.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <set>

#include "zsml/error.hpp"

namespace zsml::cli {

using nlohmann::json;

EvalOptions RunConfig::eval_options() const {
  EvalOptions o;
  o.kind = classifier;
  o.per_class_count = per_class_count;
  o.noise_std = synthesis_noise_std;
  o.real_seen = real_seen;
  return o;
}

namespace {

/// Shortest decimal that round-trips the float, so 0.01f prints as 0.01.
double shortest(float v) {
  char buf[32];
  for (int digits = 6; digits <= 9; ++digits) {
    std::snprintf(buf, sizeof buf, "%.*g", digits, static_cast<double>(v));
    if (std::strtof(buf, nullptr) == v) break;
  }
  return std::strtod(buf, nullptr);
}

}  // namespace

nlohmann::ordered_json RunConfig::to_json() const {
  nlohmann::ordered_json j;
  j["dataset"] = dataset.string();
  j["output_dir"] = output_dir.string();
  if (seed) j["seed"] = *seed;
  j["preset"] = preset;
  j["architecture"] = architecture;
  j["noise_dim"] = noise_dim;
  j["minmax_attributes"] = minmax_attributes;
  if (fewshot_k) j["fewshot_k"] = *fewshot_k;
  j["checkpoint_every"] = checkpoint_every;
  j["episode"] = {{"n_way_train", episode.n_way_train}, {"k_shot_train", episode.k_shot_train},
                  {"n_way_val", episode.n_way_val},     {"k_shot_val", episode.k_shot_val},
                  {"mode", zsml::to_string(episode.mode)}, {"tasks_per_batch", episode.tasks_per_batch}};
  j["hyperparams"] = {{"inner_lr_d", shortest(hyper.inner_lr_d)},   {"inner_lr_gc", shortest(hyper.inner_lr_gc)},
                      {"meta_lr_d", shortest(hyper.meta_lr_d)},     {"meta_lr_gc", shortest(hyper.meta_lr_gc)},
                      {"inner_steps", hyper.inner_steps}, {"n_critic", hyper.n_critic},
                      {"clip_c", shortest(hyper.clip_c)},           {"iterations", hyper.iterations},
                      {"train_noise_std", shortest(hyper.train_noise_std)}, {"shared_inner", hyper.shared_inner}};
  j["synthesis"] = {{"per_class_count", per_class_count}, {"noise_std", shortest(synthesis_noise_std)}};
  j["classifier"] = zsml::to_string(classifier);
  j["protocol"] = zsml::to_string(protocol);
  j["real_seen"] = real_seen;
  return j;
}

RunConfig preset_config(const std::string& name) {
  RunConfig c;
  c.preset = name;
  if (name == "synthetic") {
    c.architecture = "compact";
    c.hyper = HyperParams::synthetic();
    c.episode = EpisodeSpec{5, 5, 5, 3, EpisodeMode::kZsml, 10};
    return c;
  }
  c.architecture = "paper";
  c.hyper = HyperParams::paper(preset_iterations(name));  // rejects unknown names
  c.episode = EpisodeSpec{10, 5, 10, 3, EpisodeMode::kZsml, 10};
  c.per_class_count = name == "cub-like" ? 100 : 200;
  return c;
}

namespace {

/// Copies doc[key] into `out` when present; type mismatches become parameter errors.
template <typename T>
void field(const json& doc, const char* key, T& out, std::set<std::string>& known) {
  known.insert(key);
  const auto it = doc.find(key);
  if (it == doc.end()) return;
  try {
    out = it->get<T>();
  } catch (const json::exception&) {
    throw ParameterError(std::string("config: field '") + key + "' has the wrong type");
  }
}

void reject_unknown(const json& doc, const std::set<std::string>& known, const std::string& where) {
  for (const auto& [key, value] : doc.items()) {
    if (!known.count(key)) throw ParameterError("config: unknown field '" + where + key + "'");
  }
}

const json& object_at(const json& doc, const char* key) {
  const json& sub = doc.at(key);
  if (!sub.is_object()) throw ParameterError(std::string("config: '") + key + "' must be an object");
  return sub;
}

}  // namespace

RunConfig apply_json(RunConfig c, const json& doc, const std::filesystem::path& relative_to) {
  if (!doc.is_object()) throw ParameterError("config: top level must be a JSON object");
  std::set<std::string> known;
  std::string dataset, output_dir, classifier, protocol;
  std::uint64_t seed = 0;
  std::size_t fewshot = 0;
  field(doc, "dataset", dataset, known);
  field(doc, "output_dir", output_dir, known);
  field(doc, "seed", seed, known);
  field(doc, "preset", c.preset, known);
  field(doc, "architecture", c.architecture, known);
  field(doc, "noise_dim", c.noise_dim, known);
  field(doc, "minmax_attributes", c.minmax_attributes, known);
  field(doc, "fewshot_k", fewshot, known);
  field(doc, "checkpoint_every", c.checkpoint_every, known);
  field(doc, "classifier", classifier, known);
  field(doc, "protocol", protocol, known);
  field(doc, "real_seen", c.real_seen, known);
  for (const char* k : {"episode", "hyperparams", "synthesis"}) known.insert(k);
  reject_unknown(doc, known, "");

  if (!dataset.empty()) c.dataset = relative_to / dataset;
  if (!output_dir.empty()) c.output_dir = relative_to / output_dir;
  if (doc.contains("seed")) c.seed = seed;
  if (doc.contains("fewshot_k")) c.fewshot_k = fewshot;
  if (!classifier.empty()) c.classifier = classifier_kind_from_string(classifier);
  if (!protocol.empty()) c.protocol = protocol_from_string(protocol);

  if (doc.contains("episode")) {
    const json& e = object_at(doc, "episode");
    std::set<std::string> k;
    std::string mode = zsml::to_string(c.episode.mode);
    field(e, "n_way_train", c.episode.n_way_train, k);
    field(e, "k_shot_train", c.episode.k_shot_train, k);
    field(e, "n_way_val", c.episode.n_way_val, k);
    field(e, "k_shot_val", c.episode.k_shot_val, k);
    field(e, "tasks_per_batch", c.episode.tasks_per_batch, k);
    field(e, "mode", mode, k);
    reject_unknown(e, k, "episode.");
    c.episode.mode = episode_mode_from_string(mode);
  }
  if (doc.contains("hyperparams")) {
    const json& h = object_at(doc, "hyperparams");
    std::set<std::string> k;
    field(h, "inner_lr_d", c.hyper.inner_lr_d, k);
    field(h, "inner_lr_gc", c.hyper.inner_lr_gc, k);
    field(h, "meta_lr_d", c.hyper.meta_lr_d, k);
    field(h, "meta_lr_gc", c.hyper.meta_lr_gc, k);
    field(h, "inner_steps", c.hyper.inner_steps, k);
    field(h, "n_critic", c.hyper.n_critic, k);
    field(h, "clip_c", c.hyper.clip_c, k);
    field(h, "iterations", c.hyper.iterations, k);
    field(h, "train_noise_std", c.hyper.train_noise_std, k);
    field(h, "shared_inner", c.hyper.shared_inner, k);
    reject_unknown(h, k, "hyperparams.");
  }
  if (doc.contains("synthesis")) {
    const json& s = object_at(doc, "synthesis");
    std::set<std::string> k;
    field(s, "per_class_count", c.per_class_count, k);
    field(s, "noise_std", c.synthesis_noise_std, k);
    reject_unknown(s, k, "synthesis.");
  }
  return c;
}

RunConfig load_config(const std::filesystem::path& path, const std::optional<std::string>& preset) {
  if (path.empty()) return preset_config(preset.value_or("synthetic"));
  std::ifstream in(path);
  if (!in) throw ParameterError("config: cannot open " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParameterError("config: " + path.string() + " is not valid JSON (" + e.what() + ")");
  }
  std::string name = "synthetic";
  if (doc.is_object() && doc.contains("preset") && doc["preset"].is_string()) name = doc["preset"].get<std::string>();
  if (preset) name = *preset;
  RunConfig c = apply_json(preset_config(name), doc, path.parent_path());
  c.preset = name;
  return c;
}

void validate(const RunConfig& c) {
  if (!c.seed) throw ParameterError("config: a seed is required (config field 'seed' or --seed)");
  if (c.dataset.empty()) throw ParameterError("config: no dataset given (config field 'dataset' or --dataset)");
  if (!std::filesystem::exists(c.dataset)) throw ParameterError("config: dataset " + c.dataset.string() + " does not exist");
  if (c.output_dir.empty()) throw ParameterError("config: no output directory (config field 'output_dir' or --out-dir)");
  if (c.fewshot_k && *c.fewshot_k == 0) throw ParameterError("config: fewshot_k must be >= 1");
  c.arch();
  c.episode.validate();
  c.hyper.validate();
  SynthesisSpec{c.per_class_count, c.synthesis_noise_std, {0}}.validate();
}

}  // namespace zsml::cli
