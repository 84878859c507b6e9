#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include "json.hpp"
#include "zsml/downstream.hpp"
#include "zsml/episodic.hpp"
#include "zsml/trainer.hpp"

namespace zsml::cli {

/// Everything a train or eval run needs, after presets, the config file and
/// flags have been layered (in that order).
struct RunConfig {
  std::filesystem::path dataset;
  std::filesystem::path output_dir;
  std::optional<std::uint64_t> seed;
  std::string preset = "synthetic";
  std::string architecture = "compact";
  std::size_t noise_dim = 0;
  bool minmax_attributes = false;
  std::optional<std::size_t> fewshot_k;
  std::size_t checkpoint_every = 0;
  EpisodeSpec episode;
  HyperParams hyper;
  std::size_t per_class_count = 200;
  float synthesis_noise_std = 0.25f;
  ClassifierKind classifier = ClassifierKind::kSoftmax;
  Protocol protocol = Protocol::kZsl;
  bool real_seen = false;

  Architecture arch() const { return Architecture::by_name(architecture); }
  EvalOptions eval_options() const;
  nlohmann::ordered_json to_json() const;
};

/// Preset defaults: "synthetic", "awa-like", "cub-like" or "apy-like".
RunConfig preset_config(const std::string& name);

/// Layers a JSON document over `base`. Unknown keys are parameter errors;
/// relative paths resolve against `relative_to`.
RunConfig apply_json(RunConfig base, const nlohmann::json& doc, const std::filesystem::path& relative_to);

/// Reads a config file and layers it over a preset: `preset` if given, else
/// the one the file names, else "synthetic". An empty path means no file.
RunConfig load_config(const std::filesystem::path& path, const std::optional<std::string>& preset = std::nullopt);

/// Checks that the seed is set, the dataset exists and every nested spec is valid.
void validate(const RunConfig& config);

}  // namespace zsml::cli
