#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "zsml/dataset.hpp"
#include "zsml/rng.hpp"

namespace zsml {

/// zsml: train and validation classes are disjoint. maml: they are the same set
/// (n_way_train classes; n_way_val is ignored).
enum class EpisodeMode { kZsml, kMaml };

std::string to_string(EpisodeMode mode);
EpisodeMode episode_mode_from_string(const std::string& name);

struct EpisodeSpec {
  std::size_t n_way_train = 10;
  std::size_t k_shot_train = 5;
  std::size_t n_way_val = 10;
  std::size_t k_shot_val = 3;
  EpisodeMode mode = EpisodeMode::kZsml;
  std::size_t tasks_per_batch = 10;

  void validate() const;
};

/// One task {T_tr, T_val}. items[i] holds the sample indices of classes[i].
struct TaskEpisode {
  std::vector<std::uint32_t> train_classes;
  std::vector<std::uint32_t> val_classes;
  std::vector<std::vector<std::uint64_t>> train_items;
  std::vector<std::vector<std::uint64_t>> val_items;
  EpisodeMode mode = EpisodeMode::kZsml;

  std::size_t train_size() const;
  std::size_t val_size() const;
};

/// Draws classes uniformly without replacement from the seen classes, then
/// shots uniformly without replacement from each class's train samples.
TaskEpisode sample_episode(const DatasetBundle& dataset, const EpisodeSpec& spec, Rng& rng);

std::vector<TaskEpisode> sample_task_batch(const DatasetBundle& dataset, const EpisodeSpec& spec, Rng& rng);

/// Sampler that caches the per-class train index groups of one dataset.
class EpisodeSampler {
 public:
  EpisodeSampler(const DatasetBundle& dataset, EpisodeSpec spec);

  TaskEpisode sample(Rng& rng) const;
  std::vector<TaskEpisode> sample_batch(Rng& rng) const;
  const EpisodeSpec& spec() const { return spec_; }

 private:
  const DatasetBundle& dataset_;
  EpisodeSpec spec_;
  std::vector<std::vector<std::uint64_t>> groups_;
};

}  // namespace zsml
