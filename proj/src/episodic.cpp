#include "zsml/episodic.hpp"

#include <algorithm>

#include "zsml/error.hpp"

namespace zsml {

namespace {

/// Uniform k-subset of `pool` via partial Fisher-Yates, in draw order.
template <typename T>
std::vector<T> draw_without_replacement(std::vector<T> pool, std::size_t k, Rng& rng) {
  for (std::size_t i = 0; i < k; ++i) std::swap(pool[i], pool[i + rng.index(pool.size() - i)]);
  pool.resize(k);
  return pool;
}

std::size_t total(const std::vector<std::vector<std::uint64_t>>& groups) {
  std::size_t n = 0;
  for (const auto& g : groups) n += g.size();
  return n;
}

}  // namespace

std::string to_string(EpisodeMode mode) { return mode == EpisodeMode::kZsml ? "zsml" : "maml"; }

EpisodeMode episode_mode_from_string(const std::string& name) {
  if (name == "zsml") return EpisodeMode::kZsml;
  if (name == "maml") return EpisodeMode::kMaml;
  throw ParameterError("unknown episode mode '" + name + "' (expected zsml or maml)");
}

void EpisodeSpec::validate() const {
  if (n_way_train < 1 || k_shot_train < 1 || n_way_val < 1 || k_shot_val < 1 || tasks_per_batch < 1) {
    throw ParameterError("EpisodeSpec: all counts must be >= 1");
  }
}

std::size_t TaskEpisode::train_size() const { return total(train_items); }

std::size_t TaskEpisode::val_size() const { return total(val_items); }

EpisodeSampler::EpisodeSampler(const DatasetBundle& dataset, EpisodeSpec spec)
    : dataset_(dataset), spec_(spec), groups_(dataset.train_by_class()) {
  spec_.validate();
  const std::size_t available = dataset.seen_classes.size();
  const std::size_t required =
      spec_.mode == EpisodeMode::kZsml ? spec_.n_way_train + spec_.n_way_val : spec_.n_way_train;
  if (available < required) {
    throw BudgetError("episode needs " + std::to_string(required) + " seen classes but only " +
                      std::to_string(available) + " are available");
  }
}

TaskEpisode EpisodeSampler::sample(Rng& rng) const {
  const auto& seen = dataset_.seen_classes;
  std::vector<std::size_t> slots(seen.size());
  for (std::size_t i = 0; i < slots.size(); ++i) slots[i] = i;

  TaskEpisode ep;
  ep.mode = spec_.mode;
  auto take_shots = [&](std::size_t slot, std::size_t shots, const std::vector<std::uint64_t>& exclude) {
    std::vector<std::uint64_t> pool;
    for (auto idx : groups_[slot]) {
      if (std::find(exclude.begin(), exclude.end(), idx) == exclude.end()) pool.push_back(idx);
    }
    if (pool.size() < shots) {
      throw BudgetError("class " + std::to_string(seen[slot]) + " has " + std::to_string(pool.size()) +
                        " train samples but the episode needs " + std::to_string(shots));
    }
    return draw_without_replacement(std::move(pool), shots, rng);
  };

  if (spec_.mode == EpisodeMode::kZsml) {
    auto chosen = draw_without_replacement(slots, spec_.n_way_train + spec_.n_way_val, rng);
    for (std::size_t i = 0; i < chosen.size(); ++i) {
      const bool train = i < spec_.n_way_train;
      (train ? ep.train_classes : ep.val_classes).push_back(seen[chosen[i]]);
      (train ? ep.train_items : ep.val_items).push_back(take_shots(chosen[i], train ? spec_.k_shot_train : spec_.k_shot_val, {}));
    }
  } else {
    auto chosen = draw_without_replacement(slots, spec_.n_way_train, rng);
    for (auto slot : chosen) {
      ep.train_classes.push_back(seen[slot]);
      ep.val_classes.push_back(seen[slot]);
      auto tr = take_shots(slot, spec_.k_shot_train, {});
      ep.val_items.push_back(take_shots(slot, spec_.k_shot_val, tr));
      ep.train_items.push_back(std::move(tr));
    }
  }
  return ep;
}

std::vector<TaskEpisode> EpisodeSampler::sample_batch(Rng& rng) const {
  std::vector<TaskEpisode> batch;
  batch.reserve(spec_.tasks_per_batch);
  for (std::size_t i = 0; i < spec_.tasks_per_batch; ++i) batch.push_back(sample(rng));
  return batch;
}

TaskEpisode sample_episode(const DatasetBundle& dataset, const EpisodeSpec& spec, Rng& rng) {
  return EpisodeSampler(dataset, spec).sample(rng);
}

std::vector<TaskEpisode> sample_task_batch(const DatasetBundle& dataset, const EpisodeSpec& spec, Rng& rng) {
  return EpisodeSampler(dataset, spec).sample_batch(rng);
}

}  // namespace zsml
