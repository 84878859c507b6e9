#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "zsml/rng.hpp"

namespace zsml {

/// Features, labels, class attributes and the seen/unseen partition.
///
/// Class ids are dense in [0, n_classes()); attributes has one row per class.
struct DatasetBundle {
  std::size_t feat_dim = 0;
  std::size_t attr_dim = 0;
  std::vector<float> features;      // n x feat_dim, row-major
  std::vector<std::uint32_t> labels;  // n
  std::vector<float> attributes;    // n_classes x attr_dim, row-major
  std::vector<std::uint32_t> seen_classes;
  std::vector<std::uint32_t> unseen_classes;
  std::vector<std::uint64_t> train_indices;
  std::vector<std::uint64_t> seen_test_indices;
  std::vector<std::uint64_t> unseen_test_indices;

  std::size_t size() const { return labels.size(); }
  std::size_t n_classes() const { return attr_dim == 0 ? 0 : attributes.size() / attr_dim; }

  const float* feature_row(std::size_t i) const { return features.data() + i * feat_dim; }
  const float* attribute_row(std::size_t c) const { return attributes.data() + c * attr_dim; }

  /// Train indices grouped by seen class, in seen_classes order.
  std::vector<std::vector<std::uint64_t>> train_by_class() const;

  /// Throws IntegrityError naming the first violated invariant.
  void validate() const;

  bool operator==(const DatasetBundle&) const = default;
};

struct BundleSummary {
  std::size_t n_samples = 0;
  std::size_t n_classes = 0;
  std::size_t n_seen = 0;
  std::size_t n_unseen = 0;
  std::size_t feat_dim = 0;
  std::size_t attr_dim = 0;
  std::size_t n_train = 0;
  std::size_t n_seen_test = 0;
  std::size_t n_unseen_test = 0;
};

BundleSummary summarize(const DatasetBundle& bundle);

/// Serializes to the little-endian ZSB1 layout.
std::vector<std::uint8_t> encode_zsb(const DatasetBundle& bundle);
DatasetBundle decode_zsb(const std::vector<std::uint8_t>& bytes);

void save_zsb(const DatasetBundle& bundle, const std::filesystem::path& path);
DatasetBundle load_zsb(const std::filesystem::path& path);

/// FNV-1a 64 over the ZSB1 encoding.
std::uint64_t checksum(const DatasetBundle& bundle);

/// Keeps min(k, available) uniformly chosen train samples per seen class.
DatasetBundle fewshot_subsample(const DatasetBundle& bundle, std::size_t k, Rng& rng);

/// Rescales every attribute column to [0, 1]; constant columns become 0.
DatasetBundle minmax_scale_attributes(const DatasetBundle& bundle);

struct SyntheticSpec {
  std::size_t n_classes = 20;
  std::size_t attr_dim = 8;
  std::size_t feat_dim = 32;
  std::size_t samples_per_class = 100;
  float noise_sigma = 0.05f;
  float seen_fraction = 0.75f;
  std::uint64_t seed = 0;

  void validate() const;
  std::size_t seen_count() const;
};

/// Generated bundle plus the ground-truth attribute-to-mean map.
struct SyntheticData {
  DatasetBundle bundle;
  std::vector<float> map;   // feat_dim x attr_dim
  std::vector<float> bias;  // feat_dim

  /// W a_c + b for class c.
  std::vector<float> class_mean(std::uint32_t c) const;
};

SyntheticData gen_synthetic_with_truth(const SyntheticSpec& spec);
DatasetBundle gen_synthetic(const SyntheticSpec& spec);

}  // namespace zsml
