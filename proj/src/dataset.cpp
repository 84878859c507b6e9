#include "zsml/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include "binio.hpp"
#include "zsml/error.hpp"

namespace zsml {

namespace {

constexpr char kZsbMagic[] = "ZSB1";
constexpr std::uint32_t kZsbVersion = 1;

void fail(const std::string& invariant) { throw IntegrityError("dataset invariant violated: " + invariant); }

template <typename T>
void shuffle(std::vector<T>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng.index(i)]);
}

}  // namespace

std::vector<std::vector<std::uint64_t>> DatasetBundle::train_by_class() const {
  std::vector<std::int64_t> slot(n_classes(), -1);
  for (std::size_t i = 0; i < seen_classes.size(); ++i) slot[seen_classes[i]] = static_cast<std::int64_t>(i);
  std::vector<std::vector<std::uint64_t>> groups(seen_classes.size());
  for (auto idx : train_indices) {
    const auto s = slot[labels[idx]];
    if (s >= 0) groups[static_cast<std::size_t>(s)].push_back(idx);
  }
  return groups;
}

void DatasetBundle::validate() const {
  const std::size_t n = labels.size();
  if (feat_dim == 0 || attr_dim == 0) fail("feature and attribute dims are positive");
  if (features.size() != n * feat_dim) fail("feature matrix holds n x feat_dim values");
  if (attributes.size() % attr_dim != 0) fail("attribute matrix holds n_classes x attr_dim values");
  for (float v : features) {
    if (!std::isfinite(v)) fail("features are finite");
  }
  for (float v : attributes) {
    if (!std::isfinite(v)) fail("attributes are finite");
  }
  const std::size_t n_cls = n_classes();
  for (auto l : labels) {
    if (l >= n_cls) fail("attribute matrix has a row for every label (label " + std::to_string(l) + ")");
  }
  std::vector<int> role(n_cls, 0);  // 1 seen, 2 unseen
  for (auto c : seen_classes) {
    if (c >= n_cls) fail("attribute matrix has a row for every seen class");
    if (role[c] != 0) fail("seen class list has no duplicates");
    role[c] = 1;
  }
  for (auto c : unseen_classes) {
    if (c >= n_cls) fail("attribute matrix has a row for every unseen class");
    if (role[c] == 1) fail("seen and unseen classes are disjoint (class " + std::to_string(c) + ")");
    if (role[c] == 2) fail("unseen class list has no duplicates");
    role[c] = 2;
  }
  for (auto l : labels) {
    if (role[l] == 0) fail("seen and unseen classes cover every label (label " + std::to_string(l) + ")");
  }
  std::vector<int> owner(n, 0);
  auto check_list = [&](const std::vector<std::uint64_t>& list, int id, int want_role, const char* name) {
    for (auto idx : list) {
      if (idx >= n) fail(std::string(name) + " indices are in range");
      if (owner[idx] != 0) fail("index lists are pairwise disjoint (index " + std::to_string(idx) + ")");
      owner[idx] = id;
      if (role[labels[idx]] != want_role) {
        fail(std::string("every ") + name + " index has a" + (want_role == 1 ? " seen" : "n unseen") + "-class label");
      }
    }
  };
  check_list(train_indices, 1, 1, "train");
  check_list(seen_test_indices, 2, 1, "seen_test");
  check_list(unseen_test_indices, 3, 2, "unseen_test");
}

BundleSummary summarize(const DatasetBundle& b) {
  return BundleSummary{b.size(),
                       b.n_classes(),
                       b.seen_classes.size(),
                       b.unseen_classes.size(),
                       b.feat_dim,
                       b.attr_dim,
                       b.train_indices.size(),
                       b.seen_test_indices.size(),
                       b.unseen_test_indices.size()};
}

std::vector<std::uint8_t> encode_zsb(const DatasetBundle& b) {
  detail::ByteWriter w;
  w.put_bytes(kZsbMagic);
  w.put<std::uint32_t>(kZsbVersion);
  w.put<std::uint64_t>(b.size());
  w.put<std::uint32_t>(static_cast<std::uint32_t>(b.feat_dim));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(b.n_classes()));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(b.attr_dim));
  w.put_array<float>(b.attributes);
  w.put_array<std::uint32_t>(b.labels);
  w.put_array<float>(b.features);
  for (const auto* list : {&b.seen_classes, &b.unseen_classes}) {
    w.put<std::uint32_t>(static_cast<std::uint32_t>(list->size()));
    w.put_array<std::uint32_t>(*list);
  }
  for (const auto* list : {&b.train_indices, &b.seen_test_indices, &b.unseen_test_indices}) {
    w.put<std::uint64_t>(list->size());
    for (auto idx : *list) {
      if (idx > std::numeric_limits<std::uint32_t>::max()) throw FormatError("ZSB1: sample index exceeds u32");
      w.put<std::uint32_t>(static_cast<std::uint32_t>(idx));
    }
  }
  return w.take();
}

DatasetBundle decode_zsb(const std::vector<std::uint8_t>& bytes) {
  detail::ByteReader r(bytes, "ZSB1");
  if (r.get_bytes(4) != kZsbMagic) throw FormatError("ZSB1: bad magic");
  const auto version = r.get<std::uint32_t>();
  if (version != kZsbVersion) throw FormatError("ZSB1: unsupported version " + std::to_string(version));
  DatasetBundle b;
  const auto n = r.get<std::uint64_t>();
  b.feat_dim = r.get<std::uint32_t>();
  const auto n_cls = r.get<std::uint32_t>();
  b.attr_dim = r.get<std::uint32_t>();
  if (b.feat_dim == 0 || b.attr_dim == 0) throw FormatError("ZSB1: zero feature or attribute dimension");
  if (n_cls > r.remaining() / b.attr_dim) throw FormatError("ZSB1: truncated input");
  b.attributes = r.get_array<float>(static_cast<std::uint64_t>(n_cls) * b.attr_dim);
  b.labels = r.get_array<std::uint32_t>(n);
  if (n > r.remaining() / b.feat_dim) throw FormatError("ZSB1: truncated input");
  b.features = r.get_array<float>(n * b.feat_dim);
  b.seen_classes = r.get_array<std::uint32_t>(r.get<std::uint32_t>());
  b.unseen_classes = r.get_array<std::uint32_t>(r.get<std::uint32_t>());
  for (auto* list : {&b.train_indices, &b.seen_test_indices, &b.unseen_test_indices}) {
    const auto raw = r.get_array<std::uint32_t>(r.get<std::uint64_t>());
    list->assign(raw.begin(), raw.end());
  }
  if (!r.at_end()) throw FormatError("ZSB1: trailing bytes after index lists");
  b.validate();
  return b;
}

void save_zsb(const DatasetBundle& bundle, const std::filesystem::path& path) {
  bundle.validate();
  detail::write_file(path, encode_zsb(bundle));
}

DatasetBundle load_zsb(const std::filesystem::path& path) { return decode_zsb(detail::read_file(path)); }

std::uint64_t checksum(const DatasetBundle& bundle) { return detail::fnv1a(encode_zsb(bundle)); }

DatasetBundle fewshot_subsample(const DatasetBundle& bundle, std::size_t k, Rng& rng) {
  if (k == 0) throw ParameterError("fewshot_subsample: k must be >= 1");
  auto groups = bundle.train_by_class();
  for (std::size_t i = 0; i < groups.size(); ++i) {
    if (groups[i].empty()) {
      throw DataError("fewshot_subsample: seen class " + std::to_string(bundle.seen_classes[i]) +
                      " has no train samples");
    }
  }
  DatasetBundle out = bundle;
  out.train_indices.clear();
  for (auto& g : groups) {
    // Partial Fisher-Yates: the first min(k, size) slots are a uniform subset.
    const std::size_t keep = std::min(k, g.size());
    for (std::size_t i = 0; i < keep; ++i) std::swap(g[i], g[i + rng.index(g.size() - i)]);
    std::vector<std::uint64_t> chosen(g.begin(), g.begin() + static_cast<std::ptrdiff_t>(keep));
    std::sort(chosen.begin(), chosen.end());
    out.train_indices.insert(out.train_indices.end(), chosen.begin(), chosen.end());
  }
  return out;
}

DatasetBundle minmax_scale_attributes(const DatasetBundle& bundle) {
  DatasetBundle out = bundle;
  const std::size_t c = bundle.n_classes(), d = bundle.attr_dim;
  for (std::size_t j = 0; j < d; ++j) {
    float lo = std::numeric_limits<float>::max(), hi = std::numeric_limits<float>::lowest();
    for (std::size_t i = 0; i < c; ++i) {
      lo = std::min(lo, bundle.attributes[i * d + j]);
      hi = std::max(hi, bundle.attributes[i * d + j]);
    }
    for (std::size_t i = 0; i < c; ++i) {
      out.attributes[i * d + j] = hi > lo ? (bundle.attributes[i * d + j] - lo) / (hi - lo) : 0.0f;
    }
  }
  return out;
}

void SyntheticSpec::validate() const {
  if (n_classes < 4) throw ParameterError("synthetic: n_classes must be >= 4, got " + std::to_string(n_classes));
  if (attr_dim < 1 || feat_dim < 1) throw ParameterError("synthetic: attr_dim and feat_dim must be >= 1");
  if (samples_per_class < 2) throw ParameterError("synthetic: samples_per_class must be >= 2");
  if (!(noise_sigma >= 0.0f) || !std::isfinite(noise_sigma)) {
    throw ParameterError("synthetic: noise_sigma must be finite and >= 0");
  }
  if (!(seen_fraction > 0.0f && seen_fraction < 1.0f)) throw ParameterError("synthetic: seen_fraction must lie in (0,1)");
  const std::size_t seen = seen_count();
  if (seen < 2 || n_classes - seen < 2) {
    throw ParameterError("synthetic: seen_fraction must leave at least 2 seen and 2 unseen classes");
  }
}

std::size_t SyntheticSpec::seen_count() const {
  const double s = std::round(static_cast<double>(n_classes) * seen_fraction);
  return static_cast<std::size_t>(std::clamp(s, 0.0, static_cast<double>(n_classes)));
}

std::vector<float> SyntheticData::class_mean(std::uint32_t c) const {
  const std::size_t f = bundle.feat_dim, d = bundle.attr_dim;
  const float* a = bundle.attribute_row(c);
  std::vector<float> m(f);
  for (std::size_t i = 0; i < f; ++i) {
    double s = bias[i];
    for (std::size_t j = 0; j < d; ++j) s += static_cast<double>(map[i * d + j]) * a[j];
    m[i] = static_cast<float>(s);
  }
  return m;
}

SyntheticData gen_synthetic_with_truth(const SyntheticSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  const std::size_t c = spec.n_classes, d = spec.attr_dim, f = spec.feat_dim;
  SyntheticData out;
  DatasetBundle& b = out.bundle;
  b.feat_dim = f;
  b.attr_dim = d;
  b.attributes.resize(c * d);
  for (auto& v : b.attributes) v = static_cast<float>(rng.uniform());
  const double w_scale = 1.0 / std::sqrt(static_cast<double>(d));
  out.map.resize(f * d);
  for (auto& v : out.map) v = static_cast<float>(rng.normal() * w_scale);
  out.bias.resize(f);
  for (auto& v : out.bias) v = static_cast<float>(rng.normal() * w_scale);

  std::vector<std::uint32_t> perm(c);
  for (std::uint32_t i = 0; i < c; ++i) perm[i] = i;
  shuffle(perm, rng);
  const std::size_t n_seen = spec.seen_count();
  b.seen_classes.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_seen));
  b.unseen_classes.assign(perm.begin() + static_cast<std::ptrdiff_t>(n_seen), perm.end());
  std::sort(b.seen_classes.begin(), b.seen_classes.end());
  std::sort(b.unseen_classes.begin(), b.unseen_classes.end());
  std::vector<bool> is_seen(c, false);
  for (auto s : b.seen_classes) is_seen[s] = true;

  const std::size_t per = spec.samples_per_class;
  const std::size_t n_train = per * 7 / 10;
  b.features.reserve(c * per * f);
  for (std::uint32_t cls = 0; cls < c; ++cls) {
    const auto mean = out.class_mean(cls);
    const std::uint64_t first = b.labels.size();
    for (std::size_t s = 0; s < per; ++s) {
      for (std::size_t i = 0; i < f; ++i) {
        b.features.push_back(static_cast<float>(mean[i] + spec.noise_sigma * rng.normal()));
      }
      b.labels.push_back(cls);
    }
    std::vector<std::uint64_t> idx(per);
    for (std::size_t s = 0; s < per; ++s) idx[s] = first + s;
    if (is_seen[cls]) {
      shuffle(idx, rng);
      std::sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_train));
      std::sort(idx.begin() + static_cast<std::ptrdiff_t>(n_train), idx.end());
      b.train_indices.insert(b.train_indices.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_train));
      b.seen_test_indices.insert(b.seen_test_indices.end(), idx.begin() + static_cast<std::ptrdiff_t>(n_train),
                                 idx.end());
    } else {
      b.unseen_test_indices.insert(b.unseen_test_indices.end(), idx.begin(), idx.end());
    }
  }
  b.validate();
  return out;
}

DatasetBundle gen_synthetic(const SyntheticSpec& spec) { return gen_synthetic_with_truth(spec).bundle; }

}  // namespace zsml
