#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <set>

#include "doctest.h"
#include "zsml/dataset.hpp"
#include "zsml/error.hpp"

using namespace zsml;

namespace {

SyntheticSpec forty_seen() {
  SyntheticSpec s;
  s.n_classes = 50;
  s.seen_fraction = 0.8f;
  s.samples_per_class = 20;
  s.feat_dim = 6;
  s.attr_dim = 4;
  return s;
}

std::map<std::uint32_t, std::size_t> train_counts(const DatasetBundle& b) {
  std::map<std::uint32_t, std::size_t> m;
  for (auto i : b.train_indices) ++m[b.labels[i]];
  return m;
}

void put_u32(std::vector<std::uint8_t>& bytes, std::size_t at, std::uint32_t v) {
  for (int k = 0; k < 4; ++k) bytes[at + k] = static_cast<std::uint8_t>(v >> (8 * k));
}

}  // namespace

TEST_CASE("synthetic benchmark counts") {
  const DatasetBundle b = gen_synthetic(SyntheticSpec{});
  const BundleSummary s = summarize(b);
  CHECK(s.n_classes == 20);
  CHECK(s.n_seen == 15);
  CHECK(s.n_unseen == 5);
  CHECK(s.n_train == 1050);
  CHECK(s.n_seen_test == 450);
  CHECK(s.n_unseen_test == 500);
  CHECK(s.feat_dim == 32);
  CHECK(s.attr_dim == 8);
  CHECK_NOTHROW(b.validate());
  for (float a : b.attributes) {
    CHECK(a >= 0.0f);
    CHECK(a <= 1.0f);
  }
}

TEST_CASE("synthetic determinism") {
  SyntheticSpec s;
  s.seed = 17;
  CHECK(checksum(gen_synthetic(s)) == checksum(gen_synthetic(s)));
  SyntheticSpec t = s;
  t.seed = 18;
  CHECK(checksum(gen_synthetic(s)) != checksum(gen_synthetic(t)));
}

TEST_CASE("noiseless synthetic samples sit on the class mean") {
  SyntheticSpec s;
  s.noise_sigma = 0.0f;
  s.samples_per_class = 5;
  const SyntheticData d = gen_synthetic_with_truth(s);
  for (std::size_t i = 0; i < d.bundle.size(); ++i) {
    const auto mean = d.class_mean(d.bundle.labels[i]);
    for (std::size_t j = 0; j < s.feat_dim; ++j) CHECK(d.bundle.feature_row(i)[j] == mean[j]);
  }
}

TEST_CASE("true-map nearest-mean oracle solves the default benchmark") {
  const SyntheticData d = gen_synthetic_with_truth(SyntheticSpec{});
  const DatasetBundle& b = d.bundle;
  std::map<std::uint32_t, std::vector<float>> means;
  for (auto c : b.unseen_classes) means[c] = d.class_mean(c);
  std::map<std::uint32_t, std::pair<std::size_t, std::size_t>> hits;  // class -> (correct, total)
  for (auto i : b.unseen_test_indices) {
    std::uint32_t best = 0;
    double best_d = INFINITY;
    for (const auto& [c, m] : means) {
      double dist = 0.0;
      for (std::size_t j = 0; j < b.feat_dim; ++j) dist += std::pow(b.feature_row(i)[j] - m[j], 2);
      if (dist < best_d) best_d = dist, best = c;
    }
    hits[b.labels[i]].first += best == b.labels[i];
    ++hits[b.labels[i]].second;
  }
  double acc = 0.0;
  for (const auto& [c, h] : hits) acc += static_cast<double>(h.first) / h.second;
  acc /= hits.size();
  CHECK(acc >= 0.99);
}

TEST_CASE("synthetic spec validation") {
  SyntheticSpec s;
  s.n_classes = 3;
  CHECK_THROWS_AS(s.validate(), ParameterError);
  CHECK_THROWS_WITH_AS(gen_synthetic(s), doctest::Contains("4"), ParameterError);
  s = SyntheticSpec{};
  s.seen_fraction = 1.0f;
  CHECK_THROWS_AS(gen_synthetic(s), ParameterError);
  s.seen_fraction = 0.95f;  // leaves a single unseen class
  CHECK_THROWS_AS(gen_synthetic(s), ParameterError);
}

TEST_CASE("ZSB1 round trip") {
  const DatasetBundle b = gen_synthetic(SyntheticSpec{});
  const auto bytes = encode_zsb(b);
  CHECK(std::string(bytes.begin(), bytes.begin() + 4) == "ZSB1");
  const DatasetBundle back = decode_zsb(bytes);
  CHECK(back == b);
  CHECK(encode_zsb(back) == bytes);

  const auto path = std::filesystem::temp_directory_path() / "zsml_test_roundtrip.zsb";
  save_zsb(b, path);
  CHECK(checksum(load_zsb(path)) == checksum(b));
  std::filesystem::remove(path);
}

TEST_CASE("ZSB1 rejects malformed bytes") {
  SyntheticSpec s;
  s.samples_per_class = 4;
  const DatasetBundle b = gen_synthetic(s);
  const auto bytes = encode_zsb(b);

  SUBCASE("bad magic") {
    auto bad = bytes;
    bad[0] = 'X';
    CHECK_THROWS_AS(decode_zsb(bad), FormatError);
  }
  SUBCASE("bad version") {
    auto bad = bytes;
    put_u32(bad, 4, 2);
    CHECK_THROWS_AS(decode_zsb(bad), FormatError);
  }
  SUBCASE("every truncation is a format error") {
    for (std::size_t n = 0; n < bytes.size(); n += 7) {
      std::vector<std::uint8_t> cut(bytes.begin(), bytes.begin() + static_cast<std::ptrdiff_t>(n));
      CHECK_THROWS_AS(decode_zsb(cut), FormatError);
    }
  }
  SUBCASE("trailing garbage") {
    auto bad = bytes;
    bad.push_back(0);
    CHECK_THROWS_AS(decode_zsb(bad), FormatError);
  }
  SUBCASE("overlapping seen and unseen lists") {
    DatasetBundle c = b;
    c.unseen_classes.push_back(c.seen_classes.front());
    try {
      decode_zsb(encode_zsb(c));
      FAIL("expected an integrity error");
    } catch (const IntegrityError& e) {
      CHECK(std::string(e.what()).find("seen") != std::string::npos);
    }
  }
  SUBCASE("random byte corruption never crashes") {
    Rng rng(3);
    for (int trial = 0; trial < 300; ++trial) {
      auto bad = bytes;
      for (int k = 0; k < 3; ++k) bad[rng.index(bad.size())] ^= static_cast<std::uint8_t>(1 + rng.index(255));
      try {
        decode_zsb(bad).validate();
      } catch (const Error&) {
        // Any library error is acceptable; crashes and foreign exceptions are not.
      }
    }
  }
}

TEST_CASE("bundle invariants") {
  SyntheticSpec s;
  s.samples_per_class = 4;
  const DatasetBundle b = gen_synthetic(s);
  SUBCASE("train index with an unseen label") {
    DatasetBundle c = b;
    c.train_indices.push_back(c.unseen_test_indices.front());
    CHECK_THROWS_AS(c.validate(), IntegrityError);
  }
  SUBCASE("index lists must be disjoint") {
    DatasetBundle c = b;
    c.seen_test_indices.push_back(c.train_indices.front());
    CHECK_THROWS_AS(c.validate(), IntegrityError);
  }
  SUBCASE("labels need attribute rows") {
    DatasetBundle c = b;
    c.labels[0] = static_cast<std::uint32_t>(c.n_classes());
    CHECK_THROWS_AS(c.validate(), IntegrityError);
  }
  SUBCASE("every label belongs to seen or unseen") {
    DatasetBundle c = b;
    const auto dropped = c.unseen_classes.back();
    c.unseen_classes.pop_back();
    std::erase_if(c.unseen_test_indices, [&](std::uint64_t i) { return c.labels[i] == dropped; });
    CHECK_THROWS_AS(c.validate(), IntegrityError);
  }
}

TEST_CASE("few-shot subsampling") {
  const DatasetBundle b = gen_synthetic(forty_seen());
  REQUIRE(b.seen_classes.size() == 40);
  Rng rng(1);

  const DatasetBundle five = fewshot_subsample(b, 5, rng);
  CHECK(five.train_indices.size() == 200);
  for (const auto& [c, n] : train_counts(five)) CHECK(n == 5);

  const DatasetBundle ten = fewshot_subsample(b, 10, rng);
  CHECK(ten.train_indices.size() == 400);
  for (const auto& [c, n] : train_counts(ten)) CHECK(n == 10);

  for (const auto* sub : {&five, &ten}) {
    CHECK_NOTHROW(sub->validate());
    CHECK(sub->seen_test_indices == b.seen_test_indices);
    CHECK(sub->unseen_test_indices == b.unseen_test_indices);
    CHECK(sub->features == b.features);
    for (auto i : sub->train_indices) {
      CHECK(std::find(b.train_indices.begin(), b.train_indices.end(), i) != b.train_indices.end());
    }
  }

  const DatasetBundle all = fewshot_subsample(b, 1000, rng);
  std::multiset<std::uint64_t> before(b.train_indices.begin(), b.train_indices.end());
  std::multiset<std::uint64_t> after(all.train_indices.begin(), all.train_indices.end());
  CHECK(before == after);

  CHECK_THROWS_AS(fewshot_subsample(b, 0, rng), ParameterError);

  Rng r1(9), r2(9);
  CHECK(fewshot_subsample(b, 3, r1) == fewshot_subsample(b, 3, r2));
}

TEST_CASE("few-shot subsampling preserves invariants across sizes") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    SyntheticSpec s;
    s.seed = seed;
    s.n_classes = 4 + seed;
    s.samples_per_class = 3 + seed % 4;
    s.seen_fraction = 0.5f;
    const DatasetBundle b = gen_synthetic(s);
    Rng rng(seed);
    for (std::size_t k = 1; k <= 4; ++k) {
      const DatasetBundle sub = fewshot_subsample(b, k, rng);
      CHECK_NOTHROW(sub.validate());
      for (const auto& [c, n] : train_counts(sub)) CHECK(n <= k);
      CHECK(sub.unseen_test_indices == b.unseen_test_indices);
    }
  }
}

TEST_CASE("attribute min-max scaling") {
  DatasetBundle b = gen_synthetic(SyntheticSpec{});
  for (auto& a : b.attributes) a = a * 4.0f - 1.0f;
  const DatasetBundle s = minmax_scale_attributes(b);
  for (std::size_t j = 0; j < b.attr_dim; ++j) {
    float lo = 1e9f, hi = -1e9f;
    for (std::size_t c = 0; c < s.n_classes(); ++c) {
      lo = std::min(lo, s.attribute_row(c)[j]);
      hi = std::max(hi, s.attribute_row(c)[j]);
    }
    CHECK(lo == doctest::Approx(0.0));
    CHECK(hi == doctest::Approx(1.0));
  }
  CHECK(s.features == b.features);
}
