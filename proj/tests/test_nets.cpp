#include <cmath>

#include "doctest.h"
#include "zsml/error.hpp"
#include "zsml/nets.hpp"

using namespace zsml;

namespace {

Tensor uniform(Rng& rng, Shape shape, double lo, double hi) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  std::vector<float> v(n);
  for (auto& e : v) e = static_cast<float>(rng.uniform(lo, hi));
  return Tensor::from(std::move(shape), std::move(v));
}

std::vector<std::size_t> forward_widths(const NetParams& p) {
  std::vector<std::size_t> w{p.weights.front().rows()};
  for (const auto& t : p.weights) w.push_back(t.cols());
  return w;
}

}  // namespace

TEST_CASE("config validation") {
  NetConfig c;
  c.input_dim = 0;
  CHECK_THROWS_AS(c.validate(), ParameterError);
  c.input_dim = 3;
  c.dropout_p = 1.0f;
  CHECK_THROWS_AS(c.validate(), ParameterError);
  c.dropout_p = 0.5f;
  c.hidden_dims = {0};
  CHECK_THROWS_AS(c.validate(), ParameterError);
  c.hidden_dims = {4};
  CHECK_NOTHROW(c.validate());
}

TEST_CASE("init_params") {
  NetConfig c;
  c.input_dim = 4;
  c.output_dim = 4;
  Rng rng(1);
  NetParams p = init_params(c, rng);
  const float bound = std::sqrt(0.75f);
  for (float w : p.weights[0].data()) {
    CHECK(w >= -bound);
    CHECK(w <= bound);
  }
  for (float b : p.biases[0].data()) CHECK(b == 0.0f);

  Rng r1(99), r2(99);
  CHECK(init_params(c, r1).flat_values() == init_params(c, r2).flat_values());

  SUBCASE("gamma and beta start at identity") {
    NetConfig g = c;
    g.hidden_dims = {6};
    g.use_batchnorm = true;
    NetParams q = init_params(g, rng);
    REQUIRE(q.gammas.size() == 1);
    for (float v : q.gammas[0].data()) CHECK(v == 1.0f);
    for (float v : q.betas[0].data()) CHECK(v == 0.0f);
  }
  SUBCASE("large layer is centred") {
    NetConfig big;
    big.input_dim = 400;
    big.output_dim = 250;
    Rng r(5);
    NetParams q = init_params(big, r);
    double mean = 0.0;
    for (float v : q.weights[0].data()) mean += v;
    mean /= q.weights[0].size();
    CHECK(std::abs(mean) <= 0.005);
  }
}

TEST_CASE("preset shape audit for the published widths") {
  const Architecture arch = Architecture::paper();
  const std::size_t feat = 16, attr = 5, noise = 5, classes = 7, b = 3;
  Rng rng(2);
  NetParams g = init_params(presets::generator(arch, noise, attr, feat), rng);
  NetParams d = init_params(presets::critic(arch, feat, attr), rng);
  NetParams c = init_params(presets::classifier(arch, feat, classes), rng);
  CHECK(forward_widths(g) == std::vector<std::size_t>{noise + attr, 2048, 2048, feat});
  CHECK(forward_widths(d) == std::vector<std::size_t>{feat + attr, 1024, 1024, 512, 1});
  CHECK(forward_widths(c) == std::vector<std::size_t>{feat, 512, 512, classes});
  CHECK(g.gammas.size() == 2);
  CHECK(d.gammas.empty());
  CHECK(c.gammas.empty());
  CHECK(arch.dropout_p == 0.5f);
  CHECK(arch.leaky_slope == 0.2f);

  Tape tape;
  Tensor x = generator_forward(tape, g, uniform(rng, {b, noise}, -1, 1), uniform(rng, {b, attr}, 0, 1), true, rng);
  CHECK(x.shape() == Shape{b, feat});
  CHECK(discriminator_forward(tape, d, x, uniform(rng, {b, attr}, 0, 1), true, rng).shape() == Shape{b, 1});
  CHECK(classifier_forward(tape, c, x, true, rng).shape() == Shape{b, classes});

  NetConfig c2 = presets::eval_softmax(feat, 4);
  CHECK(c2.hidden_dims.empty());
  CHECK(c2.input_dropout);
  CHECK(c2.dropout_p == 0.5f);
}

TEST_CASE("network forward contracts") {
  const Architecture arch = Architecture::compact();
  const std::size_t feat = 6, attr = 3, noise = 3;
  Rng rng(4);
  NetParams g = init_params(presets::generator(arch, noise, attr, feat), rng);
  NetParams d = init_params(presets::critic(arch, feat, attr), rng);
  NetParams c = init_params(presets::classifier(arch, feat, 5), rng);

  SUBCASE("output shapes for several batch sizes") {
    for (std::size_t b : {2u, 5u, 9u}) {
      Tape tape;
      Tensor x = generator_forward(tape, g, uniform(rng, {b, noise}, -1, 1), uniform(rng, {b, attr}, 0, 1), true, rng);
      CHECK(x.shape() == Shape{b, feat});
      CHECK(discriminator_forward(tape, d, x, uniform(rng, {b, attr}, 0, 1), true, rng).shape() == Shape{b, 1});
      Tensor logits = classifier_forward(tape, c, x, true, rng);
      CHECK(logits.shape() == Shape{b, 5});
      const auto p = softmax_rows(logits);
      for (std::size_t i = 0; i < b; ++i) {
        double s = 0.0;
        for (std::size_t k = 0; k < 5; ++k) {
          CHECK(p[i * 5 + k] >= 0.0f);
          s += p[i * 5 + k];
        }
        CHECK(std::abs(s - 1.0) <= 1e-5);
      }
    }
  }
  SUBCASE("evaluation mode is deterministic") {
    Tensor z = uniform(rng, {4, noise}, -1, 1), a = uniform(rng, {4, attr}, 0, 1);
    Tape t1, t2;
    Rng ra(1), rb(2);
    Tensor x1 = generator_forward(t1, g, z, a, false, ra);
    Tensor x2 = generator_forward(t2, g, z, a, false, rb);
    CHECK(std::equal(x1.data().begin(), x1.data().end(), x2.data().begin()));
  }
  SUBCASE("attributes change the generated features") {
    NetConfig plain = presets::generator(arch, noise, attr, feat);
    plain.use_batchnorm = false;  // batch statistics would couple the two rows
    NetParams gp = init_params(plain, rng);
    Tensor z1 = uniform(rng, {1, noise}, -1, 1);
    std::vector<float> zz(z1.data().begin(), z1.data().end());
    zz.insert(zz.end(), z1.data().begin(), z1.data().end());
    Tensor a = uniform(rng, {2, attr}, 0, 1);
    Tape tape;
    Tensor x = generator_forward(tape, gp, Tensor::from({2, noise}, zz), a, false, rng);
    double dist = 0.0;
    for (std::size_t j = 0; j < feat; ++j) dist += (x.at(0, j) - x.at(1, j)) * (x.at(0, j) - x.at(1, j));
    CHECK(dist > 0.0);
  }
  SUBCASE("all-zero critic scores zero") {
    NetParams zero = d.copy(false);
    for (auto t : zero.tensors())
      for (auto& v : t.data()) v = 0.0f;
    Tape tape;
    Tensor s = discriminator_forward(tape, zero, uniform(rng, {3, feat}, -5, 5), uniform(rng, {3, attr}, 0, 1), true, rng);
    for (float v : s.data()) CHECK(v == 0.0f);
  }
  SUBCASE("critic is finite on bounded inputs") {
    Tape tape;
    Tensor s = discriminator_forward(tape, d, uniform(rng, {8, feat}, -10, 10), uniform(rng, {8, attr}, -10, 10), true, rng);
    for (float v : s.data()) CHECK(std::isfinite(v));
  }
  SUBCASE("batch mismatch") {
    Tape tape;
    CHECK_THROWS_AS(generator_forward(tape, g, uniform(rng, {3, noise}, -1, 1), uniform(rng, {2, attr}, 0, 1), true, rng),
                    DimensionError);
    CHECK_THROWS_AS(classifier_forward(tape, c, uniform(rng, {3, feat + 1}, -1, 1), true, rng), DimensionError);
  }
}

TEST_CASE("parameter plumbing") {
  Rng rng(6);
  NetParams g = init_params(presets::generator(Architecture::compact(), 2, 3, 4), rng);
  const auto named = g.named_tensors("g");
  CHECK(named.front().first == "g.0.weight");
  CHECK(named[1].first == "g.0.bias");
  CHECK(named[2].first == "g.0.bn_gamma");
  CHECK(named[3].first == "g.0.bn_beta");

  NetParams copy = g.copy(false);
  CHECK_FALSE(copy.weights[0].same_storage(g.weights[0]));
  CHECK(copy.flat_values() == g.flat_values());

  auto values = g.flat_values();
  for (auto& v : values) v += 1.0f;
  copy.assign_flat(values);
  CHECK(copy.flat_values() == values);
  CHECK_THROWS_AS(copy.assign_flat(std::vector<float>(3)), DimensionError);

  NetParams rebuilt = params_from_named(g.config, "g", named);
  CHECK(rebuilt.flat_values() == g.flat_values());
}
