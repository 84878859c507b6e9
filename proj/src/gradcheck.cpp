#include "zsml/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <utility>

#include "zsml/error.hpp"
#include "zsml/nets.hpp"
#include "zsml/tensor.hpp"

namespace zsml {
namespace {

using Values = std::vector<std::vector<double>>;
/// Branch taken by every LeakyReLU input during one reference pass.
using Kinks = std::vector<bool>;

struct Case {
  std::vector<Tensor> inputs;
  std::function<Tensor(Tape&, const std::vector<Tensor>&)> analytic;
  std::function<double(const Values&, Kinks&)> reference;
};

// ---- double-precision reference path -------------------------------------

struct Mat {
  std::size_t r = 0, c = 0;
  std::vector<double> v;

  Mat(std::size_t rows, std::size_t cols) : r(rows), c(cols), v(rows * cols, 0.0) {}
  Mat(std::size_t rows, std::size_t cols, std::vector<double> values) : r(rows), c(cols), v(std::move(values)) {}
  double& operator()(std::size_t i, std::size_t j) { return v[i * c + j]; }
  double operator()(std::size_t i, std::size_t j) const { return v[i * c + j]; }
};

Mat ref_matmul(const Mat& a, const Mat& b) {
  Mat out(a.r, b.c);
  for (std::size_t i = 0; i < a.r; ++i)
    for (std::size_t k = 0; k < a.c; ++k)
      for (std::size_t j = 0; j < b.c; ++j) out(i, j) += a(i, k) * b(k, j);
  return out;
}

void ref_add_bias(Mat& x, const std::vector<double>& bias) {
  for (std::size_t i = 0; i < x.r; ++i)
    for (std::size_t j = 0; j < x.c; ++j) x(i, j) += bias[j];
}

void ref_leaky(std::vector<double>& x, double slope, Kinks& kinks) {
  for (auto& e : x) {
    kinks.push_back(e >= 0.0);
    if (e < 0.0) e *= slope;
  }
}

void ref_batchnorm(Mat& x, const std::vector<double>& gamma, const std::vector<double>& beta) {
  constexpr double eps = 1e-5;
  for (std::size_t j = 0; j < x.c; ++j) {
    double mu = 0.0, var = 0.0;
    for (std::size_t i = 0; i < x.r; ++i) mu += x(i, j);
    mu /= static_cast<double>(x.r);
    for (std::size_t i = 0; i < x.r; ++i) var += (x(i, j) - mu) * (x(i, j) - mu);
    var /= static_cast<double>(x.r);
    for (std::size_t i = 0; i < x.r; ++i) x(i, j) = gamma[j] * (x(i, j) - mu) / std::sqrt(var + eps) + beta[j];
  }
}

double ref_cross_entropy(const Mat& logits, const std::vector<std::uint32_t>& labels) {
  double total = 0.0;
  for (std::size_t i = 0; i < logits.r; ++i) {
    double mx = logits(i, 0);
    for (std::size_t j = 1; j < logits.c; ++j) mx = std::max(mx, logits(i, j));
    double z = 0.0;
    for (std::size_t j = 0; j < logits.c; ++j) z += std::exp(logits(i, j) - mx);
    total += mx + std::log(z) - logits(i, labels[i]);
  }
  return total / static_cast<double>(logits.r);
}

double ref_dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

/// Forward pass of an MLP whose parameters sit in `v` from index `first` on,
/// in NetParams::tensors() order. Dropout is off.
Mat ref_mlp(const NetConfig& cfg, const Values& v, std::size_t first, Mat x, Kinks& kinks) {
  const auto w = cfg.widths();
  std::size_t at = first;
  for (std::size_t l = 0; l + 1 < w.size(); ++l) {
    const bool hidden = l + 2 < w.size();
    Mat h = ref_matmul(x, Mat(w[l], w[l + 1], v[at++]));
    ref_add_bias(h, v[at++]);
    if (hidden) {
      if (cfg.use_batchnorm) {
        ref_batchnorm(h, v[at], v[at + 1]);
        at += 2;
      }
      ref_leaky(h.v, cfg.leaky_slope, kinks);
    } else if (cfg.output_activation == OutputActivation::kLeaky) {
      ref_leaky(h.v, cfg.leaky_slope, kinks);
    }
    x = std::move(h);
  }
  return x;
}

Mat ref_concat(const Mat& a, const Mat& b) {
  Mat out(a.r, a.c + b.c);
  for (std::size_t i = 0; i < a.r; ++i) {
    for (std::size_t j = 0; j < a.c; ++j) out(i, j) = a(i, j);
    for (std::size_t j = 0; j < b.c; ++j) out(i, a.c + j) = b(i, j);
  }
  return out;
}

// ---- case construction ---------------------------------------------------

std::size_t pick(Rng& rng, std::size_t lo, std::size_t hi) { return lo + rng.index(hi - lo + 1); }

Tensor random_tensor(Rng& rng, Shape shape, double lo = -1.0, double hi = 1.0, bool requires_grad = true) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  std::vector<float> v(n);
  for (auto& e : v) e = static_cast<float>(rng.uniform(lo, hi));
  return Tensor::from(std::move(shape), std::move(v), requires_grad);
}

/// Entries bounded away from zero so a ±step perturbation cannot cross a kink.
Tensor nonzero_tensor(Rng& rng, Shape shape) {
  Tensor t = random_tensor(rng, std::move(shape));
  for (auto& e : t.data()) e = e < 0.0f ? e - 0.1f : e + 0.1f;
  return t;
}

std::vector<double> as_double(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

/// sum(out * r): turns any tensor into a scalar whose gradient is r.
Tensor project(Tape& tape, const Tensor& out, const Tensor& r) { return ops::sum(tape, ops::mul(tape, out, r)); }

Case binary_case(Rng& rng, const std::string& which) {
  const std::size_t m = pick(rng, 1, 5), n = pick(rng, 1, 5);
  Tensor r = random_tensor(rng, {m, n}, -1.0, 1.0, false);
  Case c;
  c.inputs = {random_tensor(rng, {m, n}), random_tensor(rng, {m, n})};
  c.analytic = [which, r](Tape& tape, const std::vector<Tensor>& in) {
    Tensor out = which == "add" ? ops::add(tape, in[0], in[1])
                 : which == "sub" ? ops::sub(tape, in[0], in[1])
                                  : ops::mul(tape, in[0], in[1]);
    return project(tape, out, r);
  };
  c.reference = [which, rv = as_double(r)](const Values& v, Kinks&) {
    std::vector<double> out(rv.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
      out[i] = which == "add" ? v[0][i] + v[1][i] : which == "sub" ? v[0][i] - v[1][i] : v[0][i] * v[1][i];
    }
    return ref_dot(out, rv);
  };
  return c;
}

Case matmul_case(Rng& rng) {
  const std::size_t m = pick(rng, 1, 6), k = pick(rng, 1, 6), n = pick(rng, 1, 6);
  Tensor r = random_tensor(rng, {m, n}, -1.0, 1.0, false);
  Case c;
  c.inputs = {random_tensor(rng, {m, k}), random_tensor(rng, {k, n})};
  c.analytic = [r](Tape& tape, const std::vector<Tensor>& in) { return project(tape, ops::matmul(tape, in[0], in[1]), r); };
  c.reference = [m, k, n, rv = as_double(r)](const Values& v, Kinks&) {
    return ref_dot(ref_matmul(Mat(m, k, v[0]), Mat(k, n, v[1])).v, rv);
  };
  return c;
}

Case add_bias_case(Rng& rng) {
  const std::size_t m = pick(rng, 1, 6), n = pick(rng, 1, 6);
  Tensor r = random_tensor(rng, {m, n}, -1.0, 1.0, false);
  Case c;
  c.inputs = {random_tensor(rng, {m, n}), random_tensor(rng, {n})};
  c.analytic = [r](Tape& tape, const std::vector<Tensor>& in) { return project(tape, ops::add_bias(tape, in[0], in[1]), r); };
  c.reference = [m, n, rv = as_double(r)](const Values& v, Kinks&) {
    Mat x(m, n, v[0]);
    ref_add_bias(x, v[1]);
    return ref_dot(x.v, rv);
  };
  return c;
}

Case concat_case(Rng& rng) {
  const std::size_t m = pick(rng, 1, 5), p = pick(rng, 1, 4), q = pick(rng, 1, 4);
  Tensor r = random_tensor(rng, {m, p + q}, -1.0, 1.0, false);
  Case c;
  c.inputs = {random_tensor(rng, {m, p}), random_tensor(rng, {m, q})};
  c.analytic = [r](Tape& tape, const std::vector<Tensor>& in) {
    return project(tape, ops::concat_cols(tape, in[0], in[1]), r);
  };
  c.reference = [m, p, q, rv = as_double(r)](const Values& v, Kinks&) {
    return ref_dot(ref_concat(Mat(m, p, v[0]), Mat(m, q, v[1])).v, rv);
  };
  return c;
}

Case scale_case(Rng& rng) {
  const std::size_t m = pick(rng, 1, 5), n = pick(rng, 1, 5);
  const float factor = static_cast<float>(rng.uniform(-3.0, 3.0));
  Tensor r = random_tensor(rng, {m, n}, -1.0, 1.0, false);
  Case c;
  c.inputs = {random_tensor(rng, {m, n})};
  c.analytic = [r, factor](Tape& tape, const std::vector<Tensor>& in) {
    return project(tape, ops::scale(tape, in[0], factor), r);
  };
  c.reference = [factor, rv = as_double(r)](const Values& v, Kinks&) {
    std::vector<double> out = v[0];
    for (auto& e : out) e *= factor;
    return ref_dot(out, rv);
  };
  return c;
}

Case reduce_case(Rng& rng, bool mean) {
  const std::size_t m = pick(rng, 1, 6), n = pick(rng, 1, 6);
  Case c;
  c.inputs = {random_tensor(rng, {m, n})};
  c.analytic = [mean](Tape& tape, const std::vector<Tensor>& in) {
    return mean ? ops::mean(tape, in[0]) : ops::sum(tape, in[0]);
  };
  c.reference = [mean](const Values& v, Kinks&) {
    double s = 0.0;
    for (double e : v[0]) s += e;
    return mean ? s / static_cast<double>(v[0].size()) : s;
  };
  return c;
}

Case leaky_case(Rng& rng) {
  const std::size_t m = pick(rng, 1, 5), n = pick(rng, 1, 5);
  const float slope = static_cast<float>(rng.uniform(0.05, 0.95));
  Tensor r = random_tensor(rng, {m, n}, -1.0, 1.0, false);
  Case c;
  c.inputs = {random_tensor(rng, {m, n})};
  c.analytic = [r, slope](Tape& tape, const std::vector<Tensor>& in) {
    return project(tape, ops::leaky_relu(tape, in[0], slope), r);
  };
  c.reference = [slope, rv = as_double(r)](const Values& v, Kinks& k) {
    std::vector<double> out = v[0];
    ref_leaky(out, slope, k);
    return ref_dot(out, rv);
  };
  return c;
}

Case dropout_case(Rng& rng, bool training) {
  const std::size_t m = pick(rng, 1, 6), n = pick(rng, 1, 6);
  const float p = static_cast<float>(rng.uniform(0.1, 0.7));
  const std::uint64_t mask_seed = rng.next_u64();
  Tensor r = random_tensor(rng, {m, n}, -1.0, 1.0, false);
  Case c;
  c.inputs = {nonzero_tensor(rng, {m, n})};
  // The mask is a constant of the function under test; read it off one draw.
  std::vector<double> mask(m * n, 1.0);
  if (training) {
    Tape scratch;
    Rng mask_rng(mask_seed);
    const Tensor y = ops::dropout(scratch, c.inputs[0].detach(), p, true, mask_rng);
    for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = y[i] == 0.0f ? 0.0 : 1.0 / (1.0 - p);
  }
  c.analytic = [r, p, training, mask_seed](Tape& tape, const std::vector<Tensor>& in) {
    Rng mask_rng(mask_seed);
    return project(tape, ops::dropout(tape, in[0], p, training, mask_rng), r);
  };
  c.reference = [mask, rv = as_double(r)](const Values& v, Kinks&) {
    std::vector<double> out = v[0];
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= mask[i];
    return ref_dot(out, rv);
  };
  return c;
}

Case batchnorm_case(Rng& rng) {
  const std::size_t b = pick(rng, 2, 6), f = pick(rng, 1, 5);
  Tensor r = random_tensor(rng, {b, f}, -1.0, 1.0, false);
  Case c;
  c.inputs = {random_tensor(rng, {b, f}, -2.0, 2.0), random_tensor(rng, {f}, 0.5, 1.5), random_tensor(rng, {f})};
  c.analytic = [r](Tape& tape, const std::vector<Tensor>& in) {
    return project(tape, ops::batchnorm(tape, in[0], in[1], in[2]), r);
  };
  c.reference = [b, f, rv = as_double(r)](const Values& v, Kinks&) {
    Mat x(b, f, v[0]);
    ref_batchnorm(x, v[1], v[2]);
    return ref_dot(x.v, rv);
  };
  return c;
}

std::vector<std::uint32_t> random_labels(Rng& rng, std::size_t n, std::size_t k) {
  std::vector<std::uint32_t> labels(n);
  for (auto& l : labels) l = static_cast<std::uint32_t>(rng.index(k));
  return labels;
}

Case cross_entropy_case(Rng& rng) {
  const std::size_t b = pick(rng, 1, 6), k = pick(rng, 2, 6);
  const auto labels = random_labels(rng, b, k);
  Case c;
  c.inputs = {random_tensor(rng, {b, k}, -3.0, 3.0)};
  c.analytic = [labels](Tape& tape, const std::vector<Tensor>& in) {
    return ops::softmax_cross_entropy(tape, in[0], labels);
  };
  c.reference = [b, k, labels](const Values& v, Kinks&) { return ref_cross_entropy(Mat(b, k, v[0]), labels); };
  return c;
}

Architecture random_architecture(Rng& rng) {
  auto hidden = [&rng] {
    std::vector<std::size_t> h(pick(rng, 1, 2));
    for (auto& w : h) w = pick(rng, 2, 6);
    return h;
  };
  Architecture a;
  a.generator_hidden = hidden();
  a.critic_hidden = hidden();
  a.classifier_hidden = hidden();
  a.leaky_slope = static_cast<float>(rng.uniform(0.05, 0.5));
  a.dropout_p = 0.0f;
  a.generator_batchnorm = true;
  return a;
}

/// Network inputs first, then every parameter tensor of `params`.
std::vector<Tensor> with_params(std::vector<Tensor> inputs, const NetParams& params) {
  for (const auto& t : params.tensors()) inputs.push_back(t);
  return inputs;
}

Case generator_case(Rng& rng) {
  const Architecture arch = random_architecture(rng);
  const std::size_t b = pick(rng, 2, 5), k = pick(rng, 1, 4), d = pick(rng, 1, 4), f = pick(rng, 1, 5);
  const NetParams g = init_params(presets::generator(arch, k, d, f), rng);
  Tensor r = random_tensor(rng, {b, f}, -1.0, 1.0, false);
  Case c;
  c.inputs = with_params({random_tensor(rng, {b, k}), random_tensor(rng, {b, d})}, g);
  c.analytic = [g, r](Tape& tape, const std::vector<Tensor>& in) {
    Rng unused(0);
    return project(tape, generator_forward(tape, g, in[0], in[1], true, unused), r);
  };
  c.reference = [cfg = g.config, b, k, d, rv = as_double(r)](const Values& v, Kinks& kinks) {
    return ref_dot(ref_mlp(cfg, v, 2, ref_concat(Mat(b, k, v[0]), Mat(b, d, v[1])), kinks).v, rv);
  };
  return c;
}

Case critic_case(Rng& rng) {
  const Architecture arch = random_architecture(rng);
  const std::size_t b = pick(rng, 1, 5), f = pick(rng, 1, 5), d = pick(rng, 1, 4);
  const NetParams net = init_params(presets::critic(arch, f, d), rng);
  Tensor r = random_tensor(rng, {b, 1}, -1.0, 1.0, false);
  Case c;
  c.inputs = with_params({random_tensor(rng, {b, f}), random_tensor(rng, {b, d})}, net);
  c.analytic = [net, r](Tape& tape, const std::vector<Tensor>& in) {
    Rng unused(0);
    return project(tape, discriminator_forward(tape, net, in[0], in[1], true, unused), r);
  };
  c.reference = [cfg = net.config, b, f, d, rv = as_double(r)](const Values& v, Kinks& kinks) {
    return ref_dot(ref_mlp(cfg, v, 2, ref_concat(Mat(b, f, v[0]), Mat(b, d, v[1])), kinks).v, rv);
  };
  return c;
}

Case classifier_case(Rng& rng) {
  const Architecture arch = random_architecture(rng);
  const std::size_t b = pick(rng, 1, 5), f = pick(rng, 1, 5), k = pick(rng, 2, 5);
  const NetParams net = init_params(presets::classifier(arch, f, k), rng);
  const auto labels = random_labels(rng, b, k);
  Case c;
  c.inputs = with_params({random_tensor(rng, {b, f})}, net);
  c.analytic = [net, labels](Tape& tape, const std::vector<Tensor>& in) {
    Rng unused(0);
    return ops::softmax_cross_entropy(tape, classifier_forward(tape, net, in[0], true, unused), labels);
  };
  c.reference = [cfg = net.config, b, f, labels](const Values& v, Kinks& kinks) {
    return ref_cross_entropy(ref_mlp(cfg, v, 1, Mat(b, f, v[0]), kinks), labels);
  };
  return c;
}

/// scale() with a backward rule that is off by 10%.
Tensor corrupted_scale(Tape& tape, const Tensor& x, float factor) {
  std::vector<float> out(x.data().begin(), x.data().end());
  for (auto& e : out) e *= factor;
  Tensor y = make_result(x.shape(), std::move(out), x.tracked());
  if (x.tracked()) {
    tape.record("corrupted_scale", {x}, y, [x = Tensor(x), y, factor]() mutable {
      const auto gy = std::as_const(y).grad();
      for (std::size_t i = 0; i < gy.size(); ++i) x.grad()[i] += 1.1f * factor * gy[i];
    });
  }
  return y;
}

Case fault_case(Rng& rng) {
  const std::size_t m = pick(rng, 1, 5), n = pick(rng, 1, 5);
  const float factor = static_cast<float>(rng.uniform(0.5, 3.0));
  Tensor r = random_tensor(rng, {m, n}, -1.0, 1.0, false);
  Case c;
  c.inputs = {random_tensor(rng, {m, n})};
  c.analytic = [r, factor](Tape& tape, const std::vector<Tensor>& in) {
    return project(tape, corrupted_scale(tape, in[0], factor), r);
  };
  c.reference = [factor, rv = as_double(r)](const Values& v, Kinks&) {
    std::vector<double> out = v[0];
    for (auto& e : out) e *= factor;
    return ref_dot(out, rv);
  };
  return c;
}

// ---- comparison ----------------------------------------------------------

/// Gradients below this magnitude are compared on an absolute scale.
constexpr double kRelativeFloor = 1e-2;

double rel_error(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), kRelativeFloor}); }

void check_case(Case& c, const GradCheckOptions& opt, GradCheckRow& row) {
  for (auto& t : c.inputs) t.clear_grad();
  Tape tape;
  const Tensor loss = c.analytic(tape, c.inputs);
  tape.backward(loss);

  Values base;
  for (const auto& t : c.inputs) base.push_back(as_double(t));
  Kinks k0;
  const double f0 = c.reference(base, k0);
  // The two forward passes must agree before their gradients are compared.
  row.max_rel_error = std::max(row.max_rel_error, rel_error(loss.item(), f0));

  const double h = opt.step;
  for (std::size_t i = 0; i < c.inputs.size(); ++i) {
    const Tensor& t = c.inputs[i];
    for (std::size_t j = 0; j < t.size(); ++j) {
      Values p = base;
      Kinks kp, km;
      p[i][j] = base[i][j] + h;
      const double fp = c.reference(p, kp);
      p[i][j] = base[i][j] - h;
      const double fm = c.reference(p, km);
      if (kp != k0 || km != k0) {
        ++row.skipped;
        continue;
      }
      const double numeric = (fp - fm) / (2.0 * h);
      const double analytic = t.has_grad() ? t.grad()[j] : 0.0;
      row.max_rel_error = std::max(row.max_rel_error, rel_error(analytic, numeric));
      ++row.coordinates;
    }
  }
  ++row.configs;
}

}  // namespace

std::vector<GradCheckRow> run_gradcheck(const GradCheckOptions& options) {
  if (options.configs == 0) throw ParameterError("gradcheck: configs must be >= 1");
  if (!(options.step > 0.0) || !(options.tolerance > 0.0)) throw ParameterError("gradcheck: step and tolerance must be > 0");

  using Maker = std::function<Case(Rng&)>;
  std::vector<std::pair<std::string, Maker>> suite = {
      {"matmul", matmul_case},
      {"add_bias", add_bias_case},
      {"concat_cols", concat_case},
      {"add", [](Rng& r) { return binary_case(r, "add"); }},
      {"sub", [](Rng& r) { return binary_case(r, "sub"); }},
      {"mul", [](Rng& r) { return binary_case(r, "mul"); }},
      {"scale", scale_case},
      {"sum", [](Rng& r) { return reduce_case(r, false); }},
      {"mean", [](Rng& r) { return reduce_case(r, true); }},
      {"leaky_relu", leaky_case},
      {"dropout (train)", [](Rng& r) { return dropout_case(r, true); }},
      {"dropout (eval)", [](Rng& r) { return dropout_case(r, false); }},
      {"batchnorm", batchnorm_case},
      {"softmax_cross_entropy", cross_entropy_case},
      {"generator", generator_case},
      {"critic", critic_case},
      {"classifier", classifier_case},
  };
  if (options.inject_fault) suite.emplace_back("scale (corrupted backward)", fault_case);

  std::vector<GradCheckRow> rows;
  Rng master(options.seed);
  for (auto& [name, make] : suite) {
    GradCheckRow row;
    row.name = name;
    Rng rng = master.split();
    for (std::size_t k = 0; k < options.configs; ++k) {
      Case c = make(rng);
      check_case(c, options, row);
    }
    row.passed = row.coordinates > 0 && row.max_rel_error <= options.tolerance;
    rows.push_back(std::move(row));
  }
  return rows;
}

bool all_passed(const std::vector<GradCheckRow>& rows) {
  return !rows.empty() && std::all_of(rows.begin(), rows.end(), [](const GradCheckRow& r) { return r.passed; });
}

std::string to_json(const std::vector<GradCheckRow>& rows, double tolerance) {
  std::string out;
  char buf[512];
  std::snprintf(buf, sizeof buf, R"({"tolerance":%.9g,"passed":%s,"checks":[)", tolerance,
                all_passed(rows) ? "true" : "false");
  out += buf;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& r = rows[i];
    std::snprintf(buf, sizeof buf,
                  R"(%s{"name":"%s","configs":%zu,"coordinates":%zu,"skipped":%zu,"max_rel_error":%.9g,"passed":%s})",
                  i ? "," : "", r.name.c_str(), r.configs, r.coordinates, r.skipped, r.max_rel_error,
                  r.passed ? "true" : "false");
    out += buf;
  }
  out += "]}";
  return out;
}

}  // namespace zsml
