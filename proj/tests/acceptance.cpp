// Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any fails.

#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>
#include <string>

#include "zsml/checkpoint.hpp"
#include "zsml/downstream.hpp"
#include "zsml/error.hpp"
#include "zsml/gradcheck.hpp"
#include "zsml/trainer.hpp"

namespace fs = std::filesystem;
using namespace zsml;

namespace {

struct Outcome {
  bool passed = false;
  std::string detail;
};

int failures = 0;

void report(int id, const char* title, const std::function<Outcome()>& body) {
  const auto start = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  std::printf("[%s] %2d %s: %s (%.1fs)\n", o.passed ? "PASS" : "FAIL", id, title, o.detail.c_str(), secs);
  std::fflush(stdout);
  failures += !o.passed;
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

EpisodeSpec synthetic_episodes(EpisodeMode mode) { return EpisodeSpec{5, 5, 5, 3, mode, 10}; }

// --- 1 ----------------------------------------------------------------------

Outcome harmonic_rows() {
  struct Row {
    double u, s, h, tol;
  };
  const Row rows[] = {{57.4, 71.1, 63.5, 0.05}, {58.9, 74.6, 65.8, 0.05}, {60.0, 52.1, 55.7, 0.05}, {36.3, 46.6, 40.9, 0.15}};
  bool ok = true;
  std::string d;
  for (const auto& r : rows) {
    const double h = harmonic_mean(r.u, r.s);
    ok &= std::abs(h - r.h) <= r.tol;
    d += fmt("%s(%.1f,%.1f)->%.3f", d.empty() ? "" : " ", r.u, r.s, h);
  }
  return {ok, d};
}

// --- 2 ----------------------------------------------------------------------

Outcome fewshot_count() {
  SyntheticSpec s;
  s.n_classes = 50;
  s.seen_fraction = 0.8f;
  s.samples_per_class = 20;
  const DatasetBundle b = gen_synthetic(s);
  Rng rng(0);
  const DatasetBundle five = fewshot_subsample(b, 5, rng);
  return {b.seen_classes.size() == 40 && five.train_indices.size() == 200,
          fmt("%zu seen classes, k=5 keeps %zu train samples", b.seen_classes.size(), five.train_indices.size())};
}

// --- 3 ----------------------------------------------------------------------

Outcome gradient_suite() {
  const auto start = std::chrono::steady_clock::now();
  GradCheckOptions opt;
  opt.configs = 20;
  const auto rows = run_gradcheck(opt);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  double worst = 0.0;
  std::string worst_name;
  bool ok = !rows.empty();
  for (const auto& r : rows) {
    ok &= r.passed && r.configs >= 20 && r.max_rel_error <= 1e-3;
    if (r.max_rel_error >= worst) worst = r.max_rel_error, worst_name = r.name;
  }
  ok &= secs < 60.0;
  return {ok, fmt("%zu checks, worst max_rel_error %.2e (%s), %.1fs", rows.size(), worst, worst_name.c_str(), secs)};
}

// --- 4 ----------------------------------------------------------------------

Outcome episode_disjointness() {
  const auto start = std::chrono::steady_clock::now();
  std::size_t zsml_count = 0, maml_count = 0, bad = 0;
  for (std::size_t n_seen : {10u, 15u, 20u, 30u, 40u}) {
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
      SyntheticSpec s;
      s.n_classes = n_seen + 5;
      s.seen_fraction = static_cast<float>(n_seen) / static_cast<float>(s.n_classes);
      s.samples_per_class = 12;
      s.feat_dim = 4;
      s.attr_dim = 3;
      s.seed = seed;
      const DatasetBundle d = gen_synthetic(s);
      const std::size_t way = std::min<std::size_t>(5, n_seen / 2);
      for (auto mode : {EpisodeMode::kZsml, EpisodeMode::kMaml}) {
        const EpisodeSampler sampler(d, EpisodeSpec{way, 3, way, 2, mode, 1});
        Rng rng(seed * 7 + n_seen);
        for (int i = 0; i < 40; ++i) {
          const TaskEpisode e = sampler.sample(rng);
          const std::set<std::uint32_t> tr(e.train_classes.begin(), e.train_classes.end());
          const std::set<std::uint32_t> va(e.val_classes.begin(), e.val_classes.end());
          if (mode == EpisodeMode::kZsml) {
            ++zsml_count;
            for (auto c : va) bad += tr.count(c);
          } else {
            ++maml_count;
            bad += tr != va;
          }
        }
      }
    }
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return {bad == 0 && zsml_count == 10000 && secs < 30.0,
          fmt("%zu zsml + %zu maml episodes, %zu violations, %.1fs", zsml_count, maml_count, bad, secs)};
}

// --- 5 ----------------------------------------------------------------------

Outcome fomaml_degeneracy() {
  const DatasetBundle data = gen_synthetic(SyntheticSpec{});
  ModelState s = init_model(ModelDims::for_dataset(data), Architecture::compact(), 0);
  HyperParams hp = HyperParams::synthetic();
  hp.inner_lr_d = hp.inner_lr_gc = 0.0f;
  clip_weights(s.d, hp.clip_c);
  Rng sampler(1);
  const auto episodes = sample_task_batch(data, synthetic_episodes(EpisodeMode::kZsml), sampler);

  // Direct implementation: gradients of the validation losses at the base
  // parameters, with each episode's stream advanced past its train phase.
  std::vector<float> sum_d, sum_g, sum_c;
  Rng replica = s.rng;
  for (const auto& e : episodes) {
    Rng r = replica.split();
    const TaskBatch train = make_batch(data, e.train_classes, e.train_items);
    const TaskBatch val = make_batch(data, e.val_classes, e.val_items);
    adapt(s.d, s.g, s.c, std::span(&train, 1), hp, r);
    const auto cg = critic_gradient(s.d, s.g, val, hp.train_noise_std, r);
    const auto gg = gen_cls_gradient(s.d, s.g, s.c, val, hp.train_noise_std, r);
    sum_d.resize(cg.d.size());
    sum_g.resize(gg.g.size());
    sum_c.resize(gg.c.size());
    for (std::size_t i = 0; i < cg.d.size(); ++i) sum_d[i] += cg.d[i];
    for (std::size_t i = 0; i < gg.g.size(); ++i) sum_g[i] += gg.g[i];
    for (std::size_t i = 0; i < gg.c.size(); ++i) sum_c[i] += gg.c[i];
  }
  auto expect_d = s.d.flat_values(), expect_g = s.g.flat_values(), expect_c = s.c.flat_values();
  for (std::size_t i = 0; i < expect_d.size(); ++i)
    expect_d[i] = std::clamp(expect_d[i] + hp.meta_lr_d * sum_d[i], -hp.clip_c, hp.clip_c);
  for (std::size_t i = 0; i < expect_g.size(); ++i) expect_g[i] -= hp.meta_lr_gc * sum_g[i];
  for (std::size_t i = 0; i < expect_c.size(); ++i) expect_c[i] -= hp.meta_lr_gc * sum_c[i];

  meta_update(s, data, episodes, hp);
  double worst = 0.0;
  auto compare = [&](const std::vector<float>& got, const std::vector<float>& want) {
    for (std::size_t i = 0; i < got.size(); ++i) worst = std::max(worst, std::abs(static_cast<double>(got[i]) - want[i]));
  };
  compare(s.d.flat_values(), expect_d);
  compare(s.g.flat_values(), expect_g);
  compare(s.c.flat_values(), expect_c);
  return {worst <= 1e-6, fmt("max parameter difference %.2e over %zu tasks", worst, episodes.size())};
}

// --- 6 ----------------------------------------------------------------------

Outcome clipping_invariant() {
  const DatasetBundle data = gen_synthetic(SyntheticSpec{});
  HyperParams hp = HyperParams::synthetic();
  hp.iterations = 500;
  TrainOptions opt;
  opt.seed = 0;
  std::size_t checked = 0, violations = 0;
  float worst = 0.0f;
  opt.on_iteration = [&](const IterationMetrics&, const ModelState& s) {
    const float m = s.max_abs_critic_weight();
    worst = std::max(worst, m);
    violations += m > hp.clip_c;
    ++checked;
  };
  train_loop(data, synthetic_episodes(EpisodeMode::kZsml), hp, opt);
  return {checked == 500 && violations == 0,
          fmt("%zu iterations checked, max |w| %.4f vs clip %.4f", checked, worst, hp.clip_c)};
}

// --- 7-9 --------------------------------------------------------------------

struct SeedResult {
  double zsl = 0.0, u = 0.0, s = 0.0, h = 0.0;
};

SeedResult train_and_eval(std::uint64_t seed, EpisodeMode mode, bool gzsl) {
  SyntheticSpec spec;
  spec.seed = seed;
  const DatasetBundle data = gen_synthetic(spec);
  TrainOptions opt;
  opt.seed = seed;
  const ModelState model = train_loop(data, synthetic_episodes(mode), HyperParams::synthetic(), opt);
  EvalOptions eo;  // softmax, 200 samples per class, noise std 0.25
  SeedResult r;
  Rng rng(1000 + seed);
  r.zsl = eval_zsl(model, data, eo, rng).unseen;
  if (gzsl) {
    const EvalReport g = eval_gzsl(model, data, eo, rng);
    r.u = g.unseen, r.s = g.seen, r.h = g.harmonic;
  }
  return r;
}

// --- 10 ---------------------------------------------------------------------

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct PipelineOutput {
  std::string checkpoint, report;
};

#ifdef ZSML_CLI_PATH
PipelineOutput run_pipeline(const fs::path& dir) {
  fs::remove_all(dir);
  fs::create_directories(dir);
  std::ofstream(dir / "run.json") << R"({"dataset": "data.zsb", "output_dir": "out", "seed": 0, "preset": "synthetic"})";
  const std::string cli = std::string("'") + ZSML_CLI_PATH + "'";
  const std::string steps[] = {"gen-data --out data.zsb --seed 0", "train --config run.json",
                               "eval --config run.json --checkpoint out/model.zsmp --protocol gzsl"};
  for (const auto& step : steps) {
    const std::string cmd = "cd '" + dir.string() + "' && " + cli + " " + step + " > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    if (!WIFEXITED(status) || WEXITSTATUS(status) != 0) throw std::runtime_error("pipeline step failed: " + step);
  }
  return {slurp(dir / "out/model.zsmp"), slurp(dir / "out/eval_gzsl_softmax.json")};
}
#else
PipelineOutput run_pipeline(const fs::path& dir) {
  fs::remove_all(dir);
  fs::create_directories(dir);
  save_zsb(gen_synthetic(SyntheticSpec{}), dir / "data.zsb");
  const DatasetBundle data = load_zsb(dir / "data.zsb");
  TrainOptions opt;
  const ModelState model = train_loop(data, synthetic_episodes(EpisodeMode::kZsml), HyperParams::synthetic(), opt);
  save_zsmp(model.named_tensors(), dir / "model.zsmp");
  Rng rng(0);
  const ModelState back = model_from_checkpoint(load_zsmp(dir / "model.zsmp"), opt.arch);
  return {slurp(dir / "model.zsmp"), to_json(eval_gzsl(back, data, EvalOptions{}, rng))};
}
#endif

Outcome determinism() {
  const fs::path root = fs::temp_directory_path() / "zsml_acceptance";
  const PipelineOutput a = run_pipeline(root / "a");
  const PipelineOutput b = run_pipeline(root / "b");
  fs::remove_all(root);
  const bool ok = !a.checkpoint.empty() && a.checkpoint == b.checkpoint && !a.report.empty() && a.report == b.report;
  return {ok, fmt("checkpoints %s (%zu bytes), reports %s", a.checkpoint == b.checkpoint ? "identical" : "DIFFER",
                  a.checkpoint.size(), a.report == b.report ? "identical" : "DIFFER")};
}

// --- 11 ---------------------------------------------------------------------

template <typename Fn>
bool throws_format_or_integrity(Fn&& fn) {
  try {
    fn();
  } catch (const FormatError&) {
    return true;
  } catch (const IntegrityError&) {
    return true;
  }
  return false;
}

Outcome round_trips() {
  SyntheticSpec spec;
  spec.samples_per_class = 10;
  const DatasetBundle b = gen_synthetic(spec);
  const auto zsb = encode_zsb(b);
  bool ok = decode_zsb(zsb) == b && encode_zsb(decode_zsb(zsb)) == zsb;

  const ModelState m = init_model(ModelDims::for_dataset(b), Architecture::compact(), 3);
  const auto zsmp = encode_zsmp(m.named_tensors());
  ok &= encode_zsmp(decode_zsmp(zsmp)) == zsmp;
  ok &= model_from_checkpoint(decode_zsmp(zsmp), Architecture::compact()).checksum() == m.checksum();

  std::size_t rejected = 0, cases = 0;
  auto expect_reject = [&](bool r) {
    ++cases;
    rejected += r;
  };
  for (std::size_t n = 0; n < zsb.size(); n += 97) {
    expect_reject(throws_format_or_integrity([&] { decode_zsb({zsb.begin(), zsb.begin() + static_cast<std::ptrdiff_t>(n)}); }));
  }
  auto bad_magic = zsb;
  bad_magic[0] ^= 0xff;
  expect_reject(throws_format_or_integrity([&] { decode_zsb(bad_magic); }));
  DatasetBundle overlap = b;
  overlap.unseen_classes.push_back(overlap.seen_classes.front());
  expect_reject(throws_format_or_integrity([&] { decode_zsb(encode_zsb(overlap)); }));

  auto bad_zsmp = zsmp;
  bad_zsmp[1] ^= 0xff;
  expect_reject(throws_format_or_integrity([&] { decode_zsmp(bad_zsmp); }));
  expect_reject(throws_format_or_integrity([&] { decode_zsmp({zsmp.begin(), zsmp.end() - 3}); }));

  ok &= rejected == cases;
  return {ok, fmt("ZSB1 %zu bytes and ZSMP %zu bytes round-trip exactly; %zu/%zu corruptions rejected", zsb.size(),
                  zsmp.size(), rejected, cases)};
}

}  // namespace

int main() {
  report(1, "harmonic-mean reproduction", harmonic_rows);
  report(2, "few-shot count", fewshot_count);
  report(3, "gradient suite", gradient_suite);
  report(4, "episode disjointness", episode_disjointness);
  report(5, "FOMAML degeneracy", fomaml_degeneracy);
  report(6, "clipping invariant", clipping_invariant);

  std::vector<SeedResult> zsml_runs, maml_runs;
  auto run_all = [&] {
    if (!zsml_runs.empty()) return;
    for (std::uint64_t seed = 0; seed < 5; ++seed) zsml_runs.push_back(train_and_eval(seed, EpisodeMode::kZsml, true));
  };
  report(7, "end-to-end synthetic ZSL", [&] {
    run_all();
    int hits = 0;
    std::string d;
    for (const auto& r : zsml_runs) {
      hits += r.zsl >= 0.5;
      d += fmt(" %.3f", r.zsl);
    }
    return Outcome{hits >= 4, fmt("%d/5 seeds >= 0.50; U =", hits) + d};
  });
  report(8, "end-to-end synthetic GZSL", [&] {
    run_all();
    int hits = 0, positive = 0;
    std::string d;
    for (const auto& r : zsml_runs) {
      hits += r.h >= 0.35;
      positive += r.u > 0.0;
      d += fmt(" %.3f/%.3f/%.3f", r.u, r.s, r.h);
    }
    return Outcome{hits >= 4 && positive == 5, fmt("%d/5 seeds H >= 0.35, U > 0 in %d/5; U/S/H =", hits, positive) + d};
  });
  report(9, "split-mode ablation direction", [&] {
    run_all();
    for (std::uint64_t seed = 0; seed < 5; ++seed) maml_runs.push_back(train_and_eval(seed, EpisodeMode::kMaml, false));
    double z = 0.0, m = 0.0;
    for (const auto& r : zsml_runs) z += r.zsl / 5.0;
    std::string d;
    for (const auto& r : maml_runs) {
      m += r.zsl / 5.0;
      d += fmt(" %.3f", r.zsl);
    }
    return Outcome{z >= m - 0.02, fmt("mean ZSL zsml %.3f vs maml %.3f (floor %.3f); maml U =", z, m, m - 0.02) + d};
  });
  report(10, "determinism", determinism);
  report(11, "ZSB1/ZSMP round trips", round_trips);

  std::printf("%s: %d criterion(s) failed\n", failures ? "FAILED" : "OK", failures);
  return failures ? 1 : 0;
}
