// Runs every acceptance check and prints one PASS/FAIL line each.
// Exit status is nonzero when any check fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <unistd.h>

#include "curvseg/commands.hpp"
#include "curvseg/errors.hpp"
#include "oracles.hpp"

using namespace curvseg;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double a, double b = 0, double c = 0, double d = 0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c, d);
  return buf;
}

fs::path scratch_root() {
  const fs::path p = fs::temp_directory_path() / ("curvseg_accept_" + std::to_string(::getpid()));
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

Outcome gradient_fidelity() {
  const auto t0 = Clock::now();
  const GradcheckReport r = run_gradcheck(10, 2024, 1e-3);
  const double secs = seconds_since(t0);
  const bool ok = r.max_error_discriminative <= 1e-4 && r.max_error_total <= 1e-4 && secs < 120.0;
  return {ok, fmt("disc %.3g total %.3g over 10 fixtures in %.1fs", r.max_error_discriminative,
                  r.max_error_total, secs)};
}

EmbeddingField row_field(std::size_t w, std::vector<double> v) { return EmbeddingField(1, w, 3, std::move(v)); }

Outcome loss_oracles() {
  const LossConfig cfg;
  const double push = discriminative_loss(row_field(3, {0, 0, 0, 0, 0, 0, 1, 0, 0}),
                                          LabelMap(1, 3, std::vector<int>{1, 1, 2}), cfg)
                          .loss;
  const double pull = discriminative_loss(row_field(2, {0, 0, 0, 2, 0, 0}), LabelMap(1, 2, 1), cfg).loss;
  const double zero = discriminative_loss(row_field(4, {0, 0, 0, 0.4, 0, 0, 3.5, 0, 0, 3.5, 0.4, 0}),
                                          LabelMap(1, 4, std::vector<int>{1, 1, 2, 2}), cfg)
                          .loss;
  const bool ok = std::abs(push - 4.0) <= 1e-9 && std::abs(pull - 0.25) <= 1e-9 && zero == 0.0;
  return {ok, fmt("push %.12g pull %.12g zero %g", push, pull, zero)};
}

Outcome similarity_equivalence() {
  std::mt19937_64 rng(10);
  std::uniform_real_distribution<double> dist(0.0, 5.0);
  std::uniform_real_distribution<double> beta(0.1, 10.0);
  std::uniform_real_distribution<double> a(0.5, 1.0);
  std::uniform_int_distribution<int> len(2, 8);
  std::size_t disagreements = 0;
  std::size_t cases = 0;
  while (cases < 10000) {
    std::vector<double> d(len(rng));
    for (auto& v : d) v = dist(rng);
    std::sort(d.begin(), d.end());
    const ResolveConfig cfg{beta(rng), a(rng)};
    if (cfg.threshold_a <= 0.5) continue;
    ++cases;
    const auto s = similarity_scores(d, cfg.beta);
    for (std::size_t i = 1; i < d.size(); ++i) {
      disagreements += (s[i - 1] < cfg.threshold_a) != (d[i] - d[0] < cfg.gap_threshold());
    }
  }
  const double p1 = similarity_scores(std::vector<double>{0.0, 1.0}, 2.0)[0];
  const double p2 = similarity_scores(std::vector<double>{0.3, 0.5}, 2.0)[0];
  const bool ok = disagreements == 0 && std::abs(p1 - 0.880797) <= 1e-6 && std::abs(p2 - 0.598688) <= 1e-6;
  return {ok, fmt("%g disagreements in %g cases, s=%.6f, %.6f", static_cast<double>(disagreements),
                  static_cast<double>(cases), p1, p2)};
}

Outcome clustering_oracle() {
  const MeanShiftConfig cfg;
  int perfect = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t k = 2 + trial % 3;
    const auto b = oracles::make_blobs(k, cfg.bandwidth, 10.0, 5000 + trial);
    const ClusterModel cm = mean_shift(b.points, cfg);
    perfect += cm.k() == k && oracles::adjusted_rand_index(cm.assignment, b.truth) == 1.0;
  }
  return {perfect == 100, fmt("%g/100 trials with ARI 1.0", perfect)};
}

Outcome oracle_end_to_end() {
  SceneSpec spec;
  spec.max_instances = 3;
  spec.min_crossing_angle_degrees = 40.0;
  int exact = 0;
  int perfect = 0;
  std::size_t crossings = 0;
  const int scenes = 50;
  for (int i = 0; i < scenes; ++i) {
    spec.rng_seed = 900 + i;
    const Scene s = generate_scene(spec);
    crossings += s.instances.multi_assigned_count();
    const InferenceResult r = infer_from_maps(oracles::oracle_maps(s.instances), PipelineConfig{});
    exact += oracles::same_instances(r.instances, s.instances);
    const MetricReport m = instance_ap_ar(r.instances, s.instances);
    bool all = true;
    for (const auto& t : m.per_threshold) all = all && t.ap == 1.0 && t.ar == 1.0;
    perfect += all && m.per_threshold.size() == 9;
  }
  return {exact == scenes && perfect == scenes,
          fmt("%g/%g exact, %g/%g AP=AR=1, ", exact, scenes, perfect, scenes) +
              std::to_string(crossings) + " double-assigned pixels"};
}

struct TrainedRun {
  EvalResult embedding;
  EvalResult cc;
  double train_seconds = 0.0;
  std::size_t epochs = 0;
  bool ok = false;
  std::string error;
};

TrainedRun desk_training(const fs::path& root) {
  TrainedRun out;
  try {
    RunConfig cfg;
    cfg.seed = 7;
    cfg.optim.learning_rate = 1e-2;
    cfg.optim.epochs = 30;
    out.epochs = cfg.optim.epochs;
    cmd_synth(cfg, 200, root / "train_set");
    RunConfig test_cfg = cfg;
    test_cfg.seed = 8;
    cmd_synth(test_cfg, 50, root / "test_set");
    const auto t0 = Clock::now();
    cmd_train(cfg, root / "train_set", root / "run");
    out.train_seconds = seconds_since(t0);
    const fs::path ckpt = root / "run" / "model.segt";
    out.embedding = cmd_eval(cfg, ckpt, root / "test_set", EvalMethod::kEmbedding, root / "eval");
    out.cc = cmd_eval(cfg, ckpt, root / "test_set", EvalMethod::kConnectedComponents, root / "eval");
    out.ok = true;
  } catch (const std::exception& e) {
    out.error = e.what();
  }
  return out;
}

Outcome desk_scale(const TrainedRun& t) {
  if (!t.ok) return {false, t.error};
  const MetricReport& m = t.embedding.micro;
  const bool ok = m.semantic_dice >= 0.80 && m.ap >= 0.70 && t.epochs <= 30 && t.train_seconds <= 900.0;
  return {ok, fmt("Dice %.3f AP %.3f AR %.3f, training %.0fs", m.semantic_dice, m.ap, m.ar, t.train_seconds)};
}

Outcome baseline_ordering(const TrainedRun& t) {
  if (!t.ok) return {false, t.error};
  const MetricReport& e = t.embedding.micro;
  const MetricReport& c = t.cc.micro;
  const bool same = e.semantic_iou == c.semantic_iou && e.semantic_dice == c.semantic_dice;
  const bool ok = e.ap - c.ap >= 0.2 && same;
  return {ok, fmt("embedding AP %.3f vs CC AP %.3f, IoU %.4f / %.4f", e.ap, c.ap, e.semantic_iou, c.semantic_iou)};
}

Outcome metric_identities() {
  std::mt19937_64 rng(88);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double worst = 0.0;
  for (int trial = 0; trial < 10000; ++trial) {
    const double pa = u(rng);
    const double pb = u(rng);
    Mask a(8, 9);
    Mask b(8, 9);
    for (std::size_t i = 0; i < a.size(); ++i) {
      a[i] = u(rng) < pa;
      b[i] = u(rng) < pb;
    }
    const double iou = mask_iou(a, b);
    worst = std::max(worst, std::abs(mask_dice(a, b) - 2 * iou / (1 + iou)));
  }

  bool monotone = true;
  bool invariant = true;
  SceneSpec spec;
  spec.height = spec.width = 48;
  spec.max_instances = 3;
  spec.min_crossing_angle_degrees = 40.0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    spec.rng_seed = seed;
    const InstanceSet gt = generate_scene(spec).instances;
    spec.rng_seed = seed + 5000;
    InstanceSet pred = generate_scene(spec).instances;
    pred.masks.push_back(gt.masks[seed % gt.size()]);
    const MetricReport r = instance_ap_ar(pred, gt);
    for (std::size_t i = 1; i < r.per_threshold.size(); ++i) {
      monotone = monotone && r.per_threshold[i].ap <= r.per_threshold[i - 1].ap &&
                 r.per_threshold[i].ar <= r.per_threshold[i - 1].ar;
    }
    InstanceSet p2 = pred;
    InstanceSet g2 = gt;
    std::shuffle(p2.masks.begin(), p2.masks.end(), rng);
    std::shuffle(g2.masks.begin(), g2.masks.end(), rng);
    const MetricReport r2 = instance_ap_ar(p2, g2);
    invariant = invariant && r2.ap == r.ap && r2.ar == r.ar;
  }
  return {worst <= 1e-12 && monotone && invariant,
          fmt("max |Dice - 2IoU/(1+IoU)| %.3g, monotone %g, permutation invariant %g", worst, monotone, invariant)};
}

Outcome rasterizer_exactness() {
  std::mt19937_64 rng(99);
  int equal = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const auto ann = oracles::random_polyline(rng, 48, 56);
    equal += rasterize_polyline(ann, 48, 56) == oracles::brute_force_raster(ann, 48, 56);
  }
  return {equal == 100, fmt("%g/100 polylines identical", equal)};
}

bool same_tree(const fs::path& a, const fs::path& b, std::string& diff) {
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(a)) {
    if (e.is_regular_file()) files.push_back(fs::relative(e.path(), a));
  }
  std::size_t count_b = 0;
  for (const auto& e : fs::recursive_directory_iterator(b)) count_b += e.is_regular_file();
  if (files.size() != count_b) {
    diff = "file count differs";
    return false;
  }
  for (const auto& f : files) {
    if (!fs::exists(b / f) || read_file_bytes(a / f) != read_file_bytes(b / f)) {
      diff = f.string();
      return false;
    }
  }
  return true;
}

Outcome reproducibility(const fs::path& root) {
  RunConfig cfg;
  cfg.seed = 31;
  cfg.scene.height = cfg.scene.width = 32;
  cfg.optim.epochs = 3;
  cfg.optim.learning_rate = 1e-2;
  std::size_t files = 0;
  for (const char* run : {"a", "b"}) {
    const fs::path dir = root / run;
    cmd_synth(cfg, 12, dir / "data");
    cmd_train(cfg, dir / "data", dir / "run");
    for (EvalMethod m : {EvalMethod::kEmbedding, EvalMethod::kConnectedComponents, EvalMethod::kOracle}) {
      cmd_eval(cfg, dir / "run" / "model.segt", dir / "data", m, dir / "eval");
    }
  }
  for (const auto& e : fs::recursive_directory_iterator(root / "a")) files += e.is_regular_file();
  std::string diff;
  const bool ok = same_tree(root / "a", root / "b", diff);
  return {ok, ok ? fmt("%g artifacts byte-identical", static_cast<double>(files)) : "mismatch in " + diff};
}

}  // namespace

int main() {
  const fs::path root = scratch_root();
  int failures = 0;
  auto report = [&](int id, const char* name, const std::function<Outcome()>& check) {
    Outcome o;
    const auto t0 = Clock::now();
    try {
      o = check();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failures += !o.pass;
    std::printf("[%s] %2d %-26s %s (%.1fs)\n", o.pass ? "PASS" : "FAIL", id, name, o.detail.c_str(),
                seconds_since(t0));
    std::fflush(stdout);
  };

  report(1, "gradient-fidelity", gradient_fidelity);
  report(2, "loss-oracles", loss_oracles);
  report(3, "similarity-equivalence", similarity_equivalence);
  report(4, "clustering-oracle", clustering_oracle);
  report(5, "oracle-end-to-end", oracle_end_to_end);
  const TrainedRun trained = desk_training(root / "desk");
  report(6, "desk-scale-training", [&] { return desk_scale(trained); });
  report(7, "baseline-ordering", [&] { return baseline_ordering(trained); });
  report(8, "metric-identities", metric_identities);
  report(9, "rasterizer-exactness", rasterizer_exactness);
  report(10, "reproducibility", [&] { return reproducibility(root / "repro"); });

  fs::remove_all(root);
  std::printf("%d/10 passed\n", 10 - failures);
  return failures == 0 ? 0 : 1;
}
