#include "curvseg/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include "curvseg/errors.hpp"
#include "curvseg/synthgen.hpp"

namespace curvseg {

double relative_error(double analytic, double numeric, double floor) {
  const double scale = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / scale;
}

GradcheckFixture make_gradcheck_fixture(std::uint64_t seed, std::size_t size) {
  SceneSpec spec;
  spec.height = size;
  spec.width = size;
  spec.min_instances = 2;
  spec.max_instances = 3;
  spec.min_stroke_width = 2.0;
  spec.max_stroke_width = 3.0;
  spec.min_control_points = 2;
  spec.max_control_points = 3;
  spec.min_crossing_angle_degrees = 40.0;
  spec.noise_amplitude = 0.05;

  for (std::uint64_t attempt = 0; attempt < 100; ++attempt) {
    spec.rng_seed = seed * 1000 + attempt;
    Scene scene;
    try {
      scene = generate_scene(spec);
    } catch (const GenerationError&) {
      continue;
    }
    const LabelMap full = make_training_labels(scene.instances, spec.rng_seed);
    Targets t = downsample_targets(full, Architecture::kDownsample);
    std::set<int> ids;
    for (int v : t.instances.values()) {
      if (v > 0) ids.insert(v);
    }
    if (ids.size() < 2) continue;

    std::mt19937_64 rng(seed);
    ModelParams params = ModelParams::initialize(Architecture{}, seed);
    std::uniform_real_distribution<double> bias(-0.1, 0.1);
    for (Slot s : {Slot::kConv1Bias, Slot::kConv2Bias, Slot::kConv3Bias, Slot::kSegBias, Slot::kEmbBias}) {
      for (auto& v : params.tensor(s)) v = bias(rng);
    }
    EmbeddingField emb(t.instances.height(), t.instances.width(), 3);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (auto& v : emb.values()) v = normal(rng);
    return {std::move(params), std::move(scene.image), std::move(t.segmentation),
            std::move(t.instances), std::move(emb)};
  }
  throw GenerationError("make_gradcheck_fixture: no fixture with two head-resolution instances");
}

namespace {

// Fourth-order central stencil at offsets +-step and +-2 step.
template <typename Eval>
double central_difference(Eval&& f, double step) {
  return (-f(2.0 * step) + 8.0 * f(step) - 8.0 * f(-step) + f(-2.0 * step)) / (12.0 * step);
}

}  // namespace

double check_discriminative_gradient(const EmbeddingField& embedding, const LabelMap& labels,
                                     const LossConfig& cfg, double step) {
  const auto analytic = discriminative_loss(embedding, labels, cfg).grad;
  EmbeddingField probe = embedding;
  double worst = 0.0;
  for (std::size_t i = 0; i < probe.values().size(); ++i) {
    const double orig = probe.values()[i];
    const double numeric = central_difference(
        [&](double dx) {
          probe.values()[i] = orig + dx;
          const double v = discriminative_loss(probe, labels, cfg).loss;
          probe.values()[i] = orig;
          return v;
        },
        step);
    worst = std::max(worst, relative_error(analytic.values()[i], numeric));
  }
  return worst;
}

double check_total_gradient(const ModelParams& params, const ImageGrid& image, const Mask& seg_target,
                            const LabelMap& labels, const LossConfig& cfg, double step) {
  const ModelParams analytic = total_loss_and_grad(params, image, seg_target, labels, cfg).grad;
  ModelParams probe = params;
  double worst = 0.0;
  for (std::size_t i = 0; i < probe.size(); ++i) {
    const double orig = probe.flat()[i];
    const double numeric = central_difference(
        [&](double dx) {
          probe.flat()[i] = orig + dx;
          const double v = total_loss_and_grad(probe, image, seg_target, labels, cfg, false).loss;
          probe.flat()[i] = orig;
          return v;
        },
        step);
    worst = std::max(worst, relative_error(analytic.flat()[i], numeric));
  }
  return worst;
}

GradcheckReport run_gradcheck(std::size_t fixtures, std::uint64_t seed, double step,
                              const LossConfig& cfg) {
  GradcheckReport report;
  for (std::size_t f = 0; f < fixtures; ++f) {
    const GradcheckFixture fx = make_gradcheck_fixture(seed + f);
    report.max_error_discriminative =
        std::max(report.max_error_discriminative,
                 check_discriminative_gradient(fx.embedding, fx.labels, cfg, step));
    report.max_error_total =
        std::max(report.max_error_total,
                 check_total_gradient(fx.params, fx.image, fx.seg_target, fx.labels, cfg, step));
    ++report.fixtures;
  }
  return report;
}

}  // namespace curvseg
