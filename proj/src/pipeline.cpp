#include "curvseg/pipeline.hpp"

#include <chrono>
#include <stdexcept>

#include "curvseg/evalx.hpp"

namespace curvseg {

namespace {

using Clock = std::chrono::steady_clock;

double elapsed_ms(Clock::time_point since) {
  return std::chrono::duration<double, std::milli>(Clock::now() - since).count();
}

}  // namespace

void PipelineConfig::validate() const {
  if (!(seg_threshold > 0.0 && seg_threshold < 1.0)) {
    throw std::invalid_argument("PipelineConfig: seg_threshold must lie in (0,1)");
  }
  mean_shift.validate();
  resolve.validate();
}

DenseMaps predict_dense(const ModelParams& params, const ImageGrid& image, StageTimings* timings) {
  auto t0 = Clock::now();
  NetworkOutput out = forward(params, image);
  if (timings != nullptr) timings->forward_ms = elapsed_ms(t0);
  t0 = Clock::now();
  DenseMaps maps{upsample_bilinear(out.seg_prob, image.height(), image.width()),
                 upsample_bilinear(out.embedding, image.height(), image.width())};
  if (timings != nullptr) timings->upsample_ms = elapsed_ms(t0);
  return maps;
}

InferenceResult infer_from_maps(const DenseMaps& maps, const PipelineConfig& cfg) {
  cfg.validate();
  const std::size_t h = maps.seg_prob.height();
  const std::size_t w = maps.seg_prob.width();
  if (maps.embedding.height() != h || maps.embedding.width() != w) {
    throw std::invalid_argument("infer: segmentation and embedding maps differ in dimensions");
  }
  InferenceResult res;
  res.semantic = threshold(maps.seg_prob, cfg.seg_threshold);
  res.instances = InstanceSet(h, w);
  res.diagnostics.min_similarity = ImageGrid(h, w, 1.0);

  auto t0 = Clock::now();
  const ForegroundEmbeddings fe =
      augment_coordinates(maps.embedding, res.semantic, cfg.mean_shift.coord_scale);
  res.diagnostics.fg_pixels = fe.size();
  if (fe.empty()) return res;
  const ClusterModel cm = mean_shift(fe, cfg.mean_shift);
  res.diagnostics.timings.cluster_ms = elapsed_ms(t0);

  t0 = Clock::now();
  res.instances = build_instances(fe, cm, cfg.resolve);
  res.diagnostics.min_similarity = similarity_map(fe, cm, cfg.resolve.beta);
  res.diagnostics.timings.resolve_ms = elapsed_ms(t0);
  res.diagnostics.clusters = cm.k();
  res.diagnostics.multi_assigned_pixels = res.instances.multi_assigned_count();
  return res;
}

InferenceResult infer(const ModelParams& params, const ImageGrid& image, const PipelineConfig& cfg) {
  cfg.validate();
  StageTimings front;
  const DenseMaps maps = predict_dense(params, image, &front);
  InferenceResult res = infer_from_maps(maps, cfg);
  res.diagnostics.timings.forward_ms = front.forward_ms;
  res.diagnostics.timings.upsample_ms = front.upsample_ms;
  return res;
}

InferenceResult cc_from_maps(const DenseMaps& maps, double seg_threshold) {
  if (!(seg_threshold > 0.0 && seg_threshold < 1.0)) {
    throw std::invalid_argument("infer_cc_baseline: seg_threshold must lie in (0,1)");
  }
  InferenceResult res;
  res.semantic = threshold(maps.seg_prob, seg_threshold);
  const auto t0 = Clock::now();
  res.instances = connected_components(res.semantic);
  res.diagnostics.timings.cluster_ms = elapsed_ms(t0);
  res.diagnostics.fg_pixels = count_set(res.semantic);
  res.diagnostics.clusters = res.instances.size();
  res.diagnostics.min_similarity = ImageGrid(res.semantic.height(), res.semantic.width(), 1.0);
  return res;
}

InferenceResult infer_cc_baseline(const ModelParams& params, const ImageGrid& image,
                                  double seg_threshold) {
  StageTimings front;
  const DenseMaps maps = predict_dense(params, image, &front);
  InferenceResult res = cc_from_maps(maps, seg_threshold);
  res.diagnostics.timings.forward_ms = front.forward_ms;
  res.diagnostics.timings.upsample_ms = front.upsample_ms;
  return res;
}

nlohmann::json diagnostics_json(const Diagnostics& d) {
  return {
      {"clusters", d.clusters},
      {"fg_pixels", d.fg_pixels},
      {"multi_assigned_pixels", d.multi_assigned_pixels},
      {"timings_ms",
       {{"forward", d.timings.forward_ms},
        {"upsample", d.timings.upsample_ms},
        {"cluster", d.timings.cluster_ms},
        {"resolve", d.timings.resolve_ms}}},
  };
}

}  // namespace curvseg
