#pragma once

#include <json.hpp>

#include "curvseg/cluster.hpp"
#include "curvseg/embednet.hpp"
#include "curvseg/imagecore.hpp"
#include "curvseg/resolve.hpp"

namespace curvseg {

struct PipelineConfig {
  double seg_threshold = 0.5;
  MeanShiftConfig mean_shift;
  ResolveConfig resolve;

  void validate() const;
};

struct StageTimings {
  double forward_ms = 0.0;
  double upsample_ms = 0.0;
  double cluster_ms = 0.0;
  double resolve_ms = 0.0;
};

struct Diagnostics {
  std::size_t clusters = 0;
  std::size_t fg_pixels = 0;
  std::size_t multi_assigned_pixels = 0;
  /// Minimum similarity score per pixel; 1 on background.
  ImageGrid min_similarity;
  StageTimings timings;
};

struct InferenceResult {
  InstanceSet instances;
  Mask semantic;
  Diagnostics diagnostics;
};

/// Full-resolution maps fed into the clustering half of the pipeline.
struct DenseMaps {
  ImageGrid seg_prob;
  EmbeddingField embedding;
};

/// forward -> bilinear upsample to the input size.
DenseMaps predict_dense(const ModelParams& params, const ImageGrid& image, StageTimings* timings = nullptr);

/// threshold -> coordinate augmentation -> mean shift -> intersection resolution.
/// Maps must already be at the output resolution.
InferenceResult infer_from_maps(const DenseMaps& maps, const PipelineConfig& cfg);

InferenceResult infer(const ModelParams& params, const ImageGrid& image, const PipelineConfig& cfg);

/// Same front half as `infer`, then one instance per 8-connected component.
InferenceResult infer_cc_baseline(const ModelParams& params, const ImageGrid& image,
                                  double seg_threshold);
InferenceResult cc_from_maps(const DenseMaps& maps, double seg_threshold);

nlohmann::json diagnostics_json(const Diagnostics& d);

}  // namespace curvseg
