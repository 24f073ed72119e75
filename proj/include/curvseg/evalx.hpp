#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "curvseg/imagecore.hpp"

namespace curvseg {

/// IoU thresholds 0.20, 0.25, ..., 0.60.
std::vector<double> default_iou_thresholds();

/// |a & b| / |a | b|; both empty gives 1. Throws std::invalid_argument on a size mismatch.
double mask_iou(const Mask& a, const Mask& b);
/// 2|a & b| / (|a| + |b|); both empty gives 1.
double mask_dice(const Mask& a, const Mask& b);

struct ThresholdCounts {
  double threshold = 0.0;
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;

  double precision() const;
  double recall() const;
};

/// Greedy one-to-one matching in descending IoU order at every threshold.
std::vector<ThresholdCounts> match_instances(const InstanceSet& pred, const InstanceSet& gt,
                                             const std::vector<double>& thresholds);

struct ThresholdScore {
  double threshold = 0.0;
  double ap = 0.0;
  double ar = 0.0;
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
};

struct MetricReport {
  double semantic_iou = 0.0;
  double semantic_dice = 0.0;
  double ap = 0.0;
  double ar = 0.0;
  std::vector<ThresholdScore> per_threshold;
};

/// AP/AR fragment of a report for one image (semantic fields are left at 0).
MetricReport instance_ap_ar(const InstanceSet& pred, const InstanceSet& gt,
                            const std::vector<double>& thresholds = default_iou_thresholds());

/// Micro-averaged dataset evaluation: instance counts and semantic pixel counts
/// are summed over images before dividing. Per-image reports are kept for
/// macro averages.
class MetricAccumulator {
 public:
  explicit MetricAccumulator(std::vector<double> thresholds = default_iou_thresholds());

  /// Adds one image and returns its own report.
  MetricReport add(const InstanceSet& pred, const InstanceSet& gt);

  MetricReport micro() const;
  MetricReport macro() const;
  const std::vector<MetricReport>& per_image() const { return images_; }

 private:
  std::vector<double> thresholds_;
  std::vector<ThresholdCounts> totals_;
  std::size_t inter_ = 0;
  std::size_t uni_ = 0;
  std::size_t pred_area_ = 0;
  std::size_t gt_area_ = 0;
  std::vector<MetricReport> images_;
};

/// 8-connected components in raster order of their first pixel.
InstanceSet connected_components(const Mask& foreground);

nlohmann::json to_json(const MetricReport& report);

}  // namespace curvseg
