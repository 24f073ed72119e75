#pragma once

#include <span>
#include <vector>

#include "curvseg/cluster.hpp"
#include "curvseg/imagecore.hpp"

namespace curvseg {

struct ResolveConfig {
  double beta = 2.0;
  double threshold_a = 0.7;

  void validate() const;
  /// Largest distance gap d_i - d_1 that still counts as an intersection:
  /// ln(a / (1 - a)) / beta.
  double gap_threshold() const;
};

/// For ascending distances d_1..d_n returns s_2..s_n with
/// s_i = 1 / (1 + exp(-beta * (d_i - d_1))). Throws std::invalid_argument if
/// fewer than two distances are given, any is negative, or the list is unsorted.
std::vector<double> similarity_scores(std::span<const double> sorted_distances, double beta);

/// Cluster indices the embedding belongs to: the nearest center plus every
/// center whose similarity score falls below the threshold. The nearest comes
/// first; the rest follow in ascending distance.
std::vector<std::size_t> resolve_pixel(const Vec5& embedding, const std::vector<Vec5>& centers,
                                       const ResolveConfig& cfg);

/// Minimum similarity score over the non-nearest centers; 1 for a single center.
double min_similarity(const Vec5& embedding, const std::vector<Vec5>& centers, double beta);

/// One mask per cluster; intersection pixels are set in every involved mask.
InstanceSet build_instances(const ForegroundEmbeddings& fe, const ClusterModel& cm,
                            const ResolveConfig& cfg);

/// Per-pixel minimum similarity over the foreground; background pixels hold 1.
ImageGrid similarity_map(const ForegroundEmbeddings& fe, const ClusterModel& cm, double beta);

}  // namespace curvseg
