#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "curvseg/imagecore.hpp"

namespace curvseg {

inline constexpr std::size_t kClusterDim = 5;
using Vec5 = std::array<double, kClusterDim>;

double distance(const Vec5& a, const Vec5& b);

struct PixelIndex {
  std::size_t row = 0;
  std::size_t col = 0;

  friend bool operator==(const PixelIndex&, const PixelIndex&) = default;
};

/// Foreground pixels in raster order with their 3 learned + 2 spatial coordinates.
struct ForegroundEmbeddings {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<PixelIndex> pixels;
  std::vector<Vec5> vectors;

  std::size_t size() const { return pixels.size(); }
  bool empty() const { return pixels.empty(); }
};

/// Appends (row/(H-1), col/(W-1)) * coord_scale to each foreground embedding.
/// A unit-length axis contributes 0.
ForegroundEmbeddings augment_coordinates(const EmbeddingField& embedding, const Mask& foreground,
                                         double coord_scale);

struct MeanShiftConfig {
  double bandwidth = 0.75;
  std::size_t max_iterations = 300;
  double convergence_tol = 1e-4;
  double merge_radius = 0.375;
  std::size_t seed_cap = 1024;
  std::uint64_t rng_seed = 0;
  double coord_scale = 1.0;
  /// Modes whose basin holds less than this fraction of the foreground are
  /// dropped and their pixels reassigned to the nearest surviving mode.
  double min_cluster_fraction = 0.1;

  void validate() const;
};

struct ClusterModel {
  std::vector<Vec5> centers;
  /// Index into `centers` for every input vector.
  std::vector<std::size_t> assignment;

  std::size_t k() const { return centers.size(); }
};

/// Flat-kernel mean shift over the augmented embeddings. Throws
/// std::invalid_argument on empty input.
ClusterModel mean_shift(const ForegroundEmbeddings& fe, const MeanShiftConfig& cfg);
ClusterModel mean_shift(const std::vector<Vec5>& points, const MeanShiftConfig& cfg);

/// One flat-kernel update: mean of the points within `bandwidth` of `z`.
/// Returns `z` unchanged when the window is empty.
Vec5 mean_shift_update(const std::vector<Vec5>& points, const Vec5& z, double bandwidth);

/// Index of the nearest center; ties resolve to the lowest index.
std::size_t nearest_center(const std::vector<Vec5>& centers, const Vec5& v);

}  // namespace curvseg
