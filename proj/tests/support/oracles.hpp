#pragma once

// Independent reference implementations used by the unit and acceptance tests.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <random>
#include <utility>
#include <vector>

#include "curvseg/cluster.hpp"
#include "curvseg/imagecore.hpp"
#include "curvseg/pipeline.hpp"
#include "curvseg/synthgen.hpp"

namespace oracles {

using curvseg::DenseMaps;
using curvseg::EmbeddingField;
using curvseg::ImageGrid;
using curvseg::InstanceSet;
using curvseg::Mask;
using curvseg::Point2;
using curvseg::PolylineAnnotation;

// Squared distance from p to segment ab, via the clamped projection parameter.
inline double seg_dist2(double px, double py, Point2 a, Point2 b) {
  const double vx = b.x - a.x;
  const double vy = b.y - a.y;
  const double len2 = vx * vx + vy * vy;
  double t = 0.0;
  if (len2 > 0.0) t = std::clamp(((px - a.x) * vx + (py - a.y) * vy) / len2, 0.0, 1.0);
  const double dx = px - (a.x + t * vx);
  const double dy = py - (a.y + t * vy);
  return dx * dx + dy * dy;
}

/// Pixel (r,c) is set iff its center is within width/2 of some segment.
inline Mask brute_force_raster(const PolylineAnnotation& ann, std::size_t h, std::size_t w) {
  Mask m(h, w, 0);
  for (std::size_t r = 0; r < h; ++r) {
    for (std::size_t c = 0; c < w; ++c) {
      const double px = static_cast<double>(c);
      const double py = static_cast<double>(r);
      double best = seg_dist2(px, py, ann.points[0], ann.points[0]);
      for (std::size_t i = 1; i < ann.points.size(); ++i) {
        best = std::min(best, seg_dist2(px, py, ann.points[i - 1], ann.points[i]));
      }
      if (std::sqrt(best) <= ann.width / 2.0) m.at(r, c) = 1;
    }
  }
  return m;
}

inline PolylineAnnotation random_polyline(std::mt19937_64& rng, std::size_t h, std::size_t w,
                                          std::size_t max_points = 6) {
  std::uniform_int_distribution<std::size_t> npts(1, max_points);
  std::uniform_real_distribution<double> xs(-2.0, static_cast<double>(w) + 1.0);
  std::uniform_real_distribution<double> ys(-2.0, static_cast<double>(h) + 1.0);
  std::uniform_real_distribution<double> width(0.5, 6.0);
  PolylineAnnotation ann;
  const std::size_t n = npts(rng);
  for (std::size_t i = 0; i < n; ++i) ann.points.push_back({xs(rng), ys(rng)});
  ann.width = width(rng);
  return ann;
}

/// Adjusted Rand index of two labelings of the same items.
inline double adjusted_rand_index(const std::vector<std::size_t>& a, const std::vector<std::size_t>& b) {
  std::map<std::pair<std::size_t, std::size_t>, double> joint;
  std::map<std::size_t, double> ra;
  std::map<std::size_t, double> rb;
  for (std::size_t i = 0; i < a.size(); ++i) {
    joint[{a[i], b[i]}] += 1;
    ra[a[i]] += 1;
    rb[b[i]] += 1;
  }
  const auto c2 = [](double n) { return n * (n - 1) / 2; };
  double sum_joint = 0;
  double sum_a = 0;
  double sum_b = 0;
  for (const auto& [k, v] : joint) sum_joint += c2(v);
  for (const auto& [k, v] : ra) sum_a += c2(v);
  for (const auto& [k, v] : rb) sum_b += c2(v);
  const double total = c2(static_cast<double>(a.size()));
  const double expected = sum_a * sum_b / total;
  const double max_index = (sum_a + sum_b) / 2;
  if (max_index == expected) return 1.0;
  return (sum_joint - expected) / (max_index - expected);
}

struct Blobs {
  std::vector<curvseg::Vec5> centers;
  std::vector<curvseg::Vec5> points;
  /// Index of the nearest true center for every point.
  std::vector<std::size_t> truth;
};

/// k Gaussian blobs (sigma = 0.1 * bandwidth) whose centers are pairwise at
/// least `separation` * bandwidth apart.
inline Blobs make_blobs(std::size_t k, double bandwidth, double separation, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> box(-4.0 * separation * bandwidth, 4.0 * separation * bandwidth);
  std::normal_distribution<double> noise(0.0, 0.1 * bandwidth);
  std::uniform_int_distribution<std::size_t> count(30, 80);
  Blobs b;
  while (b.centers.size() < k) {
    curvseg::Vec5 c;
    for (auto& v : c) v = box(rng);
    bool far = true;
    for (const auto& o : b.centers) far = far && curvseg::distance(c, o) >= separation * bandwidth;
    if (far) b.centers.push_back(c);
  }
  for (std::size_t j = 0; j < k; ++j) {
    const std::size_t n = count(rng);
    for (std::size_t i = 0; i < n; ++i) {
      curvseg::Vec5 p = b.centers[j];
      for (auto& v : p) v += noise(rng);
      b.points.push_back(p);
    }
  }
  for (const auto& p : b.points) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < k; ++j) {
      if (curvseg::distance(p, b.centers[j]) < curvseg::distance(p, b.centers[best])) best = j;
    }
    b.truth.push_back(best);
  }
  return b;
}

/// Ground-truth network outputs: probability 1 on the foreground, a constant
/// embedding `spacing` * e_k for instance k, and the mean of the involved
/// embeddings on pixels shared by several instances.
inline DenseMaps oracle_maps(const InstanceSet& gt, double spacing = 3.0) {
  DenseMaps maps{ImageGrid(gt.height, gt.width, 0.0), EmbeddingField(gt.height, gt.width, 3)};
  for (std::size_t i = 0; i < gt.height * gt.width; ++i) {
    const std::size_t r = i / gt.width;
    const std::size_t c = i % gt.width;
    std::vector<double> e(3, 0.0);
    int n = 0;
    for (std::size_t k = 0; k < gt.size(); ++k) {
      if (!gt.masks[k][i]) continue;
      e[k % 3] += spacing * (k < 3 ? 1.0 : -1.0);
      ++n;
    }
    if (n == 0) continue;
    maps.seg_prob[i] = 1.0;
    auto v = maps.embedding.at(r, c);
    for (std::size_t d = 0; d < 3; ++d) v[d] = e[d] / n;
  }
  return maps;
}

/// Masks as comparable sets, ignoring instance order.
inline std::vector<std::vector<std::uint8_t>> sorted_masks(const InstanceSet& s) {
  std::vector<std::vector<std::uint8_t>> out;
  for (const auto& m : s.masks) out.emplace_back(m.values().begin(), m.values().end());
  std::sort(out.begin(), out.end());
  return out;
}

inline bool same_instances(const InstanceSet& a, const InstanceSet& b) {
  return a.height == b.height && a.width == b.width && sorted_masks(a) == sorted_masks(b);
}

}  // namespace oracles
