#include "curvseg/cluster.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <stdexcept>

namespace curvseg {

double distance(const Vec5& a, const Vec5& b) {
  double s = 0.0;
  for (std::size_t d = 0; d < kClusterDim; ++d) {
    const double diff = a[d] - b[d];
    s += diff * diff;
  }
  return std::sqrt(s);
}

ForegroundEmbeddings augment_coordinates(const EmbeddingField& embedding, const Mask& foreground,
                                         double coord_scale) {
  if (embedding.dim() != 3) {
    throw std::invalid_argument("augment_coordinates: expected 3-d embeddings");
  }
  if (!foreground.same_shape(embedding.height(), embedding.width())) {
    throw std::invalid_argument("augment_coordinates: mask and embedding differ in dimensions");
  }
  const std::size_t h = embedding.height();
  const std::size_t w = embedding.width();
  const double row_norm = h > 1 ? coord_scale / static_cast<double>(h - 1) : 0.0;
  const double col_norm = w > 1 ? coord_scale / static_cast<double>(w - 1) : 0.0;
  ForegroundEmbeddings fe;
  fe.height = h;
  fe.width = w;
  for (std::size_t r = 0; r < h; ++r) {
    for (std::size_t c = 0; c < w; ++c) {
      if (!foreground.at(r, c)) continue;
      const auto e = embedding.at(r, c);
      fe.pixels.push_back({r, c});
      fe.vectors.push_back({e[0], e[1], e[2], static_cast<double>(r) * row_norm,
                            static_cast<double>(c) * col_norm});
    }
  }
  return fe;
}

void MeanShiftConfig::validate() const {
  if (!(bandwidth > 0.0)) throw std::invalid_argument("MeanShiftConfig: bandwidth must be > 0");
  if (!(merge_radius > 0.0)) throw std::invalid_argument("MeanShiftConfig: merge_radius must be > 0");
  if (seed_cap < 1) throw std::invalid_argument("MeanShiftConfig: seed_cap must be >= 1");
  if (max_iterations < 1) throw std::invalid_argument("MeanShiftConfig: max_iterations must be >= 1");
  if (!(convergence_tol > 0.0)) {
    throw std::invalid_argument("MeanShiftConfig: convergence_tol must be > 0");
  }
  if (!(coord_scale >= 0.0)) throw std::invalid_argument("MeanShiftConfig: coord_scale must be >= 0");
  if (!(min_cluster_fraction >= 0.0 && min_cluster_fraction < 1.0)) {
    throw std::invalid_argument("MeanShiftConfig: min_cluster_fraction must lie in [0,1)");
  }
}

Vec5 mean_shift_update(const std::vector<Vec5>& points, const Vec5& z, double bandwidth) {
  const double bw2 = bandwidth * bandwidth;
  Vec5 sum{};
  std::size_t count = 0;
  for (const auto& p : points) {
    double d2 = 0.0;
    for (std::size_t d = 0; d < kClusterDim; ++d) {
      const double diff = p[d] - z[d];
      d2 += diff * diff;
    }
    if (d2 > bw2) continue;
    for (std::size_t d = 0; d < kClusterDim; ++d) sum[d] += p[d];
    ++count;
  }
  if (count == 0) return z;
  for (auto& v : sum) v /= static_cast<double>(count);
  return sum;
}

std::size_t nearest_center(const std::vector<Vec5>& centers, const Vec5& v) {
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < centers.size(); ++k) {
    const double d = distance(centers[k], v);
    if (d < best_d) {
      best_d = d;
      best = k;
    }
  }
  return best;
}

namespace {

Vec5 climb(const std::vector<Vec5>& points, Vec5 z, const MeanShiftConfig& cfg) {
  for (std::size_t it = 0; it < cfg.max_iterations; ++it) {
    const Vec5 next = mean_shift_update(points, z, cfg.bandwidth);
    const double shift = distance(next, z);
    z = next;
    if (shift < cfg.convergence_tol) break;
  }
  return z;
}

struct Mode {
  Vec5 center{};
  std::size_t support = 0;
};

// Greedy merge in the given order: each mode joins the first group whose
// running centroid is within `radius`.
std::vector<Mode> merge_modes(const std::vector<Mode>& modes, double radius) {
  std::vector<Mode> groups;
  for (const auto& m : modes) {
    bool placed = false;
    for (auto& g : groups) {
      if (distance(g.center, m.center) <= radius) {
        const auto wg = static_cast<double>(g.support);
        const auto wm = static_cast<double>(m.support);
        for (std::size_t d = 0; d < kClusterDim; ++d) {
          g.center[d] = (g.center[d] * wg + m.center[d] * wm) / (wg + wm);
        }
        g.support += m.support;
        placed = true;
        break;
      }
    }
    if (!placed) groups.push_back(m);
  }
  return groups;
}

std::vector<std::size_t> assign_all(const std::vector<Vec5>& points, const std::vector<Vec5>& centers) {
  std::vector<std::size_t> out(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) out[i] = nearest_center(centers, points[i]);
  return out;
}

}  // namespace

ClusterModel mean_shift(const std::vector<Vec5>& points, const MeanShiftConfig& cfg) {
  cfg.validate();
  if (points.empty()) throw std::invalid_argument("mean_shift: empty input");

  std::vector<std::size_t> seeds(points.size());
  std::iota(seeds.begin(), seeds.end(), std::size_t{0});
  if (points.size() > cfg.seed_cap) {
    std::vector<std::size_t> picked;
    picked.reserve(cfg.seed_cap);
    std::mt19937_64 rng(cfg.rng_seed);
    std::sample(seeds.begin(), seeds.end(), std::back_inserter(picked), cfg.seed_cap, rng);
    seeds = std::move(picked);
  }

  std::vector<Mode> modes;
  modes.reserve(seeds.size());
  for (std::size_t s : seeds) {
    modes.push_back({climb(points, points[s], cfg), 1});
  }
  // Lexicographic order makes merging independent of input ordering.
  std::sort(modes.begin(), modes.end(),
            [](const Mode& a, const Mode& b) { return a.center < b.center; });
  std::vector<Mode> groups = merge_modes(modes, cfg.merge_radius);

  // Centroids of merged modes need not be fixed points; climb again and
  // re-merge until no two centers are within the merge radius.
  const auto refine = [&](const std::vector<Mode>& in) {
    std::vector<Mode> out;
    out.reserve(in.size());
    for (const auto& g : in) {
      out.push_back({climb(points, g.center, cfg), g.support});
    }
    return out;
  };
  bool stable = false;
  for (std::size_t round = 0; round <= modes.size() && !stable; ++round) {
    std::vector<Mode> refined = refine(groups);
    std::vector<Mode> merged = merge_modes(refined, cfg.merge_radius);
    stable = merged.size() == refined.size();
    groups = stable ? std::move(refined) : std::move(merged);
  }
  if (!stable) groups = refine(groups);

  std::vector<Vec5> centers;
  for (const auto& g : groups) centers.push_back(g.center);
  std::vector<std::size_t> assignment = assign_all(points, centers);

  // Drop modes with too little support, smallest first.
  const double min_count = cfg.min_cluster_fraction * static_cast<double>(points.size());
  while (centers.size() > 1) {
    std::vector<std::size_t> counts(centers.size(), 0);
    for (std::size_t a : assignment) ++counts[a];
    const auto smallest = static_cast<std::size_t>(
        std::min_element(counts.begin(), counts.end()) - counts.begin());
    if (static_cast<double>(counts[smallest]) >= min_count) break;
    centers.erase(centers.begin() + static_cast<std::ptrdiff_t>(smallest));
    assignment = assign_all(points, centers);
  }

  std::sort(centers.begin(), centers.end());
  ClusterModel out;
  out.assignment = assign_all(points, centers);
  out.centers = std::move(centers);
  return out;
}

ClusterModel mean_shift(const ForegroundEmbeddings& fe, const MeanShiftConfig& cfg) {
  return mean_shift(fe.vectors, cfg);
}

}  // namespace curvseg
