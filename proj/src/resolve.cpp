#include "curvseg/resolve.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace curvseg {

void ResolveConfig::validate() const {
  if (!(beta > 0.0)) throw std::invalid_argument("ResolveConfig: beta must be > 0");
  if (!(threshold_a > 0.5 && threshold_a < 1.0)) {
    throw std::invalid_argument("ResolveConfig: threshold_a must lie in (0.5, 1)");
  }
}

double ResolveConfig::gap_threshold() const {
  return std::log(threshold_a / (1.0 - threshold_a)) / beta;
}

std::vector<double> similarity_scores(std::span<const double> sorted_distances, double beta) {
  if (sorted_distances.size() < 2) {
    throw std::invalid_argument("similarity_scores: need at least two distances");
  }
  for (std::size_t i = 0; i < sorted_distances.size(); ++i) {
    if (!(sorted_distances[i] >= 0.0)) {
      throw std::invalid_argument("similarity_scores: distances must be >= 0");
    }
    if (i > 0 && sorted_distances[i] < sorted_distances[i - 1]) {
      throw std::invalid_argument("similarity_scores: distances must be sorted ascending");
    }
  }
  const double d1 = sorted_distances[0];
  std::vector<double> out;
  out.reserve(sorted_distances.size() - 1);
  for (std::size_t i = 1; i < sorted_distances.size(); ++i) {
    out.push_back(1.0 / (1.0 + std::exp(-beta * (sorted_distances[i] - d1))));
  }
  return out;
}

namespace {

struct Ranked {
  std::vector<std::size_t> order;
  std::vector<double> distances;  // ascending, aligned with order
};

Ranked rank_centers(const Vec5& embedding, const std::vector<Vec5>& centers) {
  std::vector<double> dist(centers.size());
  for (std::size_t k = 0; k < centers.size(); ++k) dist[k] = distance(embedding, centers[k]);
  Ranked r;
  r.order.resize(centers.size());
  std::iota(r.order.begin(), r.order.end(), std::size_t{0});
  std::stable_sort(r.order.begin(), r.order.end(),
                   [&](std::size_t a, std::size_t b) { return dist[a] < dist[b]; });
  r.distances.reserve(centers.size());
  for (std::size_t k : r.order) r.distances.push_back(dist[k]);
  return r;
}

}  // namespace

std::vector<std::size_t> resolve_pixel(const Vec5& embedding, const std::vector<Vec5>& centers,
                                       const ResolveConfig& cfg) {
  if (centers.empty()) throw std::invalid_argument("resolve_pixel: no cluster centers");
  const Ranked r = rank_centers(embedding, centers);
  std::vector<std::size_t> members{r.order[0]};
  if (centers.size() == 1) return members;
  const auto scores = similarity_scores(r.distances, cfg.beta);
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (scores[i] < cfg.threshold_a) members.push_back(r.order[i + 1]);
  }
  return members;
}

double min_similarity(const Vec5& embedding, const std::vector<Vec5>& centers, double beta) {
  if (centers.size() < 2) return 1.0;
  const Ranked r = rank_centers(embedding, centers);
  const auto scores = similarity_scores(r.distances, beta);
  return *std::min_element(scores.begin(), scores.end());
}

InstanceSet build_instances(const ForegroundEmbeddings& fe, const ClusterModel& cm,
                            const ResolveConfig& cfg) {
  cfg.validate();
  InstanceSet out(fe.height, fe.width);
  if (fe.empty()) return out;
  if (cm.assignment.size() != fe.size()) {
    throw std::invalid_argument("build_instances: cluster model does not match the foreground");
  }
  out.masks.assign(cm.k(), Mask(fe.height, fe.width, 0));
  for (std::size_t i = 0; i < fe.size(); ++i) {
    const auto& px = fe.pixels[i];
    for (std::size_t k : resolve_pixel(fe.vectors[i], cm.centers, cfg)) {
      out.masks[k].at(px.row, px.col) = 1;
    }
  }
  return out;
}

ImageGrid similarity_map(const ForegroundEmbeddings& fe, const ClusterModel& cm, double beta) {
  ImageGrid out(fe.height, fe.width, 1.0);
  for (std::size_t i = 0; i < fe.size(); ++i) {
    out.at(fe.pixels[i].row, fe.pixels[i].col) = min_similarity(fe.vectors[i], cm.centers, beta);
  }
  return out;
}

}  // namespace curvseg
