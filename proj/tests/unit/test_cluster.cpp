#include <gtest/gtest.h>

#include <algorithm>
#include <random>

#include "curvseg/cluster.hpp"
#include "oracles.hpp"

using namespace curvseg;

TEST(Coordinates, EmptyMaskGivesNothing) {
  const ForegroundEmbeddings fe = augment_coordinates(EmbeddingField(4, 4, 3), Mask(4, 4, 0), 1.0);
  EXPECT_TRUE(fe.empty());
  EXPECT_EQ(fe.height, 4u);
}

TEST(Coordinates, CornersMapToEndpoints) {
  EmbeddingField e(5, 9, 3, 0.25);
  Mask m(5, 9, 0);
  m.at(0, 0) = 1;
  m.at(4, 8) = 1;
  m.at(2, 1) = 1;
  const ForegroundEmbeddings fe = augment_coordinates(e, m, 2.0);
  ASSERT_EQ(fe.size(), 3u);
  EXPECT_EQ(fe.pixels[1], (PixelIndex{2, 1}));
  EXPECT_EQ(fe.vectors[0], (Vec5{0.25, 0.25, 0.25, 0.0, 0.0}));
  EXPECT_EQ(fe.vectors[2], (Vec5{0.25, 0.25, 0.25, 2.0, 2.0}));
  EXPECT_DOUBLE_EQ(fe.vectors[1][3], 1.0);
  EXPECT_DOUBLE_EQ(fe.vectors[1][4], 0.25);

  const ForegroundEmbeddings flat = augment_coordinates(e, m, 0.0);
  for (const auto& v : flat.vectors) {
    EXPECT_EQ(v[3], 0.0);
    EXPECT_EQ(v[4], 0.0);
  }
  EXPECT_THROW(augment_coordinates(EmbeddingField(5, 9, 2), m, 1.0), std::invalid_argument);
}

TEST(MeanShift, IdenticalPointsGiveOneCluster) {
  const std::vector<Vec5> pts(40, Vec5{1, 2, 3, 0.5, 0.5});
  const ClusterModel cm = mean_shift(pts, MeanShiftConfig{});
  ASSERT_EQ(cm.k(), 1u);
  EXPECT_EQ(cm.centers[0], pts[0]);
}

TEST(MeanShift, TwoBlobsMatchNearestCenterOracle) {
  MeanShiftConfig cfg;
  const auto b = oracles::make_blobs(2, cfg.bandwidth, 10.0, 1);
  const ClusterModel cm = mean_shift(b.points, cfg);
  EXPECT_EQ(cm.k(), 2u);
  EXPECT_EQ(oracles::adjusted_rand_index(cm.assignment, b.truth), 1.0);
}

TEST(MeanShift, ThreeCollinearBlobsCentersNearMeans) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n(0.0, 0.02);
  std::vector<Vec5> pts;
  std::vector<Vec5> means(3, Vec5{});
  for (int k = 0; k < 3; ++k) {
    for (int i = 0; i < 50; ++i) {
      Vec5 p{8.0 * k, 0, 0, 0, 0};
      for (auto& v : p) v += n(rng);
      pts.push_back(p);
      for (int d = 0; d < 5; ++d) means[k][d] += p[d] / 50.0;
    }
  }
  const ClusterModel cm = mean_shift(pts, MeanShiftConfig{});
  ASSERT_EQ(cm.k(), 3u);
  for (const auto& m : means) {
    double best = 1e9;
    for (const auto& c : cm.centers) best = std::min(best, distance(c, m));
    EXPECT_LE(best, 0.05);
  }
}

TEST(MeanShift, CentersAreFixedPointsAndAssignmentIsNearest) {
  MeanShiftConfig cfg;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto b = oracles::make_blobs(3, cfg.bandwidth, 10.0, 100 + seed);
    const ClusterModel cm = mean_shift(b.points, cfg);
    for (const auto& c : cm.centers) {
      EXPECT_LE(distance(mean_shift_update(b.points, c, cfg.bandwidth), c), cfg.convergence_tol);
    }
    for (std::size_t i = 0; i < b.points.size(); ++i) {
      EXPECT_EQ(cm.assignment[i], nearest_center(cm.centers, b.points[i]));
    }
  }
}

TEST(MeanShift, KIndependentOfOrderWithFullSeeding) {
  MeanShiftConfig cfg;
  auto b = oracles::make_blobs(4, cfg.bandwidth, 10.0, 9);
  cfg.seed_cap = b.points.size();
  const std::size_t k = mean_shift(b.points, cfg).k();
  std::mt19937_64 rng(1);
  std::shuffle(b.points.begin(), b.points.end(), rng);
  EXPECT_EQ(mean_shift(b.points, cfg).k(), k);
}

TEST(MeanShift, ScaleInvariance) {
  MeanShiftConfig cfg;
  const auto b = oracles::make_blobs(3, cfg.bandwidth, 10.0, 21);
  const ClusterModel base = mean_shift(b.points, cfg);
  std::vector<Vec5> scaled = b.points;
  for (auto& p : scaled) {
    for (auto& v : p) v *= 4.0;
  }
  MeanShiftConfig sc = cfg;
  sc.bandwidth *= 4.0;
  sc.merge_radius *= 4.0;
  sc.convergence_tol *= 4.0;
  EXPECT_EQ(mean_shift(scaled, sc).assignment, base.assignment);
}

TEST(MeanShift, SmallBasinsArePruned) {
  std::vector<Vec5> pts(100, Vec5{0, 0, 0, 0, 0});
  for (int i = 0; i < 100; ++i) pts.push_back({5, 0, 0, 0, 0});
  for (int i = 0; i < 5; ++i) pts.push_back({2.5, 0, 0, 0, 0});
  const ClusterModel cm = mean_shift(pts, MeanShiftConfig{});
  EXPECT_EQ(cm.k(), 2u);
  MeanShiftConfig keep;
  keep.min_cluster_fraction = 0.0;
  EXPECT_EQ(mean_shift(pts, keep).k(), 3u);
}

TEST(MeanShift, Validation) {
  MeanShiftConfig cfg;
  cfg.bandwidth = 0.0;
  EXPECT_THROW(mean_shift(std::vector<Vec5>{{}}, cfg), std::invalid_argument);
  EXPECT_THROW(mean_shift(std::vector<Vec5>{}, MeanShiftConfig{}), std::invalid_argument);
}
