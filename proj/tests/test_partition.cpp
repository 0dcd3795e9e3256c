#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "dmhnsw/dataset.hpp"
#include "dmhnsw/partition.hpp"

namespace dmhnsw {
namespace {

VectorSet two_blobs() {
  VectorSet v(2);
  Rng rng(3);
  for (int i = 0; i < 100; ++i) {
    const float cx = i % 2 == 0 ? 0.0f : 10.0f;
    const float p[2] = {cx + static_cast<float>(0.3 * standard_normal(rng)),
                        static_cast<float>(0.3 * standard_normal(rng))};
    v.push_back(p);
  }
  return v;
}

std::size_t max_size(const ClusterModel& m) { return *std::max_element(m.sizes.begin(), m.sizes.end()); }

void expect_consistent(const ClusterModel& m, std::size_t n) {
  ASSERT_EQ(m.assignment.size(), n);
  std::vector<std::size_t> counted(m.k());
  for (auto c : m.assignment) {
    ASSERT_LT(c, m.k());
    ++counted[c];
  }
  EXPECT_EQ(counted, m.sizes);
}

TEST(BalancedKmeans, SeparatesTwoBlobs) {
  const auto pts = two_blobs();
  const auto m = balanced_kmeans(pts, 2, 1);
  expect_consistent(m, pts.size());
  EXPECT_EQ(m.sizes, (std::vector<std::size_t>{50, 50}));
  for (std::size_t i = 2; i < pts.size(); ++i) EXPECT_EQ(m.assignment[i], m.assignment[i % 2]);
  EXPECT_NE(m.assignment[0], m.assignment[1]);
}

TEST(BalancedKmeans, CapForcesExactBalance) {
  const auto pts = gen_synthetic({1000, 8, Distribution::kUniform}, 4);
  const auto m = balanced_kmeans(pts, 4, 2);
  expect_consistent(m, 1000);
  EXPECT_EQ(m.sizes, (std::vector<std::size_t>{250, 250, 250, 250}));
}

TEST(BalancedKmeans, NeverExceedsCeiling) {
  for (std::uint32_t k : {3u, 5u, 7u, 10u}) {
    const auto pts = gen_synthetic({1001, 4, Distribution::kGaussianMixture, 5, 0.05}, k);
    const auto m = balanced_kmeans(pts, k, 9);
    expect_consistent(m, 1001);
    EXPECT_LE(max_size(m), (1001 + k - 1) / k) << "k=" << k;
  }
}

TEST(BalancedKmeans, DeterministicForSeed) {
  const auto pts = gen_synthetic({2000, 8, Distribution::kGaussianMixture, 6, 0.1}, 5);
  const auto a = balanced_kmeans(pts, 5, 11);
  const auto b = balanced_kmeans(pts, 5, 11);
  EXPECT_EQ(a.assignment, b.assignment);
  EXPECT_EQ(a.centroids, b.centroids);
}

TEST(BalancedKmeans, RejectsBadK) {
  const auto pts = gen_synthetic({3, 2, Distribution::kUniform}, 1);
  EXPECT_THROW(balanced_kmeans(pts, 0, 1), PartitionError);
  EXPECT_THROW(balanced_kmeans(pts, 4, 1), PartitionError);
}

TEST(RefineSmallOddK, ThreeClustersOnUniformPoints) {
  const auto pts = gen_synthetic({900, 8, Distribution::kUniform}, 6);
  const auto m = refine_small_odd_k(pts, 3, 7);
  expect_consistent(m, 900);
  ASSERT_EQ(m.k(), 3u);
  EXPECT_GT(m.trained_k, 3u);
  for (auto s : m.sizes) {
    EXPECT_GE(s, 210u);
    EXPECT_LE(s, 390u);
  }
}

TEST(RefineSmallOddK, MergedCentroidIsWeightedMean) {
  VectorSet pts(1);
  for (float x : {0.0f, 2.0f}) pts.push_back(std::span<const float>(&x, 1));
  const auto m = refine_small_odd_k(pts, 1, 1);
  ASSERT_EQ(m.k(), 1u);
  EXPECT_EQ(m.trained_k, 2u);
  EXPECT_FLOAT_EQ(m.centroids.row(0)[0], 1.0f);
  EXPECT_EQ(m.sizes, std::vector<std::size_t>{2});
}

TEST(BuildClusterModel, EvenKBypassesRefinement) {
  const auto pts = gen_synthetic({800, 4, Distribution::kUniform}, 8);
  const auto m = build_cluster_model(pts, 4, 3);
  EXPECT_EQ(m.trained_k, 4u);
  EXPECT_EQ(m.assignment, balanced_kmeans(pts, 4, 3).assignment);
  EXPECT_GT(build_cluster_model(pts, 3, 3).trained_k, 3u);
  EXPECT_EQ(build_cluster_model(pts, 9, 3).trained_k, 9u);
}

TEST(ChooseSampleLevel, FirstFromTopWithEnoughNodes) {
  bool fallback = true;
  const std::vector<std::size_t> pop{20000, 5000, 1500, 40};
  EXPECT_EQ(choose_sample_level(pop, 1000, &fallback), 2u);
  EXPECT_FALSE(fallback);
}

TEST(ChooseSampleLevel, FallsBackToLargestLevel) {
  bool fallback = false;
  const std::vector<std::size_t> pop{500, 120, 10};
  EXPECT_EQ(choose_sample_level(pop, 1000, &fallback), 0u);
  EXPECT_TRUE(fallback);
}

class SampledIndex : public ::testing::Test {
 protected:
  IndexMeta build(std::size_t n) {
    data = gen_synthetic({n, 8, Distribution::kUniform}, n);
    fabric = std::make_unique<Fabric>(FabricConfig{2, 1, 16 << 20});
    return build_index(*fabric, data, IndexParams{8, 4, 32}, 1);
  }
  VectorSet data;
  std::unique_ptr<Fabric> fabric;
};

TEST_F(SampledIndex, SamplesChosenLevelWithoutWriting) {
  const auto meta = build(6000);
  const auto before0 = fabric->arena(0).checksum();
  const auto before1 = fabric->arena(1).checksum();
  SampleInfo info;
  const auto sample = select_sample(*fabric, meta, 5, kMaxSampleSize, &info);
  EXPECT_EQ(fabric->arena(0).checksum(), before0);
  EXPECT_EQ(fabric->arena(1).checksum(), before1);
  EXPECT_FALSE(info.fallback);
  EXPECT_EQ(info.level, 1u);
  EXPECT_EQ(sample.size(), info.level_population);
  EXPECT_GE(info.level_population, 1000u);
  // Every sampled vector is a level-1 node of the index.
  const auto nodes = scan_nodes(*fabric, meta);
  for (std::size_t i = 0; i < 20; ++i) {
    const auto row = sample.row(i);
    const auto it = std::find_if(nodes.begin(), nodes.end(), [&](const NodeLocation& n) {
      return std::equal(row.begin(), row.end(), data.row(n.node_id).begin());
    });
    ASSERT_NE(it, nodes.end());
    EXPECT_GE(it->max_level, 1u);
  }
}

TEST_F(SampledIndex, SmallIndexUsesFallbackLevel) {
  const auto meta = build(500);
  SampleInfo info;
  const auto sample = select_sample(*fabric, meta, 5, kMaxSampleSize, &info);
  EXPECT_TRUE(info.fallback);
  EXPECT_EQ(info.level, 0u);
  EXPECT_EQ(sample.size(), 500u);
}

TEST_F(SampledIndex, CapSubsamples) {
  const auto meta = build(1500);
  SampleInfo info;
  const auto sample = select_sample(*fabric, meta, 5, 300, &info);
  EXPECT_EQ(sample.size(), 300u);
  EXPECT_EQ(info.sample_size, 300u);
  EXPECT_EQ(select_sample(*fabric, meta, 5, 300), sample);
}

TEST_F(SampledIndex, EmptyIndexIsAnError) {
  fabric = std::make_unique<Fabric>(FabricConfig{1, 1, 1 << 20});
  const auto meta = initialize_index(*fabric, IndexParams{8, 4, 32});
  EXPECT_THROW(select_sample(*fabric, meta, 1), PartitionError);
}

TEST(Oracle, RanksBySquaredDistance) {
  VectorSet c(1);
  for (float x : {0.0f, 10.0f}) c.push_back(std::span<const float>(&x, 1));
  const Oracle oracle(c);
  const float q = 1.0f;
  const auto r = oracle.rank(std::span<const float>(&q, 1));
  ASSERT_EQ(r.size(), 2u);
  EXPECT_EQ(r[0], std::make_pair(1.0f, 0u));
  EXPECT_EQ(r[1], std::make_pair(81.0f, 1u));
}

TEST(Oracle, TiesGoToLowerCn) {
  VectorSet c(1);
  for (float x : {4.0f, -2.0f, 2.0f}) c.push_back(std::span<const float>(&x, 1));
  const Oracle oracle(c);
  const float q = 0.0f;
  const auto r = oracle.rank(std::span<const float>(&q, 1));
  EXPECT_EQ(r[0].second, 1u);
  EXPECT_EQ(r[1].second, 2u);
  EXPECT_EQ(r[2].second, 0u);
}

TEST(Oracle, ReturnsPermutationWithMinimumFirst) {
  const auto cents = gen_synthetic({7, 8, Distribution::kUniform}, 12);
  const Oracle oracle(cents);
  const auto qs = gen_synthetic({200, 8, Distribution::kUniform}, 13);
  for (std::size_t i = 0; i < qs.size(); ++i) {
    auto r = oracle.rank(qs.row(i));
    ASSERT_EQ(r.size(), 7u);
    EXPECT_TRUE(std::is_sorted(r.begin(), r.end()));
    std::vector<std::uint32_t> ids;
    for (auto& [d, id] : r) ids.push_back(id);
    std::sort(ids.begin(), ids.end());
    for (std::uint32_t j = 0; j < 7; ++j) EXPECT_EQ(ids[j], j);
  }
}

}  // namespace
}  // namespace dmhnsw
