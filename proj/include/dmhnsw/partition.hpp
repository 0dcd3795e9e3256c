#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include "dmhnsw/distance.hpp"
#include "dmhnsw/fabric.hpp"
#include "dmhnsw/hnsw.hpp"

namespace dmhnsw {

class PartitionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr std::size_t kSampleLevelMinNodes = 1000;
inline constexpr std::size_t kMaxSampleSize = 100000;
/// "Nearly equal" for the doubling loop: largest / smallest cluster.
inline constexpr double kNearlyEqualRatio = 1.25;
inline constexpr std::uint32_t kMaxDoubledK = 64;

struct SampleInfo {
  std::uint32_t level = 0;
  /// True when no level reached kSampleLevelMinNodes.
  bool fallback = false;
  std::size_t level_population = 0;
  std::size_t sample_size = 0;
};

/// population[l] = number of nodes whose max level is >= l. Returns the first
/// level from the top with at least `min_nodes`, else the lowest level with
/// the largest population.
std::uint32_t choose_sample_level(std::span<const std::size_t> population, std::size_t min_nodes, bool* fallback);

/// Vectors of every node present at the chosen level, in node-id order,
/// uniformly subsampled to at most `cap` (seeded). Reads arenas directly and
/// never writes.
VectorSet select_sample(const Fabric& fabric, const IndexMeta& meta, std::uint64_t seed,
                        std::size_t cap = kMaxSampleSize, SampleInfo* info = nullptr);

struct ClusterModel {
  VectorSet centroids;
  /// Cluster of each input point, in input order.
  std::vector<std::uint32_t> assignment;
  std::vector<std::size_t> sizes;
  std::uint32_t iterations = 0;
  /// Cluster count used before merging; equals the final k when no refinement ran.
  std::uint32_t trained_k = 0;

  std::size_t k() const { return centroids.size(); }
};

/// k-means++ seeding, then capacity-greedy assignment in input order with
/// per-cluster cap ceil(n/k), recomputing centroids until the assignment stops
/// changing or `max_iter` rounds ran. Clustering always uses squared L2.
ClusterModel balanced_kmeans(const VectorSet& points, std::uint32_t k, std::uint64_t seed,
                             std::uint32_t max_iter = 50);

/// Doubles k until balanced_kmeans yields clusters within kNearlyEqualRatio
/// (or k' would exceed kMaxDoubledK), then merges clusters back down to k.
/// Merging runs in rounds: each round repeatedly joins the closest pair of
/// clusters not yet merged in that round, so every final cluster is a union
/// of equally many trained clusters.
ClusterModel refine_small_odd_k(const VectorSet& points, std::uint32_t k, std::uint64_t seed,
                                std::uint32_t max_iter = 50);

/// refine_small_odd_k for odd k <= 7, balanced_kmeans otherwise.
ClusterModel build_cluster_model(const VectorSet& points, std::uint32_t k, std::uint64_t seed,
                                 std::uint32_t max_iter = 50);

/// Ranks compute nodes for a query; CN i owns centroid i.
class Oracle {
 public:
  explicit Oracle(VectorSet centroids);

  /// (squared L2 distance, cn id) ascending, ties by lower cn id. Exactly k
  /// distance computations.
  std::vector<std::pair<float, std::uint32_t>> rank(std::span<const float> q) const;
  void rank(std::span<const float> q, std::vector<std::pair<float, std::uint32_t>>& out) const;

  std::size_t size() const { return centroids_.size(); }
  const VectorSet& centroids() const { return centroids_; }

 private:
  VectorSet centroids_;
};

}  // namespace dmhnsw
