#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "dmhnsw/distance.hpp"
#include "dmhnsw/hnsw.hpp"
#include "dmhnsw/random.hpp"

namespace dmhnsw {

/// Ordered queries (indices into a query pool) with their arrival CNs. The
/// first `warmup` entries warm the caches; the rest are measured.
struct QueryStream {
  std::vector<std::uint32_t> pool_index;
  std::vector<std::uint32_t> arrival_cn;
  std::size_t warmup = 0;

  std::size_t size() const { return pool_index.size(); }
  std::size_t measured() const { return size() - warmup; }
};

/// Samples ranks 1..n with probability proportional to r^-s by inverting the
/// cumulative mass table.
class ZipfSampler {
 public:
  ZipfSampler(std::size_t n, double s);
  /// Zero-based rank.
  std::size_t sample(Rng& rng) const;
  double probability(std::size_t rank) const;

 private:
  std::vector<double> cdf_;
};

QueryStream gen_uniform(std::size_t pool_size, std::size_t count, std::size_t warmup, std::uint32_t cns,
                        std::uint64_t seed);
/// Pool items are ranked by a seed-fixed permutation; rank r is drawn with
/// probability proportional to r^-s.
QueryStream gen_zipf(std::size_t pool_size, std::size_t count, std::size_t warmup, double s, std::uint32_t cns,
                     std::uint64_t seed);

/// Exact k nearest ids by linear scan, ascending by (distance, id).
std::vector<std::uint32_t> brute_force_knn(const VectorSet& data, std::span<const float> q, std::size_t k,
                                           Metric metric);
std::vector<std::vector<std::uint32_t>> brute_force_batch(const VectorSet& data, const VectorSet& queries,
                                                          std::size_t k, Metric metric);

/// |result ∩ truth| / k over the first k truth ids.
double recall_at_k(std::span<const std::uint32_t> result, std::span<const std::uint32_t> truth, std::size_t k);

/// 1 - chr / chr_max, clamped to [0, 1]; absent when chr_max is 0.
std::optional<double> csp(double chr, double chr_max);

struct TrafficSummary {
  double bytes_per_query = 0.0;
  /// Neighbor-list bytes over node-payload (header + vector) bytes.
  double list_to_vector_ratio = 0.0;
};

TrafficSummary traffic_summary(const SearchCounters& counters, std::uint64_t queries);

}  // namespace dmhnsw
