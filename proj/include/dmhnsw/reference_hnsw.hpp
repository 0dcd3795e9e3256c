#pragma once

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "dmhnsw/distance.hpp"
#include "dmhnsw/hnsw.hpp"

namespace dmhnsw {

/// Single-address-space HNSW used as the oracle for the distributed build.
/// Written against local arrays; it shares only draw_level, the distance
/// kernel and select_neighbors with the fabric implementation.
class ReferenceHnsw {
 public:
  explicit ReferenceHnsw(IndexParams params);

  /// Ids must be 0, 1, 2, ... in insertion order.
  void insert(std::uint64_t id, std::span<const float> vec, std::uint32_t level);
  /// Inserts every row with the levels draw_levels(size, M, seed) assigns.
  void build(const VectorSet& data, std::uint64_t seed);

  /// (dist, id) pairs, ascending.
  std::vector<std::pair<float, std::uint64_t>> knn_search(std::span<const float> q, std::uint32_t k,
                                                          std::uint32_t ef_search) const;

  const Adjacency& adjacency() const { return links_; }
  std::int64_t entry_point() const { return entry_; }
  int top_level() const { return top_level_; }
  std::size_t size() const { return links_.size(); }

 private:
  using Scored = std::pair<float, std::uint64_t>;

  float dist_to(std::span<const float> q, std::uint64_t id) const;
  std::vector<Scored> search_level(std::span<const float> q, Scored ep, std::uint32_t ef, std::uint32_t level) const;
  std::vector<ScoredCandidate> choose(std::vector<Scored> found, std::size_t m) const;
  void link_back(std::uint64_t target, std::uint32_t level, std::uint64_t source);

  IndexParams params_;
  VectorSet vectors_;
  Adjacency links_;
  std::int64_t entry_ = -1;
  int top_level_ = -1;
};

}  // namespace dmhnsw
