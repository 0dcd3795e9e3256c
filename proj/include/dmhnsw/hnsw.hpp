#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <vector>

#include <absl/container/flat_hash_set.h>

#include "dmhnsw/cache.hpp"
#include "dmhnsw/distance.hpp"
#include "dmhnsw/fabric.hpp"
#include "dmhnsw/layout.hpp"
#include "dmhnsw/random.hpp"

namespace dmhnsw {

class IndexError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct IndexParams {
  std::uint32_t dim = 0;
  std::uint32_t m = 16;
  std::uint32_t ef_construction = 200;
  Metric metric = Metric::kL2;
  /// Diversity-pruning neighbor selection instead of plain M-closest.
  bool heuristic_selection = false;

  LayoutParams layout() const { return {dim, m}; }
};

struct IndexMeta {
  IndexParams params;
  RemoteAddress entry_point;
  /// -1 while the index is empty.
  int top_level = -1;
  std::uint64_t node_count = 0;

  bool empty() const { return entry_point.is_null(); }
};

// Metadata block on MN 0. The entry word is the single CAS target for
// entry-point changes; the top level is derived from the entry node's header.
namespace meta_layout {
inline constexpr std::uint64_t kMagic = 0x4154454d57534e48ull;  // "HNSWMETA"
inline constexpr std::uint64_t kMagicOffset = 8;
inline constexpr std::uint64_t kEntryOffset = 16;
inline constexpr std::uint64_t kTopLevelOffset = 24;  // top level + 1; 0 = empty
inline constexpr std::uint64_t kNodeCountOffset = 32;
inline constexpr std::uint64_t kDimOffset = 40;
inline constexpr std::uint64_t kMOffset = 48;
inline constexpr std::uint64_t kEfConstructionOffset = 56;
inline constexpr std::uint64_t kMetricOffset = 64;
inline constexpr std::uint64_t kFlagsOffset = 72;
}  // namespace meta_layout

/// Writes an empty index's metadata block. MN 0 must be untouched.
IndexMeta initialize_index(Fabric& fabric, const IndexParams& params);
IndexMeta read_index_meta(FabricLink& link);
/// Direct arena access without traffic accounting (tools and tests).
IndexMeta read_index_meta(const Fabric& fabric);

/// floor(-ln(U) / ln(M)) for U uniform in (0, 1], capped at 255.
std::uint32_t draw_level(Rng& rng, std::uint32_t m);
/// Levels for `count` nodes in dataset order from a dedicated stream of `seed`.
std::vector<std::uint32_t> draw_levels(std::size_t count, std::uint32_t m, std::uint64_t seed);

/// A node considered during search: distance to the current query plus the
/// node id, which breaks ties everywhere an order is needed.
struct Neighbor {
  RemoteAddress addr;
  float dist = 0.0f;
  std::uint64_t node_id = 0;

  friend bool operator<(const Neighbor& a, const Neighbor& b) {
    return a.dist != b.dist ? a.dist < b.dist : a.node_id < b.node_id;
  }
  bool operator==(const Neighbor&) const = default;
};

/// Candidate for neighbor selection. `handle` is whatever the caller uses to
/// name the node (remote address word or local id).
struct ScoredCandidate {
  float dist = 0.0f;
  std::uint64_t node_id = 0;
  std::uint64_t handle = 0;

  friend bool operator<(const ScoredCandidate& a, const ScoredCandidate& b) {
    return a.dist != b.dist ? a.dist < b.dist : a.node_id < b.node_id;
  }
};

using PairDistance = std::function<float(std::uint64_t handle_a, std::uint64_t handle_b)>;

/// Picks up to `m` candidates, returned in ascending (dist, node_id) order.
/// Plain mode keeps the m closest; heuristic mode keeps a candidate only if it
/// is closer to the base than to every candidate kept so far.
std::vector<ScoredCandidate> select_neighbors(std::vector<ScoredCandidate> candidates, std::size_t m,
                                              bool heuristic, const PairDistance& pair_distance);

struct SearchCounters {
  std::uint64_t distance_computations = 0;
  std::uint64_t cache_lookups = 0;
  std::uint64_t cache_hits = 0;
  std::uint64_t node_reads = 0;
  std::uint64_t node_read_bytes = 0;
  std::uint64_t list_reads = 0;
  std::uint64_t list_read_bytes = 0;
  std::uint64_t visited = 0;

  SearchCounters& operator+=(const SearchCounters& o);
  SearchCounters operator-(const SearchCounters& o) const;
};

/// Query processing over the fabric for one worker. Not thread-safe; each
/// worker owns its searcher, link and admission RNG.
class Searcher {
 public:
  Searcher(FabricLink& link, IndexMeta meta, NodeCache* cache = nullptr, Rng* admission_rng = nullptr);

  const IndexMeta& meta() const { return meta_; }
  void set_meta(IndexMeta meta) { meta_ = std::move(meta); }
  void set_cache(NodeCache* cache, Rng* admission_rng);

  /// Fetches a node's header and vector (through the cache when one is set)
  /// and returns its distance to `q`.
  Neighbor evaluate(std::span<const float> q, RemoteAddress addr, std::uint32_t* max_level = nullptr);

  /// Best-first search of one level from `ep`; returns up to `ef` nodes in
  /// ascending (dist, node_id) order.
  std::vector<Neighbor> search_layer(std::span<const float> q, const Neighbor& ep, std::uint32_t ef,
                                     std::uint32_t level);

  /// ef=1 descent from the top level to level 1, then ef_search at level 0.
  std::vector<Neighbor> knn_search(std::span<const float> q, std::uint32_t k, std::uint32_t ef_search);

  /// Reads the count and slot array of one list. Throws CorruptionError on a
  /// count above capacity or a null slot below the count.
  std::vector<RemoteAddress> read_neighbor_list(RemoteAddress node, std::uint32_t level);

  /// Vector of a node; bypasses the cache (construction only).
  std::span<const float> fetch_vector(RemoteAddress addr, std::uint64_t* node_id = nullptr);

  const SearchCounters& counters() const { return counters_; }
  void reset_counters() { counters_ = {}; }
  FabricLink& link() { return *link_; }

 private:
  FabricLink* link_;
  IndexMeta meta_;
  LayoutParams layout_;
  NodeCache* cache_;
  Rng* admission_rng_;
  SearchCounters counters_;
  absl::flat_hash_set<std::uint64_t> visited_;
  std::vector<std::byte> payload_;
  std::vector<std::byte> list_buf_;
  std::vector<float> vec_;
};

struct BuildStats {
  std::uint64_t lock_retries = 0;
  std::uint64_t entry_cas_failures = 0;
  TrafficStats traffic;
};

/// Inserts nodes into the index through one fabric link.
class Inserter {
 public:
  Inserter(FabricLink& link, IndexParams params);

  /// Inserts with a pre-drawn level; `rng` picks the memory node.
  RemoteAddress insert(std::uint64_t node_id, std::span<const float> vec, std::uint32_t level, Rng& rng);
  /// Draws the level from `rng` first.
  RemoteAddress insert(std::uint64_t node_id, std::span<const float> vec, Rng& rng);

  const BuildStats& stats() const { return stats_; }

 private:
  void connect(RemoteAddress self, std::span<const float> vec, Neighbor ep, int from_level, int to_level);
  void add_reverse_edge(RemoteAddress target, std::uint32_t level, RemoteAddress source);
  std::uint64_t lock_node(RemoteAddress node);
  void unlock_node(RemoteAddress node, std::uint64_t locked_word);

  FabricLink* link_;
  IndexParams params_;
  LayoutParams layout_;
  Searcher searcher_;
  BuildStats stats_;
};

/// Builds the whole dataset with `workers` threads. Node i gets id i and the
/// i-th pre-drawn level, so the level assignment is independent of `workers`;
/// with one worker the arenas are a deterministic function of (data, seed).
IndexMeta build_index(Fabric& fabric, const VectorSet& data, const IndexParams& params, std::uint64_t seed,
                      unsigned workers = 1, BuildStats* stats = nullptr);

struct NodeLocation {
  std::uint64_t node_id = 0;
  RemoteAddress addr;
  std::uint32_t max_level = 0;
};

/// Walks every arena's allocated region; result sorted by node id. Requires a
/// quiescent fabric.
std::vector<NodeLocation> scan_nodes(const Fabric& fabric, const IndexMeta& meta);

/// Per-node adjacency by node id: result[id][level] lists neighbor ids in stored order.
using Adjacency = std::vector<std::vector<std::vector<std::uint64_t>>>;
Adjacency read_adjacency(const Fabric& fabric, const IndexMeta& meta);

/// Vectors of the index in node-id order (read directly from the arenas).
VectorSet read_vectors(const Fabric& fabric, const IndexMeta& meta, std::span<const NodeLocation> nodes);

}  // namespace dmhnsw
