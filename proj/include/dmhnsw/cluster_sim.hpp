#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "dmhnsw/cache.hpp"
#include "dmhnsw/fabric.hpp"
#include "dmhnsw/hnsw.hpp"
#include "dmhnsw/partition.hpp"
#include "dmhnsw/router.hpp"
#include "dmhnsw/workload.hpp"

namespace dmhnsw {

/// Simulated-time costs. Queries are latency-bound on one-sided verbs, share
/// the CN's NIC bandwidth, and share its worker cores for distance work.
struct CostModel {
  std::uint64_t verb_latency_ns = 2000;
  /// FDR InfiniBand data rate, about 54 Gb/s.
  double nic_bytes_per_ns = 6.8;
  /// Scalar distance kernel cost per dimension.
  double ns_per_dim = 1.0;
  /// Per evaluated node: visited set, cache probe and heap update, each
  /// typically a DRAM miss on a large working set.
  std::uint64_t node_ns = 200;
  /// CPU side of one verb: posting the request, polling its completion and
  /// the coroutine switch in between.
  std::uint64_t verb_cpu_ns = 250;
  /// Copying one cached entry under its version check.
  std::uint64_t cache_hit_ns = 50;
  /// Router time per client query (oracle ranking and dispatch).
  std::uint64_t route_ns = 1000;
  /// One CN-to-MN or MN-to-CN message hop.
  std::uint64_t hop_ns = 2000;
  /// Sequential MN router time per forwarded message. 0 leaves the router
  /// unthrottled; 6000 models a single core routing about 167k msgs/s.
  std::uint64_t mn_route_ns = 0;
  std::uint64_t progress_poll_ns = 20000;
  /// Polls to wait for missing progress reports before reusing the last value.
  std::uint32_t progress_timeout_polls = 10;
};

struct SimConfig {
  std::uint32_t compute_nodes = 4;
  RoutingPolicy policy = RoutingPolicy::kAdaptive;
  std::uint64_t batch = 1000;
  /// Adaptive routers sleep after a batch until the local queue is at most this long.
  std::uint64_t sync_threshold = 1000;
  std::uint32_t k = 10;
  std::uint32_t ef_search = 64;
  /// Per-CN cache; capacity_bytes == 0 disables caching.
  CacheConfig cache;
  std::uint32_t workers_per_cn = 32;
  std::uint32_t coroutines_per_worker = 4;
  CostModel cost;
  std::uint64_t seed = 1;
  /// Replays the executed order against one cache of the aggregate capacity.
  bool unified_replay = true;
};

struct CnStats {
  std::uint64_t queries = 0;
  /// Queries this CN's router sent elsewhere / received from elsewhere.
  std::uint64_t forwarded_out = 0;
  std::uint64_t forwarded_in = 0;
  SearchCounters search;
  CacheStats cache;
  TrafficStats traffic;
  std::uint64_t batches = 0;
  std::uint64_t stale_reports = 0;
  std::uint64_t max_queue = 0;

  double chr() const {
    return search.cache_lookups == 0 ? 0.0
                                     : static_cast<double>(search.cache_hits) / static_cast<double>(search.cache_lookups);
  }
};

struct SimResult {
  std::vector<CnStats> per_cn;
  SearchCounters search;
  std::uint64_t measured_queries = 0;
  /// Node accesses of the warm-up phase, discarded before measurement.
  std::uint64_t warmup_lookups = 0;
  double chr = 0.0;
  std::optional<double> chr_max;
  /// Measured phase: simulated nanoseconds, or wall-clock in concurrent mode.
  std::uint64_t makespan_ns = 0;
  double sim_throughput_qps = 0.0;
  double wall_throughput_qps = 0.0;
  MessageCounters messages;
  /// Result ids per stream position, ascending by distance.
  std::vector<std::vector<std::uint32_t>> results;
  /// (stream position, processing CN) in global execution order (completion
  /// order in concurrent mode).
  std::vector<std::pair<std::uint32_t, std::uint32_t>> execution_order;
  /// Adaptive limits per CN, one row per finished batch.
  std::vector<std::vector<std::vector<double>>> limit_traces;
};

/// Discrete-event run of the whole stream on one thread. The fabric holds a
/// built index; its message plane is reset to `compute_nodes` CNs. Every CN
/// receives its arrivals at saturation: its router consumes one client query
/// per route_ns until the input is exhausted (or sleeps, for Adaptive).
/// Searches execute at their start event, so results and cache contents are a
/// pure function of the configuration.
SimResult simulate_cluster(Fabric& fabric, const IndexMeta& meta, const Oracle& oracle, const VectorSet& queries,
                           const QueryStream& stream, const SimConfig& config);

/// CHR of one shared cache of `compute_nodes` times the per-CN capacity, fed
/// the same searches in `order`. Admission draws use the processing CN's
/// stream, as in the segmented run. Counters cover positions >= warmup.
double unified_cache_chr(Fabric& fabric, const IndexMeta& meta, const VectorSet& queries, const QueryStream& stream,
                         const SimConfig& config,
                         const std::vector<std::pair<std::uint32_t, std::uint32_t>>& order);

/// Seeds shared by the simulated and threaded clusters.
std::uint64_t admission_seed(std::uint64_t seed, std::uint32_t cn);
std::uint64_t forwarding_seed(std::uint64_t seed, std::uint32_t cn);

}  // namespace dmhnsw
