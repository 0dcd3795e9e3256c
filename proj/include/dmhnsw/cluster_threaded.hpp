#pragma once

#include <chrono>

#include "dmhnsw/cluster_sim.hpp"

namespace dmhnsw {

struct ThreadedOptions {
  /// Missing progress reports are replaced by the last known value after this.
  std::chrono::microseconds progress_timeout{100000};
  std::chrono::microseconds poll_interval{20};
};

/// Concurrent run with real threads: per CN one router thread and
/// `workers_per_cn` worker threads sharing the CN's cache, with the fabric's
/// MN routers forwarding messages. Throughput is wall-clock; results are
/// identical to the simulated run, cache statistics are not.
SimResult run_cluster_threaded(Fabric& fabric, const IndexMeta& meta, const Oracle& oracle, const VectorSet& queries,
                               const QueryStream& stream, const SimConfig& config,
                               const ThreadedOptions& options = {});

}  // namespace dmhnsw
