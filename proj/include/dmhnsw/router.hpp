#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <utility>
#include <vector>

#include "dmhnsw/fabric.hpp"

namespace dmhnsw {

enum class RoutingPolicy : std::uint8_t { kNoRouting, kBestFit, kBalanced, kAdaptive };

RoutingPolicy parse_policy(std::string_view name);
std::string_view policy_name(RoutingPolicy p);

/// Limits for the next batch from per-CN working-queue lengths:
/// w_i = n (S - P_i) / sum_j (S - P_j) with S = sum P, L_i = w_i b / n.
/// When the denominator vanishes (all P equal, or one CN) every w_i is 1.
std::vector<double> update_limits(std::span<const double> progress, double batch);

/// Per-router routing state of one batch.
struct BatchState {
  std::vector<std::uint64_t> histogram;
  std::vector<double> limits;
  std::uint64_t routed = 0;
  std::uint64_t batch = 1000;

  BatchState(std::uint32_t cns, std::uint64_t batch_size);
  void reset_counts();
};

using RankedCns = std::span<const std::pair<float, std::uint32_t>>;

class QueryRouter {
 public:
  QueryRouter(std::uint32_t local_cn, std::uint32_t cns, RoutingPolicy policy, std::uint64_t batch);

  /// Picks the destination and counts it in the current batch.
  std::uint32_t select_destination(RankedCns ranked);

  /// True once `batch` queries were routed in the current batch (Balanced and
  /// Adaptive only).
  bool batch_complete() const;
  /// Balanced: resets counts. Adaptive: also recomputes limits from `progress`.
  void finish_batch(std::span<const double> progress);

  RoutingPolicy policy() const { return policy_; }
  std::uint32_t local_cn() const { return local_; }
  const BatchState& state() const { return state_; }
  std::uint64_t batches_finished() const { return batches_; }
  /// Limits in force for every finished adaptive batch, in order.
  const std::vector<std::vector<double>>& limit_trace() const { return trace_; }

 private:
  std::uint32_t local_;
  RoutingPolicy policy_;
  BatchState state_;
  std::uint64_t batches_ = 0;
  std::vector<std::vector<double>> trace_;
};

struct ProgressReport {
  std::uint32_t cn = 0;
  std::uint64_t round = 0;
  std::uint64_t queue_length = 0;
};

std::vector<std::byte> encode_progress(const ProgressReport& r);
ProgressReport decode_progress(std::span<const std::byte> payload);

/// Routed query: the stream position plus the query vector.
std::vector<std::byte> encode_query(std::uint64_t query_index, std::span<const float> vec);
std::uint64_t decode_query_index(std::span<const std::byte> payload);

/// Latest progress value heard from each CN.
class ProgressCollector {
 public:
  explicit ProgressCollector(std::uint32_t cns);

  void record(const ProgressReport& r);
  /// True when every CN other than `local` has reported `round` or later.
  bool complete(std::uint32_t local, std::uint64_t round) const;
  /// Latest known values with P[local] = local_p; CNs never heard from count
  /// as local_p.
  std::vector<double> snapshot(std::uint32_t local, std::uint64_t local_p) const;
  std::uint64_t stale_reports_used() const { return stale_; }
  void note_timeout(std::uint32_t local, std::uint64_t round);

 private:
  std::vector<std::optional<ProgressReport>> latest_;
  std::uint64_t stale_ = 0;
};

}  // namespace dmhnsw
