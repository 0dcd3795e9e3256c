#include "dmhnsw/router.hpp"

#include <numeric>
#include <stdexcept>
#include <string>

#include "dmhnsw/layout.hpp"

namespace dmhnsw {

RoutingPolicy parse_policy(std::string_view name) {
  if (name == "none" || name == "no-routing" || name == "NoRouting" || name == "cache-only") {
    return RoutingPolicy::kNoRouting;
  }
  if (name == "best-fit" || name == "BestFit") return RoutingPolicy::kBestFit;
  if (name == "balanced" || name == "Balanced") return RoutingPolicy::kBalanced;
  if (name == "adaptive" || name == "Adaptive") return RoutingPolicy::kAdaptive;
  throw std::invalid_argument("unknown routing policy '" + std::string(name) +
                              "' (expected none, best-fit, balanced or adaptive)");
}

std::string_view policy_name(RoutingPolicy p) {
  switch (p) {
    case RoutingPolicy::kNoRouting: return "none";
    case RoutingPolicy::kBestFit: return "best-fit";
    case RoutingPolicy::kBalanced: return "balanced";
    case RoutingPolicy::kAdaptive: return "adaptive";
  }
  return "?";
}

std::vector<double> update_limits(std::span<const double> progress, double batch) {
  const std::size_t n = progress.size();
  if (n == 0) throw std::invalid_argument("update_limits: no compute nodes");
  const double cns = static_cast<double>(n);
  const double sigma = std::accumulate(progress.begin(), progress.end(), 0.0);
  double denom = 0.0;
  for (const double p : progress) denom += sigma - p;
  std::vector<double> limits(n, batch / cns);
  if (denom <= 0.0) return limits;
  for (std::size_t i = 0; i < n; ++i) limits[i] = cns * (sigma - progress[i]) / denom * batch / cns;
  return limits;
}

BatchState::BatchState(std::uint32_t cns, std::uint64_t batch_size)
    : histogram(cns, 0), limits(cns, static_cast<double>(batch_size) / cns), batch(batch_size) {
  if (cns == 0) throw std::invalid_argument("router needs at least one compute node");
  if (batch_size == 0) throw std::invalid_argument("batch size must be positive");
}

void BatchState::reset_counts() {
  std::fill(histogram.begin(), histogram.end(), 0);
  routed = 0;
}

QueryRouter::QueryRouter(std::uint32_t local_cn, std::uint32_t cns, RoutingPolicy policy, std::uint64_t batch)
    : local_(local_cn), policy_(policy), state_(cns, batch) {
  if (local_cn >= cns) throw std::invalid_argument("local CN id out of range");
}

std::uint32_t QueryRouter::select_destination(RankedCns ranked) {
  std::uint32_t dest = local_;
  switch (policy_) {
    case RoutingPolicy::kNoRouting:
      break;
    case RoutingPolicy::kBestFit:
      dest = ranked.front().second;
      break;
    case RoutingPolicy::kBalanced:
    case RoutingPolicy::kAdaptive: {
      dest = ranked.front().second;
      for (const auto& [dist, cn] : ranked) {
        if (static_cast<double>(state_.histogram[cn]) < state_.limits[cn]) {
          dest = cn;
          break;
        }
      }
      break;
    }
  }
  ++state_.histogram[dest];
  ++state_.routed;
  return dest;
}

bool QueryRouter::batch_complete() const {
  return (policy_ == RoutingPolicy::kBalanced || policy_ == RoutingPolicy::kAdaptive) &&
         state_.routed >= state_.batch;
}

void QueryRouter::finish_batch(std::span<const double> progress) {
  if (policy_ == RoutingPolicy::kAdaptive) {
    state_.limits = update_limits(progress, static_cast<double>(state_.batch));
    trace_.push_back(state_.limits);
  }
  state_.reset_counts();
  ++batches_;
}

std::vector<std::byte> encode_progress(const ProgressReport& r) {
  std::vector<std::byte> out(20);
  store_u32(out.data(), r.cn);
  store_u64(out.data() + 4, r.round);
  store_u64(out.data() + 12, r.queue_length);
  return out;
}

ProgressReport decode_progress(std::span<const std::byte> payload) {
  if (payload.size() != 20) throw std::invalid_argument("malformed progress report");
  return {load_u32(payload.data()), load_u64(payload.data() + 4), load_u64(payload.data() + 12)};
}

std::vector<std::byte> encode_query(std::uint64_t query_index, std::span<const float> vec) {
  std::vector<std::byte> out(8 + vec.size_bytes());
  store_u64(out.data(), query_index);
  store_floats(out.data() + 8, vec);
  return out;
}

std::uint64_t decode_query_index(std::span<const std::byte> payload) {
  if (payload.size() < 8) throw std::invalid_argument("malformed query message");
  return load_u64(payload.data());
}

ProgressCollector::ProgressCollector(std::uint32_t cns) : latest_(cns) {}

void ProgressCollector::record(const ProgressReport& r) {
  auto& slot = latest_.at(r.cn);
  if (!slot || slot->round <= r.round) slot = r;
}

bool ProgressCollector::complete(std::uint32_t local, std::uint64_t round) const {
  for (std::uint32_t i = 0; i < latest_.size(); ++i) {
    if (i == local) continue;
    if (!latest_[i] || latest_[i]->round < round) return false;
  }
  return true;
}

std::vector<double> ProgressCollector::snapshot(std::uint32_t local, std::uint64_t local_p) const {
  // A CN that has never reported is assumed to be as busy as this one.
  std::vector<double> p(latest_.size(), static_cast<double>(local_p));
  for (std::uint32_t i = 0; i < latest_.size(); ++i) {
    if (latest_[i] && i != local) p[i] = static_cast<double>(latest_[i]->queue_length);
  }
  return p;
}

void ProgressCollector::note_timeout(std::uint32_t local, std::uint64_t round) {
  for (std::uint32_t i = 0; i < latest_.size(); ++i) {
    if (i != local && (!latest_[i] || latest_[i]->round < round)) ++stale_;
  }
}

}  // namespace dmhnsw
