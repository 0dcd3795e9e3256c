#include "dmhnsw/workload.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <unordered_set>

namespace dmhnsw {

namespace {

constexpr std::uint64_t kPickStream = 11;
constexpr std::uint64_t kArrivalStream = 12;
constexpr std::uint64_t kPermutationStream = 13;

std::vector<std::uint32_t> assign_arrivals(std::size_t count, std::uint32_t cns, std::uint64_t seed) {
  if (cns == 0) throw std::invalid_argument("need at least one compute node");
  Rng rng(derive_seed(seed, kArrivalStream));
  std::vector<std::uint32_t> out(count);
  for (auto& c : out) c = static_cast<std::uint32_t>(uniform_index(rng, cns));
  return out;
}

void check_stream_args(std::size_t pool_size, std::size_t count, std::size_t warmup) {
  if (pool_size == 0) throw std::invalid_argument("query pool is empty");
  if (warmup > count) throw std::invalid_argument("warm-up count exceeds stream length");
}

}  // namespace

ZipfSampler::ZipfSampler(std::size_t n, double s) : cdf_(n) {
  if (n == 0) throw std::invalid_argument("Zipf over an empty range");
  if (!(s > 0.0)) throw std::invalid_argument("Zipf exponent must be positive");
  double acc = 0.0;
  for (std::size_t r = 0; r < n; ++r) {
    acc += std::pow(static_cast<double>(r + 1), -s);
    cdf_[r] = acc;
  }
  for (auto& c : cdf_) c /= acc;
  cdf_.back() = 1.0;
}

std::size_t ZipfSampler::sample(Rng& rng) const {
  const double u = uniform01(rng);
  return static_cast<std::size_t>(std::upper_bound(cdf_.begin(), cdf_.end(), u) - cdf_.begin());
}

double ZipfSampler::probability(std::size_t rank) const {
  return rank == 0 ? cdf_[0] : cdf_.at(rank) - cdf_[rank - 1];
}

QueryStream gen_uniform(std::size_t pool_size, std::size_t count, std::size_t warmup, std::uint32_t cns,
                        std::uint64_t seed) {
  check_stream_args(pool_size, count, warmup);
  QueryStream s;
  s.warmup = warmup;
  Rng rng(derive_seed(seed, kPickStream));
  s.pool_index.resize(count);
  for (auto& q : s.pool_index) q = static_cast<std::uint32_t>(uniform_index(rng, pool_size));
  s.arrival_cn = assign_arrivals(count, cns, seed);
  return s;
}

QueryStream gen_zipf(std::size_t pool_size, std::size_t count, std::size_t warmup, double s, std::uint32_t cns,
                     std::uint64_t seed) {
  check_stream_args(pool_size, count, warmup);
  std::vector<std::uint32_t> by_rank(pool_size);
  std::iota(by_rank.begin(), by_rank.end(), 0u);
  Rng perm(derive_seed(seed, kPermutationStream));
  for (std::size_t i = pool_size; i > 1; --i) std::swap(by_rank[i - 1], by_rank[uniform_index(perm, i)]);

  const ZipfSampler zipf(pool_size, s);
  QueryStream out;
  out.warmup = warmup;
  Rng rng(derive_seed(seed, kPickStream));
  out.pool_index.resize(count);
  for (auto& q : out.pool_index) q = by_rank[zipf.sample(rng)];
  out.arrival_cn = assign_arrivals(count, cns, seed);
  return out;
}

std::vector<std::uint32_t> brute_force_knn(const VectorSet& data, std::span<const float> q, std::size_t k,
                                           Metric metric) {
  if (q.size() != data.dim()) throw std::invalid_argument("brute force: dimensionality mismatch");
  k = std::min(k, data.size());
  std::vector<std::pair<float, std::uint32_t>> scored(data.size());
  for (std::uint32_t i = 0; i < data.size(); ++i) {
    scored[i] = {distance_kernel(q.data(), data.row(i).data(), data.dim(), metric), i};
  }
  std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(k), scored.end());
  std::vector<std::uint32_t> out(k);
  for (std::size_t i = 0; i < k; ++i) out[i] = scored[i].second;
  return out;
}

std::vector<std::vector<std::uint32_t>> brute_force_batch(const VectorSet& data, const VectorSet& queries,
                                                          std::size_t k, Metric metric) {
  std::vector<std::vector<std::uint32_t>> out(queries.size());
  for (std::size_t i = 0; i < queries.size(); ++i) out[i] = brute_force_knn(data, queries.row(i), k, metric);
  return out;
}

double recall_at_k(std::span<const std::uint32_t> result, std::span<const std::uint32_t> truth, std::size_t k) {
  if (k == 0) return 0.0;
  const std::size_t t = std::min(k, truth.size());
  const std::unordered_set<std::uint32_t> want(truth.begin(), truth.begin() + static_cast<std::ptrdiff_t>(t));
  std::size_t hit = 0;
  std::unordered_set<std::uint32_t> seen;
  for (std::size_t i = 0; i < std::min(k, result.size()); ++i) {
    if (want.count(result[i]) && seen.insert(result[i]).second) ++hit;
  }
  return static_cast<double>(hit) / static_cast<double>(k);
}

std::optional<double> csp(double chr, double chr_max) {
  if (!(chr_max > 0.0)) return std::nullopt;
  return std::clamp(1.0 - chr / chr_max, 0.0, 1.0);
}

TrafficSummary traffic_summary(const SearchCounters& counters, std::uint64_t queries) {
  TrafficSummary t;
  if (queries == 0) return t;
  const double total = static_cast<double>(counters.node_read_bytes + counters.list_read_bytes);
  t.bytes_per_query = total / static_cast<double>(queries);
  if (counters.node_read_bytes > 0) {
    t.list_to_vector_ratio =
        static_cast<double>(counters.list_read_bytes) / static_cast<double>(counters.node_read_bytes);
  }
  return t;
}

}  // namespace dmhnsw
