#include "dmhnsw/partition.hpp"

#include <algorithm>
#include <limits>
#include <numeric>
#include <string>

#include "dmhnsw/random.hpp"

namespace dmhnsw {

namespace {

float sq_l2(std::span<const float> a, std::span<const float> b) {
  return distance_kernel(a.data(), b.data(), a.size(), Metric::kL2);
}

std::vector<std::uint32_t> order_by_distance(std::span<const float> p, const VectorSet& centroids) {
  std::vector<std::pair<float, std::uint32_t>> scored(centroids.size());
  for (std::uint32_t c = 0; c < centroids.size(); ++c) scored[c] = {sq_l2(p, centroids.row(c)), c};
  std::sort(scored.begin(), scored.end());
  std::vector<std::uint32_t> out(scored.size());
  for (std::size_t i = 0; i < scored.size(); ++i) out[i] = scored[i].second;
  return out;
}

VectorSet kmeans_plus_plus(const VectorSet& points, std::uint32_t k, Rng& rng) {
  const std::size_t n = points.size();
  VectorSet centroids(points.dim());
  centroids.push_back(points.row(uniform_index(rng, n)));
  std::vector<double> d2(n, std::numeric_limits<double>::infinity());
  while (centroids.size() < k) {
    const auto last = centroids.row(centroids.size() - 1);
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      d2[i] = std::min(d2[i], static_cast<double>(sq_l2(points.row(i), last)));
      total += d2[i];
    }
    std::size_t pick = 0;
    if (total > 0.0) {
      const double target = uniform01(rng) * total;
      double acc = 0.0;
      pick = n - 1;
      for (std::size_t i = 0; i < n; ++i) {
        acc += d2[i];
        if (acc > target && d2[i] > 0.0) {
          pick = i;
          break;
        }
      }
    } else {
      pick = uniform_index(rng, n);  // all points coincide with a centroid
    }
    centroids.push_back(points.row(pick));
  }
  return centroids;
}

std::vector<std::size_t> cluster_sizes(std::span<const std::uint32_t> assignment, std::size_t k) {
  std::vector<std::size_t> sizes(k, 0);
  for (const auto a : assignment) ++sizes[a];
  return sizes;
}

}  // namespace

std::uint32_t choose_sample_level(std::span<const std::size_t> population, std::size_t min_nodes, bool* fallback) {
  if (population.empty()) throw PartitionError("no levels to sample from");
  for (std::size_t l = population.size(); l-- > 0;) {
    if (population[l] >= min_nodes) {
      if (fallback != nullptr) *fallback = false;
      return static_cast<std::uint32_t>(l);
    }
  }
  if (fallback != nullptr) *fallback = true;
  std::size_t best = 0;
  for (std::size_t l = 1; l < population.size(); ++l) {
    if (population[l] > population[best]) best = l;
  }
  return static_cast<std::uint32_t>(best);
}

VectorSet select_sample(const Fabric& fabric, const IndexMeta& meta, std::uint64_t seed, std::size_t cap,
                        SampleInfo* info) {
  if (meta.empty()) throw PartitionError("cannot sample an empty index");
  const auto nodes = scan_nodes(fabric, meta);
  std::vector<std::size_t> population(static_cast<std::size_t>(meta.top_level) + 1, 0);
  for (const auto& n : nodes) {
    for (std::uint32_t l = 0; l <= n.max_level && l < population.size(); ++l) ++population[l];
  }
  bool fallback = false;
  const std::uint32_t level = choose_sample_level(population, kSampleLevelMinNodes, &fallback);

  std::vector<NodeLocation> chosen;
  for (const auto& n : nodes) {
    if (n.max_level >= level) chosen.push_back(n);
  }
  if (chosen.size() > cap) {
    Rng rng(seed);
    for (std::size_t i = 0; i < cap; ++i) {
      std::swap(chosen[i], chosen[i + uniform_index(rng, chosen.size() - i)]);
    }
    chosen.resize(cap);
    std::sort(chosen.begin(), chosen.end(),
              [](const NodeLocation& a, const NodeLocation& b) { return a.node_id < b.node_id; });
  }
  if (info != nullptr) *info = {level, fallback, population[level], chosen.size()};
  return read_vectors(fabric, meta, chosen);
}

ClusterModel balanced_kmeans(const VectorSet& points, std::uint32_t k, std::uint64_t seed, std::uint32_t max_iter) {
  const std::size_t n = points.size();
  if (k == 0) throw PartitionError("k must be positive");
  if (n < k) {
    throw PartitionError("cannot form " + std::to_string(k) + " clusters from " + std::to_string(n) + " points");
  }
  const std::size_t dim = points.dim();
  const std::size_t cap = (n + k - 1) / k;
  Rng rng(seed);

  ClusterModel model;
  model.centroids = kmeans_plus_plus(points, k, rng);
  model.trained_k = k;
  std::vector<std::uint32_t> assignment(n, std::numeric_limits<std::uint32_t>::max());
  std::vector<double> sums(k * dim);

  for (std::uint32_t iter = 0; iter < std::max(1u, max_iter); ++iter) {
    std::vector<std::size_t> sizes(k, 0);
    std::vector<std::uint32_t> next(n);
    for (std::size_t i = 0; i < n; ++i) {
      for (const std::uint32_t c : order_by_distance(points.row(i), model.centroids)) {
        if (sizes[c] < cap) {
          next[i] = c;
          ++sizes[c];
          break;
        }
      }
    }
    model.iterations = iter + 1;
    const bool fixpoint = next == assignment;
    assignment = std::move(next);
    if (fixpoint) break;

    std::fill(sums.begin(), sums.end(), 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      const auto row = points.row(i);
      double* s = &sums[assignment[i] * dim];
      for (std::size_t j = 0; j < dim; ++j) s[j] += row[j];
    }
    for (std::uint32_t c = 0; c < k; ++c) {
      if (sizes[c] == 0) continue;  // keeps its previous centroid
      auto row = model.centroids.row(c);
      for (std::size_t j = 0; j < dim; ++j) row[j] = static_cast<float>(sums[c * dim + j] / sizes[c]);
    }
  }
  model.assignment = std::move(assignment);
  model.sizes = cluster_sizes(model.assignment, k);
  return model;
}

ClusterModel refine_small_odd_k(const VectorSet& points, std::uint32_t k, std::uint64_t seed, std::uint32_t max_iter) {
  if (k == 0) throw PartitionError("k must be positive");
  ClusterModel trained;
  for (std::uint32_t kp = 2 * k; kp <= kMaxDoubledK && kp <= points.size(); kp *= 2) {
    trained = balanced_kmeans(points, kp, seed, max_iter);
    const auto [lo, hi] = std::minmax_element(trained.sizes.begin(), trained.sizes.end());
    if (*lo > 0 && static_cast<double>(*hi) / static_cast<double>(*lo) <= kNearlyEqualRatio) break;
  }
  if (trained.k() == 0) return balanced_kmeans(points, k, seed, max_iter);

  const std::size_t dim = points.dim();
  struct Group {
    std::vector<double> centroid;
    std::size_t size;
    std::vector<std::uint32_t> members;  // trained cluster ids
  };
  std::vector<Group> groups;
  for (std::uint32_t c = 0; c < trained.k(); ++c) {
    const auto row = trained.centroids.row(c);
    groups.push_back({std::vector<double>(row.begin(), row.end()), trained.sizes[c], {c}});
  }
  const auto gap = [&](const Group& a, const Group& b) {
    double s = 0.0;
    for (std::size_t j = 0; j < dim; ++j) {
      const double d = a.centroid[j] - b.centroid[j];
      s += d * d;
    }
    return s;
  };

  while (groups.size() > k) {
    std::vector<bool> merged(groups.size(), false);
    std::size_t remaining = groups.size();
    for (;;) {
      if (remaining <= k) break;
      double best = std::numeric_limits<double>::infinity();
      std::size_t ba = 0, bb = 0;
      for (std::size_t a = 0; a < groups.size(); ++a) {
        if (merged[a]) continue;
        for (std::size_t b = a + 1; b < groups.size(); ++b) {
          if (merged[b]) continue;
          const double g = gap(groups[a], groups[b]);
          if (g < best) {
            best = g;
            ba = a;
            bb = b;
          }
        }
      }
      if (!std::isfinite(best)) break;
      Group& a = groups[ba];
      Group& b = groups[bb];
      const double total = static_cast<double>(a.size + b.size);
      for (std::size_t j = 0; j < dim; ++j) {
        a.centroid[j] = total > 0 ? (a.centroid[j] * a.size + b.centroid[j] * b.size) / total
                                  : (a.centroid[j] + b.centroid[j]) / 2;
      }
      a.size += b.size;
      a.members.insert(a.members.end(), b.members.begin(), b.members.end());
      merged[ba] = merged[bb] = true;
      b.size = 0;
      b.members.clear();
      b.centroid.clear();
      --remaining;
    }
    std::vector<Group> next;
    for (auto& g : groups) {
      if (!g.centroid.empty()) next.push_back(std::move(g));
    }
    groups = std::move(next);
  }

  ClusterModel model;
  model.trained_k = static_cast<std::uint32_t>(trained.k());
  model.iterations = trained.iterations;
  model.centroids = VectorSet(dim);
  std::vector<std::uint32_t> group_of(trained.k());
  for (std::uint32_t g = 0; g < groups.size(); ++g) {
    std::vector<float> c(groups[g].centroid.begin(), groups[g].centroid.end());
    model.centroids.push_back(c);
    for (const auto m : groups[g].members) group_of[m] = g;
  }
  model.assignment.resize(trained.assignment.size());
  for (std::size_t i = 0; i < trained.assignment.size(); ++i) model.assignment[i] = group_of[trained.assignment[i]];
  model.sizes = cluster_sizes(model.assignment, groups.size());
  return model;
}

ClusterModel build_cluster_model(const VectorSet& points, std::uint32_t k, std::uint64_t seed, std::uint32_t max_iter) {
  if (k % 2 == 1 && k <= 7 && k > 1) return refine_small_odd_k(points, k, seed, max_iter);
  return balanced_kmeans(points, k, seed, max_iter);
}

Oracle::Oracle(VectorSet centroids) : centroids_(std::move(centroids)) {
  if (centroids_.empty()) throw PartitionError("oracle needs at least one centroid");
}

void Oracle::rank(std::span<const float> q, std::vector<std::pair<float, std::uint32_t>>& out) const {
  if (q.size() != centroids_.dim()) throw std::invalid_argument("oracle: query dimensionality mismatch");
  out.resize(centroids_.size());
  for (std::uint32_t c = 0; c < centroids_.size(); ++c) out[c] = {sq_l2(q, centroids_.row(c)), c};
  std::sort(out.begin(), out.end());
}

std::vector<std::pair<float, std::uint32_t>> Oracle::rank(std::span<const float> q) const {
  std::vector<std::pair<float, std::uint32_t>> out;
  rank(q, out);
  return out;
}

}  // namespace dmhnsw
