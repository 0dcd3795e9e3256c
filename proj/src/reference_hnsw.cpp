#include "dmhnsw/reference_hnsw.hpp"

#include <algorithm>
#include <queue>
#include <string>
#include <unordered_set>

namespace dmhnsw {

ReferenceHnsw::ReferenceHnsw(IndexParams params) : params_(params), vectors_(params.dim) {
  if (params_.dim < 1 || params_.m < 2 || params_.ef_construction < 1) {
    throw IndexError("invalid reference index parameters");
  }
}

float ReferenceHnsw::dist_to(std::span<const float> q, std::uint64_t id) const {
  return distance_kernel(q.data(), vectors_.row(id).data(), params_.dim, params_.metric);
}

std::vector<ReferenceHnsw::Scored> ReferenceHnsw::search_level(std::span<const float> q, Scored ep,
                                                               std::uint32_t ef, std::uint32_t level) const {
  // Pairs compare by (dist, id), the same total order the fabric search uses.
  std::priority_queue<Scored, std::vector<Scored>, std::greater<>> frontier;
  std::priority_queue<Scored> best;
  std::unordered_set<std::uint64_t> seen{ep.second};
  frontier.push(ep);
  best.push(ep);
  while (!frontier.empty()) {
    const Scored c = frontier.top();
    frontier.pop();
    if (c.first > best.top().first) break;
    for (const std::uint64_t n : links_[c.second][level]) {
      if (!seen.insert(n).second) continue;
      const Scored s{dist_to(q, n), n};
      if (best.size() < ef || s.first < best.top().first) {
        frontier.push(s);
        best.push(s);
        if (best.size() > ef) best.pop();
      }
    }
  }
  std::vector<Scored> out;
  out.reserve(best.size());
  for (; !best.empty(); best.pop()) out.push_back(best.top());
  std::reverse(out.begin(), out.end());
  return out;
}

std::vector<ScoredCandidate> ReferenceHnsw::choose(std::vector<Scored> found, std::size_t m) const {
  std::vector<ScoredCandidate> cands;
  cands.reserve(found.size());
  for (const auto& [d, id] : found) cands.push_back({d, id, id});
  return select_neighbors(std::move(cands), m, params_.heuristic_selection, [this](std::uint64_t a, std::uint64_t b) {
    return distance_kernel(vectors_.row(a).data(), vectors_.row(b).data(), params_.dim, params_.metric);
  });
}

void ReferenceHnsw::link_back(std::uint64_t target, std::uint32_t level, std::uint64_t source) {
  auto& list = links_[target][level];
  const std::size_t cap = level == 0 ? 2 * params_.m : params_.m;
  if (list.size() < cap) {
    list.push_back(source);
    return;
  }
  std::vector<Scored> pool;
  pool.reserve(list.size() + 1);
  const auto base = vectors_.row(target);
  for (const std::uint64_t n : list) pool.emplace_back(dist_to(base, n), n);
  pool.emplace_back(dist_to(base, source), source);
  const auto kept = choose(std::move(pool), cap);
  list.clear();
  for (const auto& k : kept) list.push_back(k.node_id);
}

void ReferenceHnsw::insert(std::uint64_t id, std::span<const float> vec, std::uint32_t level) {
  if (id != links_.size()) throw IndexError("reference ids must be dense and in insertion order");
  vectors_.push_back(vec);
  links_.emplace_back(level + 1);
  if (entry_ < 0) {
    entry_ = static_cast<std::int64_t>(id);
    top_level_ = static_cast<int>(level);
    return;
  }
  Scored ep{dist_to(vec, entry_), static_cast<std::uint64_t>(entry_)};
  for (int l = top_level_; l > static_cast<int>(level); --l) {
    ep = search_level(vec, ep, 1, static_cast<std::uint32_t>(l)).front();
  }
  for (int l = std::min(static_cast<int>(level), top_level_); l >= 0; --l) {
    const auto lvl = static_cast<std::uint32_t>(l);
    const auto found = search_level(vec, ep, params_.ef_construction, lvl);
    const auto chosen = choose(found, params_.m);
    auto& own = links_[id][lvl];
    for (const auto& c : chosen) own.push_back(c.node_id);
    for (const auto& c : chosen) link_back(c.node_id, lvl, id);
    ep = found.front();
  }
  if (static_cast<int>(level) > top_level_) {
    entry_ = static_cast<std::int64_t>(id);
    top_level_ = static_cast<int>(level);
  }
}

void ReferenceHnsw::build(const VectorSet& data, std::uint64_t seed) {
  const auto levels = draw_levels(data.size(), params_.m, seed);
  for (std::size_t i = 0; i < data.size(); ++i) insert(i, data.row(i), levels[i]);
}

std::vector<std::pair<float, std::uint64_t>> ReferenceHnsw::knn_search(std::span<const float> q, std::uint32_t k,
                                                                       std::uint32_t ef_search) const {
  if (entry_ < 0) throw IndexError("knn_search on an empty index");
  Scored cur{dist_to(q, entry_), static_cast<std::uint64_t>(entry_)};
  for (int l = top_level_; l >= 1; --l) cur = search_level(q, cur, 1, static_cast<std::uint32_t>(l)).front();
  auto out = search_level(q, cur, std::max(k, ef_search), 0);
  if (out.size() > k) out.resize(k);
  return out;
}

}  // namespace dmhnsw
