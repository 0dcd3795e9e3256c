#include "dmhnsw/hnsw.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <queue>
#include <string>
#include <thread>

#include <absl/container/flat_hash_map.h>

namespace dmhnsw {

namespace {

constexpr std::uint64_t kLevelStream = 1;
constexpr std::uint64_t kAllocStream = 2;

constexpr std::uint64_t round_up8(std::uint64_t v) { return (v + 7) & ~std::uint64_t{7}; }

RemoteAddress meta_word(std::uint64_t offset) { return RemoteAddress(0, offset); }

struct FartherFirst {
  bool operator()(const Neighbor& a, const Neighbor& b) const { return b < a; }
};

void validate_params(const IndexParams& p) {
  if (p.dim < 1) throw IndexError("index dimensionality must be at least 1");
  if (p.m < 2) throw IndexError("M must be at least 2");
  if (p.ef_construction < 1) throw IndexError("efC must be at least 1");
}

IndexMeta decode_meta_block(std::span<const std::byte> block) {
  using namespace meta_layout;
  const auto at = [&](std::uint64_t off) { return load_u64(block.data() + (off - kMagicOffset)); };
  if (at(kMagicOffset) != kMagic) throw IndexError("MN 0 holds no index metadata");
  IndexMeta meta;
  meta.params.dim = static_cast<std::uint32_t>(at(kDimOffset));
  meta.params.m = static_cast<std::uint32_t>(at(kMOffset));
  meta.params.ef_construction = static_cast<std::uint32_t>(at(kEfConstructionOffset));
  meta.params.metric = static_cast<Metric>(at(kMetricOffset));
  meta.params.heuristic_selection = (at(kFlagsOffset) & 1) != 0;
  meta.entry_point = RemoteAddress::from_word(at(kEntryOffset));
  meta.node_count = at(kNodeCountOffset);
  return meta;
}

constexpr std::size_t kMetaBlockBytes = meta_layout::kFlagsOffset + 8 - meta_layout::kMagicOffset;

}  // namespace

IndexMeta initialize_index(Fabric& fabric, const IndexParams& params) {
  using namespace meta_layout;
  validate_params(params);
  MemoryNodeArena& mn0 = fabric.arena(0);
  std::array<std::byte, 8> word{};
  mn0.read(kMagicOffset, word);
  if (load_u64(word.data()) == kMagic) throw IndexError("MN 0 already holds an index");

  std::array<std::byte, kMetaBlockBytes> block{};
  const auto put = [&](std::uint64_t off, std::uint64_t v) { store_u64(block.data() + (off - kMagicOffset), v); };
  put(kMagicOffset, kMagic);
  put(kDimOffset, params.dim);
  put(kMOffset, params.m);
  put(kEfConstructionOffset, params.ef_construction);
  put(kMetricOffset, static_cast<std::uint64_t>(params.metric));
  put(kFlagsOffset, params.heuristic_selection ? 1 : 0);
  mn0.write(kMagicOffset, block);

  IndexMeta meta;
  meta.params = params;
  return meta;
}

IndexMeta read_index_meta(FabricLink& link) {
  std::array<std::byte, kMetaBlockBytes> block{};
  link.read(meta_word(meta_layout::kMagicOffset), block);
  IndexMeta meta = decode_meta_block(block);
  if (!meta.entry_point.is_null()) {
    meta.top_level = NodeHeader::unpack(link.read_u64(meta.entry_point)).max_level;
  }
  return meta;
}

IndexMeta read_index_meta(const Fabric& fabric) {
  std::array<std::byte, kMetaBlockBytes> block{};
  fabric.arena(0).read(meta_layout::kMagicOffset, block);
  IndexMeta meta = decode_meta_block(block);
  if (!meta.entry_point.is_null()) {
    std::array<std::byte, 8> header{};
    fabric.arena(meta.entry_point.mn_id()).read(meta.entry_point.offset(), header);
    meta.top_level = NodeHeader::unpack(load_u64(header.data())).max_level;
  }
  return meta;
}

std::uint32_t draw_level(Rng& rng, std::uint32_t m) {
  if (m < 2) throw IndexError("draw_level: M must be at least 2");
  const double u = uniform_open_closed(rng);
  const double level = std::floor(-std::log(u) / std::log(static_cast<double>(m)));
  return static_cast<std::uint32_t>(std::min(level, 255.0));
}

std::vector<std::uint32_t> draw_levels(std::size_t count, std::uint32_t m, std::uint64_t seed) {
  Rng rng(derive_seed(seed, kLevelStream));
  std::vector<std::uint32_t> levels(count);
  for (auto& l : levels) l = draw_level(rng, m);
  return levels;
}

std::vector<ScoredCandidate> select_neighbors(std::vector<ScoredCandidate> candidates, std::size_t m,
                                              bool heuristic, const PairDistance& pair_distance) {
  std::sort(candidates.begin(), candidates.end());
  if (!heuristic) {
    if (candidates.size() > m) candidates.resize(m);
    return candidates;
  }
  std::vector<ScoredCandidate> kept;
  kept.reserve(m);
  for (const auto& c : candidates) {
    if (kept.size() >= m) break;
    bool diverse = true;
    for (const auto& k : kept) {
      if (pair_distance(c.handle, k.handle) < c.dist) {
        diverse = false;
        break;
      }
    }
    if (diverse) kept.push_back(c);
  }
  return kept;
}

SearchCounters& SearchCounters::operator+=(const SearchCounters& o) {
  distance_computations += o.distance_computations;
  cache_lookups += o.cache_lookups;
  cache_hits += o.cache_hits;
  node_reads += o.node_reads;
  node_read_bytes += o.node_read_bytes;
  list_reads += o.list_reads;
  list_read_bytes += o.list_read_bytes;
  visited += o.visited;
  return *this;
}

SearchCounters SearchCounters::operator-(const SearchCounters& o) const {
  SearchCounters r;
  r.distance_computations = distance_computations - o.distance_computations;
  r.cache_lookups = cache_lookups - o.cache_lookups;
  r.cache_hits = cache_hits - o.cache_hits;
  r.node_reads = node_reads - o.node_reads;
  r.node_read_bytes = node_read_bytes - o.node_read_bytes;
  r.list_reads = list_reads - o.list_reads;
  r.list_read_bytes = list_read_bytes - o.list_read_bytes;
  r.visited = visited - o.visited;
  return r;
}

Searcher::Searcher(FabricLink& link, IndexMeta meta, NodeCache* cache, Rng* admission_rng)
    : link_(&link), meta_(std::move(meta)), layout_(meta_.params.layout()) {
  set_cache(cache, admission_rng);
  payload_.resize(payload_size(layout_.dim));
  vec_.resize(layout_.dim);
}

void Searcher::set_cache(NodeCache* cache, Rng* admission_rng) {
  if (cache != nullptr && cache->enabled() && admission_rng == nullptr) {
    throw std::invalid_argument("a cache needs an admission RNG");
  }
  cache_ = cache != nullptr && cache->enabled() ? cache : nullptr;
  admission_rng_ = admission_rng;
}

Neighbor Searcher::evaluate(std::span<const float> q, RemoteAddress addr, std::uint32_t* max_level) {
  bool hit = false;
  if (cache_ != nullptr) {
    ++counters_.cache_lookups;
    hit = cache_->lookup(addr, payload_);
  }
  if (hit) {
    ++counters_.cache_hits;
  } else {
    payload_.resize(payload_size(layout_.dim));
    link_->read(addr, payload_);
    ++counters_.node_reads;
    counters_.node_read_bytes += payload_.size();
    if (cache_ != nullptr) {
      const auto level = NodeHeader::unpack(load_u64(payload_.data())).max_level;
      if (cache_->should_admit(level, *admission_rng_)) cache_->insert(addr, payload_, *admission_rng_);
    }
  }
  const NodeHeader header = NodeHeader::unpack(load_u64(payload_.data()));
  if (max_level != nullptr) *max_level = header.max_level;
  load_floats(payload_.data() + kHeaderBytes, vec_);
  ++counters_.distance_computations;
  return {addr, distance_kernel(q.data(), vec_.data(), layout_.dim, meta_.params.metric), header.node_id};
}

std::span<const float> Searcher::fetch_vector(RemoteAddress addr, std::uint64_t* node_id) {
  payload_.resize(payload_size(layout_.dim));
  link_->read(addr, payload_);
  if (node_id != nullptr) *node_id = NodeHeader::unpack(load_u64(payload_.data())).node_id;
  load_floats(payload_.data() + kHeaderBytes, vec_);
  return vec_;
}

std::vector<RemoteAddress> Searcher::read_neighbor_list(RemoteAddress node, std::uint32_t level) {
  const RemoteRegion region = neighbor_list_address(node, level, layout_);
  list_buf_.resize(region.length);
  link_->read(region.addr, list_buf_);
  ++counters_.list_reads;
  counters_.list_read_bytes += region.length;
  auto items = decode_neighbor_list(list_buf_, layout_.capacity(level));
  for (const auto& a : items) {
    if (a.is_null()) throw CorruptionError("null neighbor slot below the stored count at " + to_string(node));
  }
  return items;
}

std::vector<Neighbor> Searcher::search_layer(std::span<const float> q, const Neighbor& ep, std::uint32_t ef,
                                             std::uint32_t level) {
  if (ef < 1) throw std::invalid_argument("search_layer: ef must be at least 1");
  visited_.clear();
  visited_.insert(ep.addr.word());
  ++counters_.visited;

  std::priority_queue<Neighbor, std::vector<Neighbor>, FartherFirst> candidates;
  std::priority_queue<Neighbor> top;
  candidates.push(ep);
  top.push(ep);

  while (!candidates.empty()) {
    const Neighbor c = candidates.top();
    candidates.pop();
    if (c.dist > top.top().dist) break;
    for (const RemoteAddress n : read_neighbor_list(c.addr, level)) {
      if (!visited_.insert(n.word()).second) continue;
      ++counters_.visited;
      const Neighbor cand = evaluate(q, n);
      if (top.size() < ef || cand.dist < top.top().dist) {
        candidates.push(cand);
        top.push(cand);
        if (top.size() > ef) top.pop();
      }
    }
  }

  std::vector<Neighbor> out(top.size());
  for (std::size_t i = out.size(); i-- > 0;) {
    out[i] = top.top();
    top.pop();
  }
  return out;
}

std::vector<Neighbor> Searcher::knn_search(std::span<const float> q, std::uint32_t k, std::uint32_t ef_search) {
  if (meta_.empty()) throw IndexError("knn_search on an empty index");
  if (q.size() != layout_.dim) throw std::invalid_argument("knn_search: query dimensionality mismatch");
  if (k < 1) throw std::invalid_argument("knn_search: k must be at least 1");
  Neighbor cur = evaluate(q, meta_.entry_point);
  for (int level = meta_.top_level; level >= 1; --level) {
    cur = search_layer(q, cur, 1, static_cast<std::uint32_t>(level)).front();
  }
  auto result = search_layer(q, cur, std::max(k, ef_search), 0);
  if (result.size() > k) result.resize(k);
  return result;
}

Inserter::Inserter(FabricLink& link, IndexParams params)
    : link_(&link),
      params_(params),
      layout_(params.layout()),
      searcher_(link, [&] {
        IndexMeta m;
        m.params = params;
        return m;
      }()) {
  validate_params(params_);
}

std::uint64_t Inserter::lock_node(RemoteAddress node) {
  for (;;) {
    const std::uint64_t word = link_->read_u64(node);
    if ((word & NodeHeader::kLockBit) == 0) {
      const std::uint64_t locked = word | NodeHeader::kLockBit;
      if (link_->cas(node, word, locked) == word) return locked;
    }
    ++stats_.lock_retries;
    std::this_thread::yield();
  }
}

void Inserter::unlock_node(RemoteAddress node, std::uint64_t locked_word) {
  const std::uint64_t seen = link_->cas(node, locked_word, locked_word & ~NodeHeader::kLockBit);
  if (seen != locked_word) throw CorruptionError("header of " + to_string(node) + " changed while locked");
}

void Inserter::add_reverse_edge(RemoteAddress target, std::uint32_t level, RemoteAddress source) {
  const std::uint64_t locked = lock_node(target);
  const RemoteRegion region = neighbor_list_address(target, level, layout_);
  const std::uint32_t cap = layout_.capacity(level);
  auto list = searcher_.read_neighbor_list(target, level);

  if (list.size() < cap) {
    std::array<std::byte, 8> slot{};
    store_u64(slot.data(), source.word());
    link_->write(region.addr + 4 + 8 * list.size(), slot);
    std::array<std::byte, 4> count{};
    store_u32(count.data(), static_cast<std::uint32_t>(list.size() + 1));
    link_->write(region.addr, count);
  } else {
    const auto base_span = searcher_.fetch_vector(target);
    const std::vector<float> base(base_span.begin(), base_span.end());
    list.push_back(source);
    std::vector<ScoredCandidate> cands;
    cands.reserve(list.size());
    for (const RemoteAddress n : list) {
      std::uint64_t id = 0;
      const auto v = searcher_.fetch_vector(n, &id);
      cands.push_back({distance_kernel(base.data(), v.data(), layout_.dim, params_.metric), id, n.word()});
    }
    const auto kept = select_neighbors(std::move(cands), cap, params_.heuristic_selection,
                                       [&](std::uint64_t a, std::uint64_t b) {
                                         const auto va = searcher_.fetch_vector(RemoteAddress::from_word(a));
                                         const std::vector<float> first(va.begin(), va.end());
                                         const auto vb = searcher_.fetch_vector(RemoteAddress::from_word(b));
                                         return distance_kernel(first.data(), vb.data(), layout_.dim, params_.metric);
                                       });
    std::vector<RemoteAddress> addrs;
    addrs.reserve(kept.size());
    for (const auto& k : kept) addrs.push_back(RemoteAddress::from_word(k.handle));
    const auto bytes = encode_neighbor_list(addrs, cap);
    link_->write(region.addr + 4, std::span(bytes).subspan(4));
    link_->write(region.addr, std::span(bytes).first(4));
  }
  unlock_node(target, locked);
}

void Inserter::connect(RemoteAddress self, std::span<const float> vec, Neighbor ep, int from_level, int to_level) {
  for (int level = from_level; level >= to_level; --level) {
    const auto lvl = static_cast<std::uint32_t>(level);
    const auto found = searcher_.search_layer(vec, ep, params_.ef_construction, lvl);
    std::vector<ScoredCandidate> cands;
    cands.reserve(found.size());
    for (const auto& n : found) cands.push_back({n.dist, n.node_id, n.addr.word()});
    const auto selected = select_neighbors(std::move(cands), params_.m, params_.heuristic_selection,
                                           [&](std::uint64_t a, std::uint64_t b) {
                                             const auto va = searcher_.fetch_vector(RemoteAddress::from_word(a));
                                             const std::vector<float> first(va.begin(), va.end());
                                             const auto vb = searcher_.fetch_vector(RemoteAddress::from_word(b));
                                             return distance_kernel(first.data(), vb.data(), layout_.dim,
                                                                    params_.metric);
                                           });
    std::vector<RemoteAddress> addrs;
    addrs.reserve(selected.size());
    for (const auto& s : selected) addrs.push_back(RemoteAddress::from_word(s.handle));

    const RemoteRegion region = neighbor_list_address(self, lvl, layout_);
    const auto bytes = encode_neighbor_list(addrs, layout_.capacity(lvl));
    link_->write(region.addr + 4, std::span(bytes).subspan(4));
    link_->write(region.addr, std::span(bytes).first(4));

    for (const RemoteAddress n : addrs) add_reverse_edge(n, lvl, self);
    ep = found.front();
  }
}

RemoteAddress Inserter::insert(std::uint64_t node_id, std::span<const float> vec, Rng& rng) {
  return insert(node_id, vec, draw_level(rng, params_.m), rng);
}

RemoteAddress Inserter::insert(std::uint64_t node_id, std::span<const float> vec, std::uint32_t level, Rng& rng) {
  using namespace meta_layout;
  if (vec.size() != params_.dim) throw std::invalid_argument("insert: vector dimensionality mismatch");
  if (level > 255) throw LayoutError("node level exceeds 8 bits");

  const RemoteAddress self = link_->alloc_node(node_size(params_.dim, params_.m, level), rng);
  NodeRecord record;
  record.header.node_id = node_id;
  record.header.max_level = static_cast<std::uint8_t>(level);
  record.vector.assign(vec.begin(), vec.end());
  record.lists.resize(level + 1);
  link_->write(self, encode_node(record, layout_));

  const RemoteAddress entry_word = meta_word(kEntryOffset);
  std::uint64_t ep_word = link_->read_u64(entry_word);
  while (ep_word == 0) {
    const std::uint64_t seen = link_->cas(entry_word, 0, self.word());
    if (seen == 0) {
      link_->write_u64(meta_word(kTopLevelOffset), level + 1);
      link_->faa(meta_word(kNodeCountOffset), 1);
      return self;
    }
    ++stats_.entry_cas_failures;
    ep_word = seen;
  }

  std::uint32_t top = 0;
  Neighbor ep = searcher_.evaluate(vec, RemoteAddress::from_word(ep_word), &top);
  for (int l = static_cast<int>(top); l > static_cast<int>(level); --l) {
    ep = searcher_.search_layer(vec, ep, 1, static_cast<std::uint32_t>(l)).front();
  }
  connect(self, vec, ep, static_cast<int>(std::min(level, top)), 0);

  while (level > top) {
    const std::uint64_t seen = link_->cas(entry_word, ep_word, self.word());
    if (seen == ep_word) {
      link_->write_u64(meta_word(kTopLevelOffset), level + 1);
      break;
    }
    // Another insert raised the entry point; link the levels it added, then retry.
    ++stats_.entry_cas_failures;
    ep_word = seen;
    std::uint32_t new_top = 0;
    Neighbor new_ep = searcher_.evaluate(vec, RemoteAddress::from_word(ep_word), &new_top);
    if (new_top <= top) continue;
    for (int l = static_cast<int>(new_top); l > static_cast<int>(std::min(level, new_top)); --l) {
      new_ep = searcher_.search_layer(vec, new_ep, 1, static_cast<std::uint32_t>(l)).front();
    }
    connect(self, vec, new_ep, static_cast<int>(std::min(level, new_top)), static_cast<int>(top) + 1);
    top = new_top;
  }
  link_->faa(meta_word(kNodeCountOffset), 1);
  stats_.traffic = link_->stats();
  return self;
}

IndexMeta build_index(Fabric& fabric, const VectorSet& data, const IndexParams& params, std::uint64_t seed,
                      unsigned workers, BuildStats* stats) {
  if (data.empty()) throw IndexError("cannot build an index over an empty dataset");
  if (data.dim() != params.dim) throw IndexError("dataset dimensionality does not match index parameters");
  initialize_index(fabric, params);
  const auto levels = draw_levels(data.size(), params.m, seed);
  workers = std::max(1u, workers);

  BuildStats total;
  if (workers == 1) {
    FabricLink link(fabric, 0);
    Inserter inserter(link, params);
    Rng rng(derive_seed(seed, kAllocStream));
    for (std::size_t i = 0; i < data.size(); ++i) inserter.insert(i, data.row(i), levels[i], rng);
    total.lock_retries = inserter.stats().lock_retries;
    total.entry_cas_failures = inserter.stats().entry_cas_failures;
    total.traffic = link.stats();
  } else {
    std::atomic<std::size_t> next{0};
    std::mutex mu;
    std::exception_ptr failure;
    std::vector<std::thread> threads;
    for (unsigned w = 0; w < workers; ++w) {
      threads.emplace_back([&, w] {
        try {
          FabricLink link(fabric, 0);
          Inserter inserter(link, params);
          Rng rng(derive_seed(seed, kAllocStream + 1 + w));
          for (std::size_t i = next++; i < data.size(); i = next++) {
            inserter.insert(i, data.row(i), levels[i], rng);
          }
          std::lock_guard lock(mu);
          total.lock_retries += inserter.stats().lock_retries;
          total.entry_cas_failures += inserter.stats().entry_cas_failures;
          total.traffic += link.stats();
        } catch (...) {
          std::lock_guard lock(mu);
          if (!failure) failure = std::current_exception();
          next = data.size();
        }
      });
    }
    for (auto& t : threads) t.join();
    if (failure) std::rethrow_exception(failure);
  }
  if (stats != nullptr) *stats = total;
  return read_index_meta(fabric);
}

std::vector<NodeLocation> scan_nodes(const Fabric& fabric, const IndexMeta& meta) {
  const auto& p = meta.params;
  std::vector<NodeLocation> nodes;
  nodes.reserve(meta.node_count);
  for (std::uint32_t mn = 0; mn < fabric.memory_node_count(); ++mn) {
    const MemoryNodeArena& arena = fabric.arena(mn);
    const std::uint64_t end = arena.bump_value();
    std::array<std::byte, 8> word{};
    for (std::uint64_t off = kDataRegionBase; off < end;) {
      arena.read(off, word);
      const NodeHeader h = NodeHeader::unpack(load_u64(word.data()));
      nodes.push_back({h.node_id, RemoteAddress(mn, off), h.max_level});
      off += round_up8(node_size(p.dim, p.m, h.max_level));
    }
  }
  std::sort(nodes.begin(), nodes.end(),
            [](const NodeLocation& a, const NodeLocation& b) { return a.node_id < b.node_id; });
  if (nodes.size() != meta.node_count) {
    throw CorruptionError("arena scan found " + std::to_string(nodes.size()) + " nodes, metadata records " +
                          std::to_string(meta.node_count));
  }
  return nodes;
}

Adjacency read_adjacency(const Fabric& fabric, const IndexMeta& meta) {
  const auto nodes = scan_nodes(fabric, meta);
  const LayoutParams layout = meta.params.layout();
  absl::flat_hash_map<std::uint64_t, std::uint64_t> id_of;
  id_of.reserve(nodes.size());
  std::uint64_t max_id = 0;
  for (const auto& n : nodes) {
    id_of[n.addr.word()] = n.node_id;
    max_id = std::max(max_id, n.node_id);
  }
  Adjacency adj(nodes.empty() ? 0 : max_id + 1);
  std::vector<std::byte> buf;
  for (const auto& n : nodes) {
    auto& levels = adj[n.node_id];
    levels.resize(n.max_level + 1);
    for (std::uint32_t l = 0; l <= n.max_level; ++l) {
      const RemoteRegion region = neighbor_list_address(n.addr, l, layout);
      buf.resize(region.length);
      fabric.arena(region.addr.mn_id()).read(region.addr.offset(), buf);
      for (const RemoteAddress a : decode_neighbor_list(buf, layout.capacity(l))) {
        const auto it = id_of.find(a.word());
        if (it == id_of.end()) throw CorruptionError("neighbor " + to_string(a) + " is not a node");
        levels[l].push_back(it->second);
      }
    }
  }
  return adj;
}

VectorSet read_vectors(const Fabric& fabric, const IndexMeta& meta, std::span<const NodeLocation> nodes) {
  const std::uint32_t dim = meta.params.dim;
  VectorSet out(dim);
  out.reserve(nodes.size());
  std::vector<std::byte> buf(dim * 4);
  std::vector<float> v(dim);
  for (const auto& n : nodes) {
    fabric.arena(n.addr.mn_id()).read(n.addr.offset() + kHeaderBytes, buf);
    load_floats(buf.data(), v);
    out.push_back(v);
  }
  return out;
}

}  // namespace dmhnsw
