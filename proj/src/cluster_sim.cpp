#include "dmhnsw/cluster_sim.hpp"

#include <algorithm>
#include <deque>
#include <memory>
#include <queue>
#include <stdexcept>

namespace dmhnsw {

std::uint64_t admission_seed(std::uint64_t seed, std::uint32_t cn) { return derive_seed(seed, 100 + cn); }
std::uint64_t forwarding_seed(std::uint64_t seed, std::uint32_t cn) { return derive_seed(seed, 200 + cn); }

namespace {

enum class EventKind : std::uint8_t { kRouterStep, kRouterPoll, kMnRoute, kDeliver, kComplete };

struct Event {
  std::uint64_t time = 0;
  std::uint64_t seq = 0;
  EventKind kind = EventKind::kRouterStep;
  std::uint32_t node = 0;
  std::uint32_t slot = 0;

  friend bool operator>(const Event& a, const Event& b) {
    return a.time != b.time ? a.time > b.time : a.seq > b.seq;
  }
};

enum class RouterState : std::uint8_t { kRouting, kSleeping, kAwaitingReports, kIdle };

struct ComputeNode {
  ComputeNode(Fabric& fabric, const IndexMeta& meta, std::uint32_t id, const SimConfig& cfg)
      : link(fabric, id),
        admission(admission_seed(cfg.seed, id)),
        forwarding(forwarding_seed(cfg.seed, id)),
        router(id, cfg.compute_nodes, cfg.policy, cfg.batch),
        collector(cfg.compute_nodes) {
    if (cfg.cache.capacity_bytes > 0) cache = std::make_unique<NodeCache>(cfg.cache);
    searcher = std::make_unique<Searcher>(link, meta, cache.get(), &admission);
    const std::uint32_t slots = cfg.workers_per_cn * cfg.coroutines_per_worker;
    for (std::uint32_t s = slots; s > 0; --s) free_slots.push_back(s - 1);
    core_free.assign(cfg.workers_per_cn, 0);
  }

  FabricLink link;
  Rng admission;
  Rng forwarding;
  std::unique_ptr<NodeCache> cache;
  std::unique_ptr<Searcher> searcher;
  QueryRouter router;
  ProgressCollector collector;

  std::deque<std::uint32_t> input;
  std::deque<std::uint32_t> queue;
  std::vector<std::uint32_t> free_slots;
  std::vector<std::uint64_t> core_free;
  std::uint64_t nic_free = 0;

  RouterState state = RouterState::kIdle;
  std::uint64_t round = 0;
  std::uint64_t local_progress = 0;
  std::uint32_t polls = 0;

  std::uint64_t queries = 0;
  std::uint64_t forwarded_out = 0;
  std::uint64_t forwarded_in = 0;
  std::uint64_t max_queue = 0;

  void reset_measurement() {
    searcher->reset_counters();
    link.reset_stats();
    if (cache) cache->reset_stats();
    queries = forwarded_out = forwarded_in = max_queue = 0;
  }
};

class Simulation {
 public:
  Simulation(Fabric& fabric, const IndexMeta& meta, const Oracle& oracle, const VectorSet& queries,
             const QueryStream& stream, const SimConfig& cfg)
      : fabric_(fabric), meta_(meta), oracle_(oracle), queries_(queries), stream_(stream), cfg_(cfg) {
    for (std::uint32_t c = 0; c < cfg.compute_nodes; ++c) {
      cns_.push_back(std::make_unique<ComputeNode>(fabric, meta, c, cfg));
    }
    mn_busy_.assign(fabric.memory_node_count(), 0);
    mn_dest_.resize(fabric.memory_node_count());
    result_.results.resize(stream.size());
    result_.execution_order.reserve(stream.size());
  }

  SimResult run() {
    run_phase(0, stream_.warmup);
    std::uint64_t warmup_lookups = 0;
    for (auto& cn : cns_) {
      warmup_lookups += cn->searcher->counters().cache_lookups;
      cn->reset_measurement();
    }
    const MessageCounters before = fabric_.message_counters();
    const std::uint64_t start = now_;
    last_completion_ = now_;
    run_phase(stream_.warmup, stream_.size());

    result_.warmup_lookups = warmup_lookups;
    result_.measured_queries = stream_.measured();
    result_.makespan_ns = last_completion_ - start;
    if (result_.makespan_ns > 0) {
      result_.sim_throughput_qps =
          static_cast<double>(result_.measured_queries) * 1e9 / static_cast<double>(result_.makespan_ns);
    }
    const MessageCounters after = fabric_.message_counters();
    result_.messages = {after.sent - before.sent, after.delivered - before.delivered,
                        after.dropped - before.dropped};
    for (auto& cn : cns_) {
      CnStats s;
      s.queries = cn->queries;
      s.forwarded_out = cn->forwarded_out;
      s.forwarded_in = cn->forwarded_in;
      s.search = cn->searcher->counters();
      if (cn->cache) s.cache = cn->cache->stats();
      s.traffic = cn->link.stats();
      s.batches = cn->router.batches_finished();
      s.stale_reports = cn->collector.stale_reports_used();
      s.max_queue = cn->max_queue;
      result_.search += s.search;
      result_.per_cn.push_back(s);
      result_.limit_traces.push_back(cn->router.limit_trace());
    }
    if (result_.search.cache_lookups > 0) {
      result_.chr = static_cast<double>(result_.search.cache_hits) / static_cast<double>(result_.search.cache_lookups);
    }
    return std::move(result_);
  }

 private:
  void schedule(std::uint64_t time, EventKind kind, std::uint32_t node, std::uint32_t slot = 0) {
    events_.push({time, seq_++, kind, node, slot});
  }

  void run_phase(std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      cns_.at(stream_.arrival_cn[i])->input.push_back(static_cast<std::uint32_t>(i));
    }
    for (std::uint32_t c = 0; c < cns_.size(); ++c) {
      auto& cn = *cns_[c];
      if (cn.state != RouterState::kIdle) continue;
      if (!cn.input.empty()) {
        cn.state = RouterState::kRouting;
        schedule(now_ + cfg_.cost.route_ns, EventKind::kRouterStep, c);
      }
    }
    while (!events_.empty()) {
      const Event ev = events_.top();
      events_.pop();
      now_ = ev.time;
      switch (ev.kind) {
        case EventKind::kRouterStep: router_step(ev.node); break;
        case EventKind::kRouterPoll: router_poll(ev.node); break;
        case EventKind::kMnRoute: mn_route(ev.node); break;
        case EventKind::kDeliver: deliver(ev.node); break;
        case EventKind::kComplete: complete(ev.node, ev.slot); break;
      }
    }
    for (auto& cn : cns_) {
      if (!cn->input.empty() || !cn->queue.empty()) throw std::logic_error("simulation stopped with pending queries");
    }
  }

  void send(std::uint32_t from, std::uint32_t dest, MessageKind kind, std::vector<std::byte> payload) {
    auto& cn = *cns_[from];
    const auto mn = static_cast<std::uint32_t>(uniform_index(cn.forwarding, mn_busy_.size()));
    cn.link.send_via_mn(mn, RoutedMessage{from, dest, kind, std::move(payload)});
    mn_dest_[mn].push_back(dest);
    const std::uint64_t at = std::max(now_ + cfg_.cost.hop_ns, mn_busy_[mn]) + cfg_.cost.mn_route_ns;
    mn_busy_[mn] = at;
    schedule(at, EventKind::kMnRoute, mn);
  }

  void mn_route(std::uint32_t mn) {
    if (!fabric_.route_one(mn)) throw std::logic_error("MN route event without a queued message");
    const std::uint32_t dest = mn_dest_[mn].front();
    mn_dest_[mn].pop_front();
    schedule(now_ + cfg_.cost.hop_ns, EventKind::kDeliver, dest);
  }

  void deliver(std::uint32_t c) {
    auto msg = fabric_.try_receive(c);
    if (!msg) throw std::logic_error("delivery event without a message");
    auto& cn = *cns_[c];
    if (msg->kind == MessageKind::kProgress) {
      cn.collector.record(decode_progress(msg->payload));
      return;
    }
    ++cn.forwarded_in;
    enqueue(c, static_cast<std::uint32_t>(decode_query_index(msg->payload)));
  }

  void enqueue(std::uint32_t c, std::uint32_t pos) {
    auto& cn = *cns_[c];
    cn.queue.push_back(pos);
    cn.max_queue = std::max<std::uint64_t>(cn.max_queue, cn.queue.size());
    dispatch(c);
  }

  void router_step(std::uint32_t c) {
    auto& cn = *cns_[c];
    const std::uint32_t pos = cn.input.front();
    cn.input.pop_front();
    const auto q = queries_.row(stream_.pool_index[pos]);
    std::uint32_t dest = c;
    if (cfg_.policy != RoutingPolicy::kNoRouting) {
      oracle_.rank(q, ranked_);
      dest = cn.router.select_destination(ranked_);
    } else {
      dest = cn.router.select_destination({});
    }
    if (dest == c) {
      enqueue(c, pos);
    } else {
      ++cn.forwarded_out;
      send(c, dest, MessageKind::kQuery, encode_query(pos, q));
    }

    if (cn.router.batch_complete()) {
      if (cfg_.policy == RoutingPolicy::kAdaptive) {
        begin_batch_cycle(c);
        return;
      }
      cn.router.finish_batch({});
    }
    continue_routing(c);
  }

  void continue_routing(std::uint32_t c) {
    auto& cn = *cns_[c];
    if (cn.input.empty()) {
      cn.state = RouterState::kIdle;
      return;
    }
    cn.state = RouterState::kRouting;
    schedule(now_ + cfg_.cost.route_ns, EventKind::kRouterStep, c);
  }

  void begin_batch_cycle(std::uint32_t c) {
    auto& cn = *cns_[c];
    ++cn.round;
    cn.local_progress = cn.queue.size();
    const ProgressReport report{c, cn.round, cn.local_progress};
    for (std::uint32_t other = 0; other < cns_.size(); ++other) {
      if (other != c) send(c, other, MessageKind::kProgress, encode_progress(report));
    }
    cn.state = RouterState::kSleeping;
    cn.polls = 0;
    router_poll(c);
  }

  void router_poll(std::uint32_t c) {
    auto& cn = *cns_[c];
    if (cn.state == RouterState::kSleeping) {
      if (cn.queue.size() > cfg_.sync_threshold) {
        schedule(now_ + cfg_.cost.progress_poll_ns, EventKind::kRouterPoll, c);
        return;
      }
      cn.state = RouterState::kAwaitingReports;
    }
    if (!cn.collector.complete(c, cn.round)) {
      if (cn.polls < cfg_.cost.progress_timeout_polls) {
        ++cn.polls;
        schedule(now_ + cfg_.cost.progress_poll_ns, EventKind::kRouterPoll, c);
        return;
      }
      cn.collector.note_timeout(c, cn.round);
    }
    const auto progress = cn.collector.snapshot(c, cn.local_progress);
    cn.router.finish_batch(progress);
    continue_routing(c);
  }

  void dispatch(std::uint32_t c) {
    auto& cn = *cns_[c];
    while (!cn.queue.empty() && !cn.free_slots.empty()) {
      const std::uint32_t pos = cn.queue.front();
      cn.queue.pop_front();
      const std::uint32_t slot = cn.free_slots.back();
      cn.free_slots.pop_back();
      schedule(execute(c, slot, pos), EventKind::kComplete, c, slot);
    }
  }

  /// Runs the search now and returns its simulated completion time.
  std::uint64_t execute(std::uint32_t c, std::uint32_t slot, std::uint32_t pos) {
    auto& cn = *cns_[c];
    const SearchCounters before = cn.searcher->counters();
    const TrafficStats traffic_before = cn.link.stats();
    const auto found = cn.searcher->knn_search(queries_.row(stream_.pool_index[pos]), cfg_.k, cfg_.ef_search);
    const SearchCounters delta = cn.searcher->counters() - before;
    const TrafficStats& traffic = cn.link.stats();
    const std::uint64_t verbs = traffic.verbs() - traffic_before.verbs();
    const std::uint64_t bytes = traffic.read_bytes - traffic_before.read_bytes;

    auto& ids = result_.results[pos];
    ids.clear();
    for (const auto& n : found) ids.push_back(static_cast<std::uint32_t>(n.node_id));
    result_.execution_order.emplace_back(pos, c);
    ++cn.queries;

    const auto& cost = cfg_.cost;
    const double per_node = static_cast<double>(meta_.params.dim) * cost.ns_per_dim + static_cast<double>(cost.node_ns);
    const auto cpu_ns = static_cast<std::uint64_t>(static_cast<double>(delta.distance_computations) * per_node) +
                        verbs * cost.verb_cpu_ns + delta.cache_hits * cost.cache_hit_ns;
    const auto wire_ns = static_cast<std::uint64_t>(static_cast<double>(bytes) / cost.nic_bytes_per_ns);
    auto& core = cn.core_free[slot / cfg_.coroutines_per_worker];
    core = std::max(core, now_) + cpu_ns;
    cn.nic_free = std::max(cn.nic_free, now_) + wire_ns;
    return std::max({now_ + verbs * cost.verb_latency_ns + cpu_ns, core, cn.nic_free});
  }

  void complete(std::uint32_t c, std::uint32_t slot) {
    last_completion_ = std::max(last_completion_, now_);
    cns_[c]->free_slots.push_back(slot);
    dispatch(c);
  }

  Fabric& fabric_;
  const IndexMeta& meta_;
  const Oracle& oracle_;
  const VectorSet& queries_;
  const QueryStream& stream_;
  const SimConfig& cfg_;
  std::vector<std::unique_ptr<ComputeNode>> cns_;
  std::vector<std::uint64_t> mn_busy_;
  std::vector<std::deque<std::uint32_t>> mn_dest_;
  std::priority_queue<Event, std::vector<Event>, std::greater<>> events_;
  std::uint64_t now_ = 0;
  std::uint64_t seq_ = 0;
  std::uint64_t last_completion_ = 0;
  std::vector<std::pair<float, std::uint32_t>> ranked_;
  SimResult result_;
};

void check_config(const Fabric& fabric, const Oracle& oracle, const QueryStream& stream, const SimConfig& cfg) {
  if (cfg.compute_nodes == 0) throw std::invalid_argument("need at least one compute node");
  if (cfg.workers_per_cn == 0 || cfg.coroutines_per_worker == 0) {
    throw std::invalid_argument("each CN needs at least one worker slot");
  }
  if (fabric.memory_node_count() == 0) throw std::invalid_argument("fabric has no memory nodes");
  if (cfg.policy != RoutingPolicy::kNoRouting && oracle.size() != cfg.compute_nodes) {
    throw std::invalid_argument("oracle has " + std::to_string(oracle.size()) + " centroids for " +
                                std::to_string(cfg.compute_nodes) + " compute nodes");
  }
  if (stream.arrival_cn.size() != stream.size()) throw std::invalid_argument("stream arrival list length mismatch");
  for (const auto c : stream.arrival_cn) {
    if (c >= cfg.compute_nodes) throw std::invalid_argument("stream arrival CN out of range");
  }
  if (cfg.cache.capacity_bytes > 0) cfg.cache.validate();
}

}  // namespace

SimResult simulate_cluster(Fabric& fabric, const IndexMeta& meta, const Oracle& oracle, const VectorSet& queries,
                           const QueryStream& stream, const SimConfig& config) {
  check_config(fabric, oracle, stream, config);
  fabric.configure_message_plane(config.compute_nodes);
  SimResult result = Simulation(fabric, meta, oracle, queries, stream, config).run();
  if (config.unified_replay && config.cache.capacity_bytes > 0) {
    result.chr_max = unified_cache_chr(fabric, meta, queries, stream, config, result.execution_order);
  }
  return result;
}

double unified_cache_chr(Fabric& fabric, const IndexMeta& meta, const VectorSet& queries, const QueryStream& stream,
                         const SimConfig& config,
                         const std::vector<std::pair<std::uint32_t, std::uint32_t>>& order) {
  CacheConfig shared = config.cache;
  shared.capacity_bytes = config.cache.capacity_bytes * config.compute_nodes;
  shared.bucket_count = 0;
  NodeCache cache(shared);
  std::vector<Rng> admission;
  for (std::uint32_t c = 0; c < config.compute_nodes; ++c) admission.emplace_back(admission_seed(config.seed, c));
  FabricLink link(fabric, 0);
  Searcher searcher(link, meta, &cache, &admission.at(0));
  std::uint64_t hits = 0;
  std::uint64_t lookups = 0;
  for (const auto& [pos, cn] : order) {
    searcher.set_cache(&cache, &admission.at(cn));
    const SearchCounters before = searcher.counters();
    searcher.knn_search(queries.row(stream.pool_index.at(pos)), config.k, config.ef_search);
    if (pos < stream.warmup) continue;
    const SearchCounters delta = searcher.counters() - before;
    hits += delta.cache_hits;
    lookups += delta.cache_lookups;
  }
  return lookups == 0 ? 0.0 : static_cast<double>(hits) / static_cast<double>(lookups);
}

}  // namespace dmhnsw
