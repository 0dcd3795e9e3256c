#include "dmhnsw/cluster_threaded.hpp"

#include <atomic>
#include <condition_variable>
#include <deque>
#include <memory>
#include <mutex>
#include <stdexcept>
#include <thread>

namespace dmhnsw {

namespace {

using Clock = std::chrono::steady_clock;

/// The CN's working queue: the router is the only producer.
class WorkQueue {
 public:
  void push(std::uint32_t pos) {
    {
      std::lock_guard lock(mu_);
      items_.push_back(pos);
      max_ = std::max<std::uint64_t>(max_, items_.size());
    }
    cv_.notify_one();
  }

  /// Blocks until an item arrives or `stop` is set.
  bool pop(std::uint32_t& pos, const std::atomic<bool>& stop) {
    std::unique_lock lock(mu_);
    while (items_.empty()) {
      if (stop.load()) return false;
      cv_.wait_for(lock, std::chrono::milliseconds(1));
    }
    pos = items_.front();
    items_.pop_front();
    return true;
  }

  std::size_t size() const {
    std::lock_guard lock(mu_);
    return items_.size();
  }

  std::uint64_t max_size() const {
    std::lock_guard lock(mu_);
    return max_;
  }

  void wake_all() { cv_.notify_all(); }

 private:
  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::deque<std::uint32_t> items_;
  std::uint64_t max_ = 0;
};

struct Worker {
  Worker(Fabric& fabric, const IndexMeta& meta, std::uint32_t cn, NodeCache* cache, std::uint64_t seed)
      : link(fabric, cn), admission(seed), searcher(link, meta, cache, &admission) {}
  FabricLink link;
  Rng admission;
  Searcher searcher;
  std::uint64_t queries = 0;
};

struct Node {
  std::unique_ptr<NodeCache> cache;
  std::unique_ptr<FabricLink> router_link;
  std::vector<std::unique_ptr<Worker>> workers;
  WorkQueue queue;
  std::deque<std::uint32_t> input;
  std::unique_ptr<QueryRouter> router;
  std::unique_ptr<ProgressCollector> collector;
  Rng forwarding;
  std::uint64_t round = 0;
  std::uint64_t forwarded_out = 0;
  std::uint64_t forwarded_in = 0;
};

class ThreadedCluster {
 public:
  ThreadedCluster(Fabric& fabric, const IndexMeta& meta, const Oracle& oracle, const VectorSet& queries,
                  const QueryStream& stream, const SimConfig& cfg, const ThreadedOptions& opt)
      : fabric_(fabric), oracle_(oracle), queries_(queries), stream_(stream), cfg_(cfg), opt_(opt) {
    for (std::uint32_t c = 0; c < cfg.compute_nodes; ++c) {
      auto node = std::make_unique<Node>();
      if (cfg.cache.capacity_bytes > 0) node->cache = std::make_unique<NodeCache>(cfg.cache);
      node->router_link = std::make_unique<FabricLink>(fabric, c);
      for (std::uint32_t w = 0; w < cfg.workers_per_cn; ++w) {
        node->workers.push_back(std::make_unique<Worker>(fabric, meta, c, node->cache.get(),
                                                         derive_seed(admission_seed(cfg.seed, c), w)));
      }
      node->router = std::make_unique<QueryRouter>(c, cfg.compute_nodes, cfg.policy, cfg.batch);
      node->collector = std::make_unique<ProgressCollector>(cfg.compute_nodes);
      node->forwarding = Rng(forwarding_seed(cfg.seed, c));
      nodes_.push_back(std::move(node));
    }
    results_.resize(stream.size());
  }

  SimResult run() {
    run_phase(0, stream_.warmup);
    std::uint64_t warmup_lookups = 0;
    for (auto& node : nodes_) {
      for (auto& w : node->workers) {
        warmup_lookups += w->searcher.counters().cache_lookups;
        w->searcher.reset_counters();
        w->link.reset_stats();
        w->queries = 0;
      }
      node->router_link->reset_stats();
      node->forwarded_in = node->forwarded_out = 0;
      if (node->cache) node->cache->reset_stats();
    }
    const MessageCounters before = fabric_.message_counters();
    const auto start = Clock::now();
    run_phase(stream_.warmup, stream_.size());
    const auto elapsed = std::chrono::duration_cast<std::chrono::nanoseconds>(Clock::now() - start).count();
    const MessageCounters after = fabric_.message_counters();

    SimResult r;
    r.warmup_lookups = warmup_lookups;
    r.measured_queries = stream_.measured();
    r.makespan_ns = static_cast<std::uint64_t>(elapsed);
    if (elapsed > 0) r.wall_throughput_qps = static_cast<double>(r.measured_queries) * 1e9 / static_cast<double>(elapsed);
    r.messages = {after.sent - before.sent, after.delivered - before.delivered, after.dropped - before.dropped};
    for (auto& node : nodes_) {
      CnStats s;
      for (auto& w : node->workers) {
        s.queries += w->queries;
        s.search += w->searcher.counters();
        s.traffic += w->link.stats();
      }
      s.traffic += node->router_link->stats();
      if (node->cache) s.cache = node->cache->stats();
      s.forwarded_out = node->forwarded_out;
      s.forwarded_in = node->forwarded_in;
      s.batches = node->router->batches_finished();
      s.stale_reports = node->collector->stale_reports_used();
      s.max_queue = node->queue.max_size();
      r.search += s.search;
      r.per_cn.push_back(s);
      r.limit_traces.push_back(node->router->limit_trace());
    }
    if (r.search.cache_lookups > 0) {
      r.chr = static_cast<double>(r.search.cache_hits) / static_cast<double>(r.search.cache_lookups);
    }
    r.results = std::move(results_);
    r.execution_order = std::move(order_);
    return r;
  }

 private:
  void run_phase(std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) nodes_[stream_.arrival_cn[i]]->input.push_back(static_cast<std::uint32_t>(i));
    target_ = end - begin;
    answered_ = 0;
    stop_ = target_ == 0;

    std::vector<std::thread> threads;
    for (std::uint32_t c = 0; c < nodes_.size(); ++c) {
      for (auto& w : nodes_[c]->workers) threads.emplace_back([this, c, wp = w.get()] { worker_loop(c, *wp); });
      threads.emplace_back([this, c] { router_loop(c); });
    }
    for (auto& t : threads) t.join();
  }

  bool finished() const { return answered_.load() >= target_; }

  void worker_loop(std::uint32_t c, Worker& w) {
    auto& node = *nodes_[c];
    std::uint32_t pos = 0;
    while (node.queue.pop(pos, stop_)) {
      const auto found = w.searcher.knn_search(queries_.row(stream_.pool_index[pos]), cfg_.k, cfg_.ef_search);
      auto& ids = results_[pos];
      for (const auto& n : found) ids.push_back(static_cast<std::uint32_t>(n.node_id));
      {
        std::lock_guard lock(order_mu_);
        order_.emplace_back(pos, c);
      }
      ++w.queries;
      if (answered_.fetch_add(1) + 1 >= target_) {
        stop_ = true;
        for (auto& n : nodes_) n->queue.wake_all();
      }
    }
  }

  /// Handles everything waiting in the CN inbox.
  void drain_inbox(std::uint32_t c) {
    auto& node = *nodes_[c];
    while (auto msg = fabric_.try_receive(c)) {
      if (msg->kind == MessageKind::kProgress) {
        node.collector->record(decode_progress(msg->payload));
      } else {
        ++node.forwarded_in;
        node.queue.push(static_cast<std::uint32_t>(decode_query_index(msg->payload)));
      }
    }
  }

  void send(std::uint32_t c, std::uint32_t dest, MessageKind kind, std::vector<std::byte> payload) {
    auto& node = *nodes_[c];
    const auto mn = static_cast<std::uint32_t>(uniform_index(node.forwarding, fabric_.memory_node_count()));
    node.router_link->send_via_mn(mn, RoutedMessage{c, dest, kind, std::move(payload)});
  }

  void router_loop(std::uint32_t c) {
    auto& node = *nodes_[c];
    std::vector<std::pair<float, std::uint32_t>> ranked;
    while (!node.input.empty()) {
      drain_inbox(c);
      const std::uint32_t pos = node.input.front();
      node.input.pop_front();
      const auto q = queries_.row(stream_.pool_index[pos]);
      if (cfg_.policy != RoutingPolicy::kNoRouting) oracle_.rank(q, ranked);
      const std::uint32_t dest = node.router->select_destination(ranked);
      if (dest == c) {
        node.queue.push(pos);
      } else {
        ++node.forwarded_out;
        send(c, dest, MessageKind::kQuery, encode_query(pos, q));
      }
      if (!node.router->batch_complete()) continue;
      if (cfg_.policy != RoutingPolicy::kAdaptive) {
        node.router->finish_batch({});
        continue;
      }
      batch_cycle(c);
    }
    while (!finished()) {
      drain_inbox(c);
      std::this_thread::sleep_for(opt_.poll_interval);
    }
  }

  void batch_cycle(std::uint32_t c) {
    auto& node = *nodes_[c];
    ++node.round;
    const std::uint64_t local = node.queue.size();
    const ProgressReport report{c, node.round, local};
    for (std::uint32_t other = 0; other < nodes_.size(); ++other) {
      if (other != c) send(c, other, MessageKind::kProgress, encode_progress(report));
    }
    while (node.queue.size() > cfg_.sync_threshold && !finished()) {
      drain_inbox(c);
      std::this_thread::sleep_for(opt_.poll_interval);
    }
    const auto deadline = Clock::now() + opt_.progress_timeout;
    for (;;) {
      drain_inbox(c);
      if (node.collector->complete(c, node.round)) break;
      if (Clock::now() >= deadline) {
        node.collector->note_timeout(c, node.round);
        break;
      }
      std::this_thread::sleep_for(opt_.poll_interval);
    }
    node.router->finish_batch(node.collector->snapshot(c, local));
  }

  Fabric& fabric_;
  const Oracle& oracle_;
  const VectorSet& queries_;
  const QueryStream& stream_;
  const SimConfig& cfg_;
  const ThreadedOptions& opt_;
  std::vector<std::unique_ptr<Node>> nodes_;
  std::vector<std::vector<std::uint32_t>> results_;
  // Completion order stands in for execution order in the unified replay.
  std::mutex order_mu_;
  std::vector<std::pair<std::uint32_t, std::uint32_t>> order_;
  std::atomic<std::uint64_t> answered_{0};
  std::uint64_t target_ = 0;
  std::atomic<bool> stop_{false};
};

/// Stops the MN routers however the run ends.
struct RouterGuard {
  explicit RouterGuard(Fabric& f) : fabric(f) { fabric.start_routers(); }
  ~RouterGuard() { fabric.stop_routers(); }
  Fabric& fabric;
};

}  // namespace

SimResult run_cluster_threaded(Fabric& fabric, const IndexMeta& meta, const Oracle& oracle, const VectorSet& queries,
                               const QueryStream& stream, const SimConfig& config, const ThreadedOptions& options) {
  if (config.compute_nodes == 0 || config.workers_per_cn == 0) {
    throw std::invalid_argument("need at least one compute node and one worker per CN");
  }
  if (config.policy != RoutingPolicy::kNoRouting && oracle.size() != config.compute_nodes) {
    throw std::invalid_argument("oracle size does not match the compute node count");
  }
  for (const auto c : stream.arrival_cn) {
    if (c >= config.compute_nodes) throw std::invalid_argument("stream arrival CN out of range");
  }
  fabric.configure_message_plane(config.compute_nodes);
  SimResult result;
  {
    RouterGuard guard(fabric);
    result = ThreadedCluster(fabric, meta, oracle, queries, stream, config, options).run();
  }
  if (config.unified_replay && config.cache.capacity_bytes > 0) {
    result.chr_max = unified_cache_chr(fabric, meta, queries, stream, config, result.execution_order);
  }
  return result;
}

}  // namespace dmhnsw
