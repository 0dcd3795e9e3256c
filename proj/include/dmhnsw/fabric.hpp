#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <stdexcept>
#include <thread>
#include <vector>

#include "dmhnsw/random.hpp"
#include "dmhnsw/remote_address.hpp"

namespace dmhnsw {

/// Out-of-range or misaligned access. Always a layout bug, never recoverable.
class FabricFault : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class AllocationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr std::uint64_t kBumpCounterOffset = 0;
/// First byte handed out by the bump allocator. [8, 4096) on MN 0 is the
/// index metadata block.
inline constexpr std::uint64_t kDataRegionBase = 4096;

struct TrafficStats {
  std::uint64_t read_ops = 0;
  std::uint64_t read_bytes = 0;
  std::uint64_t write_ops = 0;
  std::uint64_t write_bytes = 0;
  std::uint64_t faa_ops = 0;
  std::uint64_t cas_ops = 0;
  std::uint64_t msgs_sent = 0;
  std::uint64_t msg_bytes = 0;

  TrafficStats& operator+=(const TrafficStats& o);
  std::uint64_t verbs() const { return read_ops + write_ops + faa_ops + cas_ops; }
  bool operator==(const TrafficStats&) const = default;
};

class MemoryNodeArena {
 public:
  MemoryNodeArena(std::uint32_t id, std::uint64_t capacity);

  std::uint32_t id() const { return id_; }
  std::uint64_t capacity() const { return capacity_; }
  std::uint64_t bump_value() const;

  void read(std::uint64_t offset, std::span<std::byte> out) const;
  void write(std::uint64_t offset, std::span<const std::byte> data);
  std::uint64_t fetch_add(std::uint64_t offset, std::uint64_t delta);
  std::uint64_t compare_swap(std::uint64_t offset, std::uint64_t expected, std::uint64_t desired);

  /// FNV-1a over the allocated prefix [0, bump).
  std::uint64_t checksum() const;

  std::span<const std::byte> used_bytes() const;
  void restore(std::span<const std::byte> prefix);

 private:
  void check_range(std::uint64_t offset, std::uint64_t len) const;
  std::uint64_t& word_at(std::uint64_t offset);

  std::uint32_t id_;
  std::uint64_t capacity_;
  std::unique_ptr<std::uint64_t[]> words_;
};

enum class MessageKind : std::uint8_t { kQuery = 0, kProgress = 1 };

struct RoutedMessage {
  std::uint32_t source_cn = 0;
  std::uint32_t dest_cn = 0;
  MessageKind kind = MessageKind::kQuery;
  std::vector<std::byte> payload;
};

struct FabricConfig {
  std::uint32_t memory_nodes = 1;
  std::uint32_t compute_nodes = 1;
  std::uint64_t arena_capacity = 64ull << 20;
  /// Charged per verb to FabricLink::simulated_ns().
  std::uint64_t verb_latency_ns = 2000;
  /// Messages/second each MN router can forward in threaded mode; 0 = unlimited.
  double mn_route_rate = 0.0;
};

struct MessageCounters {
  std::uint64_t sent = 0;
  std::uint64_t delivered = 0;
  std::uint64_t dropped = 0;
};

/// The emulated disaggregated-memory fabric: one arena per memory node plus
/// the two-sided message plane (MN inboxes and CN inboxes).
class Fabric {
 public:
  explicit Fabric(FabricConfig config);
  ~Fabric();
  Fabric(const Fabric&) = delete;
  Fabric& operator=(const Fabric&) = delete;

  const FabricConfig& config() const { return config_; }
  std::uint32_t memory_node_count() const { return static_cast<std::uint32_t>(arenas_.size()); }
  std::uint32_t compute_node_count() const { return config_.compute_nodes; }

  MemoryNodeArena& arena(std::uint32_t mn);
  const MemoryNodeArena& arena(std::uint32_t mn) const;

  // Message plane. send() enqueues at the MN; the MN's router forwards in
  // arrival order, either stepped explicitly (deterministic mode) or by a
  // background thread per MN (start_routers).
  void enqueue_at_mn(std::uint32_t mn, RoutedMessage msg);
  /// Forwards the oldest message queued at `mn`. Returns false if the inbox was empty.
  bool route_one(std::uint32_t mn);
  std::size_t pending_at_mn(std::uint32_t mn) const;

  std::optional<RoutedMessage> try_receive(std::uint32_t cn);
  std::optional<RoutedMessage> receive_for(std::uint32_t cn, std::chrono::microseconds timeout);
  std::size_t pending_at_cn(std::uint32_t cn) const;

  /// Resizes the CN side of the message plane and clears all queued
  /// messages and message counters. Routers must be stopped.
  void configure_message_plane(std::uint32_t compute_nodes);

  void start_routers();
  void stop_routers();

  MessageCounters message_counters() const;

  /// One file per MN (`mn<i>.arena`): 32-byte header then the allocated prefix.
  void save(const std::filesystem::path& dir) const;
  static std::unique_ptr<Fabric> load(const std::filesystem::path& dir, FabricConfig config);

 private:
  struct Channel {
    mutable std::mutex mu;
    std::condition_variable cv;
    std::deque<RoutedMessage> queue;
  };

  void router_loop(std::uint32_t mn);

  FabricConfig config_;
  std::vector<std::unique_ptr<MemoryNodeArena>> arenas_;
  std::vector<std::unique_ptr<Channel>> mn_inbox_;
  std::vector<std::unique_ptr<Channel>> cn_inbox_;
  std::atomic<std::uint64_t> sent_{0};
  std::atomic<std::uint64_t> delivered_{0};
  std::atomic<std::uint64_t> dropped_{0};
  std::atomic<bool> routers_running_{false};
  std::vector<std::thread> routers_;
};

/// A compute-node worker's connection to the fabric. Every one-sided verb
/// goes through a link so traffic is accounted per issuer; links are not
/// shared between threads.
class FabricLink {
 public:
  FabricLink(Fabric& fabric, std::uint32_t cn_id);

  Fabric& fabric() const { return *fabric_; }
  std::uint32_t cn_id() const { return cn_id_; }

  void read(RemoteAddress addr, std::span<std::byte> out);
  std::vector<std::byte> read(RemoteAddress addr, std::size_t len);
  std::uint64_t read_u64(RemoteAddress addr);
  void write(RemoteAddress addr, std::span<const std::byte> data);
  void write_u64(RemoteAddress addr, std::uint64_t value);
  std::uint64_t faa(RemoteAddress addr, std::uint64_t delta);
  std::uint64_t cas(RemoteAddress addr, std::uint64_t expected, std::uint64_t desired);

  /// Picks a memory node uniformly at random and bumps its allocation
  /// counter. Sizes are rounded up to a multiple of 8.
  RemoteAddress alloc_node(std::uint64_t size, Rng& rng);

  void send_via_mn(std::uint32_t mn, RoutedMessage msg);

  const TrafficStats& stats() const { return stats_; }
  void reset_stats() { stats_ = {}; simulated_ns_ = 0; }
  std::uint64_t simulated_ns() const { return simulated_ns_; }

 private:
  MemoryNodeArena& target(RemoteAddress addr);

  Fabric* fabric_;
  std::uint32_t cn_id_;
  TrafficStats stats_;
  std::uint64_t simulated_ns_ = 0;
};

}  // namespace dmhnsw
