#pragma once

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "dmhnsw/random.hpp"
#include "dmhnsw/remote_address.hpp"

namespace dmhnsw {

class CacheError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct CacheConfig {
  std::uint64_t capacity_bytes = 0;
  /// Bytes per cached payload (node header + vector). Capacity is counted in
  /// entries: capacity_bytes / entry_bytes.
  std::uint64_t entry_bytes = 8;
  double cooling_fraction = 0.10;
  double base_admission_prob = 0.01;
  /// Hash buckets of the entry table; 0 picks the next power of two >= entries.
  std::uint64_t bucket_count = 0;

  void validate() const;
};

struct CacheStats {
  std::uint64_t hits = 0;
  std::uint64_t misses = 0;
  std::uint64_t evictions = 0;
  std::uint64_t admissions = 0;
  /// Admissions that found no free slot because the cooled victim's FIFO had room.
  std::uint64_t dropped_admissions = 0;
  std::uint64_t read_retries = 0;
  std::uint64_t cooling_population = 0;

  double chr() const { return hits + misses == 0 ? 0.0 : static_cast<double>(hits) / static_cast<double>(hits + misses); }
};

enum class InsertOutcome { kInserted, kRefreshed, kNoSlot, kDisabled };

/// Node cache of one compute node.
///
/// Entries live in a fixed slot array and are chained per hash bucket through
/// tagged links (slot index + entry tag). Lookups take no locks: a reader
/// validates the link tag against the entry tag, copies the payload under the
/// entry's sequence counter and restarts if either changed. Inserts, evictions
/// and refreshes lock only the affected hash bucket.
///
/// Replacement: when no slot is free, a random hot entry is moved to the
/// cooling table (hashed buckets of fixed-size FIFOs). Pushing into a full
/// FIFO drops its oldest key, whose entry is evicted and whose slot is reused
/// by the new entry. A hit on a cooling entry returns it to the hot state.
class NodeCache {
 public:
  explicit NodeCache(CacheConfig config);
  ~NodeCache();
  NodeCache(const NodeCache&) = delete;
  NodeCache& operator=(const NodeCache&) = delete;

  const CacheConfig& config() const { return config_; }
  std::size_t entry_capacity() const { return entries_; }
  std::size_t cooling_capacity() const { return cooling_slots_; }
  std::size_t cooling_bucket_count() const { return cooling_.size(); }
  bool enabled() const { return entries_ > 0; }

  /// Copies the payload into `out` (resized) on a hit.
  bool lookup(RemoteAddress key, std::vector<std::byte>& out);
  std::optional<std::vector<std::byte>> lookup(RemoteAddress key);

  /// Caller has already applied the admission policy. `rng` drives victim selection.
  InsertOutcome insert(RemoteAddress key, std::span<const std::byte> payload, Rng& rng);

  /// Upper-level nodes always; base-level nodes with base_admission_prob.
  bool should_admit(std::uint32_t level, Rng& rng) const;

  CacheStats stats() const;
  void reset_stats();

  // Introspection for tests; these take locks and are meant for quiescent use.
  std::size_t size() const;
  std::size_t cooling_population() const;
  bool contains(RemoteAddress key) const;
  bool is_cooling(RemoteAddress key) const;
  /// True iff the set of entries flagged cooling equals the union of cooling FIFOs
  /// and no key appears twice.
  bool check_coherence() const;
  /// Keys of one cooling bucket, newest first.
  std::vector<std::uint64_t> cooling_bucket_keys(std::size_t bucket) const;
  std::size_t cooling_bucket_of(RemoteAddress key) const;

 private:
  struct Entry;
  struct HashBucket;
  struct CoolingBucket;

  static constexpr std::uint32_t kNoSlot = 0xffffffffu;

  std::size_t hash_bucket_of(std::uint64_t key) const;
  std::uint32_t find_linked(HashBucket& b, std::uint64_t key) const;  // under b's lock
  void write_payload(std::uint32_t slot, std::span<const std::byte> payload);
  std::uint32_t pop_free();
  void push_free(std::uint32_t slot);
  std::uint32_t acquire_slot(Rng& rng);
  /// Moves one random hot entry to cooling; returns a freed slot if the push
  /// displaced (and evicted) a cooling key.
  std::uint32_t cool_random_entry(Rng& rng);
  std::uint32_t evict(std::uint64_t key);
  void promote(std::uint32_t slot, std::uint64_t key);

  CacheConfig config_;
  std::size_t entries_ = 0;
  std::size_t words_per_entry_ = 0;
  std::size_t cooling_slots_ = 0;
  std::unique_ptr<Entry[]> slots_;
  std::unique_ptr<std::atomic<std::uint64_t>[]> payload_words_;
  std::unique_ptr<HashBucket[]> buckets_;
  std::size_t bucket_mask_ = 0;
  std::vector<std::unique_ptr<CoolingBucket>> cooling_;

  std::atomic<std::uint64_t> free_head_{0};
  std::unique_ptr<std::atomic<std::uint32_t>[]> free_next_;

  std::atomic<std::uint64_t> hits_{0};
  std::atomic<std::uint64_t> misses_{0};
  std::atomic<std::uint64_t> evictions_{0};
  std::atomic<std::uint64_t> admissions_{0};
  std::atomic<std::uint64_t> dropped_{0};
  std::atomic<std::uint64_t> retries_{0};
};

}  // namespace dmhnsw
