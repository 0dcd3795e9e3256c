#include "dmhnsw/cache.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <deque>
#include <string>
#include <thread>
#include <unordered_set>

namespace dmhnsw {

namespace {

class SpinLock {
 public:
  void lock() {
    for (int spins = 0; flag_.exchange(true, std::memory_order_acquire); ++spins) {
      if (spins > 16) std::this_thread::yield();
    }
  }
  void unlock() { flag_.store(false, std::memory_order_release); }

 private:
  std::atomic<bool> flag_{false};
};

constexpr std::uint64_t make_link(std::uint32_t slot, std::uint32_t tag) {
  return (std::uint64_t{tag} << 32) | (std::uint64_t{slot} + 1);
}
constexpr std::uint32_t link_slot(std::uint64_t link) { return static_cast<std::uint32_t>(link & 0xffffffffu) - 1; }
constexpr std::uint32_t link_tag(std::uint64_t link) { return static_cast<std::uint32_t>(link >> 32); }

std::uint64_t next_pow2(std::uint64_t v) {
  std::uint64_t p = 1;
  while (p < v) p <<= 1;
  return p;
}

}  // namespace

struct NodeCache::Entry {
  std::atomic<std::uint64_t> key{0};
  std::atomic<std::uint32_t> tag{0};
  std::atomic<std::uint32_t> seq{0};
  std::atomic<std::uint32_t> length{0};
  std::atomic<bool> cooling{false};
  std::atomic<std::uint64_t> next{0};
};

struct NodeCache::HashBucket {
  std::atomic<std::uint64_t> head{0};
  mutable SpinLock lock;
};

struct NodeCache::CoolingBucket {
  mutable std::mutex mu;
  std::size_t capacity = 0;
  std::deque<std::uint64_t> fifo;  // front = newest

  /// Returns the key that dropped out of a full FIFO, or 0.
  std::uint64_t push_front(std::uint64_t key) {
    fifo.push_front(key);
    if (fifo.size() <= capacity) return 0;
    const std::uint64_t tail = fifo.back();
    fifo.pop_back();
    return tail;
  }

  bool remove(std::uint64_t key) {
    const auto it = std::find(fifo.begin(), fifo.end(), key);
    if (it == fifo.end()) return false;
    fifo.erase(it);
    return true;
  }
};

void CacheConfig::validate() const {
  if (!(cooling_fraction > 0.0 && cooling_fraction < 1.0)) {
    throw CacheError("cooling fraction must be in (0, 1)");
  }
  if (!(base_admission_prob >= 0.0 && base_admission_prob <= 1.0)) {
    throw CacheError("base admission probability must be in [0, 1]");
  }
  if (entry_bytes == 0) throw CacheError("entry size must be positive");
}

NodeCache::NodeCache(CacheConfig config) : config_(config) {
  config_.validate();
  entries_ = static_cast<std::size_t>(config_.capacity_bytes / config_.entry_bytes);
  if (entries_ >= 0xffffffffu) throw CacheError("cache too large for 32-bit slot links");
  if (entries_ == 0) return;

  words_per_entry_ = static_cast<std::size_t>((config_.entry_bytes + 7) / 8);
  slots_ = std::make_unique<Entry[]>(entries_);
  payload_words_ = std::make_unique<std::atomic<std::uint64_t>[]>(entries_ * words_per_entry_);

  const std::uint64_t nb = config_.bucket_count ? next_pow2(config_.bucket_count) : next_pow2(entries_);
  buckets_ = std::make_unique<HashBucket[]>(nb);
  bucket_mask_ = nb - 1;

  cooling_slots_ = static_cast<std::size_t>(std::ceil(config_.cooling_fraction * static_cast<double>(entries_)));
  cooling_slots_ = std::max<std::size_t>(cooling_slots_, 1);
  std::size_t cb = std::max<std::size_t>(16, entries_ / 1024);
  cb = std::min(cb, cooling_slots_);
  for (std::size_t i = 0; i < cb; ++i) {
    auto bucket = std::make_unique<CoolingBucket>();
    bucket->capacity = cooling_slots_ / cb + (i < cooling_slots_ % cb ? 1 : 0);
    cooling_.push_back(std::move(bucket));
  }

  free_next_ = std::make_unique<std::atomic<std::uint32_t>[]>(entries_);
  for (std::size_t i = 0; i < entries_; ++i) {
    free_next_[i].store(i + 1 < entries_ ? static_cast<std::uint32_t>(i + 2) : 0, std::memory_order_relaxed);
  }
  free_head_.store(1, std::memory_order_release);
}

NodeCache::~NodeCache() = default;

std::size_t NodeCache::hash_bucket_of(std::uint64_t key) const { return mix64(key) & bucket_mask_; }

std::size_t NodeCache::cooling_bucket_of(RemoteAddress key) const {
  if (cooling_.empty()) return 0;
  return static_cast<std::size_t>((mix64(key.word()) >> 32) % cooling_.size());
}

std::uint32_t NodeCache::find_linked(HashBucket& b, std::uint64_t key) const {
  for (std::uint64_t link = b.head.load(std::memory_order_acquire); link != 0;) {
    const std::uint32_t slot = link_slot(link);
    if (slots_[slot].key.load(std::memory_order_relaxed) == key) return slot;
    link = slots_[slot].next.load(std::memory_order_acquire);
  }
  return kNoSlot;
}

void NodeCache::write_payload(std::uint32_t slot, std::span<const std::byte> payload) {
  Entry& e = slots_[slot];
  const std::uint32_t s = e.seq.load(std::memory_order_relaxed);
  e.seq.store(s + 1, std::memory_order_relaxed);
  std::atomic_thread_fence(std::memory_order_release);
  auto* words = &payload_words_[slot * words_per_entry_];
  for (std::size_t w = 0; w < words_per_entry_; ++w) {
    std::uint64_t v = 0;
    const std::size_t off = w * 8;
    if (off < payload.size()) std::memcpy(&v, payload.data() + off, std::min<std::size_t>(8, payload.size() - off));
    words[w].store(v, std::memory_order_relaxed);
  }
  e.length.store(static_cast<std::uint32_t>(payload.size()), std::memory_order_relaxed);
  e.seq.store(s + 2, std::memory_order_release);
}

bool NodeCache::lookup(RemoteAddress key, std::vector<std::byte>& out) {
  if (entries_ == 0) {
    misses_.fetch_add(1, std::memory_order_relaxed);
    return false;
  }
  const std::uint64_t k = key.word();
  HashBucket& b = buckets_[hash_bucket_of(k)];
  enum class Step { kHit, kMiss, kRetry };
  std::uint32_t hit_slot = kNoSlot;

  const auto attempt = [&]() -> Step {
    for (std::uint64_t link = b.head.load(std::memory_order_acquire); link != 0;) {
      const std::uint32_t slot = link_slot(link);
      const std::uint32_t tag = link_tag(link);
      Entry& e = slots_[slot];
      if (e.tag.load(std::memory_order_acquire) != tag) return Step::kRetry;
      const std::uint64_t ek = e.key.load(std::memory_order_acquire);
      const std::uint64_t next = e.next.load(std::memory_order_acquire);
      if (ek == k) {
        const std::uint32_t s1 = e.seq.load(std::memory_order_acquire);
        if (s1 & 1) return Step::kRetry;
        const std::size_t len = e.length.load(std::memory_order_relaxed);
        out.resize(len);
        const auto* words = &payload_words_[slot * words_per_entry_];
        for (std::size_t off = 0; off < len; off += 8) {
          const std::uint64_t v = words[off / 8].load(std::memory_order_relaxed);
          std::memcpy(out.data() + off, &v, std::min<std::size_t>(8, len - off));
        }
        std::atomic_thread_fence(std::memory_order_acquire);
        if (e.seq.load(std::memory_order_relaxed) != s1 || e.tag.load(std::memory_order_relaxed) != tag) {
          return Step::kRetry;
        }
        hit_slot = slot;
        return Step::kHit;
      }
      if (e.tag.load(std::memory_order_acquire) != tag) return Step::kRetry;
      link = next;
    }
    return Step::kMiss;
  };

  for (;;) {
    const Step step = attempt();
    if (step == Step::kRetry) {
      retries_.fetch_add(1, std::memory_order_relaxed);
      continue;
    }
    if (step == Step::kMiss) {
      misses_.fetch_add(1, std::memory_order_relaxed);
      return false;
    }
    hits_.fetch_add(1, std::memory_order_relaxed);
    if (slots_[hit_slot].cooling.load(std::memory_order_relaxed)) promote(hit_slot, k);
    return true;
  }
}

std::optional<std::vector<std::byte>> NodeCache::lookup(RemoteAddress key) {
  std::vector<std::byte> out;
  if (!lookup(key, out)) return std::nullopt;
  return out;
}

void NodeCache::promote(std::uint32_t slot, std::uint64_t key) {
  CoolingBucket& cb = *cooling_[cooling_bucket_of(RemoteAddress::from_word(key))];
  std::lock_guard lock(cb.mu);
  Entry& e = slots_[slot];
  // A key still present in its FIFO cannot have been evicted, so if the slot
  // holds the key it is the live entry for it.
  if (e.key.load(std::memory_order_acquire) != key) return;
  if (cb.remove(key)) e.cooling.store(false, std::memory_order_release);
}

std::uint32_t NodeCache::pop_free() {
  std::uint64_t head = free_head_.load(std::memory_order_acquire);
  for (;;) {
    const std::uint32_t enc = static_cast<std::uint32_t>(head & 0xffffffffu);
    if (enc == 0) return kNoSlot;
    const std::uint32_t next = free_next_[enc - 1].load(std::memory_order_relaxed);
    const std::uint64_t desired = ((head >> 32) + 1) << 32 | next;
    if (free_head_.compare_exchange_weak(head, desired, std::memory_order_acq_rel, std::memory_order_acquire)) {
      return enc - 1;
    }
  }
}

void NodeCache::push_free(std::uint32_t slot) {
  std::uint64_t head = free_head_.load(std::memory_order_acquire);
  for (;;) {
    free_next_[slot].store(static_cast<std::uint32_t>(head & 0xffffffffu), std::memory_order_relaxed);
    const std::uint64_t desired = ((head >> 32) + 1) << 32 | (std::uint64_t{slot} + 1);
    if (free_head_.compare_exchange_weak(head, desired, std::memory_order_acq_rel, std::memory_order_acquire)) return;
  }
}

std::uint32_t NodeCache::evict(std::uint64_t key) {
  HashBucket& b = buckets_[hash_bucket_of(key)];
  std::lock_guard lock(b.lock);
  std::atomic<std::uint64_t>* pred = &b.head;
  for (std::uint64_t link = pred->load(std::memory_order_acquire); link != 0;) {
    const std::uint32_t slot = link_slot(link);
    Entry& e = slots_[slot];
    if (e.key.load(std::memory_order_relaxed) == key) {
      pred->store(e.next.load(std::memory_order_relaxed), std::memory_order_release);
      e.tag.fetch_add(1, std::memory_order_acq_rel);
      e.key.store(0, std::memory_order_release);
      e.cooling.store(false, std::memory_order_release);
      evictions_.fetch_add(1, std::memory_order_relaxed);
      return slot;
    }
    pred = &e.next;
    link = pred->load(std::memory_order_acquire);
  }
  return kNoSlot;
}

std::uint32_t NodeCache::cool_random_entry(Rng& rng) {
  constexpr int kProbes = 64;
  for (int probe = 0; probe < kProbes; ++probe) {
    const auto slot = static_cast<std::uint32_t>(uniform_index(rng, entries_));
    Entry& e = slots_[slot];
    const std::uint64_t k = e.key.load(std::memory_order_acquire);
    if (k == 0 || e.cooling.load(std::memory_order_relaxed)) continue;

    std::uint64_t displaced = 0;
    {
      HashBucket& hb = buckets_[hash_bucket_of(k)];
      std::lock_guard hb_lock(hb.lock);
      if (find_linked(hb, k) != slot) continue;
      CoolingBucket& cb = *cooling_[cooling_bucket_of(RemoteAddress::from_word(k))];
      std::lock_guard cb_lock(cb.mu);
      if (e.cooling.load(std::memory_order_relaxed)) continue;
      e.cooling.store(true, std::memory_order_release);
      displaced = cb.push_front(k);
    }
    return displaced != 0 ? evict(displaced) : kNoSlot;
  }
  return kNoSlot;
}

std::uint32_t NodeCache::acquire_slot(Rng& rng) {
  const std::uint32_t slot = pop_free();
  if (slot != kNoSlot) return slot;
  return cool_random_entry(rng);
}

InsertOutcome NodeCache::insert(RemoteAddress key, std::span<const std::byte> payload, Rng& rng) {
  if (entries_ == 0) return InsertOutcome::kDisabled;
  if (payload.size() > config_.entry_bytes) {
    throw CacheError("payload of " + std::to_string(payload.size()) + " bytes exceeds entry size " +
                     std::to_string(config_.entry_bytes));
  }
  if (key.is_null()) throw CacheError("null key");
  const std::uint64_t k = key.word();
  HashBucket& b = buckets_[hash_bucket_of(k)];
  {
    std::lock_guard lock(b.lock);
    const std::uint32_t existing = find_linked(b, k);
    if (existing != kNoSlot) {
      write_payload(existing, payload);
      return InsertOutcome::kRefreshed;
    }
  }

  const std::uint32_t slot = acquire_slot(rng);
  if (slot == kNoSlot) {
    dropped_.fetch_add(1, std::memory_order_relaxed);
    return InsertOutcome::kNoSlot;
  }
  Entry& e = slots_[slot];
  write_payload(slot, payload);
  e.cooling.store(false, std::memory_order_relaxed);
  e.key.store(k, std::memory_order_release);

  std::lock_guard lock(b.lock);
  const std::uint32_t existing = find_linked(b, k);
  if (existing != kNoSlot) {
    // Lost a race with another admission of the same key.
    write_payload(existing, payload);
    e.key.store(0, std::memory_order_release);
    push_free(slot);
    return InsertOutcome::kRefreshed;
  }
  e.next.store(b.head.load(std::memory_order_relaxed), std::memory_order_relaxed);
  b.head.store(make_link(slot, e.tag.load(std::memory_order_relaxed)), std::memory_order_release);
  admissions_.fetch_add(1, std::memory_order_relaxed);
  return InsertOutcome::kInserted;
}

bool NodeCache::should_admit(std::uint32_t level, Rng& rng) const {
  if (level >= 1) return true;
  if (config_.base_admission_prob <= 0.0) return false;
  return uniform01(rng) < config_.base_admission_prob;
}

CacheStats NodeCache::stats() const {
  CacheStats s;
  s.hits = hits_.load();
  s.misses = misses_.load();
  s.evictions = evictions_.load();
  s.admissions = admissions_.load();
  s.dropped_admissions = dropped_.load();
  s.read_retries = retries_.load();
  s.cooling_population = cooling_population();
  return s;
}

void NodeCache::reset_stats() {
  hits_ = 0;
  misses_ = 0;
  evictions_ = 0;
  admissions_ = 0;
  dropped_ = 0;
  retries_ = 0;
}

std::size_t NodeCache::size() const {
  std::size_t n = 0;
  for (std::size_t i = 0; i < entries_; ++i) n += slots_[i].key.load(std::memory_order_acquire) != 0;
  return n;
}

std::size_t NodeCache::cooling_population() const {
  std::size_t n = 0;
  for (const auto& cb : cooling_) {
    std::lock_guard lock(cb->mu);
    n += cb->fifo.size();
  }
  return n;
}

bool NodeCache::contains(RemoteAddress key) const {
  if (entries_ == 0) return false;
  HashBucket& b = buckets_[hash_bucket_of(key.word())];
  std::lock_guard lock(b.lock);
  return find_linked(b, key.word()) != kNoSlot;
}

bool NodeCache::is_cooling(RemoteAddress key) const {
  if (entries_ == 0) return false;
  HashBucket& b = buckets_[hash_bucket_of(key.word())];
  std::lock_guard lock(b.lock);
  const std::uint32_t slot = find_linked(b, key.word());
  return slot != kNoSlot && slots_[slot].cooling.load(std::memory_order_acquire);
}

std::vector<std::uint64_t> NodeCache::cooling_bucket_keys(std::size_t bucket) const {
  const auto& cb = *cooling_.at(bucket);
  std::lock_guard lock(cb.mu);
  return {cb.fifo.begin(), cb.fifo.end()};
}

bool NodeCache::check_coherence() const {
  std::unordered_set<std::uint64_t> in_fifos;
  for (const auto& cb : cooling_) {
    std::lock_guard lock(cb->mu);
    if (cb->fifo.size() > cb->capacity) return false;
    for (std::uint64_t k : cb->fifo) {
      if (!in_fifos.insert(k).second) return false;
    }
  }
  std::unordered_set<std::uint64_t> flagged;
  for (std::size_t i = 0; i < entries_; ++i) {
    const std::uint64_t k = slots_[i].key.load(std::memory_order_acquire);
    if (k != 0 && slots_[i].cooling.load(std::memory_order_acquire)) flagged.insert(k);
  }
  if (flagged != in_fifos) return false;
  for (std::uint64_t k : in_fifos) {
    if (!contains(RemoteAddress::from_word(k))) return false;
  }
  return true;
}

}  // namespace dmhnsw
