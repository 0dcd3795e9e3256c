#include <gtest/gtest.h>

#include <atomic>
#include <cstring>
#include <thread>

#include "dmhnsw/cache.hpp"

namespace dmhnsw {
namespace {

constexpr std::uint64_t kEntryBytes = 32;

RemoteAddress key_of(std::uint64_t i) { return RemoteAddress(static_cast<std::uint32_t>(i % 4), 4096 + 8 * i); }

// Every word carries the key and a writer stamp, so a torn copy shows up as
// words that disagree.
std::vector<std::byte> payload_for(RemoteAddress key, std::uint64_t stamp) {
  std::vector<std::byte> p(kEntryBytes);
  for (std::size_t w = 0; w < kEntryBytes / 8; ++w) {
    const std::uint64_t v = key.word() * 1000003 + stamp;
    std::memcpy(p.data() + 8 * w, &v, 8);
  }
  return p;
}

bool consistent(RemoteAddress key, const std::vector<std::byte>& p) {
  if (p.size() != kEntryBytes) return false;
  std::uint64_t first = 0;
  std::memcpy(&first, p.data(), 8);
  if ((first - key.word() * 1000003) >= (1u << 20)) return false;
  for (std::size_t w = 1; w < kEntryBytes / 8; ++w) {
    std::uint64_t v = 0;
    std::memcpy(&v, p.data() + 8 * w, 8);
    if (v != first) return false;
  }
  return true;
}

NodeCache make_cache(std::size_t entries) { return NodeCache(CacheConfig{entries * kEntryBytes, kEntryBytes}); }

TEST(NodeCache, EmptyCacheMisses) {
  auto cache = make_cache(16);
  EXPECT_FALSE(cache.lookup(key_of(1)).has_value());
  EXPECT_EQ(cache.stats().misses, 1u);
  EXPECT_EQ(cache.stats().hits, 0u);
}

TEST(NodeCache, InsertThenLookup) {
  auto cache = make_cache(16);
  Rng rng(1);
  const auto p = payload_for(key_of(1), 0);
  EXPECT_EQ(cache.insert(key_of(1), p, rng), InsertOutcome::kInserted);
  EXPECT_EQ(cache.lookup(key_of(1)), p);
  EXPECT_EQ(cache.stats().hits, 1u);
}

TEST(NodeCache, DuplicateInsertRefreshes) {
  auto cache = make_cache(16);
  Rng rng(1);
  cache.insert(key_of(1), payload_for(key_of(1), 0), rng);
  EXPECT_EQ(cache.insert(key_of(1), payload_for(key_of(1), 9), rng), InsertOutcome::kRefreshed);
  EXPECT_EQ(cache.size(), 1u);
  EXPECT_EQ(cache.lookup(key_of(1)), payload_for(key_of(1), 9));
}

TEST(NodeCache, FillingCapacityEvictsNothing) {
  auto cache = make_cache(200);
  Rng rng(2);
  for (std::uint64_t i = 0; i < 200; ++i) cache.insert(key_of(i), payload_for(key_of(i), 0), rng);
  EXPECT_EQ(cache.size(), 200u);
  EXPECT_EQ(cache.stats().evictions, 0u);
  EXPECT_EQ(cache.cooling_population(), 0u);
}

TEST(NodeCache, OneInsertPastCapacityCoolsOneEntry) {
  auto cache = make_cache(200);
  Rng rng(3);
  for (std::uint64_t i = 0; i <= 200; ++i) cache.insert(key_of(i), payload_for(key_of(i), 0), rng);
  EXPECT_EQ(cache.cooling_population(), 1u);
  EXPECT_EQ(cache.stats().evictions, 0u);
  EXPECT_LE(cache.size(), 200u);
  EXPECT_TRUE(cache.check_coherence());
}

TEST(NodeCache, HittingCoolingEntryPromotesIt) {
  auto cache = make_cache(200);
  Rng rng(4);
  for (std::uint64_t i = 0; i < 205; ++i) cache.insert(key_of(i), payload_for(key_of(i), 0), rng);
  std::uint64_t cooled = 0;
  std::size_t bucket = 0;
  for (std::size_t b = 0; b < cache.cooling_bucket_count() && cooled == 0; ++b) {
    const auto keys = cache.cooling_bucket_keys(b);
    if (!keys.empty()) {
      cooled = keys.front();
      bucket = b;
    }
  }
  ASSERT_NE(cooled, 0u);
  const auto key = RemoteAddress::from_word(cooled);
  ASSERT_TRUE(cache.is_cooling(key));
  const auto before = cache.cooling_population();
  EXPECT_EQ(cache.lookup(key), payload_for(key, 0));
  EXPECT_FALSE(cache.is_cooling(key));
  const auto keys = cache.cooling_bucket_keys(bucket);
  EXPECT_EQ(std::find(keys.begin(), keys.end(), cooled), keys.end());
  EXPECT_EQ(cache.cooling_population(), before - 1);
  EXPECT_TRUE(cache.check_coherence());
}

TEST(NodeCache, CoolingBucketsEvictInFifoOrder) {
  auto cache = make_cache(1000);
  Rng rng(5);
  std::uint64_t next = 0;
  for (; next < 1000; ++next) cache.insert(key_of(next), payload_for(key_of(next), 0), rng);
  std::size_t checked = 0;
  for (int round = 0; round < 2000; ++round, ++next) {
    std::vector<std::vector<std::uint64_t>> before(cache.cooling_bucket_count());
    for (std::size_t b = 0; b < before.size(); ++b) before[b] = cache.cooling_bucket_keys(b);
    const auto evictions = cache.stats().evictions;
    cache.insert(key_of(next), payload_for(key_of(next), 0), rng);
    if (cache.stats().evictions == evictions) continue;
    ASSERT_EQ(cache.stats().evictions, evictions + 1);
    for (std::size_t b = 0; b < before.size(); ++b) {
      const auto after = cache.cooling_bucket_keys(b);
      if (after == before[b]) continue;
      // The newly cooled key went to the front and the oldest key dropped out.
      ASSERT_FALSE(before[b].empty());
      EXPECT_EQ(after.size(), before[b].size());
      EXPECT_EQ(std::vector<std::uint64_t>(after.begin() + 1, after.end()),
                std::vector<std::uint64_t>(before[b].begin(), before[b].end() - 1));
      EXPECT_FALSE(cache.contains(RemoteAddress::from_word(before[b].back())));
      ++checked;
    }
  }
  EXPECT_GT(checked, 1000u);
  EXPECT_TRUE(cache.check_coherence());
}

TEST(NodeCache, SteadyStateCoolingPopulation) {
  auto cache = make_cache(10000);
  Rng rng(6);
  for (std::uint64_t i = 0; i < 100000; ++i) cache.insert(key_of(i), payload_for(key_of(i), 0), rng);
  const double target = 0.10 * 10000;
  EXPECT_EQ(cache.cooling_capacity(), 1000u);
  EXPECT_GE(static_cast<double>(cache.cooling_population()), 0.8 * target);
  EXPECT_LE(static_cast<double>(cache.cooling_population()), 1.2 * target);
  EXPECT_LE(cache.size(), 10000u);
  EXPECT_TRUE(cache.check_coherence());
}

TEST(NodeCache, AdmissionRule) {
  auto cache = make_cache(16);
  Rng rng(7);
  std::size_t admitted = 0;
  for (int i = 0; i < 1000; ++i) EXPECT_TRUE(cache.should_admit(1 + i % 3, rng));
  for (int i = 0; i < 100000; ++i) admitted += cache.should_admit(0, rng);
  EXPECT_GE(admitted, 900u);
  EXPECT_LE(admitted, 1100u);

  NodeCache never(CacheConfig{16 * kEntryBytes, kEntryBytes, 0.1, 0.0});
  for (int i = 0; i < 10000; ++i) EXPECT_FALSE(never.should_admit(0, rng));
}

TEST(NodeCache, RejectsBadInput) {
  auto cache = make_cache(16);
  Rng rng(8);
  const std::vector<std::byte> big(kEntryBytes + 1);
  EXPECT_THROW(cache.insert(key_of(1), big, rng), CacheError);
  EXPECT_THROW(cache.insert(RemoteAddress(), payload_for(key_of(1), 0), rng), CacheError);
  EXPECT_THROW(NodeCache(CacheConfig{64, 8, 0.0}), CacheError);
  EXPECT_THROW(NodeCache(CacheConfig{64, 8, 1.0}), CacheError);
  EXPECT_THROW(NodeCache(CacheConfig{64, 8, 0.1, 1.5}), CacheError);
}

TEST(NodeCache, ZeroCapacityIsDisabled) {
  NodeCache cache(CacheConfig{0, kEntryBytes});
  Rng rng(9);
  EXPECT_FALSE(cache.enabled());
  EXPECT_EQ(cache.insert(key_of(1), payload_for(key_of(1), 0), rng), InsertOutcome::kDisabled);
  EXPECT_FALSE(cache.lookup(key_of(1)).has_value());
}

TEST(NodeCache, ConcurrentMixedOperations) {
  constexpr std::size_t kEntries = 2000;
  constexpr std::uint64_t kKeys = 6000;
  auto cache = make_cache(kEntries);
  std::atomic<std::uint64_t> torn{0}, over{0};
  std::vector<std::thread> threads;
  for (unsigned t = 0; t < 8; ++t) {
    threads.emplace_back([&, t] {
      Rng rng(100 + t);
      std::vector<std::byte> out;
      for (std::uint64_t op = 0; op < 50000; ++op) {
        const auto key = key_of(uniform_index(rng, kKeys));
        if (rng() % 3 == 0) {
          cache.insert(key, payload_for(key, (t << 16) | (op & 0xffff)), rng);
        } else if (cache.lookup(key, out) && !consistent(key, out)) {
          torn.fetch_add(1);
        }
        if (op % 1024 == 0 && cache.size() > kEntries) over.fetch_add(1);
      }
    });
  }
  for (auto& th : threads) th.join();
  EXPECT_EQ(torn.load(), 0u);
  EXPECT_EQ(over.load(), 0u);
  EXPECT_TRUE(cache.check_coherence());
  EXPECT_GE(static_cast<double>(cache.cooling_population()), 0.8 * 200);
  EXPECT_LE(static_cast<double>(cache.cooling_population()), 1.2 * 200);
}

}  // namespace
}  // namespace dmhnsw
