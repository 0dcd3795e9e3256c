#include <gtest/gtest.h>

#include <algorithm>
#include <array>
#include <cstring>
#include <filesystem>
#include <thread>

#include "dmhnsw/fabric.hpp"

namespace dmhnsw {
namespace {

std::vector<std::byte> bytes_of(std::initializer_list<int> v) {
  std::vector<std::byte> out;
  for (int x : v) out.push_back(static_cast<std::byte>(x));
  return out;
}

TEST(Fabric, WriteThenRead) {
  Fabric f(FabricConfig{1, 1, 1 << 20});
  FabricLink link(f, 0);
  const auto data = bytes_of({1, 2, 3});
  link.write(RemoteAddress(0, 4096), data);
  EXPECT_EQ(link.read(RemoteAddress(0, 4096), 3), data);
  EXPECT_EQ(link.stats().read_ops, 1u);
  EXPECT_EQ(link.stats().read_bytes, 3u);
  EXPECT_EQ(link.stats().write_bytes, 3u);
}

TEST(Fabric, ZeroLengthReadCountsOpOnly) {
  Fabric f(FabricConfig{1, 1, 1 << 20});
  FabricLink link(f, 0);
  EXPECT_TRUE(link.read(RemoteAddress(0, 4096), 0).empty());
  EXPECT_EQ(link.stats().read_ops, 1u);
  EXPECT_EQ(link.stats().read_bytes, 0u);
}

TEST(Fabric, DisjointWritesAndLastWriterWins) {
  Fabric f(FabricConfig{1, 1, 1 << 20});
  FabricLink link(f, 0);
  link.write(RemoteAddress(0, 4096), bytes_of({1, 1, 1, 1}));
  link.write(RemoteAddress(0, 4100), bytes_of({2, 2}));
  link.write(RemoteAddress(0, 4096), bytes_of({9}));
  EXPECT_EQ(link.read(RemoteAddress(0, 4096), 6), bytes_of({9, 1, 1, 1, 2, 2}));
}

TEST(Fabric, OutOfRangeAndMisalignedFault) {
  Fabric f(FabricConfig{1, 1, 8192});
  FabricLink link(f, 0);
  EXPECT_THROW(link.read(RemoteAddress(0, 8190), 4), FabricFault);
  EXPECT_THROW(link.write(RemoteAddress(0, 8192), bytes_of({1})), FabricFault);
  EXPECT_THROW(link.faa(RemoteAddress(0, 4097), 1), FabricFault);
  EXPECT_THROW(link.cas(RemoteAddress(0, 4100), 0, 1), FabricFault);
  EXPECT_THROW(link.read(RemoteAddress(3, 4096), 1), FabricFault);
}

TEST(Fabric, FaaSequentialSemantics) {
  Fabric f(FabricConfig{1, 1, 1 << 20});
  FabricLink link(f, 0);
  const RemoteAddress counter(0, 4096);
  EXPECT_EQ(link.faa(counter, 16), 0u);
  EXPECT_EQ(link.faa(counter, 16), 16u);
  EXPECT_EQ(link.faa(counter, 0), 32u);
  EXPECT_EQ(link.read_u64(counter), 32u);
  EXPECT_EQ(link.stats().faa_ops, 3u);
}

TEST(Fabric, CasSemantics) {
  Fabric f(FabricConfig{1, 1, 1 << 20});
  FabricLink link(f, 0);
  const RemoteAddress word(0, 4096);
  EXPECT_EQ(link.cas(word, 0, 7), 0u);
  EXPECT_EQ(link.read_u64(word), 7u);
  EXPECT_EQ(link.cas(word, 0, 9), 7u);
  EXPECT_EQ(link.read_u64(word), 7u);
}

TEST(FabricStress, ConcurrentFaaIsAtomic) {
  Fabric f(FabricConfig{1, 1, 1 << 20});
  const RemoteAddress counter(0, 4096);
  constexpr int kWorkers = 8;
  std::vector<std::thread> threads;
  for (int w = 0; w < kWorkers; ++w) {
    threads.emplace_back([&] {
      FabricLink link(f, 0);
      for (int i = 0; i < 1000; ++i) link.faa(counter, 1);
    });
  }
  for (auto& t : threads) t.join();
  FabricLink link(f, 0);
  EXPECT_EQ(link.read_u64(counter), kWorkers * 1000u);
}

TEST(FabricStress, ExactlyOneConcurrentCasWins) {
  Fabric f(FabricConfig{1, 1, 1 << 20});
  for (int round = 0; round < 200; ++round) {
    const RemoteAddress word(0, 4096 + 8 * static_cast<std::uint64_t>(round));
    std::atomic<int> winners{0};
    std::vector<std::thread> threads;
    for (int w = 1; w <= 4; ++w) {
      threads.emplace_back([&, w] {
        FabricLink link(f, 0);
        if (link.cas(word, 0, static_cast<std::uint64_t>(w)) == 0) ++winners;
      });
    }
    for (auto& t : threads) t.join();
    EXPECT_EQ(winners.load(), 1);
  }
}

TEST(FabricAlloc, FirstRegionStartsAtDataBaseAndRegionsAreDisjoint) {
  Fabric f(FabricConfig{1, 1, 1 << 20});
  FabricLink link(f, 0);
  Rng rng(1);
  const auto a = link.alloc_node(100, rng);
  const auto b = link.alloc_node(100, rng);
  EXPECT_EQ(a.offset(), kDataRegionBase);
  EXPECT_GE(b.offset(), a.offset() + 100);
  EXPECT_EQ(b.offset() % 8, 0u);
  EXPECT_THROW(link.alloc_node(0, rng), std::invalid_argument);
}

TEST(FabricAlloc, ExhaustionIsAnAllocationError) {
  Fabric f(FabricConfig{1, 1, 8192});
  FabricLink link(f, 0);
  Rng rng(1);
  link.alloc_node(4096, rng);
  EXPECT_THROW(link.alloc_node(8, rng), AllocationError);
}

TEST(FabricAlloc, ConcurrentAllocationsNeverOverlap) {
  Fabric f(FabricConfig{2, 1, 1 << 22});
  std::vector<std::vector<RemoteAddress>> got(4);
  std::vector<std::thread> threads;
  for (int w = 0; w < 4; ++w) {
    threads.emplace_back([&, w] {
      FabricLink link(f, 0);
      Rng rng(static_cast<std::uint64_t>(w) + 1);
      for (int i = 0; i < 2000; ++i) got[w].push_back(link.alloc_node(24 + 8 * (i % 5), rng));
    });
  }
  for (auto& t : threads) t.join();
  std::vector<std::pair<std::uint64_t, std::uint64_t>> regions;
  for (int w = 0; w < 4; ++w) {
    for (int i = 0; i < 2000; ++i) regions.emplace_back(got[w][i].word(), 24 + 8 * (i % 5));
  }
  std::sort(regions.begin(), regions.end());
  for (std::size_t i = 1; i < regions.size(); ++i) {
    const auto prev = RemoteAddress::from_word(regions[i - 1].first);
    const auto cur = RemoteAddress::from_word(regions[i].first);
    if (prev.mn_id() == cur.mn_id()) EXPECT_GE(cur.offset(), prev.offset() + regions[i - 1].second);
  }
}

TEST(FabricAlloc, MemoryNodeChoiceIsUniform) {
  Fabric f(FabricConfig{3, 1, 4 << 20});
  FabricLink link(f, 0);
  Rng rng(42);
  std::array<int, 3> per_mn{};
  for (int i = 0; i < 10000; ++i) ++per_mn[link.alloc_node(64, rng).mn_id()];
  for (int c : per_mn) {
    EXPECT_GE(c, 2000);
    EXPECT_LE(c, 4600);
  }
}

TEST(FabricMessages, RoutedThroughAnyMemoryNode) {
  Fabric f(FabricConfig{2, 4, 1 << 20});
  FabricLink cn0(f, 0);
  cn0.send_via_mn(1, RoutedMessage{0, 3, MessageKind::kQuery, bytes_of({4, 2})});
  EXPECT_EQ(f.pending_at_mn(1), 1u);
  EXPECT_FALSE(f.try_receive(3).has_value());
  EXPECT_TRUE(f.route_one(1));
  EXPECT_FALSE(f.route_one(1));
  auto msg = f.try_receive(3);
  ASSERT_TRUE(msg.has_value());
  EXPECT_EQ(msg->source_cn, 0u);
  EXPECT_EQ(msg->payload, bytes_of({4, 2}));
  EXPECT_EQ(cn0.stats().msgs_sent, 1u);
}

TEST(FabricMessages, SelfAddressedMessageLoopsBack) {
  Fabric f(FabricConfig{1, 2, 1 << 20});
  FabricLink cn1(f, 1);
  cn1.send_via_mn(0, RoutedMessage{1, 1, MessageKind::kProgress, {}});
  f.route_one(0);
  EXPECT_TRUE(f.try_receive(1).has_value());
}

TEST(FabricMessages, UnknownDestinationIsDropped) {
  Fabric f(FabricConfig{1, 2, 1 << 20});
  FabricLink cn0(f, 0);
  cn0.send_via_mn(0, RoutedMessage{0, 7, MessageKind::kQuery, {}});
  f.route_one(0);
  const auto c = f.message_counters();
  EXPECT_EQ(c.sent, 1u);
  EXPECT_EQ(c.dropped, 1u);
  EXPECT_EQ(c.delivered, 0u);
}

TEST(FabricMessages, FifoPerSenderAndConservationWithRouterThreads) {
  Fabric f(FabricConfig{3, 4, 1 << 20});
  f.start_routers();
  std::vector<std::thread> senders;
  for (std::uint32_t cn = 0; cn < 4; ++cn) {
    senders.emplace_back([&, cn] {
      FabricLink link(f, cn);
      for (std::uint32_t i = 0; i < 2500; ++i) {
        std::vector<std::byte> payload(8);
        std::memcpy(payload.data(), &i, sizeof i);
        // All of one sender's messages go through one MN so FIFO order is observable.
        link.send_via_mn(cn % 3, RoutedMessage{cn, (cn + i) % 4, MessageKind::kQuery, std::move(payload)});
      }
    });
  }
  for (auto& t : senders) t.join();
  std::array<std::array<std::int64_t, 4>, 4> last{};
  for (auto& row : last) row.fill(-1);
  std::uint64_t received = 0;
  while (received < 10000) {
    bool any = false;
    for (std::uint32_t cn = 0; cn < 4; ++cn) {
      while (auto m = f.receive_for(cn, std::chrono::microseconds(100))) {
        std::uint32_t seq = 0;
        std::memcpy(&seq, m->payload.data(), sizeof seq);
        EXPECT_GT(static_cast<std::int64_t>(seq), last[m->source_cn][cn]);
        last[m->source_cn][cn] = seq;
        ++received;
        any = true;
      }
    }
    if (!any && f.message_counters().delivered == 10000) break;
  }
  f.stop_routers();
  const auto c = f.message_counters();
  EXPECT_EQ(c.sent, 10000u);
  EXPECT_EQ(c.delivered + c.dropped, c.sent);
  EXPECT_EQ(c.dropped, 0u);
  EXPECT_EQ(received, 10000u);
}

TEST(FabricMessages, ConfigureMessagePlaneResets) {
  Fabric f(FabricConfig{1, 2, 1 << 20});
  FabricLink cn0(f, 0);
  cn0.send_via_mn(0, RoutedMessage{0, 1, MessageKind::kQuery, {}});
  f.configure_message_plane(5);
  EXPECT_EQ(f.compute_node_count(), 5u);
  EXPECT_EQ(f.pending_at_mn(0), 0u);
  EXPECT_EQ(f.message_counters().sent, 0u);
  EXPECT_THROW(f.configure_message_plane(0), std::invalid_argument);
}

TEST(FabricPersistence, SaveLoadRoundTrip) {
  const auto dir = std::filesystem::temp_directory_path() / "dmhnsw_fabric_persist";
  std::filesystem::remove_all(dir);
  Fabric f(FabricConfig{2, 1, 1 << 16});
  FabricLink link(f, 0);
  Rng rng(5);
  for (int i = 0; i < 20; ++i) {
    const auto a = link.alloc_node(40, rng);
    link.write(a, bytes_of({i, i + 1, i + 2}));
  }
  f.save(dir);
  auto g = Fabric::load(dir, FabricConfig{});
  ASSERT_EQ(g->memory_node_count(), 2u);
  for (std::uint32_t mn = 0; mn < 2; ++mn) {
    EXPECT_EQ(g->arena(mn).bump_value(), f.arena(mn).bump_value());
    EXPECT_EQ(g->arena(mn).checksum(), f.arena(mn).checksum());
  }
  std::filesystem::remove_all(dir);
  EXPECT_THROW(Fabric::load(dir, FabricConfig{}), std::runtime_error);
}

}  // namespace
}  // namespace dmhnsw
