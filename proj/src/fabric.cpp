#include "dmhnsw/fabric.hpp"

#include <cstring>
#include <fstream>
#include <sstream>
#include <string>

namespace dmhnsw {

std::string to_string(RemoteAddress a) {
  std::ostringstream os;
  os << "mn" << a.mn_id() << ":0x" << std::hex << a.offset();
  return os.str();
}

TrafficStats& TrafficStats::operator+=(const TrafficStats& o) {
  read_ops += o.read_ops;
  read_bytes += o.read_bytes;
  write_ops += o.write_ops;
  write_bytes += o.write_bytes;
  faa_ops += o.faa_ops;
  cas_ops += o.cas_ops;
  msgs_sent += o.msgs_sent;
  msg_bytes += o.msg_bytes;
  return *this;
}

// ---------------------------------------------------------------------------
// MemoryNodeArena

MemoryNodeArena::MemoryNodeArena(std::uint32_t id, std::uint64_t capacity)
    : id_(id), capacity_((capacity + 7) & ~std::uint64_t{7}) {
  if (capacity_ < kDataRegionBase) {
    throw AllocationError("arena capacity must be at least " + std::to_string(kDataRegionBase) + " bytes");
  }
  words_ = std::make_unique<std::uint64_t[]>(capacity_ / 8);
  words_[kBumpCounterOffset / 8] = kDataRegionBase;
}

std::uint64_t MemoryNodeArena::bump_value() const {
  return std::atomic_ref<std::uint64_t>(words_[kBumpCounterOffset / 8]).load(std::memory_order_acquire);
}

void MemoryNodeArena::check_range(std::uint64_t offset, std::uint64_t len) const {
  if (offset > capacity_ || len > capacity_ - offset) {
    throw FabricFault("access [" + std::to_string(offset) + ", +" + std::to_string(len) + ") outside arena " +
                      std::to_string(id_) + " of capacity " + std::to_string(capacity_));
  }
}

std::uint64_t& MemoryNodeArena::word_at(std::uint64_t offset) {
  if (offset % 8 != 0) {
    throw FabricFault("atomic verb on misaligned offset " + std::to_string(offset));
  }
  check_range(offset, 8);
  return words_[offset / 8];
}

void MemoryNodeArena::read(std::uint64_t offset, std::span<std::byte> out) const {
  check_range(offset, out.size());
  if (!out.empty()) {
    std::memcpy(out.data(), reinterpret_cast<const std::byte*>(words_.get()) + offset, out.size());
  }
}

void MemoryNodeArena::write(std::uint64_t offset, std::span<const std::byte> data) {
  check_range(offset, data.size());
  if (!data.empty()) {
    std::memcpy(reinterpret_cast<std::byte*>(words_.get()) + offset, data.data(), data.size());
  }
}

std::uint64_t MemoryNodeArena::fetch_add(std::uint64_t offset, std::uint64_t delta) {
  return std::atomic_ref<std::uint64_t>(word_at(offset)).fetch_add(delta, std::memory_order_acq_rel);
}

std::uint64_t MemoryNodeArena::compare_swap(std::uint64_t offset, std::uint64_t expected, std::uint64_t desired) {
  std::atomic_ref<std::uint64_t>(word_at(offset)).compare_exchange_strong(expected, desired, std::memory_order_acq_rel);
  return expected;
}

std::uint64_t MemoryNodeArena::checksum() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::byte b : used_bytes()) {
    h ^= static_cast<std::uint8_t>(b);
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::span<const std::byte> MemoryNodeArena::used_bytes() const {
  const std::uint64_t used = std::min(bump_value(), capacity_);
  return {reinterpret_cast<const std::byte*>(words_.get()), used};
}

void MemoryNodeArena::restore(std::span<const std::byte> prefix) {
  check_range(0, prefix.size());
  std::memset(words_.get(), 0, capacity_);
  std::memcpy(words_.get(), prefix.data(), prefix.size());
}

// ---------------------------------------------------------------------------
// Fabric

Fabric::Fabric(FabricConfig config) : config_(config) {
  if (config_.memory_nodes == 0 || config_.memory_nodes > RemoteAddress::kMaxMemoryNodes) {
    throw std::invalid_argument("memory node count must be in [1, 65536]");
  }
  if (config_.compute_nodes == 0) {
    throw std::invalid_argument("compute node count must be positive");
  }
  for (std::uint32_t i = 0; i < config_.memory_nodes; ++i) {
    arenas_.push_back(std::make_unique<MemoryNodeArena>(i, config_.arena_capacity));
    mn_inbox_.push_back(std::make_unique<Channel>());
  }
  for (std::uint32_t i = 0; i < config_.compute_nodes; ++i) {
    cn_inbox_.push_back(std::make_unique<Channel>());
  }
}

Fabric::~Fabric() { stop_routers(); }

MemoryNodeArena& Fabric::arena(std::uint32_t mn) {
  if (mn >= arenas_.size()) throw FabricFault("unknown memory node " + std::to_string(mn));
  return *arenas_[mn];
}

const MemoryNodeArena& Fabric::arena(std::uint32_t mn) const {
  if (mn >= arenas_.size()) throw FabricFault("unknown memory node " + std::to_string(mn));
  return *arenas_[mn];
}

void Fabric::enqueue_at_mn(std::uint32_t mn, RoutedMessage msg) {
  if (mn >= mn_inbox_.size()) throw FabricFault("send to unknown memory node " + std::to_string(mn));
  sent_.fetch_add(1, std::memory_order_relaxed);
  auto& ch = *mn_inbox_[mn];
  {
    std::lock_guard lock(ch.mu);
    ch.queue.push_back(std::move(msg));
  }
  ch.cv.notify_one();
}

void Fabric::configure_message_plane(std::uint32_t compute_nodes) {
  if (routers_running_) throw std::logic_error("stop the MN routers before reconfiguring the message plane");
  if (compute_nodes == 0) throw std::invalid_argument("compute node count must be positive");
  config_.compute_nodes = compute_nodes;
  for (auto& ch : mn_inbox_) {
    std::lock_guard lock(ch->mu);
    ch->queue.clear();
  }
  cn_inbox_.clear();
  for (std::uint32_t i = 0; i < compute_nodes; ++i) cn_inbox_.push_back(std::make_unique<Channel>());
  sent_ = 0;
  delivered_ = 0;
  dropped_ = 0;
}

bool Fabric::route_one(std::uint32_t mn) {
  auto& in = *mn_inbox_.at(mn);
  RoutedMessage msg;
  {
    std::lock_guard lock(in.mu);
    if (in.queue.empty()) return false;
    msg = std::move(in.queue.front());
    in.queue.pop_front();
  }
  if (msg.dest_cn >= cn_inbox_.size()) {
    dropped_.fetch_add(1, std::memory_order_relaxed);
    return true;
  }
  auto& out = *cn_inbox_[msg.dest_cn];
  {
    std::lock_guard lock(out.mu);
    out.queue.push_back(std::move(msg));
  }
  delivered_.fetch_add(1, std::memory_order_relaxed);
  out.cv.notify_one();
  return true;
}

std::size_t Fabric::pending_at_mn(std::uint32_t mn) const {
  auto& ch = *mn_inbox_.at(mn);
  std::lock_guard lock(ch.mu);
  return ch.queue.size();
}

std::optional<RoutedMessage> Fabric::try_receive(std::uint32_t cn) {
  auto& ch = *cn_inbox_.at(cn);
  std::lock_guard lock(ch.mu);
  if (ch.queue.empty()) return std::nullopt;
  RoutedMessage msg = std::move(ch.queue.front());
  ch.queue.pop_front();
  return msg;
}

std::optional<RoutedMessage> Fabric::receive_for(std::uint32_t cn, std::chrono::microseconds timeout) {
  auto& ch = *cn_inbox_.at(cn);
  std::unique_lock lock(ch.mu);
  if (!ch.cv.wait_for(lock, timeout, [&] { return !ch.queue.empty(); })) return std::nullopt;
  RoutedMessage msg = std::move(ch.queue.front());
  ch.queue.pop_front();
  return msg;
}

std::size_t Fabric::pending_at_cn(std::uint32_t cn) const {
  auto& ch = *cn_inbox_.at(cn);
  std::lock_guard lock(ch.mu);
  return ch.queue.size();
}

void Fabric::start_routers() {
  if (routers_running_.exchange(true)) return;
  for (std::uint32_t mn = 0; mn < memory_node_count(); ++mn) {
    routers_.emplace_back([this, mn] { router_loop(mn); });
  }
}

void Fabric::stop_routers() {
  if (!routers_running_.exchange(false)) return;
  for (auto& ch : mn_inbox_) {
    std::lock_guard lock(ch->mu);
    ch->cv.notify_all();
  }
  for (auto& t : routers_) t.join();
  routers_.clear();
}

void Fabric::router_loop(std::uint32_t mn) {
  using Clock = std::chrono::steady_clock;
  const auto spacing = config_.mn_route_rate > 0
                           ? std::chrono::duration_cast<Clock::duration>(
                                 std::chrono::duration<double>(1.0 / config_.mn_route_rate))
                           : Clock::duration::zero();
  auto next_slot = Clock::now();
  auto& in = *mn_inbox_[mn];
  while (true) {
    {
      std::unique_lock lock(in.mu);
      in.cv.wait(lock, [&] { return !in.queue.empty() || !routers_running_.load(); });
      if (in.queue.empty() && !routers_running_.load()) return;
    }
    if (spacing > Clock::duration::zero()) {
      std::this_thread::sleep_until(next_slot);
      next_slot = std::max(next_slot, Clock::now()) + spacing;
    }
    route_one(mn);
  }
}

MessageCounters Fabric::message_counters() const {
  return {sent_.load(), delivered_.load(), dropped_.load()};
}

namespace {

constexpr std::uint64_t kArenaMagic = 0x414e455241534d44ULL;  // "DMSARENA" little-endian
constexpr std::uint32_t kArenaVersion = 1;

struct ArenaFileHeader {
  std::uint64_t magic;
  std::uint32_t version;
  std::uint32_t mn_id;
  std::uint64_t capacity;
  std::uint64_t bump;
};
static_assert(sizeof(ArenaFileHeader) == 32);

}  // namespace

void Fabric::save(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  for (const auto& arena : arenas_) {
    const auto path = dir / ("mn" + std::to_string(arena->id()) + ".arena");
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
    const auto used = arena->used_bytes();
    ArenaFileHeader h{kArenaMagic, kArenaVersion, arena->id(), arena->capacity(), arena->bump_value()};
    out.write(reinterpret_cast<const char*>(&h), sizeof h);
    out.write(reinterpret_cast<const char*>(used.data()), static_cast<std::streamsize>(used.size()));
    if (!out) throw std::runtime_error("short write to " + path.string());
  }
}

std::unique_ptr<Fabric> Fabric::load(const std::filesystem::path& dir, FabricConfig config) {
  std::vector<std::pair<ArenaFileHeader, std::vector<std::byte>>> images;
  for (std::uint32_t mn = 0;; ++mn) {
    const auto path = dir / ("mn" + std::to_string(mn) + ".arena");
    if (!std::filesystem::exists(path)) break;
    std::ifstream in(path, std::ios::binary);
    ArenaFileHeader h{};
    in.read(reinterpret_cast<char*>(&h), sizeof h);
    if (!in || h.magic != kArenaMagic) throw std::runtime_error(path.string() + ": not an arena image");
    if (h.version != kArenaVersion) throw std::runtime_error(path.string() + ": unsupported arena version");
    std::vector<std::byte> bytes(h.bump);
    in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!in) throw std::runtime_error(path.string() + ": truncated arena image");
    images.emplace_back(h, std::move(bytes));
  }
  if (images.empty()) throw std::runtime_error("no arena images in " + dir.string());
  config.memory_nodes = static_cast<std::uint32_t>(images.size());
  config.arena_capacity = images.front().first.capacity;
  for (const auto& [h, bytes] : images) config.arena_capacity = std::max(config.arena_capacity, h.capacity);
  auto fabric = std::make_unique<Fabric>(config);
  for (std::uint32_t mn = 0; mn < images.size(); ++mn) fabric->arena(mn).restore(images[mn].second);
  return fabric;
}

// ---------------------------------------------------------------------------
// FabricLink

FabricLink::FabricLink(Fabric& fabric, std::uint32_t cn_id) : fabric_(&fabric), cn_id_(cn_id) {}

MemoryNodeArena& FabricLink::target(RemoteAddress addr) { return fabric_->arena(addr.mn_id()); }

void FabricLink::read(RemoteAddress addr, std::span<std::byte> out) {
  target(addr).read(addr.offset(), out);
  ++stats_.read_ops;
  stats_.read_bytes += out.size();
  simulated_ns_ += fabric_->config().verb_latency_ns;
}

std::vector<std::byte> FabricLink::read(RemoteAddress addr, std::size_t len) {
  std::vector<std::byte> out(len);
  read(addr, out);
  return out;
}

std::uint64_t FabricLink::read_u64(RemoteAddress addr) {
  std::uint64_t v = 0;
  read(addr, std::as_writable_bytes(std::span{&v, 1}));
  return v;
}

void FabricLink::write(RemoteAddress addr, std::span<const std::byte> data) {
  target(addr).write(addr.offset(), data);
  ++stats_.write_ops;
  stats_.write_bytes += data.size();
  simulated_ns_ += fabric_->config().verb_latency_ns;
}

void FabricLink::write_u64(RemoteAddress addr, std::uint64_t value) {
  write(addr, std::as_bytes(std::span{&value, 1}));
}

std::uint64_t FabricLink::faa(RemoteAddress addr, std::uint64_t delta) {
  const auto prev = target(addr).fetch_add(addr.offset(), delta);
  ++stats_.faa_ops;
  simulated_ns_ += fabric_->config().verb_latency_ns;
  return prev;
}

std::uint64_t FabricLink::cas(RemoteAddress addr, std::uint64_t expected, std::uint64_t desired) {
  const auto prev = target(addr).compare_swap(addr.offset(), expected, desired);
  ++stats_.cas_ops;
  simulated_ns_ += fabric_->config().verb_latency_ns;
  return prev;
}

RemoteAddress FabricLink::alloc_node(std::uint64_t size, Rng& rng) {
  if (size == 0) throw std::invalid_argument("alloc_node: size must be positive");
  const std::uint64_t rounded = (size + 7) & ~std::uint64_t{7};
  const auto mn = static_cast<std::uint32_t>(uniform_index(rng, fabric_->memory_node_count()));
  const auto& arena = fabric_->arena(mn);
  const std::uint64_t start = faa(RemoteAddress(mn, kBumpCounterOffset), rounded);
  if (start + rounded > arena.capacity()) {
    throw AllocationError("memory node " + std::to_string(mn) + " exhausted: need " + std::to_string(rounded) +
                          " bytes at offset " + std::to_string(start) + ", capacity " +
                          std::to_string(arena.capacity()));
  }
  return RemoteAddress(mn, start);
}

void FabricLink::send_via_mn(std::uint32_t mn, RoutedMessage msg) {
  ++stats_.msgs_sent;
  stats_.msg_bytes += msg.payload.size();
  simulated_ns_ += fabric_->config().verb_latency_ns;
  fabric_->enqueue_at_mn(mn, std::move(msg));
}

}  // namespace dmhnsw
