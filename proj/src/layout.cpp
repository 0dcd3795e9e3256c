#include "dmhnsw/layout.hpp"

#include <bit>
#include <cstring>
#include <string>

namespace dmhnsw {

void LayoutParams::validate() const {
  if (dim < 1) throw LayoutError("dimensionality must be at least 1");
  if (m < 2) throw LayoutError("M must be at least 2");
}

std::uint64_t NodeHeader::pack() const {
  if (node_id > kMaxNodeId) throw LayoutError("node id " + std::to_string(node_id) + " exceeds 40 bits");
  if (reserved >= (1u << 15)) throw LayoutError("reserved header bits overflow");
  return node_id | (std::uint64_t{max_level} << kLevelShift) | (locked ? kLockBit : 0) |
         (std::uint64_t{reserved} << (kLockShift + 1));
}

NodeHeader NodeHeader::unpack(std::uint64_t word) {
  NodeHeader h;
  h.node_id = word & kMaxNodeId;
  h.max_level = static_cast<std::uint8_t>((word >> kLevelShift) & 0xff);
  h.locked = (word & kLockBit) != 0;
  h.reserved = static_cast<std::uint16_t>(word >> (kLockShift + 1));
  return h;
}

std::uint32_t load_u32(const std::byte* p) {
  std::uint32_t v;
  std::memcpy(&v, p, 4);
  if constexpr (std::endian::native == std::endian::big) v = __builtin_bswap32(v);
  return v;
}

std::uint64_t load_u64(const std::byte* p) {
  std::uint64_t v;
  std::memcpy(&v, p, 8);
  if constexpr (std::endian::native == std::endian::big) v = __builtin_bswap64(v);
  return v;
}

void store_u32(std::byte* p, std::uint32_t v) {
  if constexpr (std::endian::native == std::endian::big) v = __builtin_bswap32(v);
  std::memcpy(p, &v, 4);
}

void store_u64(std::byte* p, std::uint64_t v) {
  if constexpr (std::endian::native == std::endian::big) v = __builtin_bswap64(v);
  std::memcpy(p, &v, 8);
}

void load_floats(const std::byte* p, std::span<float> out) {
  if constexpr (std::endian::native == std::endian::little) {
    std::memcpy(out.data(), p, out.size_bytes());
  } else {
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::bit_cast<float>(load_u32(p + 4 * i));
  }
}

void store_floats(std::byte* p, std::span<const float> in) {
  if constexpr (std::endian::native == std::endian::little) {
    std::memcpy(p, in.data(), in.size_bytes());
  } else {
    for (std::size_t i = 0; i < in.size(); ++i) store_u32(p + 4 * i, std::bit_cast<std::uint32_t>(in[i]));
  }
}

RemoteRegion neighbor_list_address(RemoteAddress node, std::uint32_t level, const LayoutParams& params) {
  return {node + neighbor_list_offset(params.dim, params.m, level), neighbor_list_length(params.m, level)};
}

std::vector<std::byte> encode_neighbor_list(std::span<const RemoteAddress> items, std::uint32_t capacity) {
  if (items.size() > capacity) {
    throw LayoutError("neighbor list of " + std::to_string(items.size()) + " exceeds capacity " +
                      std::to_string(capacity));
  }
  std::vector<std::byte> out(4 + std::size_t{capacity} * 8);
  store_u32(out.data(), static_cast<std::uint32_t>(items.size()));
  for (std::size_t i = 0; i < items.size(); ++i) store_u64(out.data() + 4 + 8 * i, items[i].word());
  return out;
}

std::vector<RemoteAddress> decode_neighbor_list(std::span<const std::byte> bytes, std::uint32_t capacity) {
  if (bytes.size() < 4 + std::size_t{capacity} * 8) throw CorruptionError("neighbor list image too short");
  const std::uint32_t count = load_u32(bytes.data());
  if (count > capacity) {
    throw CorruptionError("neighbor count " + std::to_string(count) + " exceeds slot capacity " +
                          std::to_string(capacity));
  }
  std::vector<RemoteAddress> items(count);
  for (std::uint32_t i = 0; i < count; ++i) items[i] = RemoteAddress::from_word(load_u64(bytes.data() + 4 + 8 * i));
  return items;
}

std::vector<std::byte> encode_node(const NodeRecord& record, const LayoutParams& params) {
  params.validate();
  if (record.vector.size() != params.dim) throw LayoutError("vector dimensionality does not match layout");
  const std::uint32_t level = record.header.max_level;
  if (record.lists.size() != std::size_t{level} + 1) {
    throw LayoutError("node has " + std::to_string(record.lists.size()) + " lists but max level " +
                      std::to_string(level));
  }
  std::vector<std::byte> out(node_size(params.dim, params.m, level));
  store_u64(out.data(), record.header.pack());
  store_floats(out.data() + kHeaderBytes, record.vector);
  for (std::uint32_t l = 0; l <= level; ++l) {
    const auto list = encode_neighbor_list(record.lists[l], params.capacity(l));
    std::memcpy(out.data() + neighbor_list_offset(params.dim, params.m, l), list.data(), list.size());
  }
  return out;
}

NodeRecord decode_node(std::span<const std::byte> bytes, const LayoutParams& params) {
  params.validate();
  if (bytes.size() < node_size(params.dim, params.m, 0)) {
    throw CorruptionError("node image of " + std::to_string(bytes.size()) + " bytes is shorter than a base node");
  }
  NodeRecord r;
  r.header = NodeHeader::unpack(load_u64(bytes.data()));
  const std::uint32_t level = r.header.max_level;
  if (bytes.size() < node_size(params.dim, params.m, level)) {
    throw CorruptionError("node image shorter than node_size for level " + std::to_string(level));
  }
  r.vector.resize(params.dim);
  load_floats(bytes.data() + kHeaderBytes, r.vector);
  r.lists.resize(level + 1);
  for (std::uint32_t l = 0; l <= level; ++l) {
    const auto off = neighbor_list_offset(params.dim, params.m, l);
    r.lists[l] = decode_neighbor_list(bytes.subspan(off, neighbor_list_length(params.m, l)), params.capacity(l));
  }
  return r;
}

std::uint64_t pack_addr(std::uint32_t mn_id, std::uint64_t offset) { return RemoteAddress(mn_id, offset).word(); }

std::pair<std::uint32_t, std::uint64_t> unpack_addr(std::uint64_t word) {
  const auto a = RemoteAddress::from_word(word);
  return {a.mn_id(), a.offset()};
}

}  // namespace dmhnsw
