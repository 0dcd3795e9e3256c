#pragma once

// Byte layout of one graph node in remote memory (all integers little-endian):
//
//   offset                      size            field
//   0                           8               header (node id | max level | lock bit)
//   8                           4*d             vector components, IEEE-754 float
//   8 + 4d                      4               base-level neighbor count
//   12 + 4d                     8 * 2M          base-level neighbor slots
//   8 + 4d + (4+16M)            4 + 8M          level-1 list (count + M slots)
//   ...                                         one list per level up to max level
//
// Header word bits: [0, 40) node id, [40, 48) max level, 48 lock, [49, 64) reserved.
// Unused neighbor slots are zero; a zero slot never names a node.

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include "dmhnsw/remote_address.hpp"

namespace dmhnsw {

class LayoutError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Neighbor count above slot capacity, or an undecodable node image.
class CorruptionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct LayoutParams {
  std::uint32_t dim = 1;
  std::uint32_t m = 2;

  void validate() const;
  std::uint32_t capacity(std::uint32_t level) const { return level == 0 ? 2 * m : m; }
};

struct NodeHeader {
  static constexpr unsigned kIdBits = 40;
  static constexpr std::uint64_t kMaxNodeId = (std::uint64_t{1} << kIdBits) - 1;
  static constexpr unsigned kLevelShift = 40;
  static constexpr unsigned kLockShift = 48;
  static constexpr std::uint64_t kLockBit = std::uint64_t{1} << kLockShift;

  std::uint64_t node_id = 0;
  std::uint8_t max_level = 0;
  bool locked = false;
  std::uint16_t reserved = 0;

  std::uint64_t pack() const;
  static NodeHeader unpack(std::uint64_t word);

  bool operator==(const NodeHeader&) const = default;
};

struct NodeRecord {
  NodeHeader header;
  std::vector<float> vector;
  /// lists[0] is the base level; lists[i] the level-i list. Size max_level + 1.
  std::vector<std::vector<RemoteAddress>> lists;

  bool operator==(const NodeRecord&) const = default;
};

inline constexpr std::uint64_t kHeaderBytes = 8;

constexpr std::uint64_t node_size(std::uint64_t dim, std::uint64_t m, std::uint64_t level) {
  return 8 + dim * 4 + 4 + 2 * m * 8 + level * (4 + m * 8);
}

/// Bytes cached per node: header plus vector.
constexpr std::uint64_t payload_size(std::uint64_t dim) { return kHeaderBytes + dim * 4; }

constexpr std::uint64_t neighbor_list_offset(std::uint64_t dim, std::uint64_t m, std::uint64_t level) {
  return level == 0 ? payload_size(dim) : payload_size(dim) + (4 + 16 * m) + (level - 1) * (4 + 8 * m);
}

constexpr std::uint64_t neighbor_list_length(std::uint64_t m, std::uint64_t level) {
  return level == 0 ? 4 + 16 * m : 4 + 8 * m;
}

struct RemoteRegion {
  RemoteAddress addr;
  std::uint64_t length = 0;
};

/// Region holding the count and full slot array of a node's list at `level`.
RemoteRegion neighbor_list_address(RemoteAddress node, std::uint32_t level, const LayoutParams& params);

std::vector<std::byte> encode_node(const NodeRecord& record, const LayoutParams& params);
NodeRecord decode_node(std::span<const std::byte> bytes, const LayoutParams& params);

/// Count + `capacity` slots, zero-filled past the count.
std::vector<std::byte> encode_neighbor_list(std::span<const RemoteAddress> items, std::uint32_t capacity);
/// Throws CorruptionError if the stored count exceeds `capacity`.
std::vector<RemoteAddress> decode_neighbor_list(std::span<const std::byte> bytes, std::uint32_t capacity);

std::uint64_t pack_addr(std::uint32_t mn_id, std::uint64_t offset);
std::pair<std::uint32_t, std::uint64_t> unpack_addr(std::uint64_t word);

// Little-endian scalar access into node images.
std::uint32_t load_u32(const std::byte* p);
std::uint64_t load_u64(const std::byte* p);
void store_u32(std::byte* p, std::uint32_t v);
void store_u64(std::byte* p, std::uint64_t v);
void load_floats(const std::byte* p, std::span<float> out);
void store_floats(std::byte* p, std::span<const float> in);

}  // namespace dmhnsw
