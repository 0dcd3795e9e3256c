#pragma once

#include <compare>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>

namespace dmhnsw {

class EncodingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Global address of a byte in the disaggregated memory pool: the upper 16
/// bits name the memory node, the lower 48 bits are the offset in its arena.
class RemoteAddress {
 public:
  static constexpr unsigned kOffsetBits = 48;
  static constexpr std::uint64_t kOffsetMask = (std::uint64_t{1} << kOffsetBits) - 1;
  static constexpr std::uint32_t kMaxMemoryNodes = 1u << 16;

  constexpr RemoteAddress() = default;

  constexpr RemoteAddress(std::uint32_t mn_id, std::uint64_t offset) {
    if (mn_id >= kMaxMemoryNodes) {
      throw EncodingError("memory node id " + std::to_string(mn_id) + " does not fit in 16 bits");
    }
    if (offset > kOffsetMask) {
      throw EncodingError("offset " + std::to_string(offset) + " does not fit in 48 bits");
    }
    word_ = (std::uint64_t{mn_id} << kOffsetBits) | offset;
  }

  static constexpr RemoteAddress from_word(std::uint64_t word) {
    RemoteAddress a;
    a.word_ = word;
    return a;
  }

  constexpr std::uint64_t word() const { return word_; }
  constexpr std::uint32_t mn_id() const { return static_cast<std::uint32_t>(word_ >> kOffsetBits); }
  constexpr std::uint64_t offset() const { return word_ & kOffsetMask; }

  /// The all-zero word never names a node (offset 0 holds the bump counter).
  constexpr bool is_null() const { return word_ == 0; }
  constexpr explicit operator bool() const { return word_ != 0; }

  constexpr RemoteAddress operator+(std::uint64_t delta) const { return RemoteAddress(mn_id(), offset() + delta); }

  constexpr auto operator<=>(const RemoteAddress&) const = default;

 private:
  std::uint64_t word_ = 0;
};

std::string to_string(RemoteAddress a);

}  // namespace dmhnsw

template <>
struct std::hash<dmhnsw::RemoteAddress> {
  std::size_t operator()(dmhnsw::RemoteAddress a) const noexcept { return std::hash<std::uint64_t>{}(a.word()); }
};
