#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "dmhnsw/distance.hpp"

namespace dmhnsw {

/// Malformed vector file; carries the byte offset and record index at fault.
class DatasetError : public std::runtime_error {
 public:
  DatasetError(const std::string& what, std::uint64_t byte_offset, std::uint64_t record)
      : std::runtime_error(what), byte_offset_(byte_offset), record_(record) {}
  std::uint64_t byte_offset() const { return byte_offset_; }
  std::uint64_t record() const { return record_; }

 private:
  std::uint64_t byte_offset_;
  std::uint64_t record_;
};

// Each record: little-endian u32 dimension, then that many components
// (f32 for fvecs, u8 for bvecs, i32 for ivecs).
VectorSet parse_fvecs(std::span<const std::byte> bytes);
VectorSet parse_bvecs(std::span<const std::byte> bytes);
std::vector<std::vector<std::int32_t>> parse_ivecs(std::span<const std::byte> bytes);

VectorSet load_fvecs(const std::filesystem::path& path);
VectorSet load_bvecs(const std::filesystem::path& path);
std::vector<std::vector<std::int32_t>> load_ivecs(const std::filesystem::path& path);
/// Dispatches on the extension (.fvecs or .bvecs).
VectorSet load_dataset(const std::filesystem::path& path);

void write_fvecs(const std::filesystem::path& path, const VectorSet& data);
void write_ivecs(const std::filesystem::path& path, const std::vector<std::vector<std::int32_t>>& rows);

enum class Distribution : std::uint8_t { kUniform, kGaussianMixture };

Distribution parse_distribution(std::string_view name);
std::string_view distribution_name(Distribution d);

struct SyntheticSpec {
  std::size_t n = 0;
  std::size_t dim = 0;
  Distribution distribution = Distribution::kGaussianMixture;
  /// Mixture only: number of components and per-axis standard deviation.
  /// Component centers are uniform in [0, 1]^dim.
  std::uint32_t components = 32;
  double spread = 0.1;
};

/// Uniform in [0, 1]^dim, or a mixture of isotropic Gaussians with equal weights.
VectorSet gen_synthetic(const SyntheticSpec& spec, std::uint64_t seed);

/// Draws from the same mixture as `gen_synthetic(spec, seed)` (identical
/// component centers) but with an independent point stream.
VectorSet gen_synthetic_queries(const SyntheticSpec& spec, std::size_t count, std::uint64_t seed,
                                std::uint64_t query_seed);

}  // namespace dmhnsw
