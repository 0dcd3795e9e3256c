#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace dmhnsw {

enum class Metric : std::uint8_t { kL2 = 0, kInnerProduct = 1 };

Metric parse_metric(std::string_view name);
std::string_view metric_name(Metric m);

/// Squared Euclidean distance for L2; negated inner product for IP, so that
/// smaller always means closer. Throws std::invalid_argument on dimension mismatch.
float distance(std::span<const float> a, std::span<const float> b, Metric metric);

/// Unchecked kernel shared by every search and build path. Sums are formed in
/// eight fixed lanes so results are bit-identical wherever it is called.
float distance_kernel(const float* a, const float* b, std::size_t dim, Metric metric);

/// Dense row-major float vectors of one dimensionality.
class VectorSet {
 public:
  VectorSet() = default;
  explicit VectorSet(std::size_t dim) : dim_(dim) {}
  VectorSet(std::size_t dim, std::vector<float> data);

  std::size_t dim() const { return dim_; }
  std::size_t size() const { return dim_ == 0 ? 0 : data_.size() / dim_; }
  bool empty() const { return data_.empty(); }

  std::span<const float> row(std::size_t i) const { return {data_.data() + i * dim_, dim_}; }
  std::span<float> row(std::size_t i) { return {data_.data() + i * dim_, dim_}; }

  void push_back(std::span<const float> v);
  void reserve(std::size_t n) { data_.reserve(n * dim_); }

  const std::vector<float>& data() const { return data_; }

  /// Rows [begin, begin + count).
  VectorSet slice(std::size_t begin, std::size_t count) const;

  bool operator==(const VectorSet&) const = default;

 private:
  std::size_t dim_ = 0;
  std::vector<float> data_;
};

}  // namespace dmhnsw
