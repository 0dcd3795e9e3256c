#include "dmhnsw/distance.hpp"

#include <algorithm>

namespace dmhnsw {

Metric parse_metric(std::string_view name) {
  if (name == "L2" || name == "l2") return Metric::kL2;
  if (name == "IP" || name == "ip") return Metric::kInnerProduct;
  throw std::invalid_argument("unknown metric '" + std::string(name) + "' (expected L2 or IP)");
}

std::string_view metric_name(Metric m) { return m == Metric::kL2 ? "L2" : "IP"; }

float distance_kernel(const float* a, const float* b, std::size_t dim, Metric metric) {
  float lanes[8] = {0, 0, 0, 0, 0, 0, 0, 0};
  std::size_t i = 0;
  if (metric == Metric::kL2) {
    for (; i + 8 <= dim; i += 8) {
      for (std::size_t j = 0; j < 8; ++j) {
        const float d = a[i + j] - b[i + j];
        lanes[j] += d * d;
      }
    }
    for (; i < dim; ++i) {
      const float d = a[i] - b[i];
      lanes[i & 7] += d * d;
    }
  } else {
    for (; i + 8 <= dim; i += 8) {
      for (std::size_t j = 0; j < 8; ++j) lanes[j] += a[i + j] * b[i + j];
    }
    for (; i < dim; ++i) lanes[i & 7] += a[i] * b[i];
  }
  const float sum = ((lanes[0] + lanes[1]) + (lanes[2] + lanes[3])) + ((lanes[4] + lanes[5]) + (lanes[6] + lanes[7]));
  return metric == Metric::kL2 ? sum : -sum;
}

float distance(std::span<const float> a, std::span<const float> b, Metric metric) {
  if (a.size() != b.size()) {
    throw std::invalid_argument("distance: dimension mismatch (" + std::to_string(a.size()) + " vs " +
                                std::to_string(b.size()) + ")");
  }
  return distance_kernel(a.data(), b.data(), a.size(), metric);
}

VectorSet::VectorSet(std::size_t dim, std::vector<float> data) : dim_(dim), data_(std::move(data)) {
  if (dim_ == 0 || data_.size() % dim_ != 0) throw std::invalid_argument("VectorSet: data is not a multiple of dim");
}

void VectorSet::push_back(std::span<const float> v) {
  if (v.size() != dim_) throw std::invalid_argument("VectorSet::push_back: dimension mismatch");
  data_.insert(data_.end(), v.begin(), v.end());
}

VectorSet VectorSet::slice(std::size_t begin, std::size_t count) const {
  begin = std::min(begin, size());
  count = std::min(count, size() - begin);
  VectorSet out(dim_);
  out.data_.assign(data_.begin() + static_cast<std::ptrdiff_t>(begin * dim_),
                   data_.begin() + static_cast<std::ptrdiff_t>((begin + count) * dim_));
  return out;
}

}  // namespace dmhnsw
