#include "dmhnsw/dataset.hpp"

#include <cstring>
#include <fstream>
#include <iterator>

#include "dmhnsw/layout.hpp"
#include "dmhnsw/random.hpp"

namespace dmhnsw {

namespace {

constexpr std::uint64_t kCenterStream = 21;
constexpr std::uint64_t kPointStream = 22;

std::vector<std::byte> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::vector<char> raw((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  std::vector<std::byte> out(raw.size());
  std::memcpy(out.data(), raw.data(), raw.size());
  return out;
}

void write_file(const std::filesystem::path& path, std::span<const std::byte> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("short write to " + path.string());
}

/// Walks the framing and calls emit(record_payload_ptr, dim) per record.
template <typename Emit>
std::uint32_t walk_records(std::span<const std::byte> bytes, std::size_t component_bytes, Emit&& emit) {
  std::uint64_t off = 0;
  std::uint64_t record = 0;
  std::uint32_t dim = 0;
  while (off < bytes.size()) {
    if (bytes.size() - off < 4) {
      throw DatasetError("record " + std::to_string(record) + ": truncated dimension field at byte " +
                             std::to_string(off),
                         off, record);
    }
    const std::uint32_t d = load_u32(bytes.data() + off);
    if (d == 0) {
      throw DatasetError("record " + std::to_string(record) + ": zero dimension at byte " + std::to_string(off), off,
                         record);
    }
    if (record == 0) {
      dim = d;
    } else if (d != dim) {
      throw DatasetError("record " + std::to_string(record) + ": dimension " + std::to_string(d) +
                             " differs from first record's " + std::to_string(dim) + " at byte " +
                             std::to_string(off),
                         off, record);
    }
    const std::uint64_t body = std::uint64_t{d} * component_bytes;
    if (bytes.size() - off - 4 < body) {
      throw DatasetError("record " + std::to_string(record) + ": truncated body at byte " + std::to_string(off + 4),
                         off + 4, record);
    }
    emit(bytes.data() + off + 4, d);
    off += 4 + body;
    ++record;
  }
  return dim;
}

}  // namespace

VectorSet parse_fvecs(std::span<const std::byte> bytes) {
  std::vector<float> data;
  std::vector<float> row;
  const std::uint32_t dim = walk_records(bytes, 4, [&](const std::byte* p, std::uint32_t d) {
    row.resize(d);
    load_floats(p, row);
    data.insert(data.end(), row.begin(), row.end());
  });
  if (dim == 0) throw DatasetError("empty vector file", 0, 0);
  return VectorSet(dim, std::move(data));
}

VectorSet parse_bvecs(std::span<const std::byte> bytes) {
  std::vector<float> data;
  const std::uint32_t dim = walk_records(bytes, 1, [&](const std::byte* p, std::uint32_t d) {
    for (std::uint32_t i = 0; i < d; ++i) data.push_back(static_cast<float>(std::to_integer<std::uint8_t>(p[i])));
  });
  if (dim == 0) throw DatasetError("empty vector file", 0, 0);
  return VectorSet(dim, std::move(data));
}

std::vector<std::vector<std::int32_t>> parse_ivecs(std::span<const std::byte> bytes) {
  std::vector<std::vector<std::int32_t>> rows;
  walk_records(bytes, 4, [&](const std::byte* p, std::uint32_t d) {
    auto& r = rows.emplace_back(d);
    for (std::uint32_t i = 0; i < d; ++i) r[i] = static_cast<std::int32_t>(load_u32(p + 4 * i));
  });
  return rows;
}

VectorSet load_fvecs(const std::filesystem::path& path) { return parse_fvecs(read_file(path)); }
VectorSet load_bvecs(const std::filesystem::path& path) { return parse_bvecs(read_file(path)); }
std::vector<std::vector<std::int32_t>> load_ivecs(const std::filesystem::path& path) {
  return parse_ivecs(read_file(path));
}

VectorSet load_dataset(const std::filesystem::path& path) {
  const auto ext = path.extension().string();
  if (ext == ".fvecs") return load_fvecs(path);
  if (ext == ".bvecs") return load_bvecs(path);
  throw std::invalid_argument("unsupported dataset extension '" + ext + "' (expected .fvecs or .bvecs)");
}

void write_fvecs(const std::filesystem::path& path, const VectorSet& data) {
  std::vector<std::byte> out(data.size() * (4 + 4 * data.dim()));
  std::byte* p = out.data();
  for (std::size_t i = 0; i < data.size(); ++i) {
    store_u32(p, static_cast<std::uint32_t>(data.dim()));
    store_floats(p + 4, data.row(i));
    p += 4 + 4 * data.dim();
  }
  write_file(path, out);
}

void write_ivecs(const std::filesystem::path& path, const std::vector<std::vector<std::int32_t>>& rows) {
  std::vector<std::byte> out;
  for (const auto& r : rows) {
    const std::size_t at = out.size();
    out.resize(at + 4 + 4 * r.size());
    store_u32(out.data() + at, static_cast<std::uint32_t>(r.size()));
    for (std::size_t i = 0; i < r.size(); ++i) store_u32(out.data() + at + 4 + 4 * i, static_cast<std::uint32_t>(r[i]));
  }
  write_file(path, out);
}

Distribution parse_distribution(std::string_view name) {
  if (name == "uniform") return Distribution::kUniform;
  if (name == "gaussian-mixture" || name == "mixture" || name == "gmm") return Distribution::kGaussianMixture;
  throw std::invalid_argument("unknown distribution '" + std::string(name) + "' (expected uniform or mixture)");
}

std::string_view distribution_name(Distribution d) {
  return d == Distribution::kUniform ? "uniform" : "mixture";
}

namespace {

VectorSet draw_points(const SyntheticSpec& spec, std::size_t count, std::uint64_t center_seed,
                      std::uint64_t point_seed) {
  if (spec.dim == 0) throw std::invalid_argument("synthetic data needs dim >= 1");
  std::vector<float> data(count * spec.dim);
  Rng rng(point_seed);
  if (spec.distribution == Distribution::kUniform) {
    for (auto& x : data) x = static_cast<float>(uniform01(rng));
    return VectorSet(spec.dim, std::move(data));
  }
  if (spec.components == 0) throw std::invalid_argument("mixture needs at least one component");
  Rng crng(center_seed);
  std::vector<double> centers(std::size_t{spec.components} * spec.dim);
  for (auto& c : centers) c = uniform01(crng);
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t comp = uniform_index(rng, spec.components);
    for (std::size_t j = 0; j < spec.dim; ++j) {
      data[i * spec.dim + j] = static_cast<float>(centers[comp * spec.dim + j] + spec.spread * standard_normal(rng));
    }
  }
  return VectorSet(spec.dim, std::move(data));
}

}  // namespace

VectorSet gen_synthetic(const SyntheticSpec& spec, std::uint64_t seed) {
  return draw_points(spec, spec.n, derive_seed(seed, kCenterStream), derive_seed(seed, kPointStream));
}

VectorSet gen_synthetic_queries(const SyntheticSpec& spec, std::size_t count, std::uint64_t seed,
                                std::uint64_t query_seed) {
  return draw_points(spec, count, derive_seed(seed, kCenterStream), derive_seed(query_seed, kPointStream + 1));
}

}  // namespace dmhnsw
