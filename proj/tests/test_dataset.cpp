#include <gtest/gtest.h>

#include <cstring>
#include <filesystem>

#include <unistd.h>

#include "dmhnsw/dataset.hpp"

namespace dmhnsw {
namespace {

std::vector<std::byte> record(std::uint32_t dim, const void* comps, std::size_t bytes) {
  std::vector<std::byte> out(4 + bytes);
  std::memcpy(out.data(), &dim, 4);
  std::memcpy(out.data() + 4, comps, bytes);
  return out;
}

TEST(Fvecs, SingleRecordIsTwelveBytes) {
  const float v[2] = {1.0f, 2.0f};
  const auto bytes = record(2, v, 8);
  ASSERT_EQ(bytes.size(), 12u);
  const auto set = parse_fvecs(bytes);
  ASSERT_EQ(set.size(), 1u);
  EXPECT_EQ(set.dim(), 2u);
  EXPECT_EQ(set.row(0)[0], 1.0f);
  EXPECT_EQ(set.row(0)[1], 2.0f);
}

TEST(Fvecs, TruncationNamesTheRecord) {
  const float v[2] = {1.0f, 2.0f};
  auto bytes = record(2, v, 8);
  const auto second = record(2, v, 8);
  bytes.insert(bytes.end(), second.begin(), second.end() - 3);
  try {
    parse_fvecs(bytes);
    FAIL() << "expected DatasetError";
  } catch (const DatasetError& e) {
    EXPECT_EQ(e.record(), 1u);
    // Record 1's header is intact; its components at byte 16 are cut short.
    EXPECT_EQ(e.byte_offset(), 16u);
  }
}

TEST(Fvecs, DimensionChangeIsAnError) {
  const float v[3] = {1, 2, 3};
  auto bytes = record(2, v, 8);
  const auto other = record(3, v, 12);
  bytes.insert(bytes.end(), other.begin(), other.end());
  EXPECT_THROW(parse_fvecs(bytes), DatasetError);
}

TEST(Bvecs, ComponentsWidenToFloat) {
  const std::uint8_t v[3] = {0, 7, 255};
  const auto set = parse_bvecs(record(3, v, 3));
  ASSERT_EQ(set.size(), 1u);
  EXPECT_EQ(set.row(0)[2], 255.0f);
  EXPECT_EQ(set.row(0)[1], 7.0f);
}

TEST(Ivecs, ParsesRows) {
  const std::int32_t v[2] = {-1, 42};
  auto bytes = record(2, v, 8);
  const auto more = record(2, v, 8);
  bytes.insert(bytes.end(), more.begin(), more.end());
  const auto rows = parse_ivecs(bytes);
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[1], (std::vector<std::int32_t>{-1, 42}));
}

TEST(Files, WriteThenLoad) {
  const auto dir = std::filesystem::temp_directory_path() / ("dmhnsw_ds_" + std::to_string(::getpid()));
  std::filesystem::create_directories(dir);
  const auto data = gen_synthetic({50, 5, Distribution::kUniform}, 3);
  write_fvecs(dir / "x.fvecs", data);
  EXPECT_EQ(load_dataset(dir / "x.fvecs"), data);
  write_ivecs(dir / "g.ivecs", {{1, 2}, {3, 4}});
  EXPECT_EQ(load_ivecs(dir / "g.ivecs")[1], (std::vector<std::int32_t>{3, 4}));
  EXPECT_THROW(load_dataset(dir / "x.txt"), std::exception);
  std::filesystem::remove_all(dir);
}

TEST(Synthetic, DeterministicAndInRange) {
  const auto a = gen_synthetic({1000, 4, Distribution::kUniform}, 1);
  EXPECT_EQ(a, gen_synthetic({1000, 4, Distribution::kUniform}, 1));
  for (float x : a.data()) {
    EXPECT_GE(x, 0.0f);
    EXPECT_LT(x, 1.0f);
  }
  const SyntheticSpec mix{1000, 4, Distribution::kGaussianMixture, 4, 0.01};
  const auto q = gen_synthetic_queries(mix, 100, 1, 2);
  EXPECT_EQ(q.size(), 100u);
  EXPECT_NE(q.slice(0, 1), gen_synthetic(mix, 1).slice(0, 1));
}

TEST(Synthetic, DistributionNames) {
  EXPECT_EQ(parse_distribution(distribution_name(Distribution::kUniform)), Distribution::kUniform);
  EXPECT_EQ(parse_distribution(distribution_name(Distribution::kGaussianMixture)), Distribution::kGaussianMixture);
}

}  // namespace
}  // namespace dmhnsw
