#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>

#include "rbe/image_io.hpp"
#include "rbe/mask.hpp"
#include "rbe/rng.hpp"

using namespace rbe;

namespace {

std::string temp_path(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "rbe_mask_tests";
  std::filesystem::create_directories(dir);
  return (dir / name).string();
}

}  // namespace

TEST(RectMask, FullFrame) {
  Mask m = rect_mask(8, 8, 0, 0, 8, 8);
  EXPECT_DOUBLE_EQ(m.coverage(), 1.0);
}

TEST(RectMask, SinglePixel) {
  Mask m = rect_mask(4, 4, 0, 0, 1, 1);
  EXPECT_DOUBLE_EQ(m.coverage(), 1.0 / 16.0);
  EXPECT_EQ(m.at(0, 0), 1);
  EXPECT_EQ(m.at(1, 1), 0);
}

TEST(RectMask, ComplementCoverageSumsToOne) {
  Mask m = rect_mask(10, 6, 2, 1, 5, 3);
  EXPECT_DOUBLE_EQ(m.coverage() + complement(m).coverage(), 1.0);
}

TEST(RectMask, OutOfBoundsThrows) {
  EXPECT_THROW(rect_mask(4, 4, 2, 2, 3, 1), ArgumentError);
  EXPECT_THROW(rect_mask(4, 4, 0, 0, 0, 1), ArgumentError);
  EXPECT_THROW(rect_mask(4, 4, -1, 0, 2, 2), ArgumentError);
}

TEST(ApplyMask, OnesIsIdentityZerosIsZero) {
  Rng rng(1);
  Image img = rng.fill_gaussian({3, 5, 4});
  Image same = apply_mask(img, Mask(5, 4, 1));
  for (size_t i = 0; i < img.v.size(); ++i) EXPECT_EQ(same.v[i], img.v[i]);
  Image zero = apply_mask(img, Mask(5, 4, 0));
  for (double v : zero.v) EXPECT_EQ(v, 0.0);
}

TEST(ApplyMask, Idempotent) {
  Rng rng(2);
  Image img = rng.fill_gaussian({1, 6, 6});
  Mask m = rect_mask(6, 6, 1, 2, 3, 2);
  Image once = apply_mask(img, m);
  Image twice = apply_mask(once, m);
  for (size_t i = 0; i < img.v.size(); ++i) EXPECT_EQ(once.v[i], twice.v[i]);
}

TEST(ApplyMask, ShapeMismatchThrows) {
  Image img({1, 4, 4});
  EXPECT_THROW(apply_mask(img, Mask(4, 5)), ArgumentError);
}

TEST(RegionMse, EqualImagesAreZero) {
  Rng rng(3);
  Image a = rng.fill_gaussian({1, 4, 4});
  auto r = region_mse(a, a, rect_mask(4, 4, 0, 0, 2, 4));
  EXPECT_EQ(r.global, 0.0);
  EXPECT_EQ(*r.in, 0.0);
  EXPECT_EQ(*r.out, 0.0);
}

TEST(RegionMse, UniformShift) {
  Rng rng(4);
  Image a = rng.fill_gaussian({2, 4, 4});
  Image b = a;
  for (auto& v : b.v) v += 1.0;
  auto r = region_mse(a, b, rect_mask(4, 4, 1, 1, 2, 2));
  EXPECT_NEAR(r.global, 1.0, 1e-14);
  EXPECT_NEAR(*r.in, 1.0, 1e-14);
  EXPECT_NEAR(*r.out, 1.0, 1e-14);
}

TEST(RegionMse, HalfCoverageHandCount) {
  Image a({1, 2, 2}, 0.0);
  Image b = a;
  Mask m = rect_mask(2, 2, 0, 0, 1, 2);  // top row
  b.at(0, 0, 0) = 2.0;
  b.at(0, 0, 1) = 2.0;
  auto r = region_mse(a, b, m);
  EXPECT_DOUBLE_EQ(*r.in, 4.0);
  EXPECT_DOUBLE_EQ(*r.out, 0.0);
  EXPECT_DOUBLE_EQ(r.global, 2.0);
}

TEST(RegionMse, EmptyRegionIsUndefinedNotZero) {
  Image a({1, 2, 2}, 0.0);
  auto r = region_mse(a, a, Mask(2, 2, 1));
  EXPECT_TRUE(r.in.has_value());
  EXPECT_FALSE(r.out.has_value());
}

TEST(RegionMse, WeightedIdentityProperty) {
  Rng rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    Shape3 sh{1 + static_cast<int>(rng.next_uniform() * 3), 8, 8};
    Image a = rng.fill_gaussian(sh), b = rng.fill_gaussian(sh);
    int top = static_cast<int>(rng.next_uniform() * 6);
    int left = static_cast<int>(rng.next_uniform() * 6);
    int hh = 1 + static_cast<int>(rng.next_uniform() * (7 - top));
    int ww = 1 + static_cast<int>(rng.next_uniform() * (7 - left));
    Mask m = rect_mask(8, 8, top, left, hh, ww);
    auto r = region_mse(a, b, m);
    double cov = m.coverage();
    double recombined = cov * *r.in + (1.0 - cov) * *r.out;
    ASSERT_NEAR(r.global, recombined, 1e-12);
  }
}

TEST(RegionMse, SymmetricInArguments) {
  Rng rng(6);
  Image a = rng.fill_gaussian({1, 4, 4}), b = rng.fill_gaussian({1, 4, 4});
  Mask m = rect_mask(4, 4, 0, 0, 2, 2);
  auto r1 = region_mse(a, b, m), r2 = region_mse(b, a, m);
  EXPECT_EQ(r1.global, r2.global);
  EXPECT_EQ(*r1.in, *r2.in);
  EXPECT_EQ(*r1.out, *r2.out);
}

TEST(PgmMask, SaveLoadRoundTrip) {
  Mask m = rect_mask(12, 9, 2, 3, 5, 4);
  std::string path = temp_path("round.pgm");
  save_mask_pgm(m, path);
  Mask back = load_mask_pgm(path);
  EXPECT_EQ(back.h, m.h);
  EXPECT_EQ(back.w, m.w);
  EXPECT_EQ(back.bits, m.bits);
}

TEST(PgmMask, AllWhiteIsFullMask) {
  std::string path = temp_path("white.pgm");
  std::string data = "P5\n3 2\n255\n";
  std::vector<unsigned char> bytes(data.begin(), data.end());
  for (int i = 0; i < 6; ++i) bytes.push_back(255);
  atomic_write_file(path, bytes);
  Mask m = load_mask_pgm(path);
  EXPECT_DOUBLE_EQ(m.coverage(), 1.0);
}

TEST(PgmMask, ThresholdAt128) {
  std::string path = temp_path("thresh.pgm");
  std::string data = "P5\n2 1\n255\n";
  std::vector<unsigned char> bytes(data.begin(), data.end());
  bytes.push_back(127);
  bytes.push_back(128);
  atomic_write_file(path, bytes);
  Mask m = load_mask_pgm(path);
  EXPECT_EQ(m.at(0, 0), 0);
  EXPECT_EQ(m.at(0, 1), 1);
}

TEST(PgmMask, WrongMaxvalRejected) {
  std::string path = temp_path("maxval.pgm");
  std::string data = "P5\n2 2\n65535\n";
  std::vector<unsigned char> bytes(data.begin(), data.end());
  bytes.resize(bytes.size() + 8, 0);
  atomic_write_file(path, bytes);
  EXPECT_THROW(load_mask_pgm(path), IoError);
}

TEST(PgmMask, MalformedHeaderReportsOffset) {
  std::string path = temp_path("bad.pgm");
  std::string data = "P5\nxx 2\n255\n";
  atomic_write_text(path, data);
  try {
    load_mask_pgm(path);
    FAIL() << "expected IoError";
  } catch (const IoError& e) {
    EXPECT_NE(std::string(e.what()).find("byte offset"), std::string::npos);
  }
}

TEST(PgmMask, TruncatedPixelsRejected) {
  std::string path = temp_path("trunc.pgm");
  std::string data = "P5\n4 4\n255\n";
  std::vector<unsigned char> bytes(data.begin(), data.end());
  bytes.resize(bytes.size() + 7, 200);  // needs 16
  atomic_write_file(path, bytes);
  EXPECT_THROW(load_mask_pgm(path), IoError);
}

TEST(Ppm, ExportImportQuantized) {
  Rng rng(7);
  Image img = rng.fill_gaussian({3, 6, 5});
  for (auto& v : img.v) v = std::max(-1.0, std::min(1.0, v));
  std::string path = temp_path("img.ppm");
  save_image_ppm(img, path, "k = v\nline2");
  Image back = load_image_ppm(path, 3);
  ASSERT_EQ(back.shape, img.shape);
  for (size_t i = 0; i < img.v.size(); ++i) EXPECT_NEAR(back.v[i], img.v[i], 1.01 / 255.0);
}

TEST(Ppm, GrayReplication) {
  Image img({1, 2, 2}, 0.5);
  std::string path = temp_path("gray.ppm");
  save_image_ppm(img, path);
  Image back = load_image_ppm(path, 1);
  for (double v : back.v) EXPECT_NEAR(v, 0.5, 1.0 / 255.0);
}
