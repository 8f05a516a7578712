#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "sdr/datagen/datagen.hpp"
#include "test_util.hpp"

using namespace sdr;
using namespace sdr::datagen;

namespace {

std::size_t valid(const Tensor<float>& t) {
  std::size_t n = 0;
  for (float v : t.vec()) n += v > 0;
  return n;
}

}  // namespace

TEST(Scene, DeterministicAndSeedSensitive) {
  const auto a = gen_scene(42, 24, 32);
  const auto b = gen_scene(42, 24, 32);
  EXPECT_EQ(a.image, b.image);
  EXPECT_EQ(a.depth, b.depth);
  std::set<std::vector<float>> seen;
  for (std::uint64_t s = 0; s < 100; ++s) seen.insert(gen_scene(s, 16, 16).depth.vec());
  EXPECT_EQ(seen.size(), 100u);
}

TEST(Scene, DepthRangeAndImageRange) {
  for (std::uint64_t s = 0; s < 30; ++s) {
    const auto sc = gen_scene(s, 32, 32, 2);
    for (float v : sc.depth.vec()) {
      EXPECT_GE(v, 0.5f);
      EXPECT_LE(v, 10.0f);
    }
    for (float v : sc.image.vec()) {
      EXPECT_GE(v, 0.0f);
      EXPECT_LE(v, 1.0f);
    }
  }
  EXPECT_THROW(gen_scene(1, 8, 32), ConfigError);
}

TEST(Scene, ComplexityZeroIsOnePlane) {
  const auto sc = gen_scene(7, 20, 24, 0);
  // Constant gradient: all second differences vanish (up to float rounding).
  for (int i = 1; i < 19; ++i)
    for (int j = 1; j < 23; ++j) {
      EXPECT_NEAR(sc.depth.at(i, j + 1) - 2 * sc.depth.at(i, j) + sc.depth.at(i, j - 1), 0.0f, 1e-5f);
      EXPECT_NEAR(sc.depth.at(i + 1, j) - 2 * sc.depth.at(i, j) + sc.depth.at(i - 1, j), 0.0f, 1e-5f);
    }
}

TEST(Mde, SeverityZeroIsIdentity) {
  const auto sc = gen_scene(3, 16, 16);
  EXPECT_EQ(simulate_mde(sc.depth, 9, 0.0), sc.depth);
}

TEST(Mde, PositiveReproducibleAndBounded) {
  const auto sc = gen_scene(4, 32, 32);
  const auto a = simulate_mde(sc.depth, 5, 1.0);
  EXPECT_EQ(a, simulate_mde(sc.depth, 5, 1.0));
  for (float v : a.vec()) EXPECT_GT(v, 0.0f);
  EXPECT_GT(test::rmse(a, sc.depth), 0.0);
  const auto b = bias_field(5, 32, 32, 0.6);
  for (double v : b.vec()) EXPECT_LE(std::abs(v), 0.3 * 0.6 + 1e-12);
  EXPECT_THROW(simulate_mde(sc.depth, 5, 1.5), ConfigError);
}

TEST(Mde, UniformBiasIsExactScale) {
  const auto sc = gen_scene(6, 16, 16);
  const Tensor<double> b({16, 16}, 0.2);
  const auto d = apply_bias(sc.depth, b, false);
  for (std::size_t i = 0; i < d.size(); ++i) EXPECT_EQ(d[i], static_cast<float>(sc.depth[i] * std::exp(0.2)));
}

TEST(Mde, ErrorGrowsWithSeverityOnAverage) {
  double prev = -1;
  for (double sev : {0.0, 0.25, 0.5, 0.75, 1.0}) {
    double total = 0;
    for (std::uint64_t s = 0; s < 50; ++s) {
      const auto sc = gen_scene(s, 16, 16);
      total += test::rmse(simulate_mde(sc.depth, s + 1000, sev), sc.depth);
    }
    EXPECT_GE(total, prev);
    prev = total;
  }
}

TEST(Points, CountsAndValues) {
  const auto sc = gen_scene(8, 32, 32);
  for (int s : {0, 1, 17, 1024}) {
    const auto sp = sample_points(sc.depth, s, 3);
    EXPECT_EQ(valid(sp), std::size_t(s));
    for (std::size_t i = 0; i < sp.size(); ++i)
      if (sp[i] > 0) EXPECT_EQ(sp[i], sc.depth[i]);
  }
  EXPECT_EQ(sample_points(sc.depth, 1024, 3), sc.depth);
  EXPECT_EQ(sample_points(sc.depth, 50, 3), sample_points(sc.depth, 50, 3));
  EXPECT_FALSE(sample_points(sc.depth, 50, 3) == sample_points(sc.depth, 50, 4));
  EXPECT_THROW(sample_points(sc.depth, 1025, 3), DataError);
}

TEST(Points, ReferenceResolutionCount) {
  const Tensor<float> gt({228, 304}, 3.0f);
  EXPECT_EQ(valid(sample_points(gt, 500, 11)), 500u);
}

TEST(Lines, EvenSpacing) {
  const Tensor<float> gt({64, 8}, 2.0f);
  const auto rows = line_rows(64, 4, 5);
  ASSERT_EQ(rows.size(), 4u);
  EXPECT_GE(rows[0], 0);
  EXPECT_LT(rows[0], 16);
  for (int k = 1; k < 4; ++k) EXPECT_EQ(rows[k], rows[0] + 16 * k);
  const auto one = sample_lines(gt, 1, 5);
  int nonzero_rows = 0;
  for (int i = 0; i < 64; ++i) nonzero_rows += one.at(i, 0) > 0;
  EXPECT_EQ(nonzero_rows, 1);
  EXPECT_EQ(sample_lines(gt, 64, 5), gt);
  EXPECT_THROW(sample_lines(gt, 65, 5), ConfigError);
}

TEST(Hole, Geometry) {
  const Tensor<float> s({228, 304}, 1.0f);
  const auto rect = centered_hole(228, 304);
  EXPECT_EQ(rect.height, 114);
  EXPECT_EQ(rect.width, 152);
  const auto h = mask_hole(s, rect);
  EXPECT_EQ(valid(h.sparse), std::size_t(228 * 304 - 114 * 152));
  EXPECT_EQ(valid(h.region), std::size_t(114 * 152));
  for (int i = rect.top; i < rect.top + rect.height; ++i) EXPECT_EQ(h.sparse.at(i, rect.left), 0.0f);
  EXPECT_EQ(mask_hole(s, {0, 0, 0, 0}).sparse, s);
  EXPECT_EQ(valid(mask_hole(s, {0, 0, 228, 304}).sparse), 0u);
  EXPECT_THROW(mask_hole(s, {200, 0, 40, 10}), ConfigError);
}

TEST(Sparsity, AreaScalingAndDraws) {
  EXPECT_EQ(scale_sparsity(500, 228, 304), 500);
  EXPECT_EQ(scale_sparsity(10, 32, 32), 1);
  EXPECT_EQ(scale_sparsity(1000, 32, 32), static_cast<int>(std::lround(1000.0 * 1024 / (228 * 304))));
  SparsityProtocol p;
  p.area_scaling = false;
  p.min_points = 10;
  p.max_points = 30;
  Rng rng(1);
  for (int k = 0; k < 100; ++k) {
    const int s = draw_sparsity(p, rng, 32, 32);
    EXPECT_GE(s, 10);
    EXPECT_LE(s, 30);
  }
  p.kind = SparsityKind::Lines;
  for (int k = 0; k < 50; ++k) {
    const int n = draw_sparsity(p, rng, 32, 32);
    EXPECT_TRUE(n == 4 || n == 8 || n == 16 || n == 32) << n;
  }
  p.line_choices.clear();
  EXPECT_THROW(validate(p), ConfigError);
}
