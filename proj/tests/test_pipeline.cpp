#include <gtest/gtest.h>

#include <cmath>

#include "sdr/datagen/datagen.hpp"
#include "sdr/pipeline/pipeline.hpp"
#include "test_util.hpp"

using namespace sdr;
using pipeline::RefineConfig;

namespace {

// Layer-1 count evaluated straight from the formula, independent of the
// library: ceil(kappa * nu / (p/2 - 1)) floored at the minimum.
int expected_layer1(double s, double H, double W, double p, double kappa, int min_iters) {
  const double nu = std::max(0.0, std::sqrt(H * W / s) - 1.0);
  return std::max(min_iters, static_cast<int>(std::ceil(kappa * nu / (p / 2.0 - 1.0))));
}

pipeline::ModelConfig tiny_model(bool head = false) {
  pipeline::ModelConfig m;
  m.guidance = {2, {4, 4, 4}, 4, head};
  m.qk_channels = 4;
  m.window = 5;
  return m;
}

}  // namespace

TEST(Schedule, ReferenceResolutionValues) {
  const RefineConfig cfg;
  const auto a = pipeline::iteration_count(500, 228, 304, cfg);
  EXPECT_NEAR(a.nu_s, 10.774, 1e-3);
  EXPECT_EQ(a.n_layer1, 6);
  EXPECT_EQ(a.n_layer2, 6);
  const auto b = pipeline::iteration_count(10, 228, 304, cfg);
  EXPECT_NEAR(b.nu_s, 82.254, 1e-3);
  EXPECT_EQ(b.n_layer1, 30);
  EXPECT_EQ(pipeline::iteration_count(228 * 304, 228, 304, cfg).n_layer1, 6);
  EXPECT_THROW(pipeline::iteration_count(0, 228, 304, cfg), DataError);
}

TEST(Schedule, NonIncreasingInSeedCount) {
  const RefineConfig cfg;
  int prev = 1 << 30;
  for (int k = 0; k < 50; ++k) {
    const std::size_t s = 1 + static_cast<std::size_t>(k) * 1400;
    const int n = pipeline::iteration_count(s, 228, 304, cfg).n_layer1;
    EXPECT_LE(n, prev);
    EXPECT_EQ(n, expected_layer1(double(s), 228, 304, 13, 2, 6));
    prev = n;
  }
}

TEST(Schedule, SmallWindowsUseMinimum) {
  RefineConfig cfg;
  cfg.window = 1;
  EXPECT_EQ(pipeline::iteration_count(3, 64, 64, cfg).n_layer1, 6);
  cfg.window = 5;
  EXPECT_EQ(pipeline::iteration_count(3, 64, 64, cfg).n_layer1, expected_layer1(3, 64, 64, 5, 2, 6));
  cfg.max_layer1_iters = 9;
  EXPECT_EQ(pipeline::iteration_count(3, 64, 64, cfg).n_layer1, 9);
}

TEST(Schedule, LinesUseEffectiveCount) {
  const RefineConfig cfg;
  Tensor<float> s({64, 256});
  for (int l = 0; l < 4; ++l)
    for (int j = 0; j < 100; ++j) s.at(l * 16 + 3, j * 2) = 1.0f;
  const auto lines = pipeline::iteration_count_lines(s, 4, cfg);
  EXPECT_EQ(lines.n_layer1, pipeline::iteration_count(400, 64, 256, cfg).n_layer1);
  EXPECT_EQ(pipeline::count_lines(s), 4);
  EXPECT_THROW(pipeline::iteration_count_lines(Tensor<float>({8, 8}), 1, cfg), DataError);

  const Tensor<float> full({16, 16}, 2.0f);
  EXPECT_EQ(pipeline::iteration_count_lines(full, 16, cfg).n_layer1, pipeline::iteration_count(256, 16, 16, cfg).n_layer1);
}

TEST(Refine, EmptySparseReturnsInitialDepthWithWarning) {
  const auto params = pipeline::init_model_params<float>(tiny_model(), 1);
  RefineConfig cfg;
  cfg.window = 5;
  const auto scene = datagen::gen_scene(1, 16, 16);
  const auto out = pipeline::refine(scene.image, Tensor<float>({16, 16}), scene.depth, params, cfg);
  EXPECT_EQ(out.depth, scene.depth);
  ASSERT_EQ(out.diagnostics.warnings.size(), 1u);
  EXPECT_FALSE(out.diagnostics.scheduled);
}

TEST(Refine, SeedsReturnedBitExactly) {
  const auto params = pipeline::init_model_params<float>(tiny_model(), 2);
  RefineConfig cfg;
  cfg.window = 5;
  for (std::uint64_t seed = 0; seed < 4; ++seed) {
    const auto scene = datagen::gen_scene(seed, 16, 24);
    const auto d0 = datagen::simulate_mde(scene.depth, seed + 9, 1.0);
    const auto s = datagen::sample_points(scene.depth, 20, seed);
    const auto out = pipeline::refine(scene.image, s, d0, params, cfg);
    for (std::size_t i = 0; i < s.size(); ++i)
      if (s[i] > 0) EXPECT_EQ(out.depth[i], s[i]);
    EXPECT_EQ(out.diagnostics.seed_count, 20u);
    EXPECT_EQ(out.diagnostics.iterations.size(),
              std::size_t(out.diagnostics.schedule.n_layer1 + out.diagnostics.schedule.n_layer2));
  }
}

TEST(Refine, WindowMismatchIsConfigError) {
  const auto params = pipeline::init_model_params<float>(tiny_model(), 3);
  const auto scene = datagen::gen_scene(3, 16, 16);
  RefineConfig cfg;  // window 13 vs parameters built for 5
  EXPECT_THROW(pipeline::refine(scene.image, scene.depth, scene.depth, params, cfg), ConfigError);
}

TEST(Refine, OrdinaryModeUsesDepthHead) {
  const auto params = pipeline::init_model_params<float>(tiny_model(true), 4);
  RefineConfig cfg;
  cfg.window = 5;
  const auto scene = datagen::gen_scene(4, 16, 16);
  const auto s = datagen::sample_points(scene.depth, 12, 4);
  const auto out = pipeline::refine(scene.image, s, Tensor<float>(), params, cfg);
  for (float v : out.initial_depth.vec()) EXPECT_GT(v, 0.0f);
  for (std::size_t i = 0; i < s.size(); ++i)
    if (s[i] > 0) EXPECT_EQ(out.depth[i], s[i]);
}

TEST(Refine, ObserverSeesEveryIteration) {
  const auto params = pipeline::init_model_params<float>(tiny_model(), 5);
  RefineConfig cfg;
  cfg.window = 5;
  const auto scene = datagen::gen_scene(5, 16, 16);
  const auto s = datagen::sample_points(scene.depth, 8, 5);
  int calls = 0;
  double last_cov = -1;
  const auto out = pipeline::refine<float>(scene.image, s, scene.depth, params, cfg, &scene.depth,
                                           [&](int, int, const Tensor<float>&, const Tensor<float>& m) {
                                             ++calls;
                                             for (float v : m.vec()) {
                                               EXPECT_GE(v, 0.0f);
                                               EXPECT_LE(v, 1.0f);
                                             }
                                           });
  const auto& sch = out.diagnostics.schedule;
  EXPECT_EQ(calls, sch.n_layer1 + sch.n_layer2 + 2);
  for (const auto& rec : out.diagnostics.iterations) {
    EXPECT_GE(rec.rmse, 0.0);
    if (rec.layer == 1) {
      EXPECT_GE(rec.coverage, last_cov);
      last_cov = rec.coverage;
    }
  }
}

TEST(ModelParams, DeterministicAndPrefixed) {
  const auto a = pipeline::init_model_params<float>(tiny_model(), 6);
  EXPECT_EQ(a, pipeline::init_model_params<float>(tiny_model(), 6));
  EXPECT_FALSE(a == pipeline::init_model_params<float>(tiny_model(), 7));
  EXPECT_EQ(pipeline::window_of(a, pipeline::kLayer1Prefix), 5);
  EXPECT_TRUE(a.contains("guidance.stem.weight"));
  EXPECT_TRUE(a.contains("mspn2.f_k.norm.beta"));
}
