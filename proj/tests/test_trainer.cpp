#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "sdr/trainer/trainer.hpp"

using namespace sdr;
using namespace sdr::trainer;

namespace {

pipeline::ModelConfig tiny_model() {
  pipeline::ModelConfig m;
  m.guidance = {2, {4, 6, 8}, 8, false};
  m.qk_channels = 4;
  m.window = 5;
  return m;
}

pipeline::RefineConfig tiny_refine() {
  pipeline::RefineConfig r;
  r.window = 5;
  return r;
}

DataConfig small_data() { return {16, 16, 1, 1.0}; }

TrainConfig quick_train(int epochs) {
  TrainConfig c;
  c.epochs = epochs;
  c.steps_per_epoch = 2;
  c.batch_size = 2;
  c.learning_rate = 3e-3;
  c.sparsity.min_points = 5;
  c.sparsity.max_points = 60;
  c.sparsity.area_scaling = false;
  c.max_layer1_iters = 6;
  return c;
}

TrainState fresh(std::uint64_t seed) {
  TrainState s;
  s.params = pipeline::init_model_params<float>(tiny_model(), seed);
  return s;
}

}  // namespace

TEST(AdamW, FirstStepMatchesClosedForm) {
  ad::ParamSet<float> p;
  p.add("w", Tensor<float>({2}, std::vector<float>{1.0f, -2.0f}));
  auto st = init_optimizer(p);
  std::map<std::string, Tensor<float>> g{{"w", Tensor<float>({2}, std::vector<float>{0.5f, -4.0f})}};
  adamw_step(p, st, g, {0.1, 0.9, 0.999, 1e-8, 0.01});
  // Bias-corrected moments equal g and g^2 after one step.
  EXPECT_NEAR(p.at("w")[0], 1.0 - 0.1 * (0.5 / (0.5 + 1e-8) + 0.01 * 1.0), 1e-6);
  EXPECT_NEAR(p.at("w")[1], -2.0 - 0.1 * (-4.0 / (4.0 + 1e-8) + 0.01 * -2.0), 1e-6);
  EXPECT_EQ(st.step, 1);
  g.clear();
  EXPECT_THROW(adamw_step(p, st, g, {0.1, 0.9, 0.999, 1e-8, 0.0}), ConfigError);
}

TEST(Schedule, MilestonesHalveRate) {
  TrainConfig c;
  c.learning_rate = 1.0;
  c.milestones = {2, 5};
  EXPECT_EQ(learning_rate_at(c, 0), 1.0);
  EXPECT_EQ(learning_rate_at(c, 2), 0.5);
  EXPECT_EQ(learning_rate_at(c, 4), 0.5);
  EXPECT_EQ(learning_rate_at(c, 5), 0.25);
  c.milestones = {3, 3};
  EXPECT_THROW(validate(c), ConfigError);
}

TEST(Train, ZeroLearningRateKeepsParameters) {
  auto cfg = quick_train(1);
  cfg.learning_rate = 0.0;
  cfg.weight_decay = 0.0;
  const auto st = fresh(1);
  const auto r = train(cfg, small_data(), tiny_refine(), st);
  EXPECT_EQ(r.state.params, st.params);
  EXPECT_EQ(r.log.size(), 2u);
}

TEST(Train, DeterministicLossLog) {
  const auto cfg = quick_train(2);
  const auto a = train(cfg, small_data(), tiny_refine(), fresh(2));
  const auto b = train(cfg, small_data(), tiny_refine(), fresh(2));
  EXPECT_EQ(loss_log_csv(a.log), loss_log_csv(b.log));
  EXPECT_EQ(a.state.params, b.state.params);
  EXPECT_EQ(loss_log_csv(a.log).substr(0, 26), "epoch,step,loss,sparsity\n0");
}

TEST(Train, CheckpointResumeMatchesStraightRun) {
  const auto straight = train(quick_train(2), small_data(), tiny_refine(), fresh(3));
  const auto first = train(quick_train(1), small_data(), tiny_refine(), fresh(3));
  const auto path = std::filesystem::temp_directory_path() / "sdr_test_resume.sdrk";
  save_checkpoint(first.state, path);
  const auto loaded = load_checkpoint(path);
  std::filesystem::remove(path);
  EXPECT_EQ(loaded.epoch, 1);
  EXPECT_EQ(loaded.optimizer.step, first.state.optimizer.step);
  EXPECT_EQ(loaded.params, first.state.params);
  const auto resumed = train(quick_train(2), small_data(), tiny_refine(), loaded);
  EXPECT_EQ(resumed.state.params, straight.state.params);
}

TEST(Train, LossDecreasesOverEpochs) {
  // 24×32 scenes with s in [5, 150], three seeds.
  for (std::uint64_t seed : {11u, 12u, 13u}) {
    auto cfg = quick_train(30);
    cfg.seed = seed;
    cfg.sparsity.max_points = 150;
    const auto r = train(cfg, {24, 32, 1, 1.0}, tiny_refine(), fresh(seed));
    ASSERT_FALSE(r.aborted) << r.abort_reason;
    ASSERT_EQ(r.epoch_means.size(), 30u);
    double head = 0, tail = 0;
    for (int e = 0; e < 5; ++e) {
      head += r.epoch_means[e];
      tail += r.epoch_means[25 + e];
    }
    EXPECT_LT(tail, head) << "seed " << seed;
  }
}

TEST(Sweep, LevelZeroIsBaselineAndRunsReproduce) {
  const auto params = pipeline::init_model_params<float>(tiny_model(), 4);
  SweepConfig sc;
  sc.levels = {0, 10};
  sc.n_scenes = 3;
  const auto a = evaluate_sweep(params, tiny_refine(), small_data(), sc);
  const auto b = evaluate_sweep(params, tiny_refine(), small_data(), sc);
  EXPECT_EQ(sweep_csv(a), sweep_csv(b));
  EXPECT_EQ(sweep_table(a), sweep_table(b));
  EXPECT_EQ(a.rows[0].metrics.rmse, a.baseline.rmse);
  EXPECT_EQ(a.rows[0].scene_rmse, a.baseline_scene_rmse);
  EXPECT_EQ(a.seed_mismatches, 0u);
  sc.levels = {50, 20};
  EXPECT_THROW(evaluate_sweep(params, tiny_refine(), small_data(), sc), ConfigError);
}

TEST(Sweep, HeldOutScenesDisjointFromTraining) {
  for (int i = 0; i < 20; ++i)
    for (std::int64_t step = 0; step < 50; ++step)
      for (int b = 0; b < 4; ++b) EXPECT_NE(heldout_scene_seed(7, i), train_scene_seed(7, step, b));
}

TEST(Holes, ReportsPerScene) {
  const auto params = pipeline::init_model_params<float>(tiny_model(), 5);
  const auto h = evaluate_holes(params, tiny_refine(), small_data(), 40, 4, 7);
  ASSERT_EQ(h.refined_rmse.size(), 4u);
  int wins = 0;
  for (int i = 0; i < 4; ++i) wins += h.refined_rmse[i] < h.baseline_rmse[i];
  EXPECT_EQ(wins, h.wins);
}
