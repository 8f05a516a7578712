#pragma once

// Variable-sparsity training and the sparsity-sweep evaluator.

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "sdr/datagen/datagen.hpp"
#include "sdr/engine/param_set.hpp"
#include "sdr/objectives/objectives.hpp"
#include "sdr/pipeline/pipeline.hpp"

namespace sdr::trainer {

enum class LossKind { L1L2, Silog };

LossKind parse_loss(const std::string& s);
std::string to_string(LossKind k);

struct DataConfig {
  int height = 32;
  int width = 32;
  int complexity = 1;
  double severity = 1.0;  // MDE error level in [0, 1]

  bool operator==(const DataConfig&) const = default;
};

void validate(const DataConfig& cfg);

struct TrainConfig {
  int epochs = 30;
  int steps_per_epoch = 8;
  int batch_size = 4;
  double learning_rate = 1e-3;
  std::vector<int> milestones;  // epochs at which the rate halves, strictly increasing
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double weight_decay = 1e-2;
  LossKind loss = LossKind::L1L2;
  datagen::SparsityProtocol sparsity;
  // Fraction of training samples that get a centered hole cut into S.
  double hole_fraction = 0.0;
  int max_layer1_iters = 12;
  std::uint64_t seed = 1;

  bool operator==(const TrainConfig&) const = default;
};

void validate(const TrainConfig& cfg);

/// Rate in effect during epoch (0-based): halved once per milestone <= epoch.
double learning_rate_at(const TrainConfig& cfg, int epoch);

/// Adam moments with decoupled weight decay.
struct OptimizerState {
  ad::ParamSet<float> m;
  ad::ParamSet<float> v;
  std::int64_t step = 0;
};

OptimizerState init_optimizer(const ad::ParamSet<float>& params);

struct AdamW {
  double lr, beta1, beta2, eps, weight_decay;
};

/// One update; grads must cover every parameter.
void adamw_step(ad::ParamSet<float>& params, OptimizerState& state, const std::map<std::string, Tensor<float>>& grads,
                const AdamW& hp);

struct TrainState {
  ad::ParamSet<float> params;
  OptimizerState optimizer;
  int epoch = 0;  // next epoch to run
};

/// Checkpoint: params, both moments and counters in one SDRK1 file.
void save_checkpoint(const TrainState& state, const std::filesystem::path& path);
TrainState load_checkpoint(const std::filesystem::path& path);

struct LossRecord {
  int epoch = 0;
  int step = 0;
  double loss = 0;
  int sparsity = 0;
};

struct TrainResult {
  TrainState state;
  std::vector<LossRecord> log;
  std::vector<double> epoch_means;
  bool aborted = false;
  std::string abort_reason;
};

/// Scene for training sample (step, index) of a run seed. Disjoint from
/// the held-out stream used by evaluation.
std::uint64_t train_scene_seed(std::uint64_t seed, std::int64_t global_step, int index);
std::uint64_t heldout_scene_seed(std::uint64_t seed, int index);

/// Runs epochs [state.epoch, cfg.epochs). On a non-finite loss the run stops
/// and returns the parameters from before the failing step.
TrainResult train(const TrainConfig& cfg, const DataConfig& data, const pipeline::RefineConfig& refine_cfg,
                  TrainState state);

/// Loss of one refined sample, on the tape.
ad::Var<float> sample_loss(LossKind kind, const ad::Var<float>& pred, const Tensor<float>& gt);

std::string loss_log_csv(const std::vector<LossRecord>& log);

// --- evaluation ----------------------------------------------------------------

struct EvalSample {
  datagen::Scene scene;
  Tensor<float> d0;
};

/// Held-out scene i with its simulated initial depth.
EvalSample heldout_sample(std::uint64_t seed, int index, const DataConfig& data);

struct SweepConfig {
  std::vector<int> levels;  // strictly increasing; 0 means no sparse input
  int n_scenes = 20;
  std::uint64_t seed = 7;
  objectives::MetricOptions metrics;
  datagen::SparsityKind kind = datagen::SparsityKind::Points;
};

void validate(const SweepConfig& cfg);

struct SweepRow {
  int level = 0;
  objectives::MetricReport metrics;
  std::vector<double> scene_rmse;
};

struct SweepResult {
  std::vector<SweepRow> rows;
  objectives::MetricReport baseline;  // D0 against GT
  std::vector<double> baseline_scene_rmse;
  // Seed pixels whose refined value differs from S (0 with final clamping).
  std::size_t seed_mismatches = 0;
};

SweepResult evaluate_sweep(const ad::ParamSet<float>& params, const pipeline::RefineConfig& refine_cfg,
                           const DataConfig& data, const SweepConfig& cfg);

std::string sweep_table(const SweepResult& r);
std::string sweep_csv(const SweepResult& r);

struct HoleResult {
  std::vector<double> refined_rmse;  // inside the hole, per scene
  std::vector<double> baseline_rmse;
  int wins = 0;
};

/// Centered half-size hole cut from an s-point sample; metrics inside the hole only.
HoleResult evaluate_holes(const ad::ParamSet<float>& params, const pipeline::RefineConfig& refine_cfg,
                          const DataConfig& data, int s, int n_scenes, std::uint64_t seed);

}  // namespace sdr::trainer
