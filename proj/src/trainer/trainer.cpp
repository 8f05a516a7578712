#include "sdr/trainer/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <exception>
#include <sstream>

#include "sdr/engine/tape.hpp"
#include "sdr/rng.hpp"

namespace sdr::trainer {
namespace {

constexpr std::uint64_t kTrainStream = 0x7452414eULL;
constexpr std::uint64_t kHeldoutStream = 0x48454c44ULL;
constexpr std::uint64_t kSparsityStream = 0x53504152ULL;

const std::string kParamPrefix = "param/";
const std::string kMomentPrefix = "adam.m/";
const std::string kVelocityPrefix = "adam.v/";
const std::string kCounters = "meta.counters";

ad::ParamSet<float> zeros_like(const ad::ParamSet<float>& p) {
  ad::ParamSet<float> out;
  for (const auto& [name, value] : p) out.add(name, Tensor<float>(value.shape()));
  return out;
}

Tensor<float> sparse_for(const datagen::Scene& scene, datagen::SparsityKind kind, int level, std::uint64_t seed) {
  if (level == 0) return Tensor<float>(scene.depth.shape());
  return kind == datagen::SparsityKind::Points ? datagen::sample_points(scene.depth, level, seed)
                                               : datagen::sample_lines(scene.depth, level, seed);
}

}  // namespace

LossKind parse_loss(const std::string& s) {
  if (s == "l1l2") return LossKind::L1L2;
  if (s == "silog") return LossKind::Silog;
  throw ConfigError("unknown loss '" + s + "' (expected l1l2 or silog)");
}

std::string to_string(LossKind k) { return k == LossKind::L1L2 ? "l1l2" : "silog"; }

void validate(const DataConfig& cfg) {
  if (cfg.height < 16 || cfg.width < 16) throw ConfigError("data: height and width must be >= 16");
  if (cfg.complexity < 0) throw ConfigError("data: complexity must be >= 0");
  if (!(cfg.severity >= 0 && cfg.severity <= 1)) throw ConfigError("data: severity must lie in [0, 1]");
}

void validate(const TrainConfig& cfg) {
  if (cfg.epochs < 0 || cfg.steps_per_epoch < 1 || cfg.batch_size < 1) {
    throw ConfigError("train: epochs >= 0, steps_per_epoch >= 1 and batch_size >= 1 required");
  }
  if (!(cfg.learning_rate >= 0)) throw ConfigError("train: learning rate must be non-negative");
  for (std::size_t i = 0; i < cfg.milestones.size(); ++i) {
    if (cfg.milestones[i] < 1 || (i && cfg.milestones[i] <= cfg.milestones[i - 1])) {
      throw ConfigError("train: milestones must be positive and strictly increasing");
    }
  }
  if (!(cfg.beta1 >= 0 && cfg.beta1 < 1) || !(cfg.beta2 >= 0 && cfg.beta2 < 1)) {
    throw ConfigError("train: optimizer betas must lie in [0, 1)");
  }
  if (!(cfg.adam_eps > 0) || !(cfg.weight_decay >= 0)) throw ConfigError("train: eps > 0 and weight_decay >= 0");
  if (!(cfg.hole_fraction >= 0 && cfg.hole_fraction <= 1)) throw ConfigError("train: hole_fraction in [0, 1]");
  if (cfg.max_layer1_iters < 0) throw ConfigError("train: max_layer1_iters must be >= 0");
  datagen::validate(cfg.sparsity);
}

double learning_rate_at(const TrainConfig& cfg, int epoch) {
  double lr = cfg.learning_rate;
  for (int m : cfg.milestones)
    if (epoch >= m) lr *= 0.5;
  return lr;
}

OptimizerState init_optimizer(const ad::ParamSet<float>& params) { return {zeros_like(params), zeros_like(params), 0}; }

void adamw_step(ad::ParamSet<float>& params, OptimizerState& state, const std::map<std::string, Tensor<float>>& grads,
                const AdamW& hp) {
  ++state.step;
  const double bc1 = 1 - std::pow(hp.beta1, static_cast<double>(state.step));
  const double bc2 = 1 - std::pow(hp.beta2, static_cast<double>(state.step));
  for (auto& [name, value] : params) {
    auto it = grads.find(name);
    if (it == grads.end()) throw ConfigError("adamw: no gradient for '" + name + "'");
    const Tensor<float>& g = it->second;
    require_same_shape(g.shape(), value.shape(), "adamw gradient");
    Tensor<float>& m = state.m.at(name);
    Tensor<float>& v = state.v.at(name);
    for (std::size_t i = 0; i < value.size(); ++i) {
      const double gi = g[i];
      const double mi = hp.beta1 * m[i] + (1 - hp.beta1) * gi;
      const double vi = hp.beta2 * v[i] + (1 - hp.beta2) * gi * gi;
      m[i] = static_cast<float>(mi);
      v[i] = static_cast<float>(vi);
      const double update = (mi / bc1) / (std::sqrt(vi / bc2) + hp.eps) + hp.weight_decay * value[i];
      value[i] = static_cast<float>(value[i] - hp.lr * update);
    }
  }
}

void save_checkpoint(const TrainState& state, const std::filesystem::path& path) {
  ad::ParamSet<float> all;
  all.merge(state.params, kParamPrefix);
  all.merge(state.optimizer.m, kMomentPrefix);
  all.merge(state.optimizer.v, kVelocityPrefix);
  // float32 holds integers exactly up to 2^24, so the step is split in 16-bit halves.
  const auto step = static_cast<std::uint64_t>(state.optimizer.step);
  all.add(kCounters, Tensor<float>({3}, std::vector<float>{static_cast<float>(step & 0xffff),
                                                           static_cast<float>((step >> 16) & 0xffffff),
                                                           static_cast<float>(state.epoch)}));
  ad::save_params(all, path);
}

TrainState load_checkpoint(const std::filesystem::path& path) {
  const ad::ParamSet<float> all = ad::load_params(path);
  if (!all.contains(kCounters)) throw DataError("checkpoint " + path.string() + " has no training counters");
  TrainState s;
  s.params = all.subset(kParamPrefix);
  s.optimizer.m = all.subset(kMomentPrefix);
  s.optimizer.v = all.subset(kVelocityPrefix);
  if (s.optimizer.m.names() != s.params.names() || s.optimizer.v.names() != s.params.names()) {
    throw DataError("checkpoint " + path.string() + ": optimizer moments do not match parameters");
  }
  const Tensor<float>& c = all.at(kCounters);
  if (c.size() != 3) throw DataError("checkpoint " + path.string() + ": malformed counters");
  s.optimizer.step = static_cast<std::int64_t>(c[0]) + (static_cast<std::int64_t>(c[1]) << 16);
  s.epoch = static_cast<int>(c[2]);
  return s;
}

std::uint64_t train_scene_seed(std::uint64_t seed, std::int64_t global_step, int index) {
  return Rng::derive(Rng::derive(seed, kTrainStream), static_cast<std::uint64_t>(global_step) * 4096 + index);
}

std::uint64_t heldout_scene_seed(std::uint64_t seed, int index) {
  return Rng::derive(Rng::derive(seed, kHeldoutStream), static_cast<std::uint64_t>(index));
}

ad::Var<float> sample_loss(LossKind kind, const ad::Var<float>& pred, const Tensor<float>& gt) {
  return kind == LossKind::L1L2 ? objectives::loss_l1l2(pred, gt) : objectives::loss_silog(pred, gt);
}

TrainResult train(const TrainConfig& cfg, const DataConfig& data, const pipeline::RefineConfig& refine_cfg,
                  TrainState state) {
  validate(cfg);
  validate(data);
  pipeline::RefineConfig rcfg = refine_cfg;
  rcfg.max_layer1_iters = cfg.max_layer1_iters;
  pipeline::validate(rcfg);
  if (state.optimizer.m.size() != state.params.size()) state.optimizer = init_optimizer(state.params);

  TrainResult result;
  for (int epoch = state.epoch; epoch < cfg.epochs; ++epoch) {
    const AdamW hp{learning_rate_at(cfg, epoch), cfg.beta1, cfg.beta2, cfg.adam_eps, cfg.weight_decay};
    double epoch_sum = 0;
    for (int step = 0; step < cfg.steps_per_epoch; ++step) {
      const std::int64_t gstep = static_cast<std::int64_t>(epoch) * cfg.steps_per_epoch + step;
      Rng rng(Rng::derive(Rng::derive(cfg.seed, kSparsityStream), static_cast<std::uint64_t>(gstep)));
      const int level = datagen::draw_sparsity(cfg.sparsity, rng, data.height, data.width);
      const bool hole = rng.uniform() < cfg.hole_fraction;

      std::map<std::string, Tensor<float>> grad_sum;
      double loss_sum = 0;
      try {
        // Samples are processed and summed in index order.
        for (int b = 0; b < cfg.batch_size; ++b) {
          const std::uint64_t sseed = train_scene_seed(cfg.seed, gstep, b);
          const datagen::Scene scene = datagen::gen_scene(sseed, data.height, data.width, data.complexity);
          const Tensor<float> d0 = datagen::simulate_mde(scene.depth, Rng::derive(sseed, 1), data.severity);
          Tensor<float> sparse = sparse_for(scene, cfg.sparsity.kind, level, Rng::derive(sseed, 2));
          if (hole) sparse = datagen::mask_hole(sparse, datagen::centered_hole(data.height, data.width)).sparse;

          ad::Tape<float> tape;
          auto r = pipeline::refine(tape.constant(scene.image), tape.constant(sparse), tape.constant(d0),
                                    state.params, rcfg);
          const ad::Var<float> loss = sample_loss(cfg.loss, r.depth, scene.depth);
          if (!std::isfinite(loss.value()[0])) throw NumericError("non-finite training loss");
          auto grads = tape.backward(loss, state.params);
          loss_sum += loss.value()[0];
          if (grad_sum.empty()) {
            grad_sum = std::move(grads);
          } else {
            for (auto& [name, g] : grads) {
              Tensor<float>& acc = grad_sum.at(name);
              for (std::size_t i = 0; i < g.size(); ++i) acc[i] += g[i];
            }
          }
        }
      } catch (const NumericError& e) {
        result.aborted = true;
        result.abort_reason = "epoch " + std::to_string(epoch) + " step " + std::to_string(step) + ": " + e.what();
        state.epoch = epoch;
        result.state = std::move(state);
        return result;
      }
      const float inv_b = 1.0f / static_cast<float>(cfg.batch_size);
      for (auto& [name, g] : grad_sum)
        for (auto& x : g.vec()) x *= inv_b;
      adamw_step(state.params, state.optimizer, grad_sum, hp);

      const double mean_loss = loss_sum / cfg.batch_size;
      result.log.push_back({epoch, step, mean_loss, level});
      epoch_sum += mean_loss;
    }
    result.epoch_means.push_back(epoch_sum / cfg.steps_per_epoch);
    state.epoch = epoch + 1;
  }
  result.state = std::move(state);
  return result;
}

std::string loss_log_csv(const std::vector<LossRecord>& log) {
  std::ostringstream os;
  os << "epoch,step,loss,sparsity\n";
  char buf[128];
  for (const auto& r : log) {
    std::snprintf(buf, sizeof buf, "%d,%d,%.9g,%d\n", r.epoch, r.step, r.loss, r.sparsity);
    os << buf;
  }
  return os.str();
}

EvalSample heldout_sample(std::uint64_t seed, int index, const DataConfig& data) {
  validate(data);
  const std::uint64_t sseed = heldout_scene_seed(seed, index);
  EvalSample s{datagen::gen_scene(sseed, data.height, data.width, data.complexity), {}};
  s.d0 = datagen::simulate_mde(s.scene.depth, Rng::derive(sseed, 1), data.severity);
  return s;
}

void validate(const SweepConfig& cfg) {
  if (cfg.levels.empty()) throw ConfigError("sweep: at least one sparsity level required");
  for (std::size_t i = 0; i < cfg.levels.size(); ++i) {
    if (cfg.levels[i] < 0 || (i && cfg.levels[i] <= cfg.levels[i - 1])) {
      throw ConfigError("sweep: levels must be non-negative and strictly increasing");
    }
  }
  if (cfg.n_scenes < 1) throw ConfigError("sweep: n_scenes must be >= 1");
}

SweepResult evaluate_sweep(const ad::ParamSet<float>& params, const pipeline::RefineConfig& refine_cfg,
                           const DataConfig& data, const SweepConfig& cfg) {
  validate(cfg);
  validate(data);
  const std::size_t n_levels = cfg.levels.size();
  const int n = cfg.n_scenes;
  std::vector<objectives::MetricReport> base(n);
  std::vector<std::vector<objectives::MetricReport>> per(n_levels, std::vector<objectives::MetricReport>(n));
  std::vector<std::size_t> mismatches(n, 0);
  std::exception_ptr error;

  // Scenes are independent; each writes only its own slots.
#pragma omp parallel for schedule(static)
  for (int i = 0; i < n; ++i) {
    try {
      const EvalSample s = heldout_sample(cfg.seed, i, data);
      base[i] = objectives::compute_metrics(s.d0, s.scene.depth, cfg.metrics);
      for (std::size_t l = 0; l < n_levels; ++l) {
        const int level = cfg.levels[l];
        const Tensor<float> sparse = sparse_for(s.scene, cfg.kind, level,
                                                Rng::derive(heldout_scene_seed(cfg.seed, i), 1000 + level));
        const auto out = pipeline::refine(s.scene.image, sparse, s.d0, params, refine_cfg);
        per[l][i] = objectives::compute_metrics(out.depth, s.scene.depth, cfg.metrics);
        for (std::size_t k = 0; k < sparse.size(); ++k) mismatches[i] += sparse[k] > 0 && out.depth[k] != sparse[k];
      }
    } catch (...) {
#pragma omp critical
      if (!error) error = std::current_exception();
    }
  }
  if (error) std::rethrow_exception(error);

  SweepResult r;
  r.baseline = objectives::average(base);
  for (const auto& m : base) r.baseline_scene_rmse.push_back(m.rmse);
  for (std::size_t l = 0; l < n_levels; ++l) {
    SweepRow row;
    row.level = cfg.levels[l];
    row.metrics = objectives::average(per[l]);
    for (const auto& m : per[l]) row.scene_rmse.push_back(m.rmse);
    r.rows.push_back(std::move(row));
  }
  for (auto m : mismatches) r.seed_mismatches += m;
  return r;
}

std::string sweep_table(const SweepResult& r) {
  std::ostringstream os;
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-10s %10s %10s %9s %9s %9s %10s %10s %10s\n", "level", "rmse", "rel", "d1", "d2",
                "d3", "mae", "irmse", "imae");
  os << buf;
  auto line = [&](const std::string& label, const objectives::MetricReport& m) {
    std::snprintf(buf, sizeof buf, "%-10s %10.5f %10.5f %9.3f %9.3f %9.3f %10.5f %10.4f %10.4f\n", label.c_str(),
                  m.rmse, m.rel, m.delta1, m.delta2, m.delta3, m.mae, m.irmse, m.imae);
    os << buf;
  };
  line("D0", r.baseline);
  for (const auto& row : r.rows) line(std::to_string(row.level), row.metrics);
  return os.str();
}

std::string sweep_csv(const SweepResult& r) {
  std::ostringstream os;
  os << "level,rmse,rel,delta1,delta2,delta3,mae,irmse,imae,valid_count\n";
  char buf[320];
  auto line = [&](const std::string& label, const objectives::MetricReport& m) {
    std::snprintf(buf, sizeof buf, "%s,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%zu\n", label.c_str(), m.rmse, m.rel,
                  m.delta1, m.delta2, m.delta3, m.mae, m.irmse, m.imae, m.valid_count);
    os << buf;
  };
  line("baseline", r.baseline);
  for (const auto& row : r.rows) line(std::to_string(row.level), row.metrics);
  return os.str();
}

HoleResult evaluate_holes(const ad::ParamSet<float>& params, const pipeline::RefineConfig& refine_cfg,
                          const DataConfig& data, int s, int n_scenes, std::uint64_t seed) {
  validate(data);
  if (n_scenes < 1) throw ConfigError("holes: n_scenes must be >= 1");
  HoleResult r;
  r.refined_rmse.resize(n_scenes);
  r.baseline_rmse.resize(n_scenes);
  const datagen::Rect rect = datagen::centered_hole(data.height, data.width);
  for (int i = 0; i < n_scenes; ++i) {
    const EvalSample smp = heldout_sample(seed, i, data);
    const Tensor<float> pts = datagen::sample_points(smp.scene.depth, s, Rng::derive(heldout_scene_seed(seed, i), 2000));
    const datagen::HoleSample hole = datagen::mask_hole(pts, rect);
    const auto out = pipeline::refine(smp.scene.image, hole.sparse, smp.d0, params, refine_cfg);
    r.refined_rmse[i] = objectives::compute_metrics(out.depth, smp.scene.depth, {}, &hole.region).rmse;
    r.baseline_rmse[i] = objectives::compute_metrics(smp.d0, smp.scene.depth, {}, &hole.region).rmse;
    r.wins += r.refined_rmse[i] < r.baseline_rmse[i];
  }
  return r;
}

}  // namespace sdr::trainer
