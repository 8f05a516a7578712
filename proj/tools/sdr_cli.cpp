// Command-line front end: synth, train, refine, sweep, gradcheck, selftest.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <iostream>
#include <sstream>

#include "sdr/cli/checks.hpp"
#include "sdr/datagen/datagen.hpp"
#include "sdr/engine/param_set.hpp"
#include "sdr/io/files.hpp"
#include "sdr/io/run_config.hpp"
#include "sdr/pipeline/pipeline.hpp"
#include "sdr/trainer/trainer.hpp"

namespace fs = std::filesystem;
using namespace sdr;

namespace {

enum Exit { kOk = 0, kUsage = 1, kData = 2, kNumeric = 3, kThreshold = 4 };

std::string scene_name(int i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "scene_%04d", i);
  return buf;
}

int cmd_synth(std::uint64_t seed, int H, int W, int n, int points, double severity, int complexity,
              const std::string& out_dir) {
  if (n < 1) throw ConfigError("--n must be >= 1");
  trainer::validate(trainer::DataConfig{H, W, complexity, severity});
  for (int i = 0; i < n; ++i) {
    const std::uint64_t s = Rng::derive(seed, static_cast<std::uint64_t>(i));
    const datagen::Scene scene = datagen::gen_scene(s, H, W, complexity);
    const fs::path base = fs::path(out_dir) / scene_name(i);
    io::write_pfm(base.string() + "_image.pfm", scene.image);
    io::write_pfm(base.string() + "_gt.pfm", scene.depth);
    io::write_pfm(base.string() + "_init.pfm", datagen::simulate_mde(scene.depth, Rng::derive(s, 1), severity));
    io::write_sparse_csv(base.string() + "_sparse.csv",
                         datagen::sample_points(scene.depth, std::min(points, H * W), Rng::derive(s, 2)));
  }
  std::cout << "wrote " << n << " scenes to " << out_dir << "\n";
  return kOk;
}

int cmd_train(const io::RunConfig& cfg) {
  trainer::TrainState state;
  if (!cfg.paths.init_params.empty()) {
    state.params = ad::load_params(cfg.paths.init_params);
  } else {
    state.params = pipeline::init_model_params<float>(cfg.model, cfg.seed);
  }
  const fs::path out(cfg.paths.output_dir);
  const fs::path params_path = cfg.paths.params.empty() ? out / "params.sdrk" : fs::path(cfg.paths.params);
  const trainer::TrainResult r = trainer::train(cfg.train, cfg.data, cfg.refine, std::move(state));
  io::write_file_atomic(out / "loss_log.csv", trainer::loss_log_csv(r.log));
  trainer::save_checkpoint(r.state, out / "checkpoint.sdrk");
  ad::save_params(r.state.params, params_path);
  for (std::size_t e = 0; e < r.epoch_means.size(); ++e) {
    std::printf("epoch %zu mean loss %.6f\n", e, r.epoch_means[e]);
  }
  if (r.aborted) {
    std::cerr << "training diverged: " << r.abort_reason << " (last good parameters saved)\n";
    return kNumeric;
  }
  std::cout << "parameters written to " << params_path.string() << "\n";
  return kOk;
}

std::string diagnostics_json(const pipeline::Diagnostics& d) {
  nlohmann::json j;
  j["seed_count"] = d.seed_count;
  j["scheduled"] = d.scheduled;
  j["schedule"] = {{"nu_s", d.schedule.nu_s}, {"n_layer1", d.schedule.n_layer1}, {"n_layer2", d.schedule.n_layer2}};
  j["iterations"] = nlohmann::json::array();
  for (const auto& it : d.iterations) {
    nlohmann::json rec = {{"layer", it.layer}, {"iteration", it.iteration}, {"coverage", it.coverage}};
    if (it.rmse >= 0) rec["rmse"] = it.rmse;
    j["iterations"].push_back(rec);
  }
  j["warnings"] = d.warnings;
  return j.dump(2) + "\n";
}

int cmd_refine(const io::RunConfig& cfg, const std::string& image_path, const std::string& sparse_path,
               const std::string& init_path, const std::string& out_path, const std::string& gt_path,
               const std::string& error_map) {
  io::require_existing(cfg.paths.params, "paths.params");
  io::require_existing(image_path, "--image");
  io::require_existing(sparse_path, "--sparse");
  const ad::ParamSet<float> params = ad::load_params(cfg.paths.params);
  const Tensor<float> image = io::read_pfm(image_path);
  if (image.rank() != 3) throw DataError(image_path + ": expected a 3-channel PF image");
  const int H = image.height(), W = image.width();
  Tensor<float> d0;
  if (cfg.mode != io::RunMode::Ordinary) {
    io::require_existing(init_path, "--init-depth");
    d0 = io::read_pfm(init_path);
  }
  Tensor<float> sparse = io::read_sparse_csv(sparse_path, H, W);
  if (cfg.mode == io::RunMode::Holefill) {
    datagen::Rect rect = cfg.sampler.hole;
    if (rect.height == 0 || rect.width == 0) rect = datagen::centered_hole(H, W);
    sparse = datagen::mask_hole(sparse, rect).sparse;
  }
  Tensor<float> gt;
  if (!gt_path.empty()) gt = io::read_pfm(gt_path);
  const auto r = pipeline::refine(image, sparse, d0, params, cfg.refine, gt.empty() ? nullptr : &gt);
  for (const auto& w : r.diagnostics.warnings) std::cerr << "warning: " << w << "\n";
  io::write_pfm(out_path, r.depth);
  io::write_file_atomic(out_path + ".diag.json", diagnostics_json(r.diagnostics));
  if (!error_map.empty()) {
    if (gt.empty()) throw ConfigError("--error-map needs --gt");
    io::write_error_png(error_map, r.depth, gt);
  }
  if (!gt.empty()) {
    std::cout << "refined: " << objectives::compute_metrics(r.depth, gt, cfg.metrics).to_record() << "\n";
    std::cout << "initial: " << objectives::compute_metrics(r.initial_depth, gt, cfg.metrics).to_record() << "\n";
  }
  return kOk;
}

std::vector<int> parse_levels(const std::string& s) {
  std::vector<int> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stoi(tok, &used));
      if (used != tok.size()) throw std::invalid_argument(tok);
    } catch (const std::logic_error&) {
      throw ConfigError("--levels: bad entry '" + tok + "'");
    }
  }
  return out;
}

int cmd_sweep(const io::RunConfig& cfg, const std::string& levels, int scenes) {
  io::require_existing(cfg.paths.params, "paths.params");
  trainer::SweepConfig sc;
  sc.levels = parse_levels(levels);
  sc.n_scenes = scenes > 0 ? scenes : cfg.eval_scenes;
  sc.seed = cfg.seed;
  sc.metrics = cfg.metrics;
  sc.kind = cfg.refine.mode == pipeline::SampleMode::Lines ? datagen::SparsityKind::Lines
                                                            : datagen::SparsityKind::Points;
  trainer::validate(sc);
  const ad::ParamSet<float> params = ad::load_params(cfg.paths.params);
  const trainer::SweepResult r = trainer::evaluate_sweep(params, cfg.refine, cfg.data, sc);
  const std::string table = trainer::sweep_table(r);
  std::cout << table;
  const fs::path out(cfg.paths.output_dir);
  io::write_file_atomic(out / "sweep.txt", table);
  io::write_file_atomic(out / "sweep.csv", trainer::sweep_csv(r));
  if (cfg.refine.final_seed_clamp && r.seed_mismatches) {
    std::cerr << "seed fidelity violated at " << r.seed_mismatches << " pixels\n";
    return kNumeric;
  }
  return kOk;
}

int report(const std::vector<cli::CheckResult>& results) {
  bool ok = true;
  for (const auto& c : results) {
    std::printf("%-32s %s  value=%.3e threshold=%.1e  %s\n", c.name.c_str(), c.pass ? "PASS" : "FAIL", c.value,
                c.threshold, c.detail.c_str());
    ok = ok && c.pass;
  }
  return ok ? kOk : kThreshold;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sparsity-adaptive depth refinement with masked spatial propagation"};
  app.require_subcommand(1);

  std::string config_path;
  auto load = [&] { return io::load_run_config(config_path); };

  std::uint64_t seed = 1;
  int h = 32, w = 32, n = 1, points = 50, complexity = 1;
  double severity = 1.0;
  std::string synth_out = "scenes";
  auto* synth = app.add_subcommand("synth", "generate scene fixtures (image, gt, init depth, sparse CSV)");
  synth->add_option("--seed", seed, "base seed");
  synth->add_option("--height", h, "image height")->check(CLI::Range(16, 4096));
  synth->add_option("--width", w, "image width")->check(CLI::Range(16, 4096));
  synth->add_option("--n", n, "number of scenes");
  synth->add_option("--points", points, "sparse points per scene");
  synth->add_option("--severity", severity, "initial-depth error level in [0, 1]");
  synth->add_option("--complexity", complexity, "0 for a single plane");
  synth->add_option("--out", synth_out, "output directory");

  auto* train = app.add_subcommand("train", "train a model; writes parameters, checkpoint and loss log");
  train->add_option("--config", config_path, "run config JSON")->required();

  std::string image, sparse, init, out, gt, error_map;
  auto* refine = app.add_subcommand("refine", "refine one initial depth map");
  refine->add_option("--config", config_path, "run config JSON")->required();
  refine->add_option("--image", image, "3-channel PFM image")->required();
  refine->add_option("--sparse", sparse, "sparse CSV (row,col,depth_m)")->required();
  refine->add_option("--init-depth", init, "initial depth PFM (not used in ordinary mode)");
  refine->add_option("--out", out, "refined depth PFM")->required();
  refine->add_option("--gt", gt, "ground-truth PFM for metrics");
  refine->add_option("--error-map", error_map, "grayscale PNG of |refined - gt|");

  std::string levels = "10,50,100,500";
  int scenes = 0;
  auto* sweep = app.add_subcommand("sweep", "evaluate one model across sparsity levels");
  sweep->add_option("--config", config_path, "run config JSON")->required();
  sweep->add_option("--levels", levels, "comma-separated, strictly increasing");
  sweep->add_option("--scenes", scenes, "held-out scenes (default: eval_scenes)");

  std::string scale = "tiny";
  double threshold = 1e-3;
  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient checks");
  gradcheck->add_option("--scale", scale, "tiny or small");
  gradcheck->add_option("--threshold", threshold, "max relative error");

  auto* selftest = app.add_subcommand("selftest", "oracle equivalence, dilation and normalization checks");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*synth) return cmd_synth(seed, h, w, n, points, severity, complexity, synth_out);
    if (*train) return cmd_train(load());
    if (*refine) return cmd_refine(load(), image, sparse, init, out, gt, error_map);
    if (*sweep) return cmd_sweep(load(), levels, scenes);
    if (*gradcheck) return report(cli::gradcheck_suite(cli::parse_grad_scale(scale), threshold));
    if (*selftest) return report(cli::selftest_suite());
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kUsage;
  } catch (const ContractError& e) {
    std::cerr << "contract violation: " << e.what() << "\n";
    return kUsage;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kData;
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return kNumeric;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kData;
  }
  return kUsage;
}
