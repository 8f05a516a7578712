#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "sdr/datagen/datagen.hpp"
#include "sdr/engine/param_set.hpp"
#include "sdr/io/files.hpp"
#include "sdr/io/run_config.hpp"
#include "sdr/pipeline/pipeline.hpp"

using namespace sdr;
namespace fs = std::filesystem;

namespace {

const fs::path kBinary = SDR_CLI_PATH;

int run(const std::string& args, const fs::path& log) {
  const std::string cmd = kBinary.string() + " " + args + " > " + (log.string() + ".out") + " 2> " + log.string();
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p);
  return {std::istreambuf_iterator<char>(f), {}};
}

struct Fixture {
  fs::path dir, config;
};

// Tiny model and a config pointing at it.
Fixture make_fixture(const std::string& name) {
  Fixture f{fs::temp_directory_path() / ("sdr_cli_" + name), {}};
  fs::remove_all(f.dir);
  fs::create_directories(f.dir);
  io::RunConfig cfg;
  cfg.model.guidance = {2, {4, 4, 4}, 4, false};
  cfg.model.qk_channels = 4;
  cfg.model.window = 5;
  cfg.refine.window = 5;
  cfg.data = {16, 16, 1, 1.0};
  cfg.paths.params = (f.dir / "model.sdrk").string();
  cfg.paths.output_dir = (f.dir / "out").string();
  ad::save_params(pipeline::init_model_params<float>(cfg.model, 1), cfg.paths.params);
  f.config = f.dir / "config.json";
  io::save_run_config(cfg, f.config);
  return f;
}

}  // namespace

TEST(Cli, SelftestPasses) { EXPECT_EQ(run("selftest", fs::temp_directory_path() / "sdr_cli_selftest.log"), 0); }

TEST(Cli, UnknownCommandIsUsageError) {
  EXPECT_EQ(run("frobnicate", fs::temp_directory_path() / "sdr_cli_usage.log"), 1);
}

TEST(Cli, SweepLevelsOutOfOrderIsConfigError) {
  const auto f = make_fixture("sweep");
  EXPECT_EQ(run("sweep --config " + f.config.string() + " --levels 50,20 --scenes 1", f.dir / "log"), 1);
  EXPECT_NE(slurp(f.dir / "log").find("increasing"), std::string::npos);
}

TEST(Cli, RefineWithEmptySparseReturnsInitialDepth) {
  const auto f = make_fixture("refine");
  const auto scene = datagen::gen_scene(3, 16, 16);
  const auto d0 = datagen::simulate_mde(scene.depth, 4, 1.0);
  io::write_pfm(f.dir / "image.pfm", scene.image);
  io::write_pfm(f.dir / "init.pfm", d0);
  io::write_file_atomic(f.dir / "sparse.csv", "");
  const std::string args = "refine --config " + f.config.string() + " --image " + (f.dir / "image.pfm").string() +
                           " --sparse " + (f.dir / "sparse.csv").string() + " --init-depth " +
                           (f.dir / "init.pfm").string() + " --out " + (f.dir / "refined.pfm").string();
  ASSERT_EQ(run(args, f.dir / "log"), 0) << slurp(f.dir / "log");
  EXPECT_EQ(io::read_pfm(f.dir / "refined.pfm"), d0);
  EXPECT_NE(slurp(f.dir / "log").find("warning"), std::string::npos);
}

TEST(Cli, RefineWithBadCsvIsDataError) {
  const auto f = make_fixture("badcsv");
  const auto scene = datagen::gen_scene(3, 16, 16);
  io::write_pfm(f.dir / "image.pfm", scene.image);
  io::write_pfm(f.dir / "init.pfm", scene.depth);
  io::write_file_atomic(f.dir / "sparse.csv", "0,0,-1.0\n");
  const std::string args = "refine --config " + f.config.string() + " --image " + (f.dir / "image.pfm").string() +
                           " --sparse " + (f.dir / "sparse.csv").string() + " --init-depth " +
                           (f.dir / "init.pfm").string() + " --out " + (f.dir / "refined.pfm").string();
  EXPECT_EQ(run(args, f.dir / "log"), 2);
  EXPECT_NE(slurp(f.dir / "log").find("line 1"), std::string::npos);
}

TEST(Cli, SynthWritesFixtures) {
  const auto dir = fs::temp_directory_path() / "sdr_cli_synth";
  fs::remove_all(dir);
  ASSERT_EQ(run("synth --seed 5 --height 16 --width 20 --n 2 --points 10 --out " + dir.string(),
                fs::temp_directory_path() / "sdr_cli_synth.log"),
            0);
  EXPECT_TRUE(fs::exists(dir / "scene_0001_gt.pfm"));
  const auto gt = io::read_pfm(dir / "scene_0000_gt.pfm");
  EXPECT_EQ(gt.shape(), (Shape{16, 20}));
  const auto s = io::read_sparse_csv(dir / "scene_0000_sparse.csv", 16, 20);
  int n = 0;
  for (float v : s.vec()) n += v > 0;
  EXPECT_EQ(n, 10);
}
