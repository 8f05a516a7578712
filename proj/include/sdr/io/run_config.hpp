#pragma once

// Experiment configuration file (JSON). Every section is optional and falls
// back to defaults; unknown keys are rejected at every level.

#include <cstdint>
#include <filesystem>
#include <string>

#include "sdr/datagen/datagen.hpp"
#include "sdr/objectives/objectives.hpp"
#include "sdr/pipeline/pipeline.hpp"
#include "sdr/trainer/trainer.hpp"

namespace sdr::io {

enum class RunMode { Sdr, Ordinary, Holefill };

RunMode parse_run_mode(const std::string& s);
std::string to_string(RunMode m);

enum class SamplerKind { Points, Lines, Hole };

struct SamplerSpec {
  SamplerKind kind = SamplerKind::Points;
  int count = 50;    // points, also the pre-hole sample size
  int n_lines = 8;
  // Hole rectangle; zero size selects the centered half-size hole.
  datagen::Rect hole;

  bool operator==(const SamplerSpec& o) const {
    return kind == o.kind && count == o.count && n_lines == o.n_lines && hole.top == o.hole.top &&
           hole.left == o.hole.left && hole.height == o.hole.height && hole.width == o.hole.width;
  }
};

struct Paths {
  std::string params;       // model parameters (written by train, read by refine/sweep)
  std::string init_params;  // optional warm start for train
  std::string scenes;       // optional fixture directory
  std::string output_dir = "out";

  bool operator==(const Paths&) const = default;
};

struct RunConfig {
  RunMode mode = RunMode::Sdr;
  std::uint64_t seed = 1;
  Paths paths;
  pipeline::ModelConfig model;
  pipeline::RefineConfig refine;
  trainer::TrainConfig train;
  trainer::DataConfig data;
  SamplerSpec sampler;
  objectives::MetricOptions metrics;
  int eval_scenes = 20;

  bool operator==(const RunConfig& o) const;
};

void validate(const RunConfig& cfg);

/// Parses and validates. Relative paths are resolved against base_dir; input
/// paths (init_params, scenes) must exist.
RunConfig run_config_from_json(const std::string& text, const std::filesystem::path& base_dir = ".");
std::string run_config_to_json(const RunConfig& cfg);

RunConfig load_run_config(const std::filesystem::path& path);
void save_run_config(const RunConfig& cfg, const std::filesystem::path& path);

/// Throws ConfigError naming what when path is empty or missing.
void require_existing(const std::string& path, const std::string& what);

}  // namespace sdr::io
