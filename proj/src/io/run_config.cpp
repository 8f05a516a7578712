#include "sdr/io/run_config.hpp"

#include <json.hpp>

#include <set>

#include "sdr/io/files.hpp"

namespace sdr::io {
namespace {

using nlohmann::json;

// Section reader: typed lookups with defaults, and rejection of unknown keys.
class Section {
 public:
  Section(const json& j, std::string ctx) : j_(j), ctx_(std::move(ctx)) {
    if (!j_.is_object()) throw ConfigError(ctx_ + ": expected an object");
  }
  ~Section() noexcept(false) {
    if (std::uncaught_exceptions()) return;
    for (const auto& [key, _] : j_.items()) {
      if (!seen_.count(key)) throw ConfigError(ctx_ + ": unknown key '" + key + "'");
    }
  }

  template <typename T>
  void read(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception& e) {
      throw ConfigError(ctx_ + "." + key + ": " + e.what());
    }
  }
  bool has(const char* key) {
    seen_.insert(key);
    return j_.contains(key);
  }
  const json& at(const char* key) {
    seen_.insert(key);
    return j_.at(key);
  }
  const std::string& ctx() const { return ctx_; }

 private:
  const json& j_;
  std::string ctx_;
  std::set<std::string> seen_;
};

std::string sampler_name(SamplerKind k) {
  switch (k) {
    case SamplerKind::Points: return "points";
    case SamplerKind::Lines: return "lines";
    case SamplerKind::Hole: return "hole";
  }
  return "points";
}

SamplerKind parse_sampler(const std::string& s) {
  if (s == "points") return SamplerKind::Points;
  if (s == "lines") return SamplerKind::Lines;
  if (s == "hole") return SamplerKind::Hole;
  throw ConfigError("sampler.kind: unknown value '" + s + "' (expected points, lines or hole)");
}

std::string resolve(const std::string& p, const std::filesystem::path& base) {
  if (p.empty()) return p;
  const std::filesystem::path path(p);
  return path.is_absolute() ? p : (base / path).lexically_normal().string();
}

}  // namespace

RunMode parse_run_mode(const std::string& s) {
  if (s == "sdr") return RunMode::Sdr;
  if (s == "ordinary") return RunMode::Ordinary;
  if (s == "holefill") return RunMode::Holefill;
  throw ConfigError("mode: unknown value '" + s + "' (expected sdr, ordinary or holefill)");
}

std::string to_string(RunMode m) {
  switch (m) {
    case RunMode::Sdr: return "sdr";
    case RunMode::Ordinary: return "ordinary";
    case RunMode::Holefill: return "holefill";
  }
  return "sdr";
}

bool RunConfig::operator==(const RunConfig& o) const {
  return mode == o.mode && seed == o.seed && paths == o.paths && model == o.model && refine == o.refine &&
         train == o.train && data == o.data && sampler == o.sampler && metrics.units == o.metrics.units &&
         metrics.literal_root_normalization == o.metrics.literal_root_normalization && eval_scenes == o.eval_scenes;
}

void require_existing(const std::string& path, const std::string& what) {
  if (path.empty()) throw ConfigError(what + ": no path given");
  if (!std::filesystem::exists(path)) throw ConfigError(what + ": '" + path + "' does not exist");
}

void validate(const RunConfig& cfg) {
  pipeline::validate(cfg.refine);
  trainer::validate(cfg.train);
  trainer::validate(cfg.data);
  if (cfg.refine.window != cfg.model.window) {
    throw ConfigError("refine.window (" + std::to_string(cfg.refine.window) + ") must equal model.window (" +
                      std::to_string(cfg.model.window) + ")");
  }
  if (cfg.model.qk_channels < 1 || cfg.model.guidance.out_channels < 1 || cfg.model.guidance.hf_channels < 1) {
    throw ConfigError("model: channel counts must be positive");
  }
  for (int w : cfg.model.guidance.widths)
    if (w < 1) throw ConfigError("model.widths: entries must be positive");
  if (cfg.mode == RunMode::Ordinary && !cfg.model.guidance.depth_head) {
    throw ConfigError("mode 'ordinary' needs model.depth_head = true");
  }
  if (cfg.sampler.count < 0 || cfg.sampler.n_lines < 1) throw ConfigError("sampler: count >= 0 and n_lines >= 1");
  const auto& h = cfg.sampler.hole;
  if (h.top < 0 || h.left < 0 || h.height < 0 || h.width < 0) throw ConfigError("sampler.hole: negative entries");
  if (cfg.eval_scenes < 1) throw ConfigError("eval_scenes must be >= 1");
}

RunConfig run_config_from_json(const std::string& text, const std::filesystem::path& base_dir) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("run config: ") + e.what());
  }
  RunConfig cfg;
  {
    Section top(root, "config");
    std::string mode = to_string(cfg.mode);
    top.read("mode", mode);
    cfg.mode = parse_run_mode(mode);
    top.read("seed", cfg.seed);
    top.read("eval_scenes", cfg.eval_scenes);

    if (top.has("paths")) {
      Section s(top.at("paths"), "paths");
      s.read("params", cfg.paths.params);
      s.read("init_params", cfg.paths.init_params);
      s.read("scenes", cfg.paths.scenes);
      s.read("output_dir", cfg.paths.output_dir);
    }
    if (top.has("model")) {
      Section s(top.at("model"), "model");
      auto& g = cfg.model.guidance;
      s.read("hf_channels", g.hf_channels);
      s.read("widths", g.widths);
      s.read("guidance_channels", g.out_channels);
      s.read("depth_head", g.depth_head);
      s.read("qk_channels", cfg.model.qk_channels);
      s.read("window", cfg.model.window);
    }
    if (top.has("refine")) {
      Section s(top.at("refine"), "refine");
      auto& r = cfg.refine;
      s.read("window", r.window);
      s.read("kappa", r.kappa);
      s.read("min_iters", r.min_iters);
      s.read("second_layer_iters", r.second_layer_iters);
      std::string m = pipeline::to_string(r.mode);
      s.read("mode", m);
      r.mode = pipeline::parse_sample_mode(m);
      s.read("final_seed_clamp", r.final_seed_clamp);
      s.read("max_layer1_iters", r.max_layer1_iters);
      s.read("update_mask", r.update_mask);
    }
    if (top.has("train")) {
      Section s(top.at("train"), "train");
      auto& t = cfg.train;
      s.read("epochs", t.epochs);
      s.read("steps_per_epoch", t.steps_per_epoch);
      s.read("batch_size", t.batch_size);
      s.read("learning_rate", t.learning_rate);
      s.read("milestones", t.milestones);
      s.read("beta1", t.beta1);
      s.read("beta2", t.beta2);
      s.read("adam_eps", t.adam_eps);
      s.read("weight_decay", t.weight_decay);
      std::string loss = trainer::to_string(t.loss);
      s.read("loss", loss);
      t.loss = trainer::parse_loss(loss);
      s.read("hole_fraction", t.hole_fraction);
      s.read("max_layer1_iters", t.max_layer1_iters);
      s.read("seed", t.seed);
      if (s.has("sparsity")) {
        Section sp(s.at("sparsity"), "train.sparsity");
        auto& p = t.sparsity;
        std::string kind = p.kind == datagen::SparsityKind::Points ? "points" : "lines";
        sp.read("kind", kind);
        if (kind != "points" && kind != "lines") throw ConfigError("train.sparsity.kind: expected points or lines");
        p.kind = kind == "points" ? datagen::SparsityKind::Points : datagen::SparsityKind::Lines;
        sp.read("min_points", p.min_points);
        sp.read("max_points", p.max_points);
        sp.read("line_choices", p.line_choices);
        sp.read("area_scaling", p.area_scaling);
      }
    }
    if (top.has("data")) {
      Section s(top.at("data"), "data");
      s.read("height", cfg.data.height);
      s.read("width", cfg.data.width);
      s.read("complexity", cfg.data.complexity);
      s.read("severity", cfg.data.severity);
    }
    if (top.has("sampler")) {
      Section s(top.at("sampler"), "sampler");
      std::string kind = sampler_name(cfg.sampler.kind);
      s.read("kind", kind);
      cfg.sampler.kind = parse_sampler(kind);
      s.read("count", cfg.sampler.count);
      s.read("n_lines", cfg.sampler.n_lines);
      std::vector<int> rect;
      s.read("hole", rect);
      if (s.has("hole")) {
        if (rect.size() != 4) throw ConfigError("sampler.hole: expected [top, left, height, width]");
        cfg.sampler.hole = {rect[0], rect[1], rect[2], rect[3]};
      }
    }
    if (top.has("metrics")) {
      Section s(top.at("metrics"), "metrics");
      std::string units = objectives::to_string(cfg.metrics.units);
      s.read("units", units);
      cfg.metrics.units = objectives::parse_units(units);
      s.read("literal_root_normalization", cfg.metrics.literal_root_normalization);
    }
  }
  const std::filesystem::path base = std::filesystem::absolute(base_dir);
  cfg.paths.params = resolve(cfg.paths.params, base);
  cfg.paths.init_params = resolve(cfg.paths.init_params, base);
  cfg.paths.scenes = resolve(cfg.paths.scenes, base);
  cfg.paths.output_dir = resolve(cfg.paths.output_dir, base);
  validate(cfg);
  if (!cfg.paths.init_params.empty()) require_existing(cfg.paths.init_params, "paths.init_params");
  if (!cfg.paths.scenes.empty()) require_existing(cfg.paths.scenes, "paths.scenes");
  return cfg;
}

std::string run_config_to_json(const RunConfig& cfg) {
  const auto& g = cfg.model.guidance;
  const auto& r = cfg.refine;
  const auto& t = cfg.train;
  const auto& h = cfg.sampler.hole;
  json j = {
      {"mode", to_string(cfg.mode)},
      {"seed", cfg.seed},
      {"eval_scenes", cfg.eval_scenes},
      {"paths",
       {{"params", cfg.paths.params},
        {"init_params", cfg.paths.init_params},
        {"scenes", cfg.paths.scenes},
        {"output_dir", cfg.paths.output_dir}}},
      {"model",
       {{"hf_channels", g.hf_channels},
        {"widths", g.widths},
        {"guidance_channels", g.out_channels},
        {"depth_head", g.depth_head},
        {"qk_channels", cfg.model.qk_channels},
        {"window", cfg.model.window}}},
      {"refine",
       {{"window", r.window},
        {"kappa", r.kappa},
        {"min_iters", r.min_iters},
        {"second_layer_iters", r.second_layer_iters},
        {"mode", pipeline::to_string(r.mode)},
        {"final_seed_clamp", r.final_seed_clamp},
        {"max_layer1_iters", r.max_layer1_iters},
        {"update_mask", r.update_mask}}},
      {"train",
       {{"epochs", t.epochs},
        {"steps_per_epoch", t.steps_per_epoch},
        {"batch_size", t.batch_size},
        {"learning_rate", t.learning_rate},
        {"milestones", t.milestones},
        {"beta1", t.beta1},
        {"beta2", t.beta2},
        {"adam_eps", t.adam_eps},
        {"weight_decay", t.weight_decay},
        {"loss", trainer::to_string(t.loss)},
        {"hole_fraction", t.hole_fraction},
        {"max_layer1_iters", t.max_layer1_iters},
        {"seed", t.seed},
        {"sparsity",
         {{"kind", t.sparsity.kind == datagen::SparsityKind::Points ? "points" : "lines"},
          {"min_points", t.sparsity.min_points},
          {"max_points", t.sparsity.max_points},
          {"line_choices", t.sparsity.line_choices},
          {"area_scaling", t.sparsity.area_scaling}}}}},
      {"data",
       {{"height", cfg.data.height},
        {"width", cfg.data.width},
        {"complexity", cfg.data.complexity},
        {"severity", cfg.data.severity}}},
      {"sampler",
       {{"kind", sampler_name(cfg.sampler.kind)},
        {"count", cfg.sampler.count},
        {"n_lines", cfg.sampler.n_lines},
        {"hole", {h.top, h.left, h.height, h.width}}}},
      {"metrics",
       {{"units", objectives::to_string(cfg.metrics.units)},
        {"literal_root_normalization", cfg.metrics.literal_root_normalization}}},
  };
  return j.dump(2) + "\n";
}

RunConfig load_run_config(const std::filesystem::path& path) {
  return run_config_from_json(read_file(path), path.has_parent_path() ? path.parent_path() : ".");
}

void save_run_config(const RunConfig& cfg, const std::filesystem::path& path) {
  write_file_atomic(path, run_config_to_json(cfg));
}

}  // namespace sdr::io
