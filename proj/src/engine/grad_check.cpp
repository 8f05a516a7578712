#include "sdr/engine/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "sdr/rng.hpp"

namespace sdr::ad {
namespace {

double evaluate(const Objective& f, const ParamSet<double>& params) {
  Tape<double> tape(false);
  Var<double> loss = f(tape, params);
  if (loss.value().size() != 1) throw ConfigError("grad_check: objective must return a scalar");
  return loss.value()[0];
}

}  // namespace

GradCheckResult grad_check(const Objective& f, const ParamSet<double>& params, const GradCheckOptions& opts) {
  if (!(opts.eps > 0.0)) throw ConfigError("grad_check: eps must be positive");
  if (opts.max_coords_per_param < 1) throw ConfigError("grad_check: need at least one coordinate per parameter");

  const double first = evaluate(f, params);
  const double second = evaluate(f, params);
  if (first != second) {
    throw NumericError("grad_check: objective is not deterministic (" + std::to_string(first) + " vs " +
                       std::to_string(second) + ")");
  }

  Tape<double> tape;
  Var<double> loss = f(tape, params);
  const auto grads = tape.backward(loss, params);

  GradCheckResult result;
  Rng rng(opts.seed);
  ParamSet<double> probe = params;
  for (const auto& [name, value] : params) {
    std::vector<std::size_t> coords(value.size());
    std::iota(coords.begin(), coords.end(), std::size_t{0});
    const std::size_t n = std::min<std::size_t>(coords.size(), static_cast<std::size_t>(opts.max_coords_per_param));
    // Partial Fisher-Yates: the first n entries are a seeded sample without replacement.
    for (std::size_t i = 0; i < n; ++i) {
      const auto j = static_cast<std::size_t>(rng.uniform_int(static_cast<std::int64_t>(i),
                                                              static_cast<std::int64_t>(coords.size() - 1)));
      std::swap(coords[i], coords[j]);
    }
    Tensor<double>& slot = probe.at(name);
    for (std::size_t s = 0; s < n; ++s) {
      const std::size_t idx = coords[s];
      const double orig = slot[idx];
      slot[idx] = orig + opts.eps;
      const double up = evaluate(f, probe);
      slot[idx] = orig - opts.eps;
      const double down = evaluate(f, probe);
      slot[idx] = orig;
      const double numeric = (up - down) / (2.0 * opts.eps);
      const double analytic = grads.at(name)[idx];
      const double err = std::abs(analytic - numeric) / std::max(1.0, std::abs(numeric));
      ++result.coords_checked;
      if (result.worst_param.empty() || err > result.max_rel_error) {
        result.max_rel_error = err;
        result.worst_param = name;
        result.worst_index = idx;
        result.analytic = analytic;
        result.numeric = numeric;
      }
    }
  }
  return result;
}

}  // namespace sdr::ad
