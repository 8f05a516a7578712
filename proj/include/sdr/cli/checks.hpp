#pragma once

// Built-in verification suites behind the `gradcheck` and `selftest` commands.

#include <string>
#include <vector>

namespace sdr::cli {

struct CheckResult {
  std::string name;
  double value = 0;      // measured error
  double threshold = 0;  // pass iff value < threshold
  bool pass = false;
  std::string detail;
};

enum class GradScale { Tiny, Small };

GradScale parse_grad_scale(const std::string& s);

/// Central-difference checks (64-bit) for each engine op, one MSPN step,
/// two chained steps with the L1+L2 loss, the guidance network and SILog.
std::vector<CheckResult> gradcheck_suite(GradScale scale, double threshold = 1e-3);

/// Optimized step vs brute-force reference, support dilation vs BFS, and
/// attention normalization.
std::vector<CheckResult> selftest_suite();

}  // namespace sdr::cli
