#include "sdr/cli/checks.hpp"

#include <algorithm>
#include <cmath>
#include <deque>

#include "sdr/engine/grad_check.hpp"
#include "sdr/engine/ops.hpp"
#include "sdr/guidance/guidance.hpp"
#include "sdr/kernels/kernels.hpp"
#include "sdr/mspn/mspn.hpp"
#include "sdr/objectives/objectives.hpp"
#include "sdr/rng.hpp"

namespace sdr::cli {
namespace {

using ad::ParamSet;
using ad::Tape;
using ad::Var;

Tensor<double> random_tensor(Shape shape, Rng& rng, double lo = -1, double hi = 1) {
  Tensor<double> t(std::move(shape));
  for (auto& v : t.vec()) v = rng.uniform(lo, hi);
  return t;
}

CheckResult grad_result(const std::string& name, const ad::Objective& f, const ParamSet<double>& p, double thr,
                        double fd_step = 1e-4) {
  const auto r = ad::grad_check(f, p, {fd_step, 64, 11});
  CheckResult c{name, r.max_rel_error, thr, r.max_rel_error < thr, {}};
  c.detail = "worst " + r.worst_param + "[" + std::to_string(r.worst_index) + "] over " +
             std::to_string(r.coords_checked) + " coords";
  return c;
}

// Weighted sum with fixed random weights, so every output element matters.
Var<double> probe(const Var<double>& y, std::uint64_t seed) {
  Rng rng(seed);
  Tape<double>& tape = y.tape();
  return ad::sum(ad::mul(y, tape.constant(random_tensor(y.shape(), rng))));
}

// Depth standardization used by the step fixtures; not the identity, so the
// affine input path is covered too.
const DepthNorm kFixtureNorm{3.0, 3.0};

struct StepFixture {
  int H, W, C, L, p;
  Tensor<double> depth, sparse, guidance;
};

StepFixture make_step_fixture(int H, int W, int C, int L, int p, std::uint64_t seed) {
  Rng rng(seed);
  StepFixture f{H, W, C, L, p, random_tensor({H, W}, rng, 1, 5), Tensor<double>({H, W}),
                random_tensor({C, H, W}, rng)};
  for (int k = 0; k < std::max(2, H * W / 8); ++k) {
    const auto i = rng.uniform_int(0, H - 1), j = rng.uniform_int(0, W - 1);
    f.sparse.at(static_cast<int>(i), static_cast<int>(j)) = rng.uniform(1, 5);
  }
  return f;
}

ParamSet<double> perturbed_mspn(const StepFixture& f, std::uint64_t seed) {
  ParamSet<double> p = mspn::init_params<double>({f.p, f.L, f.C}, seed);
  // Non-trivial affine and bias terms so their gradients are exercised.
  Rng rng(seed + 1);
  for (auto& [name, v] : p) {
    if (name.find("norm") != std::string::npos || name == "rel_bias" || name.find("bias") != std::string::npos) {
      for (auto& x : v.vec()) x += rng.uniform(-0.3, 0.3);
    }
  }
  return p;
}

std::vector<std::vector<bool>> dilate_bfs(const std::vector<std::vector<bool>>& src, int r) {
  const int H = static_cast<int>(src.size()), W = static_cast<int>(src[0].size());
  std::vector<std::vector<int>> dist(H, std::vector<int>(W, -1));
  std::deque<std::pair<int, int>> q;
  for (int i = 0; i < H; ++i)
    for (int j = 0; j < W; ++j)
      if (src[i][j]) {
        dist[i][j] = 0;
        q.emplace_back(i, j);
      }
  while (!q.empty()) {
    auto [i, j] = q.front();
    q.pop_front();
    if (dist[i][j] == r) continue;
    for (int di = -1; di <= 1; ++di)
      for (int dj = -1; dj <= 1; ++dj) {
        const int a = i + di, b = j + dj;
        if (a < 0 || a >= H || b < 0 || b >= W || dist[a][b] >= 0) continue;
        dist[a][b] = dist[i][j] + 1;
        q.emplace_back(a, b);
      }
  }
  std::vector<std::vector<bool>> out(H, std::vector<bool>(W));
  for (int i = 0; i < H; ++i)
    for (int j = 0; j < W; ++j) out[i][j] = dist[i][j] >= 0;
  return out;
}

}  // namespace

GradScale parse_grad_scale(const std::string& s) {
  if (s == "tiny") return GradScale::Tiny;
  if (s == "small") return GradScale::Small;
  throw ConfigError("--scale must be tiny or small, got '" + s + "'");
}

std::vector<CheckResult> gradcheck_suite(GradScale scale, double thr) {
  const int n = scale == GradScale::Tiny ? 8 : 12;
  std::vector<CheckResult> out;
  Rng rng(2024);

  {
    ParamSet<double> p;
    p.add("x", random_tensor({2, n, n}, rng));
    p.add("w", random_tensor({3, 2, 3, 3}, rng));
    p.add("b", random_tensor({3}, rng));
    out.push_back(grad_result(
        "op.conv2d",
        [](Tape<double>& t, const ParamSet<double>& ps) {
          return probe(ad::conv2d(t.param(ps, "x"), t.param(ps, "w"), t.param(ps, "b"), 2, 1), 1);
        },
        p, thr));
  }
  {
    ParamSet<double> p;
    p.add("x", random_tensor({3, n / 2, n / 2}, rng));
    p.add("w", random_tensor({3, 2, 3, 3}, rng));
    p.add("b", random_tensor({2}, rng));
    out.push_back(grad_result(
        "op.conv_transpose2d",
        [](Tape<double>& t, const ParamSet<double>& ps) {
          return probe(ad::conv_transpose2d(t.param(ps, "x"), t.param(ps, "w"), t.param(ps, "b"), 2, 1, 1), 2);
        },
        p, thr));
  }
  {
    ParamSet<double> p;
    p.add("x", random_tensor({5, n, n}, rng));
    p.add("g", random_tensor({5}, rng, 0.5, 1.5));
    p.add("b", random_tensor({5}, rng));
    out.push_back(grad_result(
        "op.layer_norm",
        [](Tape<double>& t, const ParamSet<double>& ps) {
          return probe(ad::layer_norm(t.param(ps, "x"), t.param(ps, "g"), t.param(ps, "b"), 1e-5), 3);
        },
        p, thr));
  }
  {
    ParamSet<double> p;
    p.add("q", random_tensor({4, n, n}, rng));
    p.add("k", random_tensor({4, n, n}, rng));
    p.add("bias", random_tensor({9}, rng));
    p.add("field", random_tensor({n, n}, rng, 1, 3));
    out.push_back(grad_result(
        "op.window_attention+aggregate",
        [](Tape<double>& t, const ParamSet<double>& ps) {
          const auto a = ad::window_attention(t.param(ps, "q"), t.param(ps, "k"), t.param(ps, "bias"), 3);
          return ad::add(probe(a, 4), probe(ad::window_aggregate(a, t.param(ps, "field"), 3), 5));
        },
        p, thr));
  }
  {
    ParamSet<double> p;
    p.add("a", random_tensor({n, n}, rng));
    p.add("b", random_tensor({n, n}, rng));
    p.add("m", random_tensor({n, n}, rng, 0, 1));
    p.add("x", random_tensor({2, n, n}, rng));
    out.push_back(grad_result(
        "op.elementwise",
        [n](Tape<double>& t, const ParamSet<double>& ps) {
          const auto a = t.param(ps, "a"), b = t.param(ps, "b"), m = t.param(ps, "m"), x = t.param(ps, "x");
          auto y = ad::lerp(ad::softplus(a), ad::relu(b), m);
          auto z = ad::mul_plane(x, ad::scale(ad::sub(y, ad::mul(a, b)), 0.5));
          auto c = ad::concat<double>({z, y});
          auto pr = ad::pad_reflect(c, 2, 1);
          auto cr = ad::crop(pr, n - 1, n);
          return ad::add(probe(cr, 6), probe(ad::reshape(y, {n * n}), 7));
        },
        p, thr));
  }

  const StepFixture f = make_step_fixture(n, n, 4, 4, 3, 99);
  const Tensor<double> seeds = mspn::init_mask(f.sparse);
  {
    ParamSet<double> p = perturbed_mspn(f, 5);
    p.add("guidance", f.guidance);
    p.add("depth", f.depth);
    out.push_back(grad_result(
        "mspn.step",
        [&f, &seeds](Tape<double>& t, const ParamSet<double>& ps) {
          mspn::StepState<double> s{t.param(ps, "depth"), t.constant(seeds)};
          s = mspn::step(s, t.constant(f.sparse), t.constant(seeds), t.param(ps, "guidance"),
                         ad::ParamScope<double>{&ps, ""}, {f.p, true, kFixtureNorm});
          return ad::add(probe(s.depth, 8), probe(s.mask, 9));
        },
        p, thr));
  }
  {
    ParamSet<double> p = perturbed_mspn(f, 6);
    p.add("guidance", f.guidance);
    Rng g(7);
    const Tensor<double> gt = random_tensor({n, n}, g, 1, 5);
    out.push_back(grad_result(
        "mspn.two_steps+l1l2",
        [&f, &seeds, gt](Tape<double>& t, const ParamSet<double>& ps) {
          mspn::StepState<double> s{t.constant(f.depth), t.constant(seeds)};
          for (int k = 0; k < 2; ++k) {
            s = mspn::step(s, t.constant(f.sparse), t.constant(seeds), t.param(ps, "guidance"),
                           ad::ParamScope<double>{&ps, ""}, {f.p, true, kFixtureNorm});
          }
          return objectives::loss_l1l2(s.depth, gt);
        },
        p, thr));
  }
  {
    guidance::GuidanceConfig gc{2, {3, 4, 4}, 3, true};
    const int gh = scale == GradScale::Tiny ? 8 : 16;
    ParamSet<double> p = guidance::init_params<double>(gc, 3);
    Rng g(8);
    // Zero biases leave whole ReLU maps dead, and layer norm over a constant
    // map turns finite differences into noise.
    for (auto& [name, v] : p) {
      if (name.find("bias") != std::string::npos || name.find("beta") != std::string::npos) {
        for (auto& x : v.vec()) x += g.uniform(-0.5, 0.5);
      }
    }
    const Tensor<double> image = random_tensor({3, gh, gh + 2}, g, 0, 1);
    Tensor<double> sparse({gh, gh + 2});
    sparse.at(1, 2) = 2.0;
    sparse.at(5, 6) = 3.0;
    const Tensor<double> d0 = random_tensor({gh, gh + 2}, g, 1, 4);
    out.push_back(grad_result(
        "guidance.forward+head",
        [image, sparse, d0](Tape<double>& t, const ParamSet<double>& ps) {
          const ad::ParamScope<double> sc{&ps, ""};
          auto gf = guidance::guidance_forward(t.constant(image), t.constant(sparse), t.constant(d0), sc, kFixtureNorm);
          auto both = guidance::predict_initial_depth(t.constant(image), t.constant(sparse), sc, kFixtureNorm);
          return ad::add(ad::add(probe(gf, 10), probe(both.guidance, 11)), probe(both.depth, 12));
        },
        p, thr, 1e-6));
  }
  {
    ParamSet<double> p;
    p.add("pred", random_tensor({n, n}, rng, 1, 4));
    const Tensor<double> gt = random_tensor({n, n}, rng, 1, 4);
    out.push_back(grad_result(
        "loss.silog",
        [gt](Tape<double>& t, const ParamSet<double>& ps) { return objectives::loss_silog(t.param(ps, "pred"), gt); },
        p, thr));
  }
  return out;
}

std::vector<CheckResult> selftest_suite() {
  std::vector<CheckResult> out;
  {
    double worst = 0;
    const int windows[] = {1, 3, 5, 13};
    for (int inst = 0; inst < 12; ++inst) {
      Rng rng(500 + inst);
      const int H = static_cast<int>(rng.uniform_int(4, 12)), W = static_cast<int>(rng.uniform_int(4, 12));
      const int p = windows[inst % 4];
      StepFixture f = make_step_fixture(H, W, 3, 4, p, 600 + inst);
      ParamSet<double> params = perturbed_mspn(f, 700 + inst);
      const Tensor<double> mask = random_tensor({H, W}, rng, 0, 1);
      const auto fast = mspn::step(f.depth, mask, f.sparse, f.guidance, params, {p, true, kFixtureNorm});
      const auto ref = mspn::reference_step(f.depth, mask, f.sparse, f.guidance, params, p, kFixtureNorm);
      for (std::size_t i = 0; i < fast.first.size(); ++i) {
        worst = std::max(worst, std::abs(fast.first[i] - ref.first[i]));
        worst = std::max(worst, std::abs(fast.second[i] - ref.second[i]));
      }
    }
    out.push_back({"oracle_equivalence", worst, 1e-6, worst < 1e-6, "12 instances, p in {1,3,5,13}"});
  }
  {
    int mismatched = 0;
    for (int inst = 0; inst < 6; ++inst) {
      Rng rng(800 + inst);
      const int p = inst % 2 ? 13 : 3, H = 16, W = 16;
      StepFixture f = make_step_fixture(H, W, 3, 4, p, 900 + inst);
      ParamSet<double> params = perturbed_mspn(f, 1000 + inst);
      Tensor<double> mask({H, W});
      std::vector<std::vector<bool>> support(H, std::vector<bool>(W, false));
      for (int k = 0; k < 3; ++k) {
        const int i = static_cast<int>(rng.uniform_int(0, H - 1)), j = static_cast<int>(rng.uniform_int(0, W - 1));
        mask.at(i, j) = rng.uniform(0.5, 1.0);
        support[i][j] = true;
      }
      const auto next = mspn::step(f.depth, mask, f.sparse, f.guidance, params, {p, true, kFixtureNorm}).second;
      const auto expect = dilate_bfs(support, p / 2);
      for (int i = 0; i < H; ++i)
        for (int j = 0; j < W; ++j) mismatched += (next.at(i, j) > 0) != expect[i][j];
    }
    out.push_back({"mask_dilation", static_cast<double>(mismatched), 0.5, mismatched == 0, "6 patterns, p in {3,13}"});
  }
  {
    double worst = 0;
    for (int inst = 0; inst < 4; ++inst) {
      Rng rng(1100 + inst);
      const int p = 2 * inst + 3;
      const Tensor<double> q = random_tensor({4, 10, 11}, rng, -2, 2), k = random_tensor({4, 10, 11}, rng, -2, 2);
      const Tensor<double> bias = random_tensor({p * p}, rng);
      const Tensor<double> a = kernels::window_attention(q, k, bias, p);
      for (int i = 0; i < 10; ++i) {
        for (int j = 0; j < 11; ++j) {
          double s = 0;
          for (int t = 0; t < p * p; ++t) {
            const double v = a.at(t, i, j);
            if (v < 0) worst = std::max(worst, 1.0);
            s += v;
          }
          worst = std::max(worst, std::abs(s - 1));
        }
      }
    }
    out.push_back({"attention_normalization", worst, 1e-5, worst < 1e-5, "4 fields, p in {3,5,7,9}"});
  }
  return out;
}

}  // namespace sdr::cli
