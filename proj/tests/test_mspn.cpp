#include <gtest/gtest.h>

#include <cmath>
#include <deque>

#include "sdr/engine/ops.hpp"
#include "sdr/kernels/kernels.hpp"
#include "sdr/mspn/mspn.hpp"
#include "test_util.hpp"

using namespace sdr;
using sdr::test::random_tensor;

namespace {

Tensor<double> plane(int H, int W, std::vector<double> v) { return Tensor<double>({H, W}, std::move(v)); }

ad::ParamSet<double> random_layer(int p, int L, int C, std::uint64_t seed) {
  auto params = mspn::init_params<double>({p, L, C}, seed);
  Rng rng(seed + 1);
  for (auto& [name, v] : params)
    for (auto& x : v.vec()) x += rng.uniform(-0.3, 0.3);
  return params;
}

struct Instance {
  Tensor<double> depth, mask, sparse, guidance;
};

Instance random_instance(int H, int W, int C, std::uint64_t seed) {
  Rng rng(seed);
  Instance in{random_tensor({H, W}, rng, 1, 6), random_tensor({H, W}, rng, 0, 1), Tensor<double>({H, W}),
              random_tensor({C, H, W}, rng)};
  for (int k = 0; k < std::max(1, H * W / 10); ++k) {
    const int i = static_cast<int>(rng.uniform_int(0, H - 1)), j = static_cast<int>(rng.uniform_int(0, W - 1));
    in.sparse.at(i, j) = rng.uniform(1, 6);
  }
  return in;
}

}  // namespace

TEST(InitMask, MarksValidPixels) {
  const auto s = plane(2, 3, {0, 2, 0, 1, 0, 3});
  const auto m = mspn::init_mask(s);
  EXPECT_EQ(m, plane(2, 3, {0, 1, 0, 1, 0, 1}));
  EXPECT_EQ(mspn::init_mask(Tensor<double>({4, 4})), Tensor<double>({4, 4}));
  EXPECT_EQ(mspn::init_mask(Tensor<double>({4, 4}, 2.0)), Tensor<double>({4, 4}, 1.0));
}

TEST(ClampSeeds, HandExample) {
  const auto d = plane(2, 2, {2, 2, 2, 2});
  const auto s = plane(2, 2, {0, 5, 0, 0});
  EXPECT_EQ(mspn::clamp_seeds(d, s, mspn::init_mask(s)), plane(2, 2, {2, 5, 2, 2}));
  const Tensor<double> none({2, 2});
  EXPECT_EQ(mspn::clamp_seeds(d, none, none), d);
  const auto full = plane(2, 2, {1, 2, 3, 4});
  EXPECT_EQ(mspn::clamp_seeds(d, full, mspn::init_mask(full)), full);
  EXPECT_THROW(mspn::clamp_seeds(d, s, plane(2, 2, {0, 0.5, 0, 0})), ContractError);
}

TEST(Blend, HandExamples) {
  const auto a = plane(1, 2, {4, 1}), b = plane(1, 2, {8, 3});
  EXPECT_EQ(mspn::blend(a, b, Tensor<double>({1, 2})), a);
  EXPECT_EQ(mspn::blend(a, b, Tensor<double>({1, 2}, 1.0)), b);
  EXPECT_DOUBLE_EQ(mspn::blend(a, b, Tensor<double>({1, 2}, 0.25))[0], 5.0);
  EXPECT_THROW(mspn::blend(a, b, Tensor<double>({1, 2}, 1.5)), ContractError);
}

TEST(ProjectQk, MaskScalesKeysOnly) {
  const int H = 4, W = 5, C = 3;
  const auto params = random_layer(3, 6, C, 11);
  Rng rng(11);
  const auto d = random_tensor({H, W}, rng, 1, 4), g = random_tensor({C, H, W}, rng);
  ad::Tape<double> tape(false);
  const ad::ParamScope<double> scope{&params, ""};
  auto run = [&](const Tensor<double>& m) {
    return mspn::project_qk(tape.constant(d), tape.constant(g), tape.constant(m), scope);
  };
  const auto ones = run(Tensor<double>({H, W}, 1.0));
  const auto zeros = run(Tensor<double>({H, W}));
  Tensor<double> half({H, W}, 1.0);
  half.at(2, 3) = 0.5;
  const auto partial = run(half);
  EXPECT_EQ(zeros.query.value(), ones.query.value());
  for (double v : zeros.key.value().vec()) EXPECT_EQ(v, 0.0);
  for (int l = 0; l < 6; ++l) {
    EXPECT_EQ(partial.key.value().at(l, 2, 3), 0.5 * ones.key.value().at(l, 2, 3));
    EXPECT_EQ(partial.key.value().at(l, 0, 0), ones.key.value().at(l, 0, 0));
  }
}

TEST(WindowAttention, UniformInteriorAndCornerWeights) {
  const Tensor<double> q({2, 5, 5}), k({2, 5, 5}, 1.0);
  const auto a = kernels::window_attention(q, k, Tensor<double>({9}), 3);
  for (int t = 0; t < 9; ++t) EXPECT_NEAR(a.at(t, 2, 2), 1.0 / 9, 1e-15);
  // Corner (0,0): offsets with dy, dx in {0, 1} are the in-bounds ones.
  for (int t = 0; t < 9; ++t) {
    const int dy = t / 3 - 1, dx = t % 3 - 1;
    EXPECT_NEAR(a.at(t, 0, 0), dy >= 0 && dx >= 0 ? 0.25 : 0.0, 1e-15);
  }
  Rng rng(12);
  const auto one = kernels::window_attention(random_tensor({2, 4, 4}, rng), random_tensor({2, 4, 4}, rng),
                                             random_tensor({1}, rng), 1);
  for (double v : one.vec()) EXPECT_EQ(v, 1.0);
}

TEST(WindowAttention, WeightsNormalizedAndNonNegative) {
  Rng rng(13);
  for (int p : {3, 5, 13}) {
    const auto a = kernels::window_attention(random_tensor({4, 10, 9}, rng, -3, 3), random_tensor({4, 10, 9}, rng, -3, 3),
                                             random_tensor({p * p}, rng), p);
    for (int i = 0; i < 10; ++i)
      for (int j = 0; j < 9; ++j) {
        double s = 0;
        for (int t = 0; t < p * p; ++t) {
          EXPECT_GE(a.at(t, i, j), 0.0);
          s += a.at(t, i, j);
        }
        EXPECT_NEAR(s, 1.0, 1e-12);
      }
  }
}

TEST(Propagate, ConstantFieldAndSingleSeedMask) {
  Rng rng(14);
  const int H = 6, W = 7, p = 3;
  ad::Tape<double> tape(false);
  const auto attn = kernels::window_attention(random_tensor({2, H, W}, rng), random_tensor({2, H, W}, rng),
                                              random_tensor({9}, rng), p);
  const auto a = tape.constant(attn);
  const auto c = mspn::propagate(a, tape.constant(Tensor<double>({H, W}, 3.25)), tape.constant(Tensor<double>({H, W}, 1.0)), p);
  for (double v : c.refined.value().vec()) EXPECT_NEAR(v, 3.25, 1e-14);
  for (double v : c.mask.value().vec()) EXPECT_NEAR(v, 1.0, 1e-14);

  // Uniform attention and a single mask pixel at (3,3).
  const auto uniform = kernels::window_attention(Tensor<double>({1, 7, 7}), Tensor<double>({1, 7, 7}),
                                                 Tensor<double>({9}), p);
  Tensor<double> m({7, 7});
  m.at(3, 3) = 1.0;
  const auto out = mspn::propagate(tape.constant(uniform), tape.constant(Tensor<double>({7, 7}, 1.0)),
                                   tape.constant(m), p);
  for (int i = 0; i < 7; ++i)
    for (int j = 0; j < 7; ++j) {
      const bool near = std::abs(i - 3) <= 1 && std::abs(j - 3) <= 1;
      EXPECT_NEAR(out.mask.value().at(i, j), near ? 1.0 / 9 : 0.0, 1e-15);
    }
}

TEST(Step, WindowOneIsIdentityUpToClamp) {
  auto params = mspn::init_params<double>({1, 4, 3}, 15);
  for (auto& [name, v] : params) v.fill(0.0);
  const auto in = random_instance(5, 6, 3, 15);
  const auto [d, m] = mspn::step(in.depth, in.mask, in.sparse, in.guidance, params, {1, true});
  const auto want = mspn::clamp_seeds(in.depth, in.sparse, mspn::init_mask(in.sparse));
  for (std::size_t i = 0; i < d.size(); ++i) EXPECT_NEAR(d[i], want[i], 1e-14);  // lerp rounding only
  EXPECT_EQ(m, in.mask);
}

TEST(Step, ClosedGateKeepsDepth) {
  const auto params = random_layer(5, 4, 3, 16);
  auto in = random_instance(6, 6, 3, 16);
  in.sparse.fill(0.0);
  const auto out = mspn::step(in.depth, Tensor<double>({6, 6}), in.sparse, in.guidance, params, {5, true});
  EXPECT_EQ(out.first, in.depth);
}

TEST(Step, MatchesBruteForceReference) {
  for (int inst = 0; inst < 8; ++inst) {
    const int p = (inst % 4) * 2 + 1 == 7 ? 13 : (inst % 4) * 2 + 1;
    const auto params = random_layer(p, 4, 3, 100 + inst);
    const auto in = random_instance(8, 8, 3, 200 + inst);
    const DepthNorm norm = inst % 2 ? DepthNorm{3.0, 3.0} : DepthNorm{};
    const auto fast = mspn::step(in.depth, in.mask, in.sparse, in.guidance, params, {p, true, norm});
    const auto ref = mspn::reference_step(in.depth, in.mask, in.sparse, in.guidance, params, p, norm);
    for (std::size_t i = 0; i < fast.first.size(); ++i) {
      EXPECT_NEAR(fast.first[i], ref.first[i], 1e-12);
      EXPECT_NEAR(fast.second[i], ref.second[i], 1e-12);
    }
  }
}

TEST(Step, RefinedWithinWindowRangeAndMaskInUnitInterval) {
  for (int inst = 0; inst < 5; ++inst) {
    const int p = inst % 2 ? 13 : 3, H = 12, W = 10, r = p / 2;
    const auto params = random_layer(p, 4, 3, 300 + inst);
    const auto in = random_instance(H, W, 3, 400 + inst);
    const auto dt = mspn::clamp_seeds(in.depth, in.sparse, mspn::init_mask(in.sparse));
    const auto [d, m] = mspn::step(in.depth, in.mask, in.sparse, in.guidance, params, {p, true});
    for (int i = 0; i < H; ++i)
      for (int j = 0; j < W; ++j) {
        double lo = 1e9, hi = -1e9;
        for (int a = std::max(0, i - r); a <= std::min(H - 1, i + r); ++a)
          for (int b = std::max(0, j - r); b <= std::min(W - 1, j + r); ++b) {
            lo = std::min(lo, dt.at(a, b));
            hi = std::max(hi, dt.at(a, b));
          }
        EXPECT_GE(d.at(i, j), lo - 1e-12);
        EXPECT_LE(d.at(i, j), hi + 1e-12);
        EXPECT_GE(m.at(i, j), 0.0);
        EXPECT_LE(m.at(i, j), 1.0);
      }
  }
}

TEST(Step, MaskSupportDilatesByWindowRadius) {
  for (int inst = 0; inst < 10; ++inst) {
    const int p = inst % 2 ? 13 : 3, H = 16, W = 16, r = p / 2;
    const auto params = random_layer(p, 4, 3, 500 + inst);
    auto in = random_instance(H, W, 3, 600 + inst);
    Rng rng(700 + inst);
    Tensor<double> m({H, W});
    for (int k = 0; k < 1 + inst % 3; ++k)
      m.at(static_cast<int>(rng.uniform_int(0, H - 1)), static_cast<int>(rng.uniform_int(0, W - 1))) = 1.0;
    // BFS with 8-connectivity, r layers deep.
    std::vector<int> dist(H * W, -1);
    std::deque<int> q;
    for (int i = 0; i < H * W; ++i)
      if (m[i] > 0) {
        dist[i] = 0;
        q.push_back(i);
      }
    while (!q.empty()) {
      const int c = q.front();
      q.pop_front();
      if (dist[c] == r) continue;
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
          const int a = c / W + dy, b = c % W + dx;
          if (a < 0 || a >= H || b < 0 || b >= W || dist[a * W + b] >= 0) continue;
          dist[a * W + b] = dist[c] + 1;
          q.push_back(a * W + b);
        }
    }
    const auto next = mspn::step(in.depth, m, in.sparse, in.guidance, params, {p, true}).second;
    for (int i = 0; i < H * W; ++i) EXPECT_EQ(next[i] > 0, dist[i] >= 0) << "pixel " << i;
  }
}

TEST(Step, FrozenMaskIsKept) {
  const auto params = random_layer(3, 4, 3, 17);
  const auto in = random_instance(6, 6, 3, 17);
  EXPECT_EQ(mspn::step(in.depth, in.mask, in.sparse, in.guidance, params, {3, false}).second, in.mask);
}

TEST(Init, MaskedKeysStartWithFixedBonus) {
  const auto params = mspn::init_params<float>({13, 16, 64}, 18);
  double bonus = 0;
  for (std::size_t l = 0; l < 16; ++l) bonus += double(params.at("f_q.norm.beta")[l]) * params.at("f_k.norm.beta")[l];
  EXPECT_NEAR(bonus, mspn::kInitMaskedKeyBonus, 1e-5);
  EXPECT_EQ(params.at("rel_bias")[84], 0.0f);
  EXPECT_FLOAT_EQ(params.at("rel_bias")[0], static_cast<float>(-6 * mspn::kInitDistanceSlope));
  EXPECT_THROW(mspn::init_params<float>({4, 16, 64}, 1), ConfigError);
}
