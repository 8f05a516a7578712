#include <gtest/gtest.h>

#include <cmath>

#include "sdr/engine/grad_check.hpp"
#include "sdr/engine/ops.hpp"
#include "sdr/kernels/kernels.hpp"
#include "sdr/rng.hpp"
#include "test_util.hpp"

using namespace sdr;
using sdr::test::naive_conv;
using sdr::test::naive_conv_t;
using sdr::test::random_tensor;

TEST(Conv2d, IdentityKernelReturnsInput) {
  Rng rng(1);
  const auto x = random_tensor({1, 3, 3}, rng);
  const auto y = kernels::conv2d(x, Tensor<double>({1, 1, 1, 1}, 1.0), Tensor<double>(), 1, 0);
  EXPECT_EQ(y, x);
}

TEST(Conv2d, AveragingConstantKeepsInterior) {
  const Tensor<double> x({1, 5, 5}, 2.5);
  const auto y = kernels::conv2d(x, Tensor<double>({1, 1, 3, 3}, 1.0 / 9), Tensor<double>(), 1, 1);
  for (int i = 1; i < 4; ++i)
    for (int j = 1; j < 4; ++j) EXPECT_NEAR(y.at(0, i, j), 2.5, 1e-12);
}

TEST(Conv2d, MatchesNaiveLoops) {
  Rng rng(2);
  for (int stride : {1, 2}) {
    const auto x = random_tensor({1, 4, 4}, rng), w = random_tensor({2, 1, 3, 3}, rng), b = random_tensor({2}, rng);
    const auto got = kernels::conv2d(x, w, b, stride, 1);
    const auto want = naive_conv(x, w, b, stride, 1);
    ASSERT_EQ(got.shape(), want.shape());
    for (std::size_t i = 0; i < got.size(); ++i) EXPECT_NEAR(got[i], want[i], 1e-12);
  }
  const auto x = random_tensor({3, 7, 6}, rng), w = random_tensor({4, 3, 3, 3}, rng);
  const auto got = kernels::conv2d(x, w, Tensor<double>(), 2, 1);
  const auto want = naive_conv(x, w, Tensor<double>(), 2, 1);
  for (std::size_t i = 0; i < got.size(); ++i) EXPECT_NEAR(got[i], want[i], 1e-12);
}

TEST(Conv2d, ShapeMismatchIsConfigError) {
  EXPECT_THROW(kernels::conv2d(Tensor<double>({2, 4, 4}), Tensor<double>({1, 3, 3, 3}), Tensor<double>(), 1, 1),
               ConfigError);
}

TEST(ConvTranspose2d, MatchesScatterDefinition) {
  Rng rng(3);
  const auto x = random_tensor({3, 4, 5}, rng), w = random_tensor({3, 2, 3, 3}, rng), b = random_tensor({2}, rng);
  const auto got = kernels::conv_transpose2d(x, w, b, 2, 1, 1);
  const auto want = naive_conv_t(x, w, b, 2, 1, 1);
  ASSERT_EQ(got.shape(), (Shape{2, 8, 10}));
  for (std::size_t i = 0; i < got.size(); ++i) EXPECT_NEAR(got[i], want[i], 1e-12);
}

TEST(LayerNorm, HandExamples) {
  Tensor<double> mean, rstd;
  const Tensor<double> ones({2}, 1.0), zeros({2});
  const auto flat = kernels::layer_norm(Tensor<double>({2, 1, 1}, 3.0), ones, zeros, 1e-5, &mean, &rstd);
  EXPECT_EQ(flat[0], 0.0);
  EXPECT_EQ(flat[1], 0.0);

  Tensor<double> x({2, 1, 1});
  x[0] = 1;
  x[1] = 3;
  const auto y = kernels::layer_norm(x, ones, zeros, 1e-12, &mean, &rstd);
  EXPECT_NEAR(y[0], -1.0, 1e-9);
  EXPECT_NEAR(y[1], 1.0, 1e-9);

  Rng rng(4);
  const auto z = kernels::layer_norm(random_tensor({4, 3, 3}, rng), Tensor<double>({4}), Tensor<double>({4}, 5.0),
                                     1e-5, &mean, &rstd);
  for (double v : z.vec()) EXPECT_EQ(v, 5.0);
}

TEST(Tape, QuadraticGradient) {
  ad::ParamSet<double> ps;
  ps.add("w", Tensor<double>({2}, std::vector<double>{1, 2}));
  ps.add("unused", Tensor<double>({3}, 7.0));
  ad::Tape<double> tape;
  const auto w = tape.param(ps, "w");
  const auto grads = tape.backward(ad::sum(ad::mul(w, w)), ps);
  EXPECT_EQ(grads.at("w")[0], 2.0);
  EXPECT_EQ(grads.at("w")[1], 4.0);
  for (double g : grads.at("unused").vec()) EXPECT_EQ(g, 0.0);
}

TEST(Tape, NonFiniteValueFailsFast) {
  ad::Tape<double> tape;
  const auto a = tape.constant(Tensor<double>({2}, 1.0));
  EXPECT_THROW(ad::scale(a, std::numeric_limits<double>::infinity()), NumericError);
}

TEST(Tape, NonScalarLossRejected) {
  ad::Tape<double> tape;
  ad::ParamSet<double> ps;
  ps.add("w", Tensor<double>({2}, 1.0));
  EXPECT_THROW(tape.backward(tape.param(ps, "w"), ps), ConfigError);
}

TEST(Tape, ClampUnitClipsAndPassesGradientInside) {
  ad::ParamSet<double> ps;
  ps.add("x", Tensor<double>({3}, std::vector<double>{-0.5, 0.5, 1.5}));
  ad::Tape<double> tape;
  const auto y = ad::clamp_unit(tape.param(ps, "x"));
  EXPECT_EQ(y.value()[0], 0.0);
  EXPECT_EQ(y.value()[1], 0.5);
  EXPECT_EQ(y.value()[2], 1.0);
  const auto g = tape.backward(ad::sum(y), ps).at("x");
  EXPECT_EQ(g[0], 0.0);
  EXPECT_EQ(g[1], 1.0);
  EXPECT_EQ(g[2], 0.0);
}

TEST(GradCheck, SumOfSquaresIsExactToRounding) {
  ad::ParamSet<double> ps;
  Rng rng(5);
  ps.add("x", random_tensor({10}, rng));
  const auto r = ad::grad_check(
      [](ad::Tape<double>& t, const ad::ParamSet<double>& p) {
        const auto x = t.param(p, "x");
        return ad::sum(ad::mul(x, x));
      },
      ps);
  EXPECT_LT(r.max_rel_error, 1e-8);
}

TEST(GradCheck, ZeroStepIsRejected) {
  ad::ParamSet<double> ps;
  ps.add("x", Tensor<double>({1}, 1.0));
  const ad::Objective f = [](ad::Tape<double>& t, const ad::ParamSet<double>& p) { return ad::sum(t.param(p, "x")); };
  EXPECT_THROW(ad::grad_check(f, ps, {0.0, 8, 0}), ConfigError);
}

TEST(GradCheck, LayerNormThenSum) {
  ad::ParamSet<double> ps;
  Rng rng(6);
  ps.add("x", random_tensor({5, 3, 4}, rng));
  ps.add("g", random_tensor({5}, rng, 0.5, 1.5));
  ps.add("b", random_tensor({5}, rng));
  const auto probe = random_tensor({5, 3, 4}, rng);
  const auto r = ad::grad_check(
      [&probe](ad::Tape<double>& t, const ad::ParamSet<double>& p) {
        const auto y = ad::layer_norm(t.param(p, "x"), t.param(p, "g"), t.param(p, "b"));
        return ad::sum(ad::mul(y, t.constant(probe)));
      },
      ps);
  EXPECT_LT(r.max_rel_error, 1e-4);
}

TEST(Kernels, ParallelMatchesSerialReference) {
  Rng rng(7);
  const auto q = random_tensor({4, 9, 11}, rng), k = random_tensor({4, 9, 11}, rng);
  const auto bias = random_tensor({25}, rng), field = random_tensor({9, 11}, rng);
  const auto a = kernels::window_attention(q, k, bias, 5);
  const auto a_ref = kernels::reference::window_attention(q, k, bias, 5);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], a_ref[i], 1e-14);
  const auto g = kernels::window_aggregate(a, field, 5);
  const auto g_ref = kernels::reference::window_aggregate(a, field, 5);
  for (std::size_t i = 0; i < g.size(); ++i) EXPECT_NEAR(g[i], g_ref[i], 1e-14);
}

TEST(Kernels, ResultsIndependentOfThreadCount) {
  Rng rng(8);
  const auto x = random_tensor({6, 12, 12}, rng), w = random_tensor({5, 6, 3, 3}, rng);
  const int saved = kernels::max_threads();
  kernels::set_num_threads(1);
  const auto one = kernels::conv2d(x, w, Tensor<double>(), 1, 1);
  kernels::set_num_threads(3);
  const auto three = kernels::conv2d(x, w, Tensor<double>(), 1, 1);
  kernels::set_num_threads(saved);
  EXPECT_EQ(one, three);
}

TEST(ParamSet, EncodeDecodeIsBitExact) {
  ad::ParamSet<float> ps;
  Rng rng(9);
  ps.add("a.weight", random_tensor({2, 3, 3, 3}, rng).cast<float>());
  ps.add("b", Tensor<float>({1}, -0.0f));
  EXPECT_EQ(ad::decode_params(ad::encode_params(ps)), ps);
  EXPECT_THROW(ps.add("b", Tensor<float>({1})), ConfigError);
  EXPECT_THROW(ps.set("b", Tensor<float>({2})), ConfigError);
}

TEST(ParamSet, TruncatedFileIsDataError) {
  ad::ParamSet<float> ps;
  ps.add("x", Tensor<float>({4}, 1.0f));
  const std::string bytes = ad::encode_params(ps);
  EXPECT_THROW(ad::decode_params(bytes.substr(0, bytes.size() - 3)), DataError);
}
