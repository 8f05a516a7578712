#include <gtest/gtest.h>

#include <cmath>

#include "sdr/engine/grad_check.hpp"
#include "sdr/objectives/objectives.hpp"
#include "test_util.hpp"

using namespace sdr;
using objectives::compute_metrics;

namespace {

template <typename T>
T loss_value(const ad::Var<T>& v) {
  return v.value()[0];
}

Tensor<float> vec(std::vector<float> v) {
  const int n = static_cast<int>(v.size());
  return Tensor<float>({1, n}, std::move(v));
}

}  // namespace

TEST(LossL1L2, HandCase) {
  ad::Tape<double> tape;
  const Tensor<double> gt({1, 2}, std::vector<double>{1, 1});
  EXPECT_EQ(loss_value(objectives::loss_l1l2(tape.constant(Tensor<double>({1, 2}, std::vector<double>{1, 3})), gt)), 3.0);
  EXPECT_EQ(loss_value(objectives::loss_l1l2(tape.constant(gt), gt)), 0.0);
  EXPECT_THROW(objectives::loss_l1l2(tape.constant(gt), Tensor<double>({1, 2})), DataError);
}

TEST(LossL1L2, IgnoresInvalidGroundTruth) {
  ad::Tape<double> tape;
  const Tensor<double> gt({1, 3}, std::vector<double>{1, 0, 2});
  const Tensor<double> pred({1, 3}, std::vector<double>{2, 100, 2});
  EXPECT_EQ(loss_value(objectives::loss_l1l2(tape.constant(pred), gt)), 1.0);
}

TEST(LossSilog, ClosedForms) {
  ad::Tape<double> tape;
  Rng rng(1);
  const auto gt = test::random_tensor({4, 5}, rng, 0.5, 8);
  EXPECT_NEAR(loss_value(objectives::loss_silog(tape.constant(gt), gt)), 0.0, 1e-12);

  Tensor<double> e_gt = gt;
  for (auto& v : e_gt.vec()) v *= std::exp(1.0);
  EXPECT_NEAR(loss_value(objectives::loss_silog(tape.constant(e_gt), gt, 10.0, 0.85)), 10 * std::sqrt(0.15), 1e-9);
  EXPECT_NEAR(10 * std::sqrt(0.15), 3.8730, 1e-3);

  for (double c : {0.01, 0.37, 2.0, 150.0}) {
    Tensor<double> scaled = gt;
    for (auto& v : scaled.vec()) v *= c;
    EXPECT_NEAR(loss_value(objectives::loss_silog(tape.constant(scaled), gt, 10.0, 1.0)), 0.0, 1e-9) << c;
  }
}

TEST(LossSilog, CountsClampedPredictions) {
  ad::Tape<double> tape;
  const Tensor<double> gt({1, 3}, 1.0);
  std::size_t clamped = 0;
  objectives::loss_silog(tape.constant(Tensor<double>({1, 3}, std::vector<double>{-1, 0, 2})), gt, 10, 0.85, &clamped);
  EXPECT_EQ(clamped, 2u);
}

TEST(LossSilog, GradientMatchesFiniteDifferences) {
  ad::ParamSet<double> ps;
  Rng rng(2);
  ps.add("p", test::random_tensor({5, 5}, rng, 1, 3));
  const auto gt = test::random_tensor({5, 5}, rng, 1, 3);
  const auto r = ad::grad_check(
      [&gt](ad::Tape<double>& t, const ad::ParamSet<double>& p) { return objectives::loss_silog(t.param(p, "p"), gt); },
      ps);
  EXPECT_LT(r.max_rel_error, 1e-6);
}

TEST(Metrics, HandCase) {
  const auto r = compute_metrics(vec({2, 4}), vec({1, 4}));
  EXPECT_DOUBLE_EQ(r.rel, 0.5);
  EXPECT_DOUBLE_EQ(r.delta1, 50.0);
  EXPECT_DOUBLE_EQ(r.rmse * r.rmse, 0.5);
  EXPECT_DOUBLE_EQ(r.mae, 0.5);
  EXPECT_EQ(r.valid_count, 2u);
}

TEST(Metrics, PerfectPrediction) {
  const auto gt = vec({1, 2, 3, 7.5});
  const auto r = compute_metrics(gt, gt);
  EXPECT_EQ(r.rel, 0.0);
  EXPECT_EQ(r.rmse, 0.0);
  EXPECT_EQ(r.irmse, 0.0);
  EXPECT_EQ(r.delta1, 100.0);
  EXPECT_EQ(r.delta2, 100.0);
  EXPECT_EQ(r.delta3, 100.0);
}

TEST(Metrics, InverseDepthInPerKilometre) {
  const auto r = compute_metrics(vec({1}), vec({2}));
  EXPECT_DOUBLE_EQ(r.imae, 500.0);
  EXPECT_DOUBLE_EQ(r.irmse, 500.0);
  objectives::MetricOptions mm;
  mm.units = objectives::Units::Millimeters;
  const auto m = compute_metrics(vec({1}), vec({2}), mm);
  EXPECT_DOUBLE_EQ(m.rmse, 1000.0);
  EXPECT_DOUBLE_EQ(m.imae, 500.0);
}

TEST(Metrics, MatchesScalarReferenceOnRandomMaps) {
  Rng rng(3);
  const auto gt = test::random_tensor({9, 11}, rng, 0.5, 10).cast<float>();
  auto pred = test::random_tensor({9, 11}, rng, 0.5, 10).cast<float>();
  Tensor<float> gtv = gt;
  gtv[5] = 0;  // invalid pixel
  Tensor<float> region({9, 11}, 1.0f);
  for (int j = 0; j < 11; ++j) region.at(0, j) = 0;

  double se = 0, rel = 0, d1 = 0;
  int n = 0;
  for (int i = 0; i < 99; ++i) {
    if (gtv[i] <= 0 || region[i] <= 0) continue;
    const double e = double(pred[i]) - gtv[i];
    se += e * e;
    rel += std::abs(e) / gtv[i];
    d1 += std::max(double(pred[i]) / gtv[i], double(gtv[i]) / pred[i]) < 1.25;
    ++n;
  }
  const auto r = compute_metrics(pred, gtv, {}, &region);
  EXPECT_EQ(r.valid_count, std::size_t(n));
  EXPECT_NEAR(r.rmse, std::sqrt(se / n), 1e-12);
  EXPECT_NEAR(r.rel, rel / n, 1e-12);
  EXPECT_NEAR(r.delta1, 100.0 * d1 / n, 1e-12);

  objectives::MetricOptions lit;
  lit.literal_root_normalization = true;
  EXPECT_NEAR(compute_metrics(pred, gtv, lit, &region).rmse, std::sqrt(se) / n, 1e-12);
}

TEST(Metrics, NoValidPixelsIsDataError) { EXPECT_THROW(compute_metrics(vec({1}), vec({0})), DataError); }

TEST(Metrics, UnitsParse) {
  EXPECT_EQ(objectives::parse_units("mm"), objectives::Units::Millimeters);
  EXPECT_THROW(objectives::parse_units("ft"), ConfigError);
}
