#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "dbn/metrics.hpp"
#include "test_util.hpp"

using namespace dbn;
using metrics::Predictions;

namespace {

// Six three-class rows; reference values from an exact-arithmetic script.
const Predictions kProbs{{0.6, 0.3, 0.1},  {0.2, 0.5, 0.3},  {0.05, 0.05, 0.9},
                         {0.34, 0.33, 0.33}, {0.1, 0.7, 0.2}, {0.45, 0.1, 0.45}};
const std::vector<int> kLabels{0, 2, 2, 1, 1, 0};
constexpr double kNll = 0.6806673680713113;
constexpr double kBrier = 0.3972333333333333;
constexpr double kEce = 0.365;
constexpr double kAcc = 0.6666666666666666;

const std::vector<std::pair<std::size_t, double>> kCurve{{1, 1.0}, {2, 0.8}, {3, 0.7}};

}  // namespace

TEST(Nll, Examples) {
  EXPECT_NEAR(metrics::nll({{0.25, 0.25, 0.25, 0.25}}, std::vector<int>{2}), std::log(4.0), 1e-12);
  EXPECT_NEAR(metrics::nll({{0.7, 0.3}, {0.9, 0.1}}, std::vector<int>{0, 1}), -(std::log(0.7) + std::log(0.1)) / 2,
              1e-12);
  EXPECT_NEAR(metrics::nll({{0.7, 0.3}, {0.9, 0.1}}, std::vector<int>{0, 1}), 1.3297, 1e-4);
  EXPECT_NEAR(metrics::nll({{1.0, 0.0}}, std::vector<int>{1}), -std::log(1e-12), 1e-9);
}

TEST(Brier, Examples) {
  EXPECT_EQ(metrics::brier({{0.0, 1.0}}, std::vector<int>{1}), 0.0);
  EXPECT_NEAR(metrics::brier({{0.5, 0.5}}, std::vector<int>{0}), 0.5, 1e-15);
  EXPECT_NEAR(metrics::brier({{0.8, 0.2}}, std::vector<int>{1}), 1.28, 1e-12);
}

TEST(Ece, Examples) {
  EXPECT_EQ(metrics::ece({{1.0, 0.0}, {0.0, 1.0}}, std::vector<int>{0, 1}).ece, 0.0);
  const auto r = metrics::ece({{0.9, 0.1}, {0.9, 0.1}, {0.1, 0.9}, {0.1, 0.9}}, std::vector<int>{0, 1, 1, 0});
  EXPECT_NEAR(r.ece, 0.4, 1e-12);
  std::size_t occupied = 0;
  for (const auto& b : r.bins) occupied += b.count > 0;
  EXPECT_EQ(occupied, 1u);
  EXPECT_EQ(r.bins.size(), 15u);
}

TEST(Ece, TwoBinFixture) {
  const auto r = metrics::ece({{0.95, 0.05}, {0.04, 0.96}, {0.5, 0.5}, {0.52, 0.48}}, std::vector<int>{0, 0, 0, 1});
  EXPECT_NEAR(r.ece, 0.23249999999999998, 1e-9);
  EXPECT_EQ(r.bins[14].count, 2u);
  EXPECT_EQ(r.bins[7].count, 2u);
  EXPECT_NEAR(r.bins[14].accuracy, 0.5, 1e-15);
}

TEST(Metrics, CraftedFixtureMatchesReference) {
  const auto r = metrics::evaluate(kProbs, kLabels);
  EXPECT_NEAR(r.nll, kNll, 1e-9);
  EXPECT_NEAR(r.brier, kBrier, 1e-9);
  EXPECT_NEAR(r.ece, kEce, 1e-9);
  EXPECT_NEAR(r.acc, kAcc, 1e-12);
  std::size_t total = 0;
  for (const auto& b : r.bins) total += b.count;
  EXPECT_EQ(total, kProbs.size());
  EXPECT_FALSE(r.dee.has_value());
}

TEST(Metrics, PermutationInvariant) {
  Rng rng(5);
  Predictions p;
  std::vector<int> y;
  for (int i = 0; i < 200; ++i) {
    const double a = std::uniform_real_distribution<double>(0, 1)(rng);
    p.push_back({a, 1 - a});
    y.push_back(int(sample_index(rng, 2)));
  }
  const auto base = metrics::evaluate(p, y);
  std::vector<std::size_t> order(p.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::shuffle(order.begin(), order.end(), rng);
  Predictions q;
  std::vector<int> z;
  for (auto i : order) {
    q.push_back(p[i]);
    z.push_back(y[i]);
  }
  const auto perm = metrics::evaluate(q, z);
  EXPECT_NEAR(perm.nll, base.nll, 1e-12);
  EXPECT_NEAR(perm.brier, base.brier, 1e-12);
  EXPECT_NEAR(perm.ece, base.ece, 1e-12);
  EXPECT_EQ(perm.acc, base.acc);
}

TEST(Metrics, InvalidInputs) {
  EXPECT_THROW(metrics::nll({}, std::vector<int>{}), ConfigError);
  EXPECT_THROW(metrics::nll({{0.5, 0.5}}, std::vector<int>{0, 1}), ConfigError);
  EXPECT_THROW(metrics::brier({{0.5, 0.5}}, std::vector<int>{2}), DataError);
  EXPECT_THROW(metrics::ece({{0.5, 0.5}}, std::vector<int>{0}, 0), ConfigError);
}

TEST(Dee, Examples) {
  EXPECT_DOUBLE_EQ(metrics::dee(0.8, kCurve).value, 2.0);
  EXPECT_DOUBLE_EQ(metrics::dee(0.9, kCurve).value, 1.5);
  const auto sub = metrics::dee(1.1, kCurve);
  EXPECT_NEAR(sub.value, 0.5, 1e-12);
  EXPECT_TRUE(sub.below_one);
  EXPECT_DOUBLE_EQ(metrics::dee(0.7, kCurve).value, 3.0);
  const auto above = metrics::dee(0.6, kCurve);
  EXPECT_TRUE(above.above_curve);
  EXPECT_NEAR(above.value, 4.0, 1e-12);
}

TEST(Dee, MonotoneInTarget) {
  double prev = metrics::dee(0.55, kCurve).value;
  for (int i = 1; i <= 75; ++i) {
    const double v = metrics::dee(0.55 + 0.01 * i, kCurve).value;
    EXPECT_LE(v, prev + 1e-12);
    prev = v;
  }
}

TEST(Dee, RejectsBadCurves) {
  EXPECT_THROW(metrics::dee(1.0, {{1, 1.0}}), ConfigError);
  EXPECT_THROW(metrics::dee(1.0, {{1, 1.0}, {2, 1.0}}), ConfigError);
  EXPECT_THROW(metrics::dee(1.0, {{1, 1.0}, {3, 0.5}}), ConfigError);
}

TEST(Metrics, ReportJsonCarriesDeeFlag) {
  const auto r = metrics::evaluate(Predictions{{0.7, 0.3}, {0.9, 0.1}}, std::vector<int>{0, 1}, &kCurve);
  const auto j = r.to_json();
  EXPECT_EQ(j["dee_flag"], "<1-extrapolated");
  EXPECT_EQ(j["bins"].size(), 15u);
  EXPECT_EQ(metrics::MetricsReport::csv_header(), "acc,nll,brier,ece,dee,n_examples");
}
