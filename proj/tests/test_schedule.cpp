#include <gtest/gtest.h>

#include <cmath>
#include <cstring>

#include "dbn/schedule.hpp"
#include "test_util.hpp"

using namespace dbn;

namespace {
bool bitwise_equal(const LogitVector& a, std::span<const float> b) {
  return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(float)) == 0;
}
}  // namespace

TEST(Schedule, SingleLinearStep) {
  const auto s = build_schedule(1, ScheduleShape::linear_beta, 0.4);
  ASSERT_EQ(s.steps(), 1u);
  EXPECT_DOUBLE_EQ(s.sigma2[1], s.beta[0] * 1.0);
  EXPECT_DOUBLE_EQ(s.sigma2_bar[0], s.sigma2[1]);
  EXPECT_EQ(s.sigma2[0], 0.0);
  EXPECT_EQ(s.sigma2_bar[1], 0.0);
}

TEST(Schedule, TotalVarianceIsConstantAcrossGrid) {
  for (auto shape : {ScheduleShape::linear_beta, ScheduleShape::symmetric_triangular})
    for (std::size_t n : {1u, 2u, 5u, 17u}) {
      const auto s = build_schedule(n, shape, 0.7);
      for (std::size_t i = 0; i <= n; ++i) EXPECT_NEAR(s.sigma2[i] + s.sigma2_bar[i], s.total_variance(), 1e-15);
    }
}

TEST(Schedule, FiveStepTriangularFixture) {
  // beta at interval midpoints 0.1 .. 0.9 times dt = 0.2
  const double inc[5] = {0.3 * 0.2 * 0.2, 0.3 * 0.6 * 0.2, 0.3 * 1.0 * 0.2, 0.3 * 0.6 * 0.2, 0.3 * 0.2 * 0.2};
  const double sigma2[6] = {0.0, 0.012, 0.048, 0.108, 0.144, 0.156};
  const double sigma2_bar[6] = {0.156, 0.144, 0.108, 0.048, 0.012, 0.0};
  const auto s = build_schedule(5);
  double acc = 0.0;
  for (int i = 0; i < 5; ++i) {
    acc += inc[i];
    EXPECT_NEAR(s.sigma2[i + 1], acc, 1e-15);
  }
  for (int i = 0; i <= 5; ++i) {
    EXPECT_NEAR(s.sigma2[i], sigma2[i], 1e-12);
    EXPECT_NEAR(s.sigma2_bar[i], sigma2_bar[i], 1e-12);
    EXPECT_NEAR(s.grid[i], i / 5.0, 1e-15);
  }
}

TEST(Schedule, StrictMonotonicity) {
  const auto s = build_schedule(9);
  for (std::size_t i = 1; i < s.grid.size(); ++i) {
    EXPECT_GT(s.sigma2[i], s.sigma2[i - 1]);
    EXPECT_LT(s.sigma2_bar[i], s.sigma2_bar[i - 1]);
  }
}

TEST(Schedule, RejectsZeroSteps) { EXPECT_THROW(build_schedule(0), ConfigError); }

TEST(Schedule, OffGridTimeNamesNearestPoint) {
  const auto s = build_schedule(5);
  try {
    s.index_of(0.33);
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("0.4"), std::string::npos);
  }
  EXPECT_EQ(s.index_of(0.6), 3u);
}

TEST(Anneal, Examples) {
  const std::vector<float> zero(3, 0.0f);
  Rng rng(1);
  EXPECT_EQ(anneal_source(zero, TemperatureLaw{}, rng).z, zero);
  const std::vector<float> z{2.0f, -2.0f};
  EXPECT_EQ(anneal_with(z, 2.0), (LogitVector{1.0f, -1.0f}));
}

TEST(Anneal, TemperatureRangeAndArgmax) {
  Rng rng(3);
  const TemperatureLaw law;
  const std::vector<float> z{0.3f, 1.7f, -0.4f};
  for (int i = 0; i < 1000; ++i) {
    const auto a = anneal_source(z, law, rng);
    EXPECT_GE(a.temperature, 2.0);
    EXPECT_LE(a.temperature, 2.4);
    EXPECT_EQ(argmax(a.z), 1u);
  }
}

TEST(Anneal, TemperatureMeanMonteCarlo) {
  Rng rng(77);
  const TemperatureLaw law;
  double sum = 0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) sum += law.sample(rng);
  EXPECT_NEAR(sum / n, 2.0 + 0.4 / 6.0, 0.002);
  EXPECT_NEAR(law.mean(), 2.0 + 0.4 / 6.0, 1e-15);
}

TEST(Posterior, EndpointsAreBitwise) {
  const auto s = build_schedule(5);
  Rng rng(5);
  const std::vector<float> z0{0.123f, -4.5f, 1e-7f}, z1{-0.3f, 0.7f, 2.2f};
  EXPECT_TRUE(bitwise_equal(posterior_sample(z0, z1, 0.0, s, rng), z0));
  EXPECT_TRUE(bitwise_equal(posterior_sample(z0, z1, 1.0, s, rng), z1));
}

TEST(Posterior, SymmetricMidpoint) {
  const auto s = build_schedule(4);  // symmetric, so t = 0.5 has sigma2 = sigma2_bar
  const auto idx = s.index_of(0.5);
  ASSERT_NEAR(s.sigma2[idx], s.sigma2_bar[idx], 1e-15);
  const std::vector<float> z0{1.0f, 0.0f}, z1{0.0f, 1.0f};
  const auto mean = posterior_sample_at(z0, z1, idx, s, nullptr);
  EXPECT_NEAR(mean[0], 0.5, 1e-7);
  EXPECT_NEAR(mean[1], 0.5, 1e-7);
  EXPECT_NEAR(s.posterior(idx).var, s.sigma2[idx] / 2.0, 1e-15);
}

TEST(Posterior, ConvexWeightsAndVarianceCap) {
  Rng rng(8);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 1 + sample_index(rng, 20);
    const auto shape = trial % 2 ? ScheduleShape::linear_beta : ScheduleShape::symmetric_triangular;
    const auto s = build_schedule(n, shape, testutil::uniform_vec(rng, 1, 0.05, 2.0)[0]);
    for (std::size_t i = 0; i <= n; ++i) {
      const auto p = s.posterior(i);
      EXPECT_NEAR(p.w0 + p.w1, 1.0, 1e-7);
      EXPECT_GE(p.w0, 0.0);
      EXPECT_GE(p.w1, 0.0);
      EXPECT_LE(p.var, s.total_variance() / 4.0 + 1e-15);
    }
  }
}

TEST(Posterior, SampleMomentsMatchFormula) {
  const auto s = build_schedule(5);
  const std::size_t idx = 2;
  const auto p = s.posterior(idx);
  const std::vector<float> z0{1.0f}, z1{-2.0f};
  Rng rng(13);
  double m = 0, m2 = 0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    const double v = posterior_sample_at(z0, z1, idx, s, &rng)[0];
    m += v;
    m2 += v * v;
  }
  m /= n;
  const double var = m2 / n - m * m;
  EXPECT_NEAR(m, p.w0 * 1.0 + p.w1 * -2.0, 0.005);
  EXPECT_NEAR(var / p.var, 1.0, 0.03);
}

TEST(PosteriorBetween, Examples) {
  const auto s = build_schedule(5);
  Rng rng(1);
  const std::vector<float> zhat{0.5f, -1.0f}, zt{2.0f, 3.0f};
  EXPECT_TRUE(bitwise_equal(posterior_between(zhat, zt, 0.0, 0.6, s, rng), zhat));
  const auto same = posterior_between_at(zt, zt, 2, 4, s, nullptr);
  EXPECT_NEAR(same[0], 2.0, 1e-6);
  EXPECT_NEAR(same[1], 3.0, 1e-6);
  EXPECT_THROW(posterior_between_at(zhat, zt, 3, 3, s, &rng), ContractViolation);
  EXPECT_THROW(posterior_between_at(zhat, zt, 4, 2, s, &rng), ContractViolation);
}

TEST(PosteriorBetween, ThreeStepChainMatchesDirectMarginal) {
  const auto s = build_schedule(3);
  const std::vector<float> z0{0.8f}, z1{-1.5f};
  Rng rng(21);
  const int n = 100000;
  double m = 0, m2 = 0;
  for (int i = 0; i < n; ++i) {
    auto z = LogitVector(z1);
    z = posterior_between_at(z0, z, 2, 3, s, &rng);
    z = posterior_between_at(z0, z, 1, 2, s, &rng);
    m += z[0];
    m2 += double(z[0]) * z[0];
  }
  m /= n;
  const double chain_var = m2 / n - m * m;
  const auto p = s.posterior(1);
  EXPECT_NEAR(m, p.w0 * 0.8 + p.w1 * -1.5, 0.005);
  EXPECT_NEAR(chain_var / p.var, 1.0, 0.03);
}
