#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "dbn/data.hpp"
#include "dbn/ensemble.hpp"
#include "dbn/metrics.hpp"
#include "test_util.hpp"

using namespace dbn;

namespace {

std::vector<float> softmax_ref(const std::vector<float>& z) {
  double m = *std::max_element(z.begin(), z.end()), s = 0;
  std::vector<double> e(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) s += e[i] = std::exp(z[i] - m);
  std::vector<float> p(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) p[i] = static_cast<float>(e[i] / s);
  return p;
}

std::vector<float> random_simplex(Rng& rng, std::size_t K) {
  std::gamma_distribution<double> g(0.5, 1.0);
  std::vector<double> v(K);
  double s = 0;
  for (auto& x : v) s += x = g(rng) + 1e-6;
  std::vector<float> p(K);
  for (std::size_t k = 0; k < K; ++k) p[k] = static_cast<float>(v[k] / s);
  return p;
}

TeacherTrainConfig quick_teachers(std::size_t epochs) {
  TeacherTrainConfig c;
  c.epochs = epochs;
  c.batch = 32;
  return c;
}

}  // namespace

TEST(EnsLogit, SingleMemberIsCentredLogit) {
  const std::vector<float> z{1.5f, -0.5f, 0.25f};
  const auto out = ens_logit(std::vector<std::vector<float>>{softmax_ref(z)});
  const float mean_z = (1.5f - 0.5f + 0.25f) / 3.0f;
  for (std::size_t k = 0; k < 3; ++k) EXPECT_NEAR(out[k], z[k] - mean_z, 1e-5);
  const auto p = softmax(out), q = softmax_ref(z);
  for (std::size_t k = 0; k < 3; ++k) EXPECT_NEAR(p[k], q[k], 1e-6);
}

TEST(EnsLogit, UniformMembersGiveZero) {
  const std::vector<float> u(4, 0.25f);
  const auto out = ens_logit(std::vector<std::vector<float>>{u, u});
  for (float v : out) EXPECT_EQ(v, 0.0f);
}

TEST(EnsLogit, TwoMemberMean) {
  const auto out = ens_logit(std::vector<std::vector<float>>{{0.7f, 0.2f, 0.1f}, {0.1f, 0.2f, 0.7f}});
  const auto p = softmax(out);
  EXPECT_NEAR(p[0], 0.4, 1e-6);
  EXPECT_NEAR(p[1], 0.2, 1e-6);
  EXPECT_NEAR(p[2], 0.4, 1e-6);
}

TEST(EnsLogit, ZeroProbabilityIsClampedAndCounted) {
  ClampStats stats;
  const auto out = ens_logit(std::vector<std::vector<float>>{{1.0f, 0.0f}, {1.0f, 0.0f}}, &stats);
  EXPECT_EQ(stats.clamped, 1u);
  EXPECT_TRUE(std::isfinite(out[0]) && std::isfinite(out[1]));
  EXPECT_NEAR(out[0] - out[1], -std::log(1e-12), 1e-2);
}

TEST(EnsLogit, SoftmaxRecoversMeanOnRandomSimplices) {
  Rng rng(2024);
  double worst = 0.0, worst_centre = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t M = 1 + sample_index(rng, 8), K = 2 + sample_index(rng, 19);
    std::vector<std::vector<float>> ps;
    std::vector<double> mean(K, 0.0);
    for (std::size_t m = 0; m < M; ++m) {
      ps.push_back(random_simplex(rng, K));
      for (std::size_t k = 0; k < K; ++k) mean[k] += ps.back()[k] / double(M);
    }
    const auto z = ens_logit(ps);
    const auto p = softmax(z);
    double centre = 0;
    for (std::size_t k = 0; k < K; ++k) {
      worst = std::max(worst, std::abs(p[k] - mean[k]));
      centre += z[k];
    }
    worst_centre = std::max(worst_centre, std::abs(centre / double(K)));
  }
  EXPECT_LT(worst, 1e-6);
  EXPECT_LT(worst_centre, 1e-6);
}

TEST(Classifier, SplitMatchesFusedCallBitwise) {
  const auto m = ClassifierModel::create(ClassifierArch{}, 5);
  const std::vector<float> x{0.3f, -1.2f};
  const auto fused = m.logits(x);
  const auto h = m.features(x);
  EXPECT_EQ(m.head_logits(h), fused);
  for (std::size_t tap = 0; tap < 3; ++tap) EXPECT_EQ(m.tap_and_logits(x, tap).second, fused);
}

TEST(SourceFeature, TapShapesAndDeterminism) {
  EnsembleBundle b;
  b.members.push_back(ClassifierModel::create(ClassifierArch{2, {64, 32, 16}}, 1));
  const std::vector<float> x{0.1f, 0.9f};
  EXPECT_EQ(source_feature(b, x, 0).h1.size(), 64u);
  EXPECT_EQ(source_feature(b, x, 1).h1.size(), 32u);
  const auto last = source_feature(b, x, 2);
  EXPECT_EQ(last.h1, b.source().features(x));
  const auto again = source_feature(b, x, 2);
  EXPECT_EQ(again.h1, last.h1);
  EXPECT_EQ(again.z1, last.z1);
  EXPECT_THROW(source_feature(b, x, 3), ConfigError);
}

TEST(TrainTeachers, SingleMemberEnsembleEqualsModel) {
  const auto data = make_blobs(120, 2, 2, 0.5, 4.0, 3);
  const auto b = train_teachers(data, ClassifierArch{2, {16}}, 1, {7}, quick_teachers(5));
  const std::vector<std::size_t> idx{0};
  for (std::size_t i = 0; i < 10; ++i) {
    const auto p = ensemble_probs(b, idx, data.row(i));
    const auto q = softmax(b.members[0].logits(data.row(i)));
    for (std::size_t k = 0; k < 2; ++k) EXPECT_EQ(p[k], static_cast<double>(q[k]));
  }
}

TEST(TrainTeachers, SeparableBlobsReachFullTrainAccuracy) {
  const auto data = make_blobs(300, 2, 2, 0.3, 6.0, 11);
  const auto b = train_teachers(data, ClassifierArch{2, {32, 32}}, 3, {1, 2, 3}, quick_teachers(20));
  for (double acc : b.train_accuracy) EXPECT_EQ(acc, 1.0);
}

TEST(TrainTeachers, RejectsBadConfiguration) {
  const auto data = make_blobs(60, 2, 2, 0.5, 4.0, 3);
  EXPECT_THROW(train_teachers(data, ClassifierArch{}, 2, {1, 1}, quick_teachers(1)), ConfigError);
  EXPECT_THROW(train_teachers(data, ClassifierArch{}, 2, {1}, quick_teachers(1)), ConfigError);
  EXPECT_THROW(train_teachers(data, ClassifierArch{2, {8}, nn::Activation::swish, 3}, 1, {1}, quick_teachers(1)),
               ConfigError);
}

TEST(TrainTeachers, ParallelTrainingMatchesSerial) {
  const auto data = make_blobs(100, 2, 2, 0.5, 4.0, 3);
  auto cfg = quick_teachers(3);
  const auto serial = train_teachers(data, ClassifierArch{2, {8}}, 3, {4, 5, 6}, cfg);
  cfg.threads = 3;
  const auto parallel = train_teachers(data, ClassifierArch{2, {8}}, 3, {4, 5, 6}, cfg);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_TRUE(serial.members[i] == parallel.members[i]);
}

// Benchmark bundle (data seeds 1/2, member seeds 11..15): NLL of DE-k should not rise with k.
TEST(TrainTeachers, TwoMoonsDeCurveNonIncreasing) {
  const auto train = make_two_moons(2000, 0.2, 1), test = make_two_moons(2000, 0.2, 2);
  const auto b = train_teachers(train, ClassifierArch{}, 5, {11, 12, 13, 14, 15}, TeacherTrainConfig{});
  std::vector<double> nll;
  for (std::size_t k = 1; k <= 5; ++k) {
    const auto idx = first_k(k);
    nll.push_back(metrics::evaluate([&](auto x) { return ensemble_probs(b, idx, x); }, test).nll);
  }
  for (std::size_t k = 1; k < nll.size(); ++k) EXPECT_LE(nll[k], nll[k - 1]) << "DE-" << k + 1 << " vs DE-" << k;
}
