#include <gtest/gtest.h>

#include <cmath>

#include "dbn/inference.hpp"
#include "dbn/metrics.hpp"
#include "fixture.hpp"
#include "test_util.hpp"

using namespace dbn;

namespace {

// Zero-score bridge on a one-step schedule: the reverse step returns Z_1 / T.
BridgeModel identity_bridge(const ClassifierModel& source) {
  BridgeModel b;
  ScoreNetConfig sc;
  sc.feature_dim = source.tap_width(0);
  sc.class_count = source.class_count();
  sc.zero_head = true;
  b.net = ScoreNetwork::create(sc, 1);
  b.schedule = build_schedule(1);
  b.active = {0, 1};
  b.teacher_indices = {0, 1};
  b.lineage = {b.active_times()};
  return b;
}

DbnPredictor fixed(const ClassifierModel& source, std::vector<BridgeModel> bridges, InferenceMode mode,
                   double T = 0.0) {
  DbnPredictor p{source, std::move(bridges), mode};
  if (T > 0) p.fixed_temperature = T;
  else p.fix_temperature_to_mean();
  return p;
}

}  // namespace

TEST(Inference, IdentityBridgeReturnsSourceSoftmax) {
  const auto& fx = testutil::moons_fixture();
  const auto& src = fx.bundle.source();
  const auto p = fixed(src, {identity_bridge(src)}, InferenceMode::one_step, 1.0);
  Rng rng(0);
  for (std::size_t i = 0; i < 20; ++i) {
    const auto out = infer_one(p, fx.test.row(i), rng);
    const auto ref = softmax(src.logits(fx.test.row(i)));
    for (std::size_t k = 0; k < 2; ++k) EXPECT_NEAR(out[k], ref[k], 1e-6);
  }
}

TEST(Inference, IdenticalBridgesMatchOneBridge) {
  const auto& fx = testutil::moons_fixture();
  const auto& src = fx.bundle.source();
  const auto one = fixed(src, {fx.one_step}, InferenceMode::one_step);
  const auto two = fixed(src, {fx.one_step, fx.one_step}, InferenceMode::one_step);
  Rng rng(0);
  for (std::size_t i = 0; i < 20; ++i) {
    const auto a = infer_one(one, fx.test.row(i), rng), b = infer_one(two, fx.test.row(i), rng);
    for (std::size_t k = 0; k < 2; ++k) EXPECT_NEAR(a[k], b[k], 1e-12);
  }
}

TEST(Inference, OutputsLieOnSimplexAndSourceRunsOnce) {
  const auto& fx = testutil::moons_fixture();
  auto p = fixed(fx.bundle.source(), {fx.one_step, fx.one_step}, InferenceMode::one_step);
  p.fixed_temperature.reset();
  p.stochastic = true;
  Rng rng(9);
  for (std::size_t i = 0; i < 50; ++i) {
    const auto out = infer_one(p, fx.test.row(i), rng);
    double s = 0;
    for (double v : out) {
      EXPECT_GE(v, 0.0);
      s += v;
    }
    EXPECT_NEAR(s, 1.0, 1e-6);
  }
  EXPECT_EQ(p.source_passes.value.load(), 50u);
}

TEST(Inference, SingleAncestralStepEqualsOneStep) {
  const auto& fx = testutil::moons_fixture();
  const auto& src = fx.bundle.source();
  const auto one = fixed(src, {fx.one_step}, InferenceMode::one_step);
  const auto anc = fixed(src, {fx.one_step}, InferenceMode::ancestral);
  Rng rng(0);
  for (std::size_t i = 0; i < 20; ++i) {
    const auto a = infer_one(one, fx.test.row(i), rng), b = infer_ancestral(anc, fx.test.row(i), 1, rng);
    for (std::size_t k = 0; k < 2; ++k) EXPECT_NEAR(a[k], b[k], 1e-6);
  }
}

TEST(Inference, DeterministicAncestralIsRepeatable) {
  const auto& fx = testutil::moons_fixture();
  const auto p = fixed(fx.bundle.source(), {fx.bridge}, InferenceMode::ancestral);
  Rng r1(1), r2(2);
  for (std::size_t i = 0; i < 10; ++i) EXPECT_EQ(predict(p, fx.test.row(i), r1), predict(p, fx.test.row(i), r2));
}

TEST(Inference, ModeAndStepMismatchesRejected) {
  const auto& fx = testutil::moons_fixture();
  const auto& src = fx.bundle.source();
  Rng rng(0);
  const auto anc = fixed(src, {fx.one_step}, InferenceMode::ancestral);
  EXPECT_THROW(infer_one(anc, fx.test.row(0), rng), ContractViolation);
  auto bad = fixed(src, {fx.bridge}, InferenceMode::one_step);
  EXPECT_THROW(infer_one(bad, fx.test.row(0), rng), ContractViolation);
  EXPECT_THROW(bad.validate(), ConfigError);
  const auto multi = fixed(src, {fx.bridge}, InferenceMode::ancestral);
  EXPECT_THROW(infer_ancestral(multi, fx.test.row(0), 6, rng), ConfigError);
  EXPECT_NO_THROW(infer_ancestral(multi, fx.test.row(0), 2, rng));
}

TEST(Inference, ValidateCatchesShapeMismatch) {
  const auto& fx = testutil::moons_fixture();
  auto other = ClassifierModel::create(ClassifierArch{2, {16}}, 3);
  const auto p = fixed(other, {fx.one_step}, InferenceMode::one_step);
  EXPECT_THROW(p.validate(), ConfigError);
  const auto empty = DbnPredictor{fx.bundle.source(), {}, InferenceMode::one_step};
  EXPECT_THROW(empty.validate(), ConfigError);
}

// Fixture members barely disagree, so the check is closeness rather than
// direction: the one-step output stays within a few points of the ensemble.
TEST(Inference, OneStepStaysNearEnsemble) {
  const auto& fx = testutil::moons_fixture();
  const auto p = fixed(fx.bundle.source(), {fx.one_step}, InferenceMode::one_step);
  const auto idx = first_k(3);
  Rng rng(0);
  double gap = 0, worst = 0;
  for (std::size_t i = 0; i < fx.test.size(); ++i) {
    const auto x = fx.test.row(i);
    const double d = std::abs(infer_one(p, x, rng)[0] - ensemble_probs(fx.bundle, idx, x)[0]);
    gap += d;
    worst = std::max(worst, d);
  }
  gap /= double(fx.test.size());
  EXPECT_LT(gap, 0.03);
  EXPECT_LT(worst, 0.25);
}

TEST(PlanBridges, Assignments) {
  const auto p3 = plan_bridges(3, 2);
  ASSERT_EQ(p3.bridges.size(), 1u);
  EXPECT_EQ(p3.bridges[0], (std::vector<std::size_t>{0, 1, 2}));
  const auto p5 = plan_bridges(5, 2);
  ASSERT_EQ(p5.bridges.size(), 2u);
  EXPECT_EQ(p5.bridges[0], (std::vector<std::size_t>{0, 1, 2}));
  EXPECT_EQ(p5.bridges[1], (std::vector<std::size_t>{0, 3, 4}));
}

TEST(PlanBridges, InvalidMemberCountSuggestsNeighbours) {
  try {
    plan_bridges(4, 2);
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("3 or 5"), std::string::npos) << e.what();
  }
  EXPECT_THROW(plan_bridges(2, 2), ConfigError);
  EXPECT_THROW(plan_bridges(5, 0), ConfigError);
}

TEST(Cost, PredictorCountsSourceOncePlusBridges) {
  const auto& fx = testutil::moons_fixture();
  const auto& src = fx.bundle.source();
  const auto one = fixed(src, {fx.one_step}, InferenceMode::one_step);
  const auto two = fixed(src, {fx.one_step, fx.one_step}, InferenceMode::one_step);
  const auto anc = fixed(src, {fx.bridge}, InferenceMode::ancestral);
  const auto s = model_cost(src).flops, b = model_cost(fx.one_step.net).flops;
  EXPECT_EQ(model_cost(one).flops, s + b);
  EXPECT_EQ(model_cost(two).flops, s + 2 * b);
  EXPECT_EQ(model_cost(anc).flops, s + 5 * b);
  EXPECT_EQ(ensemble_cost(fx.bundle, 3).flops, 3 * s);
}
