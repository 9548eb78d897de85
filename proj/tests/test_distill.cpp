#include <gtest/gtest.h>

#include <cmath>

#include "dbn/distill.hpp"
#include "dbn/inference.hpp"
#include "fixture.hpp"
#include "test_util.hpp"

using namespace dbn;

namespace {

using Grid = std::vector<std::size_t>;

// Teacher whose score is c * Z_t at every t: zero head, skip = c * I.
BridgeModel linear_teacher(const EnsembleBundle& bundle, float c, Grid active) {
  BridgeModel b;
  ScoreNetConfig sc;
  sc.feature_dim = bundle.source().tap_width(0);
  sc.class_count = 2;
  sc.zero_head = true;
  b.net = ScoreNetwork::create(sc, 21);
  auto& p = b.net.mutable_params();
  auto skip = p.mutable_values(p.size() - 1);
  skip[0] = c;
  skip[3] = c;
  b.schedule = build_schedule(5);
  b.active = std::move(active);
  b.teacher_indices = {0, 1, 2};
  b.lineage = {b.active_times()};
  return b;
}

// Mean reverse step s <- t of the linear teacher is a scalar multiple of Z_t.
double step_gain(const DiffusionSchedule& s, std::size_t lo, std::size_t hi, double c) {
  const double vs = s.sigma2[lo], vt = s.sigma2[hi];
  return (vt - vs) / vt * (1.0 - std::sqrt(vt) * c) + vs / vt;
}

}  // namespace

TEST(Halving, SequenceFromFiveSteps) {
  const auto seq = halving_sequence(Grid{0, 1, 2, 3, 4, 5});
  ASSERT_EQ(seq.size(), 3u);
  EXPECT_EQ(seq[0], (Grid{0, 2, 4, 5}));
  EXPECT_EQ(seq[1], (Grid{0, 4, 5}));
  EXPECT_EQ(seq[2], (Grid{0, 5}));
}

TEST(Halving, EachGridNestsInItsParent) {
  for (std::size_t n = 1; n <= 17; ++n) {
    Grid g(n + 1);
    for (std::size_t i = 0; i <= n; ++i) g[i] = i;
    auto parent = g;
    for (const auto& sub : halving_sequence(g)) {
      EXPECT_EQ(sub.front(), 0u);
      EXPECT_EQ(sub.back(), n);
      for (auto i : sub) EXPECT_TRUE(std::binary_search(parent.begin(), parent.end(), i));
      EXPECT_EQ(sub.size() - 1, (parent.size() - 1 + 1) / 2);
      parent = sub;
    }
    EXPECT_EQ(parent.size(), 2u);
  }
}

TEST(Halving, NonNestedSubGridRejected) {
  const auto& fx = testutil::moons_fixture();
  const auto teacher = linear_teacher(fx.bundle, 0.5f, {0, 2, 4, 5});
  DistillConfig cfg;
  cfg.steps = 1;
  cfg.batch = 1;
  EXPECT_THROW(distill_round(teacher, {0, 3, 5}, fx.bundle, fx.train, cfg), ConfigError);
  EXPECT_THROW(distill_round(teacher, {2, 5}, fx.bundle, fx.train, cfg), ConfigError);
  EXPECT_THROW(distill_round(teacher, {0, 4, 2, 5}, fx.bundle, fx.train, cfg), ConfigError);
}

TEST(Distill, OneStepBridgeIsReturnedUnchanged) {
  const auto& fx = testutil::moons_fixture();
  const auto teacher = linear_teacher(fx.bundle, 0.5f, {0, 5});
  DistillConfig cfg;
  cfg.steps = 5;
  const auto r = distill_to_one(teacher, fx.bundle, fx.train, cfg);
  ASSERT_EQ(r.rounds.size(), 1u);
  EXPECT_TRUE(r.final_model() == teacher);
}

TEST(Distill, LineageRecordsEveryRound) {
  const auto& fx = testutil::moons_fixture();
  const auto& lin = fx.one_step.lineage;
  ASSERT_EQ(lin.size(), 4u);
  EXPECT_EQ(lin[0].size(), 6u);
  EXPECT_EQ(lin[1].size(), 4u);
  EXPECT_EQ(lin[2].size(), 3u);
  EXPECT_EQ(lin[3], (std::vector<double>{0.0, 1.0}));
  EXPECT_EQ(fx.one_step.n_steps(), 1u);
  EXPECT_EQ(fx.one_step.weights, "ema");
}

TEST(StudentTarget, SingleTeacherStepRecoversTeacherEpsilon) {
  const auto& fx = testutil::moons_fixture();
  const auto& t = fx.bridge;
  const auto src = make_bridge_example(fx.bundle, t.teacher_indices, 0, fx.test.row(3));
  Rng rng(4);
  for (std::size_t hi = 1; hi <= 5; ++hi) {
    const auto zt = posterior_sample_at(src.z0, anneal_with(src.z1, 2.0), hi, t.schedule, &rng);
    const auto zs = teacher_rollout(t, src.h1, zt, hi, hi - 1, nullptr);
    const auto target = student_target(t.schedule, zt, zs, hi - 1, hi);
    const auto eps = t.net.epsilon(src.h1, zt, t.schedule.grid[hi]);
    for (std::size_t k = 0; k < 2; ++k) EXPECT_NEAR(target[k], eps[k], 1e-3 * std::max(1.0f, std::abs(eps[k])));
  }
}

TEST(StudentTarget, LinearTeacherClosedForm) {
  const auto& fx = testutil::moons_fixture();
  const double c = 0.7;
  const auto teacher = linear_teacher(fx.bundle, float(c), {0, 2, 5});
  const auto& s = teacher.schedule;
  const double gain = step_gain(s, 2, 5, c) * step_gain(s, 0, 2, c);
  const double expected = (1.0 - gain) / s.sigma(5);
  const auto src = source_feature(fx.bundle, fx.test.row(0));
  const std::vector<float> zt{1.25f, -0.5f};
  const auto zs = teacher_rollout(teacher, src.h1, zt, 5, 0, nullptr);
  for (std::size_t k = 0; k < 2; ++k) EXPECT_NEAR(zs[k], gain * zt[k], 1e-5);
  const auto target = student_target(s, zt, zs, 0, 5);
  for (std::size_t k = 0; k < 2; ++k) EXPECT_NEAR(target[k], expected * zt[k], 1e-5);
}

TEST(Distill, StudentLearnsComposedLinearMap) {
  const auto& fx = testutil::moons_fixture();
  const double c = 0.7;
  const auto teacher = linear_teacher(fx.bundle, float(c), {0, 2, 5});
  const double gain = step_gain(teacher.schedule, 2, 5, c) * step_gain(teacher.schedule, 0, 2, c);
  DistillConfig cfg;
  cfg.steps = 1500;
  cfg.batch = 16;
  cfg.lr = 3e-3;
  cfg.ema_decay = 0.9;
  cfg.seed = 2;
  const auto student = distill_round(teacher, {0, 5}, fx.bundle, fx.train, cfg);
  ASSERT_EQ(student.active, (Grid{0, 5}));
  Rng rng(0);
  double worst = 0, scale = 0;
  for (std::size_t i = 0; i < 50; ++i) {
    const auto src = source_feature(fx.bundle, fx.test.row(i));
    const auto z = anneal_with(src.z1, 2.0);
    const auto one = bridge_one_step(student, src.h1, src.z1, 2.0, false, rng);
    for (std::size_t k = 0; k < 2; ++k) {
      worst = std::max(worst, std::abs(one[k] - gain * z[k]));
      scale = std::max(scale, std::abs(gain * z[k]));
    }
  }
  EXPECT_LT(worst, 0.02 * scale) << "scale " << scale;
}

TEST(Distill, OneStepStaysCloseToFiveStepTeacher) {
  const auto& fx = testutil::moons_fixture();
  DbnPredictor five{fx.bundle.source(), {fx.bridge}, InferenceMode::ancestral};
  DbnPredictor one{fx.bundle.source(), {fx.one_step}, InferenceMode::one_step};
  five.fix_temperature_to_mean();
  one.fix_temperature_to_mean();
  Rng rng(0);
  double kl = 0;
  for (std::size_t i = 0; i < fx.test.size(); ++i) {
    const auto p = predict(five, fx.test.row(i), rng), q = predict(one, fx.test.row(i), rng);
    for (std::size_t k = 0; k < p.size(); ++k) kl += p[k] * std::log(std::max(p[k], 1e-12) / std::max(q[k], 1e-12));
  }
  kl /= double(fx.test.size());
  EXPECT_LT(kl, 0.01);
}
