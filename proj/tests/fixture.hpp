#pragma once

#include "dbn/bridge.hpp"
#include "dbn/data.hpp"
#include "dbn/distill.hpp"
#include "dbn/ensemble.hpp"

namespace testutil {

/// Small two-moons setup shared by several suites: three teachers, one
/// five-step bridge over all of them and its one-step distillate.
struct MoonsFixture {
  dbn::Dataset train, test;
  dbn::EnsembleBundle bundle;
  dbn::BridgeModel bridge;
  dbn::BridgeModel one_step;
};

inline dbn::BridgeTrainConfig fixture_bridge_config() {
  dbn::BridgeTrainConfig c;
  c.steps = 3000;
  c.batch = 32;
  c.seed = 5;
  c.max_relative_params = 1.0;  // fixture teachers are narrow
  return c;
}

inline const MoonsFixture& moons_fixture() {
  static const MoonsFixture fx = [] {
    MoonsFixture f;
    f.train = dbn::make_two_moons(600, 0.2, 101);
    f.test = dbn::make_two_moons(300, 0.2, 102);
    dbn::TeacherTrainConfig tc;
    tc.epochs = 40;
    tc.batch = 32;
    f.bundle = dbn::train_teachers(f.train, dbn::ClassifierArch{2, {32, 32, 32}}, 3, {1, 2, 3}, tc);
    f.bridge = dbn::train_bridge(f.bundle, f.train, fixture_bridge_config());
    dbn::DistillConfig dc;
    dc.steps = 1500;
    dc.batch = 32;
    dc.seed = 6;
    f.one_step = dbn::distill_to_one(f.bridge, f.bundle, f.train, dc).final_model();
    return f;
  }();
  return fx;
}

}  // namespace testutil
