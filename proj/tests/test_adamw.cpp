#include <gtest/gtest.h>

#include <cmath>

#include "drt/adamw.hpp"
#include "drt/param.hpp"

using namespace drt;

namespace {

AdamWConfig base_config() {
  AdamWConfig cfg;
  cfg.lr = 0.01;
  cfg.beta1 = 0.9;
  cfg.beta2 = 0.999;
  cfg.eps = 1e-8;
  cfg.weight_decay = 0.0;
  return cfg;
}

TEST(AdamWTest, FirstStepMovesByLearningRate) {
  // Bias correction makes mhat = g and vhat = g^2 on the first step, so the
  // update is lr * g / (|g| + eps) = lr for g = 1.
  ParamStore store;
  store.add_segment("theta", {1});
  store[0] = 0.0;
  store.grads()[0] = 1.0;
  AdamWState opt;
  opt.init(store.size(), base_config());
  opt.step(store);
  EXPECT_NEAR(store[0], -0.01, 1e-9);
  EXPECT_EQ(opt.t, 1);
}

TEST(AdamWTest, ZeroGradientLeavesParametersUnchanged) {
  ParamStore store;
  store.add_segment("theta", {3});
  store[0] = 1.5;
  store[1] = -2.0;
  store[2] = 0.25;
  AdamWState opt;
  opt.init(store.size(), base_config());
  for (int i = 0; i < 5; ++i) opt.step(store);
  EXPECT_DOUBLE_EQ(store[0], 1.5);
  EXPECT_DOUBLE_EQ(store[1], -2.0);
  EXPECT_DOUBLE_EQ(store[2], 0.25);
}

TEST(AdamWTest, DecoupledDecayActsWithoutGradient) {
  ParamStore store;
  store.add_segment("theta", {1});
  store[0] = 1.0;
  AdamWConfig cfg = base_config();
  cfg.weight_decay = 0.1;
  AdamWState opt;
  opt.init(store.size(), cfg);
  opt.step(store);
  EXPECT_NEAR(store[0], 0.999, 1e-12);
}

TEST(AdamWTest, DecayIsDecoupledFromMoments) {
  // With decay on and zero gradient the moments must stay exactly zero.
  ParamStore store;
  store.add_segment("theta", {1});
  store[0] = 2.0;
  AdamWConfig cfg = base_config();
  cfg.weight_decay = 0.5;
  AdamWState opt;
  opt.init(store.size(), cfg);
  opt.step(store);
  opt.step(store);
  EXPECT_DOUBLE_EQ(opt.m[0], 0.0);
  EXPECT_DOUBLE_EQ(opt.v[0], 0.0);
}

TEST(AdamWTest, FrozenSegmentsAreSkippedEntirely) {
  ParamStore store;
  store.add_segment("live", {1});
  store.add_segment("frozen", {1});
  store[0] = 0.0;
  store[1] = 0.7;
  store.grads()[0] = 1.0;
  store.grads()[1] = 1.0;
  store.set_frozen("frozen", true);
  AdamWState opt;
  opt.init(store.size(), base_config());
  opt.step(store);
  EXPECT_NEAR(store[0], -0.01, 1e-9);
  EXPECT_DOUBLE_EQ(store[1], 0.7);
  EXPECT_DOUBLE_EQ(opt.m[1], 0.0);
  EXPECT_DOUBLE_EQ(opt.v[1], 0.0);
}

TEST(AdamWTest, GradsAreLeftForTheCaller) {
  ParamStore store;
  store.add_segment("theta", {1});
  store.grads()[0] = 3.0;
  AdamWState opt;
  opt.init(store.size(), base_config());
  opt.step(store);
  EXPECT_DOUBLE_EQ(store.grads()[0], 3.0);
}

TEST(AdamWTest, ConvergesOnAQuadratic) {
  // Minimize (theta - 4)^2; AdamW with tiny decay should land near 4.
  ParamStore store;
  store.add_segment("theta", {1});
  store[0] = -1.0;
  AdamWConfig cfg = base_config();
  cfg.lr = 0.05;
  cfg.weight_decay = 1e-6;
  AdamWState opt;
  opt.init(store.size(), cfg);
  for (int i = 0; i < 2000; ++i) {
    store.zero_grad();
    store.grads()[0] = 2.0 * (store[0] - 4.0);
    opt.step(store);
  }
  EXPECT_NEAR(store[0], 4.0, 1e-3);
}

TEST(AdamWTest, SizeMismatchIsAnError) {
  ParamStore store;
  store.add_segment("theta", {2});
  AdamWState opt;
  opt.init(1, base_config());
  EXPECT_THROW(opt.step(store), UsageError);
}

}  // namespace
