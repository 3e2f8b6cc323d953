#include <gtest/gtest.h>

#include "fprune/autodiff.hpp"
#include "fprune/ops.hpp"

using namespace fprune;

TEST(ParamStore, AddFindReplace) {
  ParamStore s;
  s.add("w", Tensor({2}, 1.0));
  EXPECT_THROW(s.add("w", Tensor({1})), std::invalid_argument);
  EXPECT_TRUE(s.contains("w"));
  EXPECT_EQ(s.find("x"), nullptr);
  EXPECT_THROW(s.at("x"), std::out_of_range);
  s.at("w").grad[0] = 3.0;
  s.replace("w", Tensor({3}, 2.0));
  EXPECT_EQ(s.at("w").grad, Tensor({3}));
  EXPECT_EQ(s.scalar_count(), 3u);
  s.remove("w");
  EXPECT_EQ(s.size(), 0u);
}

TEST(Tape, BackwardBeforeForwardFails) {
  Tape t;
  Var dummy;
  EXPECT_THROW(t.backward(dummy), std::logic_error);
}

TEST(Tape, BackwardTwiceFails) {
  ParamStore s;
  auto& p = s.add("w", Tensor({1}, 2.0));
  Tape t;
  Var loss = sum(t.param(p));
  t.backward(loss);
  EXPECT_THROW(t.backward(loss), std::logic_error);
}

TEST(Tape, NonScalarLossFails) {
  ParamStore s;
  auto& p = s.add("w", Tensor({3}, 2.0));
  Tape t;
  Var out = scale(t.param(p), 2.0);
  EXPECT_THROW(t.backward(out), ShapeError);
}

TEST(Tape, InferenceTapeRefusesBackward) {
  ParamStore s;
  auto& p = s.add("w", Tensor({1}, 2.0));
  Tape t(false);
  Var loss = sum(t.param(p));
  EXPECT_THROW(t.backward(loss), std::logic_error);
}

TEST(Tape, GradientsAccumulateAcrossUses) {
  // f = sum(w * w + 3 w) -> df/dw = 2w + 3
  ParamStore s;
  auto& p = s.add("w", Tensor({2}, std::vector<double>{1.0, -2.0}));
  Tape t;
  Var w = t.param(p);
  Var loss = sum(add(mul(w, w), scale(w, 3.0)));
  t.backward(loss);
  EXPECT_DOUBLE_EQ(p.grad[0], 5.0);
  EXPECT_DOUBLE_EQ(p.grad[1], -1.0);
}

TEST(Tape, GradientsAddIntoExistingSlots) {
  ParamStore s;
  auto& p = s.add("w", Tensor({1}, 1.0));
  for (int i = 0; i < 3; ++i) {
    Tape t;
    t.backward(sum(scale(t.param(p), 2.0)));
  }
  EXPECT_DOUBLE_EQ(p.grad[0], 6.0);
  s.zero_grad();
  EXPECT_DOUBLE_EQ(p.grad[0], 0.0);
}

TEST(Tape, ConstantsReceiveNoGradientPath) {
  Tape t;
  Var c = t.constant(Tensor({2}, 1.0));
  EXPECT_FALSE(t.requires_grad(c));
  Var s = sum(c);
  EXPECT_FALSE(t.requires_grad(s));
}
