#include <gtest/gtest.h>

#include "gradcheck_cases.hpp"
#include "resseg/autodiff.hpp"

using namespace resseg;

class GradCheck : public ::testing::TestWithParam<gradcheck::Case> {};

TEST_P(GradCheck, MatchesCentralDifferences) {
  const auto outcome = gradcheck::run(GetParam(), 1234);
  EXPECT_EQ(outcome.trials, gradcheck::kTrials);
  EXPECT_LT(outcome.worst, gradcheck::kTolerance) << GetParam().name;
}

INSTANTIATE_TEST_SUITE_P(Ops, GradCheck, ::testing::ValuesIn(gradcheck::cases()),
                         [](const auto& info) { return info.param.name; });

TEST(Tape, GradientsAccumulateAcrossBackwardCalls) {
  Var<double> x(Tensor<double>(Shape{1, 1, 2, 2}, {1, 2, 3, 4}), true);
  backward(sum(mul_const(x, 3.0)));
  backward(sum(mul_const(x, 3.0)));
  for (double g : x.grad().values()) EXPECT_DOUBLE_EQ(g, 6.0);
  x.zero_grad();
  for (double g : x.grad().values()) EXPECT_DOUBLE_EQ(g, 0.0);
}

TEST(Tape, SharedSubexpressionReceivesBothContributions) {
  Var<double> x(Tensor<double>(Shape{1, 1, 1, 3}, {1, -2, 0.5}), true);
  Var<double> y = mul(x, x);  // d/dx sum(x*x + x) = 2x + 1
  backward(sum(add(y, x)));
  EXPECT_DOUBLE_EQ(x.grad()[0], 3.0);
  EXPECT_DOUBLE_EQ(x.grad()[1], -3.0);
  EXPECT_DOUBLE_EQ(x.grad()[2], 2.0);
}

TEST(Tape, ConstantsGetNoGradientAndBuildNoGraph) {
  Var<double> a(Tensor<double>(Shape{1, 1, 1, 2}, 1.0));
  Var<double> b(Tensor<double>(Shape{1, 1, 1, 2}, 2.0), true);
  Var<double> c = add(a, a);
  EXPECT_TRUE(c.is_leaf());
  backward(sum(mul(c, b)));
  EXPECT_FALSE(a.has_grad());
  EXPECT_DOUBLE_EQ(b.grad()[0], 2.0);
}

TEST(Tape, BackwardRequiresScalarLoss) {
  Var<double> x(Tensor<double>(Shape{1, 1, 2, 2}, 1.0), true);
  EXPECT_THROW(backward(mul_const(x, 2.0)), ShapeError);
}

TEST(Broadcast, RejectsIncompatibleShapesNamingBoth) {
  Var<double> a(Tensor<double>(Shape{2, 3, 4, 4}));
  Var<double> b(Tensor<double>(Shape{2, 2, 4, 4}));
  try {
    add(a, b);
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("(2,3,4,4)"), std::string::npos) << msg;
    EXPECT_NE(msg.find("(2,2,4,4)"), std::string::npos) << msg;
  }
}

TEST(Broadcast, ChannelAndSpatialValues) {
  Tensor<double> a(Shape{1, 2, 1, 2}, {1, 2, 3, 4});
  Var<double> c = add(Var<double>(a), Var<double>(Tensor<double>(Shape{1, 2, 1, 1}, {10, 20})));
  EXPECT_EQ(c.value().values(), (std::vector<double>{11, 12, 23, 24}));
  Var<double> s = mul(Var<double>(a), Var<double>(Tensor<double>(Shape{1, 1, 1, 2}, {2, 3})));
  EXPECT_EQ(s.value().values(), (std::vector<double>{2, 6, 6, 12}));
}

TEST(Tensor, ConstructionChecksLength) {
  EXPECT_THROW(Tensor<float>(Shape{1, 1, 2, 2}, std::vector<float>{1, 2, 3}), ShapeError);
  EXPECT_THROW(Tensor<float>(Shape{1, 1, 2, 2}).reshaped(Shape{1, 1, 3, 1}), ShapeError);
}
