#include <gtest/gtest.h>

#include <limits>

#include "resseg/optimizer.hpp"

using namespace resseg;

namespace {

Parameter<double> param(std::vector<double> w, std::vector<double> g, bool adaptive) {
  const Shape s{1, 1, 1, static_cast<int>(w.size())};
  Var<double> v(Tensor<double>(s, std::move(w)), true);
  v.mutable_grad() = Tensor<double>(s, std::move(g));
  return {"p", v, adaptive};
}

}  // namespace

TEST(Lamb, FirstStepByHand) {
  std::vector<Parameter<double>> ps{param({3, 4}, {1, 2}, true)};
  LambState<double> st;
  st.hyper.lr = 0.1;
  lamb_step<double>(ps, st);
  // Step 1: bias-corrected m = g, v = g^2, so u_i = g_i / (|g_i| + eps).
  const double eps = 1e-6;
  const double u0 = 1 / (1 + eps), u1 = 2 / (2 + eps);
  const double ratio = 5.0 / std::hypot(u0, u1);
  EXPECT_NEAR(ps[0].var.value()[0], 3 - 0.1 * ratio * u0, 1e-12);
  EXPECT_NEAR(ps[0].var.value()[1], 4 - 0.1 * ratio * u1, 1e-12);
  EXPECT_EQ(st.step, 1u);
  EXPECT_NEAR(st.moments.at("p").m[1], 0.2, 1e-15);
  EXPECT_NEAR(st.moments.at("p").v[1], 0.004, 1e-15);
}

TEST(Lamb, SecondStepByHand) {
  std::vector<Parameter<double>> ps{param({1, -2}, {0.5, 0.25}, false)};
  LambState<double> st;
  st.hyper.lr = 0.01;
  st.hyper.weight_decay = 0.1;
  lamb_step<double>(ps, st);
  const std::vector<double> w1 = ps[0].var.value().values();
  ps[0].var.mutable_grad() = Tensor<double>(Shape{1, 1, 1, 2}, {-1.0, 0.5});
  lamb_step<double>(ps, st);
  const double g1[2] = {0.5, 0.25}, g2[2] = {-1.0, 0.5};
  for (int i = 0; i < 2; ++i) {
    const double m = 0.9 * (0.1 * g1[i]) + 0.1 * g2[i];
    const double v = 0.999 * (0.001 * g1[i] * g1[i]) + 0.001 * g2[i] * g2[i];
    const double mh = m / (1 - 0.81), vh = v / (1 - 0.999 * 0.999);
    const double u = mh / (std::sqrt(vh) + 1e-6) + 0.1 * w1[i];
    EXPECT_NEAR(ps[0].var.value()[i], w1[i] - 0.01 * u, 1e-12);  // ratio 1: not layer-adaptive
  }
}

TEST(Lamb, TrustRatioEdgeCases) {
  EXPECT_EQ(trust_ratio(0.0, 3.0), 1.0);
  EXPECT_EQ(trust_ratio(3.0, 0.0), 1.0);
  EXPECT_DOUBLE_EQ(trust_ratio(3.0, 1.5), 2.0);
  // Zero weights: ratio 1, so the update is plain Adam-style.
  std::vector<Parameter<double>> ps{param({0, 0}, {1, -1}, true)};
  LambState<double> st;
  st.hyper.lr = 0.5;
  lamb_step<double>(ps, st);
  EXPECT_NEAR(ps[0].var.value()[0], -0.5 / (1 + 1e-6), 1e-12);
  EXPECT_NEAR(ps[0].var.value()[1], 0.5 / (1 + 1e-6), 1e-12);
}

TEST(Lamb, NonFiniteGradientLeavesEverythingUntouched) {
  std::vector<Parameter<double>> ps{param({1, 2}, {0.1, 0.2}, true), param({3}, {1}, false)};
  ps[1].name = "q";
  LambState<double> st;
  lamb_step<double>(ps, st);
  const auto w0 = ps[0].var.value().values();
  const auto w1 = ps[1].var.value().values();
  const auto m0 = st.moments.at("p").m.values();
  ps[1].var.mutable_grad()[0] = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(lamb_step<double>(ps, st), NumericError);
  EXPECT_EQ(ps[0].var.value().values(), w0);
  EXPECT_EQ(ps[1].var.value().values(), w1);
  EXPECT_EQ(st.moments.at("p").m.values(), m0);
  EXPECT_EQ(st.step, 1u);
}

TEST(Lamb, MissingGradientCountsAsZero) {
  Var<double> v(Tensor<double>(Shape{1, 1, 1, 2}, {1.0, 1.0}), true);
  std::vector<Parameter<double>> ps{{"p", v, true}};
  LambState<double> st;
  lamb_step<double>(ps, st);
  EXPECT_EQ(v.value().values(), (std::vector<double>{1.0, 1.0}));
}

TEST(Lamb, DescendsAConvexQuadraticMonotonically) {
  // f(w) = 0.5 * sum(c_i * w_i^2)
  const std::vector<double> c{1.0, 4.0, 0.25, 2.0};
  Var<double> w(Tensor<double>(Shape{1, 1, 1, 4}, {2.0, -1.5, 3.0, 0.7}), true);
  std::vector<Parameter<double>> ps{{"w", w, true}};
  LambState<double> st;
  st.hyper.lr = 0.01;
  auto f = [&] {
    double s = 0;
    for (int i = 0; i < 4; ++i) s += 0.5 * c[i] * w.value()[i] * w.value()[i];
    return s;
  };
  double prev = f();
  const double start = prev;
  for (int step = 0; step < 60; ++step) {
    for (int i = 0; i < 4; ++i) w.mutable_grad()[i] = c[i] * w.value()[i];
    lamb_step<double>(ps, st);
    const double now = f();
    EXPECT_LT(now, prev) << "step " << step;
    prev = now;
  }
  EXPECT_LT(prev, 0.5 * start);
}
