#include <cmath>
#include <numbers>

#include <gtest/gtest.h>

#include "matpac/schedules.hpp"
#include "support.hpp"

using namespace matpac;
using testing_support::random_matrix;

TEST(EmaUpdate, Examples) {
  ParameterStore<double> t, s;
  t.add("w", Matrix<double>::Ones(2, 2));
  s.add("w", Matrix<double>::Zero(2, 2));
  auto keep = t;
  ema_update(keep, s, 1.0);
  EXPECT_EQ(keep.at("w"), t.at("w"));
  auto copy = t;
  ema_update(copy, s, 0.0);
  EXPECT_EQ(copy.at("w"), s.at("w"));
  auto mid = t;
  ema_update(mid, s, 0.9);
  EXPECT_TRUE((mid.at("w").array() == 0.9).all());
}

TEST(EmaUpdate, Errors) {
  ParameterStore<double> t, s, other;
  t.add("w", Matrix<double>::Ones(2, 2));
  s.add("w", Matrix<double>::Zero(2, 2));
  other.add("w", Matrix<double>::Zero(2, 3));
  EXPECT_THROW(ema_update(t, other, 0.5), ShapeError);
  EXPECT_THROW(ema_update(t, s, 1.1), DomainError);
  EXPECT_THROW(ema_update(t, s, -0.1), DomainError);
}

TEST(EmaUpdate, TwoStepsEqualSquaredDecay) {
  ParameterStore<double> t, s;
  t.add("a", random_matrix(3, 4, 1));
  t.add("b", random_matrix(1, 5, 2));
  s.add("a", random_matrix(3, 4, 3));
  s.add("b", random_matrix(1, 5, 4));
  for (double d : {0.0, 0.3, 0.9, 0.999}) {
    auto twice = t, once = t;
    ema_update(twice, s, d);
    ema_update(twice, s, d);
    ema_update(once, s, d * d);
    for (std::size_t i = 0; i < t.size(); ++i) EXPECT_TRUE(twice[i].second.isApprox(once[i].second, 1e-12));
  }
}

TEST(TauTeacher, Examples) {
  EXPECT_EQ(tau_t_schedule(0, 10), 0.04);
  EXPECT_EQ(tau_t_schedule(10, 10), 0.07);
  EXPECT_EQ(tau_t_schedule(250, 10), 0.07);
  EXPECT_NEAR(tau_t_schedule(5, 10), 0.055, 1e-15);
  EXPECT_THROW(tau_t_schedule(-1, 10), DomainError);
  EXPECT_THROW(tau_t_schedule(1, 0), DomainError);
}

TEST(Zeta, Examples) {
  EXPECT_EQ(zeta_schedule(0, 300), 0.998);
  EXPECT_EQ(zeta_schedule(300, 300), 1.0);
  EXPECT_NEAR(zeta_schedule(150, 300), 0.999, 1e-15);
  EXPECT_THROW(zeta_schedule(301, 300), DomainError);
  EXPECT_THROW(zeta_schedule(0, 0), DomainError);
}

TEST(Lambda, EndpointsMonotoneAndErrors) {
  EXPECT_EQ(lambda_schedule(0, 300, 0.99995, 0.99999), 0.99995);
  EXPECT_EQ(lambda_schedule(300, 300, 0.99995, 0.99999), 0.99999);
  double prev = 0.0;
  for (int e = 0; e <= 300; ++e) {
    const double v = lambda_schedule(e, 300, 0.99995, 0.99999);
    EXPECT_GE(v, prev);
    prev = v;
  }
  EXPECT_THROW(lambda_schedule(0, 300, 0.9, 0.8), DomainError);
  EXPECT_THROW(lambda_schedule(0, 300, 0.9, 1.1), DomainError);
  EXPECT_THROW(lambda_schedule(301, 300, 0.9, 0.99), DomainError);
}

TEST(LearningRate, Examples) {
  EXPECT_EQ(lr_schedule(0, 20, 300, 3e-4), 0.0);
  EXPECT_NEAR(lr_schedule(20, 20, 300, 3e-4), 3e-4, 1e-18);
  EXPECT_NEAR(lr_schedule(300, 20, 300, 3e-4), 0.0, 1e-18);
  EXPECT_NEAR(lr_schedule(10, 20, 300, 3e-4), 1.5e-4, 1e-18);
  EXPECT_NEAR(lr_schedule(160, 20, 300, 3e-4), 1.5e-4, 1e-15);
  EXPECT_EQ(lr_schedule(200, 20, 300, 3e-4, LrShape::constant), 3e-4);
  EXPECT_THROW(lr_schedule(0, 300, 300, 3e-4), DomainError);
}

TEST(LearningRate, CosineMatchesOracleAndDecreases) {
  double prev = 1.0;
  for (int i = 0; i <= 280; ++i) {
    const double e = 20.0 + i;
    const double want = 3e-4 * 0.5 * (1.0 + std::cos(std::numbers::pi * i / 280.0));
    const double got = lr_schedule(e, 20, 300, 3e-4);
    EXPECT_NEAR(got, want, 1e-16);
    EXPECT_LE(got, prev);
    prev = got;
  }
}

TEST(ScheduleAt, PureAndBundled) {
  ScheduleConfig c;
  c.total_epochs = 50;
  c.warmup_epochs = 5;
  c.n_tau_epochs = 10;
  for (double e : {0.0, 2.5, 10.0, 33.3, 50.0}) {
    const auto a = schedule_at(c, e);
    const auto b = schedule_at(c, e);
    EXPECT_EQ(a.lr, b.lr);
    EXPECT_EQ(a.lr, lr_schedule(e, 5, 50, c.base_lr));
    EXPECT_EQ(a.lambda, lambda_schedule(e, 50, c.lambda_start, c.lambda_end));
    EXPECT_EQ(a.zeta, zeta_schedule(e, 50));
    EXPECT_EQ(a.tau_t, tau_t_schedule(e, 10));
  }
  EXPECT_EQ(schedule_at(c, 60.0).zeta, 1.0);
}
