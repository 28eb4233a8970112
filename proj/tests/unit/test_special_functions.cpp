#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "flockd/errors.hpp"
#include "flockd/special_functions.hpp"
#include "oracles.hpp"

using namespace flockd;

namespace {

std::vector<double> log_grid(double lo, double hi, int n) {
  std::vector<double> g;
  for (int i = 0; i < n; ++i) g.push_back(lo * std::pow(hi / lo, double(i) / (n - 1)));
  return g;
}

double rel(double a, double b) { return std::abs(a - b) / std::abs(b); }

}  // namespace

TEST(BesselK, MatchesBoostInDoublePrecisionRange) {
  for (int j = 0; j <= 3; ++j) {
    for (double g : log_grid(0.05, 700.0, 80)) {
      const double ref = boost::math::cyl_bessel_k(j, g);
      EXPECT_LT(rel(bessel_k(j, g), ref), 1e-10) << "j=" << j << " γ=" << g;
    }
  }
}

TEST(BesselK, ScaledMatchesFiftyDigitReference) {
  for (int j = 0; j <= 2; ++j) {
    for (double g : {0.3, 2.0, 29.0, 31.0, 80.0, 1e3, 1e4, 1e6}) {
      const auto ref = oracle::d(exp(oracle::R(g)) * oracle::bessel_k(j, g));
      EXPECT_LT(rel(bessel_k_scaled(j, g), ref), 1e-10) << "j=" << j << " γ=" << g;
    }
  }
}

TEST(BesselK, ReferenceValueAtOne) {
  EXPECT_NEAR(bessel_k(0, 1.0), 0.42102443824, 1e-11);
}

TEST(BesselK, RecurrenceHolds) {
  EXPECT_NEAR(bessel_k(2, 3.0), 2.0 / 3.0 * bessel_k(1, 3.0) + bessel_k(0, 3.0), 1e-12);
  for (double g : log_grid(0.5, 500.0, 60)) {
    const double k0 = bessel_k_scaled(0, g);
    const double k1 = bessel_k_scaled(1, g);
    const double k2 = bessel_k_scaled(2, g);
    EXPECT_LE(std::abs(k2 - 2.0 / g * k1 - k0), 1e-10 * k2) << "γ=" << g;
  }
}

TEST(BesselK, OrdersAreStrictlyIncreasing) {
  for (double g : log_grid(0.01, 1e5, 70)) {
    double prev = bessel_k_scaled(0, g);
    for (int j = 1; j <= 3; ++j) {
      const double k = bessel_k_scaled(j, g);
      EXPECT_LT(prev, k) << "j=" << j << " γ=" << g;
      prev = k;
    }
  }
}

TEST(BesselK, LargeArgumentSeriesMatchesThreeTerms) {
  const double g = 50.0;
  const double three = std::sqrt(M_PI / (2 * g)) * std::exp(-g) *
                       (1 + 3.0 / (8 * g) - 15.0 / (128 * g * g));
  EXPECT_LT(rel(bessel_k(1, g), three), 1e-5);
  EXPECT_DOUBLE_EQ(bessel_k_asymptotic_coefficient(1, 1), 3.0 / 8.0);
  EXPECT_DOUBLE_EQ(bessel_k_asymptotic_coefficient(1, 2), -15.0 / 128.0);
  EXPECT_DOUBLE_EQ(bessel_k_asymptotic_coefficient(0, 1), -1.0 / 8.0);
}

TEST(BesselK, ContinuousAcrossSeriesSwitch) {
  for (int j = 0; j <= 3; ++j) {
    const double below = bessel_k_scaled(j, std::nextafter(30.0, 0.0));
    const double above = bessel_k_scaled(j, 30.0);
    EXPECT_LT(rel(below, above), 1e-10) << "j=" << j;
  }
}

TEST(BesselK, RejectsBadArguments) {
  EXPECT_THROW(bessel_k(0, 0.0), Error);
  try {
    bessel_k(1, -1.0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Domain);
  }
  try {
    bessel_k(-1, 1.0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Usage);
  }
  EvalPolicy p;
  p.rel_tol = 0.0;
  EXPECT_THROW(check_policy(p), Error);
}

TEST(BesselRatio, StaysInsideTwoSidedBounds) {
  const double r4 = bessel_k_ratio(0, 1, 4.0);
  EXPECT_GE(r4, 1 - 1.0 / 8);
  EXPECT_LE(r4, 1 - 1.0 / 8 + 3.0 / 128 + 3.0 / 1024);
  for (double g : log_grid(1.4143, 1e4, 50)) {
    const double r = bessel_k_ratio(0, 1, g);
    EXPECT_GE(r, 1 - 1 / (2 * g));
    EXPECT_LE(r, 1 - 1 / (2 * g) + 3 / (8 * g * g) + 3 / (16 * g * g * g));
  }
  for (double g : log_grid(2.0001, 1e3, 40)) {
    const double r = bessel_k_ratio(0, 1, g);
    const double common = 1 - 1 / (2 * g) + 3 / (8 * g * g) - 3 / (8 * std::pow(g, 3)) +
                          63 / (128 * std::pow(g, 4));
    EXPECT_GE(r, common - 31 / (20 * std::pow(g, 5))) << "γ=" << g;
    EXPECT_LE(r, common + 7 / (8 * std::pow(g, 5))) << "γ=" << g;
  }
}

TEST(BesselRatio, LargeArgumentValues) {
  EXPECT_NEAR(bessel_k_ratio(1, 2, 200.0), 1 - 3.0 / 400 + 15.0 / (8 * 200.0 * 200.0), 1e-6);
  EXPECT_NEAR(bessel_k_ratio(0, 1, 1e6), 1.0, 1e-6);
  // No underflow far beyond the double range of K_j itself.
  const double r = bessel_k_ratio(0, 1, 5e3);
  EXPECT_TRUE(std::isfinite(r));
  EXPECT_NEAR(r, oracle::d(oracle::bessel_k(0, 5e3) / oracle::bessel_k(1, 5e3)), 1e-13);
  EXPECT_THROW(bessel_k_ratio(0, 2, 1.0), Error);
}

TEST(BesselDerivative, Identities) {
  EXPECT_DOUBLE_EQ(bessel_k_derivative(0, 2.0), -bessel_k(1, 2.0));
  EXPECT_NEAR(bessel_k_derivative(1, 2.0), -bessel_k(0, 2.0) - bessel_k(1, 2.0) / 2.0, 1e-15);
  const double h = 1e-5;
  const double fd = (bessel_k(0, 3.0 + h) - bessel_k(0, 3.0 - h)) / (2 * h);
  EXPECT_NEAR(bessel_k_derivative(0, 3.0), fd, 1e-6);
  EXPECT_THROW(bessel_k_derivative(2, 1.0), Error);
}

TEST(TailIntegral, MatchesFiftyDigitQuadrature) {
  for (double g : {0.05, 1.0, 5.0, 12.0, 29.5, 30.0, 44.0, 46.0, 100.0, 500.0}) {
    const oracle::R G = g;
    const double ref = oracle::d(exp(G) * oracle::tail(G));
    EXPECT_LT(rel(tail_integral_scaled(g), ref), 1e-9) << "γ=" << g;
  }
}

TEST(TailIntegral, AgreesWithCompositeSimpsonAtOne) {
  // Simpson on [1, 60] with Boost K_1; the remainder beyond 60 is below 1e-27.
  const int n = 200000;
  const double a = 1.0;
  const double b = 60.0;
  const double h = (b - a) / n;
  auto f = [](double y) { return boost::math::cyl_bessel_k(1, y) / y; };
  double s = f(a) + f(b);
  for (int i = 1; i < n; ++i) s += (i % 2 ? 4.0 : 2.0) * f(a + i * h);
  EXPECT_LT(rel(tail_integral_k1_over_y(1.0), s * h / 3.0), 1e-8);
}

TEST(TailIntegral, ThreeTermSeriesAtFifty) {
  const double g = 50.0;
  const double series = std::sqrt(M_PI / 2) * std::exp(-g) * std::pow(g, -1.5) *
                        (1 - 9.0 / 400 + 345.0 / 320000);
  EXPECT_LT(rel(tail_integral_k1_over_y(g), series), 1e-4);
  EXPECT_DOUBLE_EQ(tail_asymptotic_coefficient(0), 1.0);
  EXPECT_DOUBLE_EQ(tail_asymptotic_coefficient(1), -9.0 / 8.0);
  EXPECT_DOUBLE_EQ(tail_asymptotic_coefficient(2), 345.0 / 128.0);
}

TEST(TailIntegral, DerivativeIsMinusK1OverGamma) {
  const double h = 1e-2;
  auto f = [](double x) { return tail_integral_k1_over_y(x); };
  for (double g : log_grid(1.0, 100.0, 40)) {
    const double fd = (f(g - 2 * h) - 8 * f(g - h) + 8 * f(g + h) - f(g + 2 * h)) / (12 * h);
    EXPECT_LT(rel(fd, -bessel_k(1, g) / g), 1e-6) << "γ=" << g;
  }
}

TEST(TailIntegral, RejectsNonPositive) {
  EXPECT_THROW(tail_integral_k1_over_y(0.0), Error);
  EXPECT_THROW(tail_integral_scaled(-3.0), Error);
}

TEST(Policy, QuadratureOnlyAgreesWithSeries) {
  EvalPolicy quad;
  quad.asymptotic_switch = 1e9;
  for (double g : {35.0, 60.0, 200.0}) {
    EXPECT_LT(rel(bessel_k_scaled(1, g, quad), bessel_k_scaled(1, g)), 1e-11) << "γ=" << g;
  }
}
