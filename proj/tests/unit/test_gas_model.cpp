#include <gtest/gtest.h>

#include <array>
#include <cmath>
#include <vector>

#include "flockd/errors.hpp"
#include "flockd/gas_model.hpp"
#include "oracles.hpp"

using namespace flockd;

namespace {

std::vector<double> log_grid(double lo, double hi, int n) {
  std::vector<double> g;
  for (int i = 0; i < n; ++i) g.push_back(lo * std::pow(hi / lo, double(i) / (n - 1)));
  return g;
}

double rel(double a, double b) { return std::abs(a - b) / std::abs(b); }

ErrorKind kind_of(auto&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no exception";
  return ErrorKind::Usage;
}

}  // namespace

TEST(Closure, MatchesFiftyDigitReference) {
  for (int chi = 1; chi <= 4; ++chi) {
    for (double g : {gamma_min(chi), 17.0, 29.9, 30.0, 44.9, 45.0, 120.0, 1e3, 1e5}) {
      const SyngeClosure s = synge_closure(chi, g);
      const oracle::R H = oracle::closure_h(chi, g);
      EXPECT_LT(rel(s.h, oracle::d(H)), 1e-10) << "χ=" << chi << " γ=" << g;
      EXPECT_LT(rel(s.h_minus_one, oracle::d(H - 1)), 1e-9) << "χ=" << chi << " γ=" << g;
    }
  }
}

TEST(Closure, DerivativeMatchesFiftyDigitReference) {
  for (int chi = 1; chi <= 4; ++chi) {
    for (double g : {gamma_min(chi), 33.0, 60.0, 2e3}) {
      const double ref = oracle::d(oracle::closure_dh(chi, g));
      EXPECT_LT(rel(dh_dgamma(chi, g), ref), 1e-8) << "χ=" << chi << " γ=" << g;
    }
  }
}

TEST(Closure, LargeGammaValues) {
  EXPECT_NEAR(h_factor(1, 1000.0), 1 + 5.0 / 2000, 5e-6);
  EXPECT_NEAR(h_factor(3, 1000.0), 1 + 9.0 / 2000, 5e-6);
  const double g = 200.0;
  const double k0 = bessel_k_scaled(0, g);
  const double direct = k0 / (g * k0 - g * g * tail_integral_scaled(g)) + 3 / g;
  EXPECT_NEAR(h_factor(4, g), direct, 1e-12);
  EXPECT_NEAR(h_factor(4, g), 1 + 11.0 / (2 * g), 1e-3);
}

TEST(Closure, SecondOrderRemainder) {
  for (int chi = 1; chi <= 4; ++chi) {
    double worst = 0;
    for (double g : log_grid(20.0, 1e14, 80)) {
      const double lead = (2.0 * chi + 3) / (2 * g);
      worst = std::max(worst, std::abs(synge_closure(chi, g).h_minus_one - lead) * g * g);
    }
    EXPECT_LT(worst, 10.0) << "χ=" << chi;
  }
}

TEST(Closure, DerivativeAgreesWithFiniteDifferences) {
  for (int chi = 1; chi <= 4; ++chi) {
    const double lo = (chi <= 2 ? 5.0 : 10.0) * 1.001;
    for (double g : log_grid(lo, 1e4, 40)) {
      const double h = 1e-4 * g;
      auto f = [&](double x) { return synge_closure(chi, x).h_minus_one; };
      const double fd = (f(g - 2 * h) - 8 * f(g - h) + 8 * f(g + h) - f(g + 2 * h)) / (12 * h);
      EXPECT_LT(rel(dh_dgamma(chi, g), fd), 1e-6) << "χ=" << chi << " γ=" << g;
    }
  }
  EXPECT_NEAR(dh_dgamma(1, 500.0), -5.0 / (2 * 500.0 * 500.0), 0.2 * 5.0 / (2 * 500.0 * 500.0));
  const double fd2 = (h_factor(2, 10.0 + 1e-4) - h_factor(2, 10.0 - 1e-4)) / 2e-4;
  EXPECT_NEAR(dh_dgamma(2, 10.0), fd2, 1e-6);
}

TEST(Closure, RangeAndChiChecks) {
  EXPECT_EQ(gamma_min(1), 5.0);
  EXPECT_EQ(gamma_min(4), 10.0);
  EXPECT_EQ(kind_of([] { h_factor(1, 4.9); }), ErrorKind::Domain);
  EXPECT_EQ(kind_of([] { h_factor(3, 9.0); }), ErrorKind::Domain);
  EXPECT_THROW(check_chi(0), Error);
  EXPECT_THROW(check_chi(5), Error);
  EXPECT_NO_THROW(check_chi(2));
  EXPECT_EQ(degrees_of_freedom(3), 7);
  EXPECT_DOUBLE_EQ(specific_heat(2), 2.5);
}

TEST(Closure, ExceedsOne) {
  for (int chi = 1; chi <= 4; ++chi)
    for (double g : log_grid(gamma_min(chi), 1e8, 30)) EXPECT_GT(h_factor(chi, g), 1.0);
}

TEST(Thermo, PressureAndInternalEnergy) {
  for (int chi = 1; chi <= 4; ++chi) {
    const ThermoState s = thermo_state(chi, 2.5, 1.7, 50.0);
    EXPECT_EQ(s.pressure, 2.5 * 1.7);
    EXPECT_NEAR(s.energy_density, 2.5 * (50.0 * 50.0 + s.internal_energy), 1e-9 * s.energy_density);
  }
  EXPECT_NEAR(thermo_state(1, 1.0, 1.0, 100.0).internal_energy, 1.5, 1e-3);
  EXPECT_NEAR(thermo_state(2, 1.0, 2.0, 1000.0).internal_energy, 5.0, 1e-5);
  EXPECT_THROW(thermo_state(1, -1.0, 1.0, 100.0), Error);
  EXPECT_THROW(thermo_state(1, 1.0, 1.0, 1.0), Error);
}

TEST(Lorentz, KnownValues) {
  const std::array<double, 3> zero{0, 0, 0};
  EXPECT_EQ(lorentz_gamma(zero, 10.0), 1.0);
  const std::array<double, 3> v06{0.6 * 3.0, 0, 0};
  EXPECT_NEAR(lorentz_gamma(v06, 3.0), 1.25, 1e-15);
  const std::array<double, 2> v{0.1, 0};
  EXPECT_DOUBLE_EQ(lorentz_gamma(v, 10.0), 1 / std::sqrt(1 - 1e-4));
  const std::array<double, 3> w{0.3, -0.4, 0.5};
  const double G = lorentz_gamma(w, 2.0);
  EXPECT_NEAR(4 * G * G - G * G * 0.5, 4.0, 1e-13);
  const LorentzFactor lf = lorentz_factor(1e-20, 1.0);
  EXPECT_NEAR(lf.gamma_minus_one, 5e-21, 1e-35);
}

TEST(Lorentz, SuperluminalIsKinematicsError) {
  const std::array<double, 1> v{1.0};
  EXPECT_EQ(kind_of([&] { lorentz_gamma(v, 1.0); }), ErrorKind::Kinematics);
  EXPECT_EQ(kind_of([] { lorentz_factor(4.0, 1.5); }), ErrorKind::Kinematics);
}

TEST(Energy, ClassicalLimitValues) {
  const std::array<double, 3> v1{1, 0, 0};
  EXPECT_NEAR(relativistic_energy(1, 1.0, v1, 1e4), 2.0, 1e-6);
  const std::array<double, 3> v0{0, 0, 0};
  EXPECT_NEAR(relativistic_energy(4, 2.0, v0, 1e4), 9.0, 1e-6);
}

TEST(Energy, DeviationShrinksAsInverseSquare) {
  const std::array<double, 3> v{2, 0, 0};
  std::vector<double> lc, ld;
  for (double c : {50.0, 100.0, 200.0}) {
    lc.push_back(std::log(c));
    ld.push_back(std::log(std::abs(relativistic_energy(3, 1.0, v, c) - 5.5)));
  }
  const double mx = (lc[0] + lc[1] + lc[2]) / 3;
  const double my = (ld[0] + ld[1] + ld[2]) / 3;
  double num = 0, den = 0;
  for (int i = 0; i < 3; ++i) {
    num += (lc[i] - mx) * (ld[i] - my);
    den += (lc[i] - mx) * (lc[i] - mx);
  }
  EXPECT_NEAR(num / den, -2.0, 0.1);
}

TEST(Energy, IncreasingInTemperature) {
  const std::array<double, 3> v{0.5, 0.2, 0};
  for (int chi = 1; chi <= 4; ++chi) {
    double prev = -1;
    for (double T = 0.5; T <= 5.0; T += 0.25) {
      const double e = relativistic_energy(chi, T, v, 100.0);
      EXPECT_GT(e, prev) << "χ=" << chi << " T=" << T;
      prev = e;
    }
  }
}

TEST(Energy, ClosureFieldsConsistent) {
  const RelativisticClosure r = relativistic_closure(2, 1.3, 0.64, 30.0);
  EXPECT_DOUBLE_EQ(r.gamma_a, 900.0 / 1.3);
  EXPECT_NEAR(r.momentum_factor, r.lorentz * r.h, 1e-15);
  EXPECT_NEAR(r.h, 1 + r.h_minus_one, 1e-15);
  const std::array<double, 2> v{0.8, 0.0};
  EXPECT_NEAR(r.energy, relativistic_energy(2, 1.3, v, 30.0), 1e-12);
  const auto w = auxiliary_momentum(2, 1.3, v, 30.0);
  EXPECT_NEAR(w[0], r.momentum_factor * 0.8, 1e-15);
  EXPECT_EQ(w[1], 0.0);
}

TEST(ErrorTerm, BoundedAsLightSpeedGrows) {
  for (int chi = 1; chi <= 4; ++chi) {
    for (double T : {0.5, 1.0, 5.0}) {
      for (double s : {0.0, 1.0, 2.0}) {
        const std::array<double, 3> v{s, 0, 0};
        double lo = INFINITY, hi = -INFINITY;
        for (double c : {1e2, 1e3, 1e4, 1e5}) {
          const double f = error_term_F(chi, T, v, c);
          ASSERT_TRUE(std::isfinite(f));
          lo = std::min(lo, f);
          hi = std::max(hi, f);
        }
        EXPECT_LT(hi - lo, 0.1 * (1 + std::abs(hi))) << "χ=" << chi << " T=" << T << " |v|=" << s;
      }
    }
  }
}

TEST(ErrorTerm, RichardsonConsistent) {
  const std::array<double, 3> v{1, 0, 0};
  const double f100 = error_term_F(2, 1.0, v, 100.0);
  const double f200 = error_term_F(2, 1.0, v, 200.0);
  const double f400 = error_term_F(2, 1.0, v, 400.0);
  // Differences shrink by ~4 per doubling of c.
  EXPECT_NEAR((f100 - f200) / (f200 - f400), 4.0, 0.5);
}
