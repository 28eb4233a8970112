#include "flockd/gas_model.hpp"

#include <cmath>
#include <string>

#include "flockd/errors.hpp"
#include "series.hpp"

namespace flockd {
namespace {

using detail::Coefficients;
using detail::kSeriesTerms;

// H - 1 = P(u)/Q(u) + k u with u = 1/γ; P starts at u^1.
struct ClosureSeries {
  Coefficients p{};
  Coefficients q{};
  double k = 0.0;
  double reach = 2.0;
};

ClosureSeries build_series(int chi) {
  const auto& t = detail::series_tables();
  const auto& a0 = t.bessel[0];
  const auto& a1 = t.bessel[1];
  const auto& a2 = t.bessel[2];
  ClosureSeries s;
  switch (chi) {
    case 1:  // K1/K2 + 4/γ
      for (int m = 0; m < kSeriesTerms; ++m) {
        s.p[m] = a1[m] - a2[m];
        s.q[m] = a2[m];
      }
      s.k = 4.0;
      break;
    case 2:  // K0/K1 + 4/γ
      for (int m = 0; m < kSeriesTerms; ++m) {
        s.p[m] = a0[m] - a1[m];
        s.q[m] = a1[m];
      }
      s.k = 4.0;
      break;
    case 3:  // K1/(γ I) + 3/γ, the prefactors reduce it to S1/T
      for (int m = 0; m < kSeriesTerms; ++m) {
        s.p[m] = a1[m] - t.tail[m];
        s.q[m] = t.tail[m];
      }
      s.k = 3.0;
      s.reach = 1.0;
      break;
    case 4: {  // K0/(γK0 - γ²I) + 3/γ = S0/R + 3/γ with S0 - T = u R
      for (int m = 0; m + 1 < kSeriesTerms; ++m) s.q[m] = a0[m + 1] - t.tail[m + 1];
      for (int m = 0; m < kSeriesTerms; ++m) s.p[m] = a0[m] - s.q[m];
      s.k = 3.0;
      s.reach = 1.0;
      break;
    }
    default:
      break;
  }
  s.p[0] = 0.0;
  return s;
}

const ClosureSeries& closure_series(int chi) {
  static const ClosureSeries table[4] = {build_series(1), build_series(2), build_series(3),
                                         build_series(4)};
  return table[chi - 1];
}

SyngeClosure series_closure(int chi, double gamma) {
  const auto& s = closure_series(chi);
  const double u = 1.0 / gamma;
  const auto p = detail::sum_asymptotic(s.p, u, s.reach);
  const auto q = detail::sum_asymptotic(s.q, u, s.reach);
  const double hm1 = p.value / q.value + s.k * u;
  const double dh_du =
      (p.derivative * q.value - p.value * q.derivative) / (q.value * q.value) + s.k;
  return {gamma, 1.0 + hm1, hm1, -u * u * dh_du};
}

SyngeClosure quadrature_closure(int chi, double gamma, const EvalPolicy& policy) {
  const double g = gamma;
  const double k0 = bessel_k_scaled(0, g, policy);
  const double k1 = bessel_k_scaled(1, g, policy);
  const double dk1 = -k0 - k1 / g;
  double h = 0.0;
  double dh = 0.0;
  switch (chi) {
    case 1: {
      const double k2 = bessel_k_scaled(2, g, policy);
      const double dk2 = -k1 - 2.0 * k2 / g;
      h = k1 / k2 + 4.0 / g;
      dh = (dk1 * k2 - k1 * dk2) / (k2 * k2) - 4.0 / (g * g);
      break;
    }
    case 2:
      h = k0 / k1 + 4.0 / g;
      dh = (k0 * k0 - k1 * k1 + k0 * k1 / g) / (k1 * k1) - 4.0 / (g * g);
      break;
    case 3: {
      const double tail = tail_integral_scaled(g, policy);
      const double d = g * tail;
      const double dd = tail - k1;
      h = k1 / d + 3.0 / g;
      dh = (dk1 * d - k1 * dd) / (d * d) - 3.0 / (g * g);
      break;
    }
    case 4: {
      const double tail = tail_integral_scaled(g, policy);
      const double den = g * k0 - g * g * tail;
      if (!(den > 0.0)) {
        throw Error(ErrorKind::ClosureSingularity,
                    "tetratomic closure denominator is not positive at gamma=" +
                        std::to_string(g));
      }
      const double dden = k0 - 2.0 * g * tail;
      h = k0 / den + 3.0 / g;
      dh = (-k1 * den - k0 * dden) / (den * den) - 3.0 / (g * g);
      break;
    }
  }
  return {gamma, h, h - 1.0, dh};
}

}  // namespace

void check_chi(int chi) {
  if (chi < 1 || chi > 4) {
    throw Error(ErrorKind::Usage, "atomicity chi must be in 1..4, got " + std::to_string(chi));
  }
}

double gamma_min(int chi) {
  check_chi(chi);
  return chi <= 2 ? 5.0 : 10.0;
}

SyngeClosure synge_closure(int chi, double gamma, const EvalPolicy& policy) {
  check_chi(chi);
  if (!(gamma >= gamma_min(chi)) || !std::isfinite(gamma)) {
    throw Error(ErrorKind::Domain, "closure evaluated outside the validated range: gamma=" +
                                       std::to_string(gamma) + " below " +
                                       std::to_string(gamma_min(chi)));
  }
  check_policy(policy);
  const double cut =
      chi <= 2 ? policy.asymptotic_switch : detail::tail_switch(policy.asymptotic_switch);
  if (gamma >= cut) return series_closure(chi, gamma);
  return quadrature_closure(chi, gamma, policy);
}

double h_factor(int chi, double gamma, const EvalPolicy& policy) {
  return synge_closure(chi, gamma, policy).h;
}

double dh_dgamma(int chi, double gamma, const EvalPolicy& policy) {
  return synge_closure(chi, gamma, policy).dh_dgamma;
}

ThermoState thermo_state(int chi, double rho, double T, double c) {
  if (!(rho > 0.0) || !(T > 0.0) || !(c > 0.0)) {
    throw Error(ErrorKind::Domain, "thermo_state: rho, T and c must be positive");
  }
  const double gamma = c * c / T;
  const auto cl = synge_closure(chi, gamma);
  const double c2 = c * c;
  const double internal = c2 * (cl.h_minus_one - 1.0 / gamma);
  return {rho * T, rho * (c2 + internal), internal};
}

LorentzFactor lorentz_factor(double speed2, double c) {
  const double beta2 = speed2 / (c * c);
  if (!(beta2 < 1.0)) {
    throw Error(ErrorKind::Kinematics, "speed reaches or exceeds the light speed");
  }
  const double g = 1.0 / std::sqrt(1.0 - beta2);
  return {g, g * g * beta2 / (g + 1.0)};
}

double lorentz_gamma(std::span<const double> v, double c) {
  double s2 = 0.0;
  for (double x : v) s2 += x * x;
  return lorentz_factor(s2, c).gamma;
}

RelativisticClosure relativistic_closure(int chi, double T, double speed2, double c,
                                         const EvalPolicy& policy) {
  if (!(T > 0.0)) throw Error(ErrorKind::State, "temperature must be positive");
  const double c2 = c * c;
  const auto lf = lorentz_factor(speed2, c);
  const double gamma_a = c2 / T;
  const auto cl = synge_closure(chi, gamma_a, policy);
  RelativisticClosure r{};
  r.gamma_a = gamma_a;
  r.h = cl.h;
  r.h_minus_one = cl.h_minus_one;
  r.dh_dgamma = cl.dh_dgamma;
  r.lorentz = lf.gamma;
  r.lorentz_minus_one = lf.gamma_minus_one;
  r.momentum_factor = lf.gamma * cl.h;
  // c²(ΓH - 1 - 1/(γΓ)) = c²Γ(H-1) + c²(Γ-1) - T/Γ
  r.energy = c2 * lf.gamma * cl.h_minus_one + c2 * lf.gamma_minus_one - T / lf.gamma;
  return r;
}

double relativistic_energy(int chi, double T, std::span<const double> v, double c) {
  double s2 = 0.0;
  for (double x : v) s2 += x * x;
  return relativistic_closure(chi, T, s2, c).energy;
}

std::vector<double> auxiliary_momentum(int chi, double T, std::span<const double> v, double c) {
  double s2 = 0.0;
  for (double x : v) s2 += x * x;
  const double f = relativistic_closure(chi, T, s2, c).momentum_factor;
  std::vector<double> w(v.begin(), v.end());
  for (double& x : w) x *= f;
  return w;
}

double error_term_F(int chi, double T, std::span<const double> v, double c) {
  double s2 = 0.0;
  for (double x : v) s2 += x * x;
  const auto r = relativistic_closure(chi, T, s2, c);
  const double w2 = r.momentum_factor * r.momentum_factor * s2;
  return c * c * (r.energy - specific_heat(chi) * T - 0.5 * w2);
}

}  // namespace flockd
