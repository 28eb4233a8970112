#include "flockd/special_functions.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "flockd/errors.hpp"
#include "series.hpp"

namespace flockd {
namespace detail {

const SeriesTables& series_tables() {
  static const SeriesTables tables = [] {
    SeriesTables t{};
    for (int j = 0; j < 4; ++j) {
      t.bessel[j][0] = 1.0;
      for (int m = 1; m < kSeriesTerms; ++m) {
        const double odd = 2.0 * m - 1.0;
        t.bessel[j][m] =
            t.bessel[j][m - 1] * (4.0 * j * j - odd * odd) / (8.0 * m);
      }
    }
    // Termwise integration of the K_1 expansion against e^{-y} y^{-3/2-k}:
    // ∫_γ^∞ e^{-y} y^{-3/2-k} dy ~ e^{-γ} γ^{-3/2-k} Σ_m (-1)^m (k+3/2)_m γ^{-m}.
    for (int n = 0; n < kSeriesTerms; ++n) {
      double acc = 0.0;
      for (int k = n; k >= 0; --k) {
        double poch = 1.0;
        for (int i = 0; i < n - k; ++i) poch *= -(k + 1.5 + i);
        acc += t.bessel[1][k] * poch;
      }
      t.tail[n] = acc;
    }
    return t;
  }();
  return tables;
}

SeriesSum sum_asymptotic(const Coefficients& c, double u, double reach) {
  const int limit = static_cast<int>(std::clamp(reach / u, 2.0, double(kSeriesTerms)));
  double value = c[0];
  double deriv = 0.0;
  double pw = 1.0;  // u^(m-1)
  int quiet = 0;
  int m = 1;
  for (; m < limit; ++m) {
    const double dterm = m * c[m] * pw;
    pw *= u;
    const double term = c[m] * pw;
    value += term;
    deriv += dterm;
    const bool small = std::abs(term) <= 1e-17 * std::abs(value) &&
                       std::abs(dterm) <= 1e-17 * std::abs(deriv);
    quiet = small ? quiet + 1 : 0;
    if (quiet == 2) break;
  }
  return {value, deriv, m};
}

}  // namespace detail

namespace {

using boost::math::quadrature::gauss_kronrod;

constexpr double kTailSpan = 40.0;

void require_positive(double gamma, const char* what) {
  if (!(gamma > 0.0) || !std::isfinite(gamma)) {
    throw Error(ErrorKind::Domain,
                std::string(what) + ": argument must be positive and finite, got " +
                    std::to_string(gamma));
  }
}

unsigned depth_for(int max_nodes) {
  // An adaptive 15-point rule that bisects to depth d uses at most
  // 15 * (2^(d+1) - 1) evaluations.
  unsigned depth = 0;
  while (15.0 * (std::ldexp(1.0, static_cast<int>(depth) + 2) - 1.0) <= max_nodes) ++depth;
  return depth;
}

template <class F>
double integrate(F f, double a, double b, const EvalPolicy& policy, const char* what) {
  double error = 0.0;
  double l1 = 0.0;
  const double target = std::max(policy.rel_tol * 1e-3, 1e-15);
  const double value = gauss_kronrod<double, 15>::integrate(
      f, a, b, depth_for(policy.max_quadrature_nodes), target, &error, &l1);
  if (!std::isfinite(value) ||
      error > std::max(policy.abs_tol, policy.rel_tol * std::abs(value))) {
    throw Error(ErrorKind::Convergence,
                std::string(what) + ": quadrature did not converge (error estimate " +
                    std::to_string(error) + ")");
  }
  return value;
}

// Substituting λ = γ cosh t in the defining integral gives
// e^γ K_j(γ) = 2^j j!/(2j)! γ^j ∫_0^∞ e^{-γ(cosh t - 1)} sinh^{2j} t dt.
double bessel_quadrature_scaled(int j, double gamma, const EvalPolicy& policy) {
  static constexpr double kPrefactor[4] = {1.0, 1.0, 1.0 / 3.0, 1.0 / 15.0};
  const double shift = 2.0 * j * std::log(std::max(gamma, 1.0));
  double t_max = 1.0;
  for (int it = 0; it < 30; ++it) {
    t_max = 2.0 * std::asinh(std::sqrt((50.0 + 2.0 * j * t_max + shift) / (2.0 * gamma)));
  }
  auto f = [gamma, j](double t) {
    const double h = std::sinh(0.5 * t);
    const double e = std::exp(-2.0 * gamma * h * h);
    if (j == 0) return e;
    const double s2 = std::sinh(t) * std::sinh(t);
    double p = s2;
    for (int i = 1; i < j; ++i) p *= s2;
    return e * p;
  };
  const double integral = integrate(f, 0.0, t_max, policy, "bessel_k");
  return kPrefactor[j] * std::pow(gamma, j) * integral;
}

double bessel_series_scaled(int j, double gamma) {
  const auto s = detail::sum_asymptotic(detail::series_tables().bessel[j], 1.0 / gamma, 2.0);
  return std::sqrt(std::numbers::pi / (2.0 * gamma)) * s.value;
}

double low_order_scaled(int j, double gamma, const EvalPolicy& policy) {
  if (gamma >= policy.asymptotic_switch) return bessel_series_scaled(j, gamma);
  return bessel_quadrature_scaled(j, gamma, policy);
}

double tail_series_scaled(double gamma) {
  const auto s = detail::sum_asymptotic(detail::series_tables().tail, 1.0 / gamma, 1.0);
  return std::sqrt(std::numbers::pi / 2.0) * std::pow(gamma, -1.5) * s.value;
}

}  // namespace

void check_policy(const EvalPolicy& policy) {
  if (!(policy.abs_tol > 0.0) || !(policy.rel_tol > 0.0)) {
    throw Error(ErrorKind::Usage, "EvalPolicy: tolerances must be positive");
  }
  if (!(policy.asymptotic_switch >= 10.0)) {
    throw Error(ErrorKind::Usage, "EvalPolicy: asymptotic_switch must be at least 10");
  }
  if (policy.max_quadrature_nodes < 15) {
    throw Error(ErrorKind::Usage, "EvalPolicy: max_quadrature_nodes must be at least 15");
  }
}

double bessel_k_scaled(int j, double gamma, const EvalPolicy& policy) {
  if (j < 0) throw Error(ErrorKind::Usage, "bessel_k: order must be non-negative");
  require_positive(gamma, "bessel_k");
  check_policy(policy);
  if (j <= 3) return low_order_scaled(j, gamma, policy);
  double km1 = low_order_scaled(2, gamma, policy);
  double k = low_order_scaled(3, gamma, policy);
  for (int n = 3; n < j; ++n) {
    const double next = (2.0 * n / gamma) * k + km1;
    km1 = k;
    k = next;
  }
  return k;
}

double bessel_k(int j, double gamma, const EvalPolicy& policy) {
  return bessel_k_scaled(j, gamma, policy) * std::exp(-gamma);
}

double bessel_k_ratio(int num, int den, double gamma, const EvalPolicy& policy) {
  const bool supported = (num == 0 && den == 1) || (num == 1 && den == 2);
  if (!supported) {
    throw Error(ErrorKind::Usage, "bessel_k_ratio: order pair must be (0,1) or (1,2)");
  }
  return bessel_k_scaled(num, gamma, policy) / bessel_k_scaled(den, gamma, policy);
}

double bessel_k_derivative(int j, double gamma, const EvalPolicy& policy) {
  if (j == 0) return -bessel_k(1, gamma, policy);
  if (j == 1) return -bessel_k(0, gamma, policy) - bessel_k(1, gamma, policy) / gamma;
  throw Error(ErrorKind::Usage, "bessel_k_derivative: order must be 0 or 1");
}

double tail_integral_scaled(double gamma, const EvalPolicy& policy) {
  require_positive(gamma, "tail_integral_k1_over_y");
  check_policy(policy);
  if (gamma >= detail::tail_switch(policy.asymptotic_switch)) return tail_series_scaled(gamma);
  auto f = [gamma, &policy](double y) {
    return std::exp(gamma - y) * low_order_scaled(1, y, policy) / y;
  };
  const double body = integrate(f, gamma, gamma + kTailSpan, policy, "tail_integral_k1_over_y");
  return body + std::exp(-kTailSpan) * tail_series_scaled(gamma + kTailSpan);
}

double tail_integral_k1_over_y(double gamma, const EvalPolicy& policy) {
  return tail_integral_scaled(gamma, policy) * std::exp(-gamma);
}

double bessel_k_asymptotic_scaled(int j, double gamma, int terms) {
  if (j < 0 || j > 3) throw Error(ErrorKind::Usage, "asymptotic expansion: order must be 0..3");
  if (terms < 1 || terms > detail::kSeriesTerms) {
    throw Error(ErrorKind::Usage, "asymptotic expansion: term count out of range");
  }
  require_positive(gamma, "bessel_k_asymptotic_scaled");
  const auto& c = detail::series_tables().bessel[j];
  const double u = 1.0 / gamma;
  double sum = 0.0;
  for (int m = terms - 1; m >= 0; --m) sum = sum * u + c[m];
  return std::sqrt(std::numbers::pi / (2.0 * gamma)) * sum;
}

double bessel_k_asymptotic_coefficient(int j, int m) {
  if (j < 0 || j > 3 || m < 0 || m >= detail::kSeriesTerms) {
    throw Error(ErrorKind::Usage, "asymptotic coefficient index out of range");
  }
  return detail::series_tables().bessel[j][m];
}

double tail_asymptotic_coefficient(int n) {
  if (n < 0 || n >= detail::kSeriesTerms) {
    throw Error(ErrorKind::Usage, "tail coefficient index out of range");
  }
  return detail::series_tables().tail[n];
}

}  // namespace flockd
