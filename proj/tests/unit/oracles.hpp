#pragma once

// 50-digit reference values built only from Boost.Math, independent of flockd.
#include <boost/math/quadrature/exp_sinh.hpp>
#include <boost/math/special_functions/bessel.hpp>
#include <boost/multiprecision/cpp_bin_float.hpp>

namespace oracle {

using R = boost::multiprecision::cpp_bin_float_50;

inline R bessel_k(int j, R g) { return boost::math::cyl_bessel_k(j, g); }

// ∫_γ^∞ K_1(y)/y dy
inline R tail(R g) {
  boost::math::quadrature::exp_sinh<R> es;
  return es.integrate([&](R s) { R y = g + s; return boost::math::cyl_bessel_k(1, y) / y; },
                      R(1e-40));
}

// Closure H(χ, γ) from its defining Bessel-function expressions.
inline R closure_h(int chi, R g) {
  switch (chi) {
    case 1: return bessel_k(1, g) / bessel_k(2, g) + 4 / g;
    case 2: return bessel_k(0, g) / bessel_k(1, g) + 4 / g;
    case 3: return bessel_k(1, g) / (g * tail(g)) + 3 / g;
    default: {
      const R k0 = bessel_k(0, g);
      return k0 / (g * k0 - g * g * tail(g)) + 3 / g;
    }
  }
}

// Central difference in 50 digits; truncation ~h² is far below double precision.
inline R closure_dh(int chi, R g) {
  const R h = R(1e-12) * g;
  return (closure_h(chi, g + h) - closure_h(chi, g - h)) / (2 * h);
}

inline double d(const R& x) { return x.convert_to<double>(); }

}  // namespace oracle
