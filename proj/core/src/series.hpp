#pragma once

#include <array>

namespace flockd::detail {

inline constexpr int kSeriesTerms = 96;

using Coefficients = std::array<double, kSeriesTerms>;

struct SeriesTables {
  std::array<Coefficients, 4> bessel;  // A_{j,m}, j = 0..3
  Coefficients tail;                   // expansion of the K_1(y)/y tail
};

const SeriesTables& series_tables();

struct SeriesSum {
  double value;
  double derivative;  // d/du
  int terms;
};

// Σ c[m] u^m for an asymptotic series in u = 1/γ, stopped once further terms
// are below round-off or past the smallest-term index, taken as reach·γ.
// The K_j series have their smallest term near m = 2γ, the tail series near γ.
SeriesSum sum_asymptotic(const Coefficients& c, double u, double reach);

// The tail expansion is only accurate to ~1e-10 near γ = 30; below this
// floor the tail stays on quadrature regardless of the policy switch.
inline constexpr double kTailSeriesFloor = 45.0;

inline double tail_switch(double asymptotic_switch) {
  return asymptotic_switch > kTailSeriesFloor ? asymptotic_switch : kTailSeriesFloor;
}

}  // namespace flockd::detail
