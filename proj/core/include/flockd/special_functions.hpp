#pragma once

namespace flockd {

struct EvalPolicy {
  double abs_tol = 1e-12;
  double rel_tol = 1e-10;
  int max_quadrature_nodes = 1 << 16;
  // Above this argument the large-γ expansion replaces quadrature.
  double asymptotic_switch = 30.0;
};

// Throws ErrorKind::Usage when a field is out of range.
void check_policy(const EvalPolicy& policy);

// K_j(γ). Underflows to 0 for γ beyond ~745; use the scaled form there.
double bessel_k(int j, double gamma, const EvalPolicy& policy = {});

// e^γ K_j(γ).
double bessel_k_scaled(int j, double gamma, const EvalPolicy& policy = {});

// K_num(γ) / K_den(γ) for (num, den) in {(0,1), (1,2)}.
double bessel_k_ratio(int num, int den, double gamma, const EvalPolicy& policy = {});

// dK_j/dγ for j in {0, 1}.
double bessel_k_derivative(int j, double gamma, const EvalPolicy& policy = {});

// ∫_γ^∞ K_1(y)/y dy.
double tail_integral_k1_over_y(double gamma, const EvalPolicy& policy = {});

// e^γ ∫_γ^∞ K_1(y)/y dy.
double tail_integral_scaled(double gamma, const EvalPolicy& policy = {});

// e^γ K_j(γ) from the first `terms` terms of the large-γ expansion.
double bessel_k_asymptotic_scaled(int j, double gamma, int terms);

// A_{j,m}: coefficient of γ^{-m} in e^γ K_j(γ) / sqrt(π/(2γ)), j <= 3.
double bessel_k_asymptotic_coefficient(int j, int m);

// Coefficient of γ^{-n} in e^γ γ^{3/2} sqrt(2/π) ∫_γ^∞ K_1(y)/y dy.
double tail_asymptotic_coefficient(int n);

}  // namespace flockd
