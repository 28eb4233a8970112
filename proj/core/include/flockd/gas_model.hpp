#pragma once

#include <span>
#include <vector>

#include "flockd/special_functions.hpp"

namespace flockd {

// Gas type χ: 1 monatomic, 2 diatomic, 3 triatomic, 4 tetratomic.
void check_chi(int chi);
constexpr int degrees_of_freedom(int chi) { return 2 * chi + 1; }
constexpr double specific_heat(int chi) { return (2.0 * chi + 1.0) / 2.0; }

// Lower γ cutoff of the validated closure range.
double gamma_min(int chi);

struct SyngeClosure {
  double gamma;
  double h;
  double h_minus_one;  // H - 1 without cancellation at large γ
  double dh_dgamma;
};

SyngeClosure synge_closure(int chi, double gamma, const EvalPolicy& policy = {});
double h_factor(int chi, double gamma, const EvalPolicy& policy = {});
double dh_dgamma(int chi, double gamma, const EvalPolicy& policy = {});

struct ThermoState {
  double pressure;
  double energy_density;
  double internal_energy;
};

ThermoState thermo_state(int chi, double rho, double T, double c);

double lorentz_gamma(std::span<const double> v, double c);

// Γ from |v|² and Γ - 1 computed as Γ²|v|²/(c²(Γ+1)).
struct LorentzFactor {
  double gamma;
  double gamma_minus_one;
};
LorentzFactor lorentz_factor(double speed2, double c);

struct RelativisticClosure {
  double gamma_a;  // c²/T
  double h;
  double h_minus_one;
  double dh_dgamma;
  double lorentz;  // Γ
  double lorentz_minus_one;
  double momentum_factor;  // Γ H
  double energy;           // c²(ΓH - 1 - 1/(γΓ))
};

RelativisticClosure relativistic_closure(int chi, double T, double speed2, double c,
                                         const EvalPolicy& policy = {});

double relativistic_energy(int chi, double T, std::span<const double> v, double c);

// w = Γ H v
std::vector<double> auxiliary_momentum(int chi, double T, std::span<const double> v, double c);

// c²[E - (2χ+1)T/2 - |w|²/2]
double error_term_F(int chi, double T, std::span<const double> v, double c);

}  // namespace flockd
