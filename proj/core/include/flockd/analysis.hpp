#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "flockd/dynamics.hpp"
#include "flockd/kernels.hpp"

namespace flockd {

// Total momentum, energy and entropy. Classical: M = Σv, E = Σ[(2χ+1)T/2 + |v|²/2],
// S = Σ ln T. Relativistic: M = Σ m_a v_a with the model's momentum factor, E the
// model's conserved energy, S left at 0 (the caller integrates entropy_rate).
struct ConservedSet {
  std::vector<double> momentum;
  double energy = 0.0;
  double entropy = 0.0;
  double entropy_rate = 0.0;  // dS/dt from the pair sums, >= 0
};

ConservedSet conserved(const Ensemble& ens, const Kernel& phi, const Kernel& zeta,
                       const EvalPolicy& policy = {});

// Energy of one particle under the ensemble's model.
double particle_energy(const Ensemble& ens, std::size_t a, const EvalPolicy& policy = {});

struct FlockingMetrics {
  double d_x = 0.0;  // max_{a,b} |x_a - x_b|
  double d_v = 0.0;
  double d_T = 0.0;
  double d_w = 0.0;  // equals d_v for the classical model
  double norm_x = 0.0;
  double norm_v = 0.0;
  double norm_w = 0.0;
  double norm_that = 0.0;  // sqrt((2χ+1)/2 Σ (T_a - T∞)²)
};

FlockingMetrics flocking_metrics(const Ensemble& ens, double T_inf, const EvalPolicy& policy = {});

struct TemperatureBounds {
  double lower;
  double upper;
};

// upper = 2E(0)/(2χ+1), lower = ∏T_a(0) / upper^(N-1). Relativistic ensembles
// use the conserved relativistic energy for E(0).
TemperatureBounds temperature_bounds(const Ensemble& initial, const EvalPolicy& policy = {});

struct AsymptoticLimits {
  std::vector<double> momentum;  // v∞ (classical) or w∞ = 𝕄(0)/N
  double T_inf;
};

AsymptoticLimits asymptotic_limits(const Ensemble& initial, const EvalPolicy& policy = {});

struct RegimeOptions {
  double margin = 0.1;  // A = (1 + margin)·threshold
  ValidateOptions validate{};
  EvalPolicy policy{};
  int search_points = 4096;
  int bisection_steps = 200;
};

struct BoundsReport {
  int regime = 1;
  bool relativistic = false;
  double margin = 0.1;
  std::size_t n = 0;
  int chi = 1;
  double c = kInfiniteLightSpeed;

  double energy0 = 0.0;
  double T_lower = 0.0;
  double T_upper = 0.0;
  std::vector<double> v_inf;
  double T_inf = 0.0;
  double norm_x0 = 0.0;
  double norm_v0 = 0.0;  // ‖V(0)‖, or ‖W(0)‖ for relativistic reports
  double norm_that0 = 0.0;

  KernelStats stats{};

  double A_threshold = 0.0;
  double A = 0.0;
  double lambda = 0.0;
  double lambda_temperature = 0.0;  // first entry of the min
  double lambda_velocity = 0.0;     // second entry of the min
  double velocity_rate = 0.0;
  double position_bound = 0.0;
  bool position_scaled = false;  // bound applies to √2‖X‖ (regime 3)

  // Regime 3 well-preparedness search.
  bool feasible = true;
  std::optional<double> U;
  double chi_U = 0.0;
  double U_search_lo = 0.0;
  double U_search_hi = 0.0;

  bool eps_condition = true;
  bool c_condition = true;
  bool lambda_positive = true;
  bool applicable = true;  // every hypothesis of the theorem holds

  std::string convention;
  std::vector<std::string> notes;
};

// Theorem constants for regime 1 (φ = ζ ≡ 1), 2 (distance-free kernels) or 3
// (mother-function φ). Relativistic reports need an rtcs_synge ensemble and
// evaluate the printed constants with every O(c^-2) term set to zero.
BoundsReport regime_constants(const Ensemble& initial, const Kernel& phi, const Kernel& zeta,
                              int regime, const RegimeOptions& opts = {});

// χ0(U) = [T̲φ(0)² - T̄(φ(0) - φ(U))²] / (2T̄T̲φ(0)); χ1 coincides at leading order.
double chi_rate(const Kernel& phi, double U, double T_lower, double T_upper);

struct EnvelopeSample {
  double t;
  double norm_x;
  double norm_v;  // ‖V‖ classical, ‖W‖ relativistic
  double norm_that;
};

EnvelopeSample envelope_sample(double t, const Ensemble& ens, double T_inf,
                               const EvalPolicy& policy = {});

struct EnvelopeResult {
  std::string name;
  bool applicable = true;
  bool pass = true;
  double worst_slack = 0.0;  // min over samples of bound - value
  double worst_t = 0.0;
  double first_violation_t = -1.0;
};

struct EnvelopeReport {
  std::vector<EnvelopeResult> checks;
  bool all_pass = true;  // not-applicable checks count as passing
};

// Slack tolerance: a sample passes when value <= bound + kEnvelopeTolerance·max(1, bound).
inline constexpr double kEnvelopeTolerance = 1e-12;

EnvelopeReport envelope_check(const std::vector<EnvelopeSample>& samples, bool relativistic,
                              const BoundsReport& report);

struct DecayFit {
  double rate = 0.0;
  double t0 = 0.0;
  double t1 = 0.0;
  double residual = 0.0;
  std::size_t count = 0;
};

DecayFit fit_decay_rate(const std::vector<double>& t, const std::vector<double>& y, double t0,
                        double t1);

struct LogLogFit {
  double slope;
  double intercept;
};
LogLogFit loglog_slope(const std::vector<double>& x, const std::vector<double>& y);

struct InvariantSummary {
  std::size_t samples = 0;
  double energy_drift = 0.0;    // max |E - E(0)| / |E(0)|
  double momentum_drift = 0.0;  // max |M - M(0)| / (1 + |M(0)|)
  double entropy_min_step = 0.0;
  double entropy = 0.0;  // Σ ln T, or the integrated production
  double T_min = 0.0;
  double T_max = 0.0;
  double T_lower = 0.0;
  double T_upper = 0.0;
  bool bounds_hold = true;
  double empirical_K = 1.0;  // max_t ∏T(0)/∏T(t), at least 1
  double spread_ratio = 0.0; // max Σ_{ab}(T_a-T_b)² / (2N Σ(T_a-T∞)²)
};

// Tracks drift, entropy and temperature bounds over observed samples.
class InvariantMonitor {
 public:
  InvariantMonitor(const Ensemble& initial, const Kernel& phi, const Kernel& zeta,
                   const EvalPolicy& policy = {});
  void observe(double t, const Ensemble& ens);
  const InvariantSummary& summary() const { return sum_; }
  const ConservedSet& last() const { return last_; }
  double T_inf() const { return T_inf_; }

 private:
  const Kernel& phi_;
  const Kernel& zeta_;
  EvalPolicy policy_;
  bool relativistic_;
  ConservedSet first_;
  ConservedSet last_;
  double log_prod0_ = 0.0;
  double last_t_ = 0.0;
  double T_inf_ = 0.0;
  InvariantSummary sum_;
};

struct LimitRow {
  double c = 0.0;
  bool ok = true;
  double deviation = 0.0;  // max over samples and components of |state_rel - state_cl|
  std::string message;
};

struct LimitStudy {
  std::vector<LimitRow> rows;
  std::optional<double> slope;  // log-log slope of deviation against c
};

// Runs the classical model once and the Synge model at each c from identical
// initial data; an infinite c compares the classical run with itself.
LimitStudy classical_limit_study(const Ensemble& base, const Kernel& phi, const Kernel& zeta,
                                 const std::vector<double>& c_values,
                                 const IntegratorConfig& cfg, RhsOptions opts = {});

}  // namespace flockd
