#include "flockd/analysis.hpp"

#include <boost/math/tools/roots.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <variant>

#include "flockd/errors.hpp"
#include "flockd/gas_model.hpp"

namespace flockd {
namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double norm(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

std::string fmt(double x) {
  std::ostringstream os;
  os.precision(6);
  os << x;
  return os.str();
}

// Per-particle transported quantities (q, s) of the model's pair sums.
void transported(const Ensemble& ens, std::vector<double>& q, std::vector<double>& s) {
  const std::size_t n = ens.n;
  const std::size_t dim = ens.dim;
  q.resize(n * dim);
  s.resize(n);
  for (std::size_t a = 0; a < n; ++a) {
    double f = 1.0 / ens.T[a];
    if (ens.model != Model::ClassicalTCS) {
      f *= lorentz_factor(ens.speed2(a), ens.c).gamma;
    }
    for (std::size_t d = 0; d < dim; ++d) q[a * dim + d] = ens.v[a * dim + d] * f;
    s[a] = f;
  }
}

double sum_log_T(const Ensemble& ens) {
  double s = 0.0;
  for (double t : ens.T) s += std::log(t);
  return s;
}

Ensemble single_particle(const Ensemble& like, double T, const std::vector<double>& v) {
  Ensemble one = make_ensemble(1, like.dim, like.model, like.chi, like.c);
  one.T[0] = T;
  std::copy(v.begin(), v.end(), one.v.begin());
  return one;
}

// Velocity along `dir` whose momentum m(T, v)·v has magnitude `target`.
std::vector<double> velocity_for_momentum(const Ensemble& like, double T,
                                          const std::vector<double>& w, const EvalPolicy& policy) {
  const double target = norm(w);
  std::vector<double> v(w.size(), 0.0);
  if (target == 0.0) return v;
  std::vector<double> dir = w;
  for (double& x : dir) x /= target;
  auto momentum_at = [&](double s) {
    std::vector<double> u = dir;
    for (double& x : u) x *= s;
    const Ensemble one = single_particle(like, T, u);
    return momentum_factor(one, 0, policy) * s - target;
  };
  double hi = std::isfinite(like.c) ? like.c * (1.0 - 1e-12) : std::max(1.0, 2.0 * target);
  if (!std::isfinite(like.c)) {
    while (momentum_at(hi) < 0.0) hi *= 2.0;
  }
  std::uintmax_t iters = 200;
  const auto r = boost::math::tools::toms748_solve(momentum_at, 0.0, hi, -target,
                                                   momentum_at(hi),
                                                   boost::math::tools::eps_tolerance<double>(52),
                                                   iters);
  const double s = 0.5 * (r.first + r.second);
  for (std::size_t d = 0; d < v.size(); ++d) v[d] = dir[d] * s;
  return v;
}

}  // namespace

double particle_energy(const Ensemble& ens, std::size_t a, const EvalPolicy& policy) {
  const double q2 = ens.speed2(a);
  const double T = ens.T[a];
  switch (ens.model) {
    case Model::ClassicalTCS:
      return specific_heat(ens.chi) * T + 0.5 * q2;
    case Model::RTCSSynge:
      return relativistic_closure(ens.chi, T, q2, ens.c, policy).energy;
    case Model::RTCSSimplified: {
      const auto lf = lorentz_factor(q2, ens.c);
      return lf.gamma * T + ens.c * ens.c * lf.gamma_minus_one;
    }
    case Model::RelativisticCSMechanical:
      return ens.c * ens.c * lorentz_factor(q2, ens.c).gamma_minus_one;
  }
  return kNaN;
}

ConservedSet conserved(const Ensemble& ens, const Kernel& phi, const Kernel& zeta,
                       const EvalPolicy& policy) {
  ens.check();
  const std::size_t n = ens.n;
  const std::size_t dim = ens.dim;
  ConservedSet out;
  out.momentum.assign(dim, 0.0);
  for (std::size_t a = 0; a < n; ++a) {
    const double m = momentum_factor(ens, a, policy);
    for (std::size_t d = 0; d < dim; ++d) out.momentum[d] += m * ens.v[a * dim + d];
    out.energy += particle_energy(ens, a, policy);
  }
  if (ens.model == Model::ClassicalTCS) out.entropy = sum_log_T(ens);
  if (ens.model == Model::RelativisticCSMechanical) return out;

  std::vector<double> q;
  std::vector<double> s;
  transported(ens, q, s);
  std::vector<double> wp;
  std::vector<double> wz;
  pair_weights(phi, ens.x, n, dim, wp);
  pair_weights(zeta, ens.x, n, dim, wz);
  double mom = 0.0;
  double en = 0.0;
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t b = 0; b < n; ++b) {
      double d2 = 0.0;
      for (std::size_t d = 0; d < dim; ++d) {
        const double diff = q[b * dim + d] - q[a * dim + d];
        d2 += diff * diff;
      }
      mom += wp[a * n + b] * d2;
      const double ds = s[b] - s[a];
      en += wz[a * n + b] * ds * ds;
    }
  }
  const double half_inv_n = 0.5 / static_cast<double>(n);
  out.entropy_rate = half_inv_n * (mom + en);
  if (ens.model == Model::ClassicalTCS) out.entropy_rate *= 2.0 / (2.0 * ens.chi + 1.0);
  return out;
}

FlockingMetrics flocking_metrics(const Ensemble& ens, double T_inf, const EvalPolicy& policy) {
  ens.check();
  const std::size_t n = ens.n;
  const std::size_t dim = ens.dim;
  FlockingMetrics m;
  std::vector<double> w(ens.v.size());
  for (std::size_t a = 0; a < n; ++a) {
    const double f = momentum_factor(ens, a, policy);
    for (std::size_t d = 0; d < dim; ++d) w[a * dim + d] = f * ens.v[a * dim + d];
  }
  auto diam = [&](const std::vector<double>& y) {
    double best = 0.0;
    for (std::size_t a = 0; a < n; ++a) {
      for (std::size_t b = a + 1; b < n; ++b) {
        double r2 = 0.0;
        for (std::size_t d = 0; d < dim; ++d) {
          const double diff = y[a * dim + d] - y[b * dim + d];
          r2 += diff * diff;
        }
        best = std::max(best, r2);
      }
    }
    return std::sqrt(best);
  };
  m.d_x = diam(ens.x);
  m.d_v = diam(ens.v);
  m.d_w = diam(w);
  const auto [lo, hi] = std::minmax_element(ens.T.begin(), ens.T.end());
  m.d_T = *hi - *lo;
  m.norm_x = norm(ens.x);
  m.norm_v = norm(ens.v);
  m.norm_w = norm(w);
  double s = 0.0;
  for (double t : ens.T) s += (t - T_inf) * (t - T_inf);
  m.norm_that = std::sqrt(specific_heat(ens.chi) * s);
  return m;
}

TemperatureBounds temperature_bounds(const Ensemble& initial, const EvalPolicy& policy) {
  initial.check();
  double e0 = 0.0;
  for (std::size_t a = 0; a < initial.n; ++a) e0 += particle_energy(initial, a, policy);
  const double upper = 2.0 * e0 / (2.0 * initial.chi + 1.0);
  const double lower =
      std::exp(sum_log_T(initial) - static_cast<double>(initial.n - 1) * std::log(upper));
  return {lower, upper};
}

AsymptoticLimits asymptotic_limits(const Ensemble& initial, const EvalPolicy& policy) {
  initial.check();
  const std::size_t n = initial.n;
  const double nn = static_cast<double>(n);
  const double D = 2.0 * initial.chi + 1.0;
  std::vector<double> m(initial.dim, 0.0);
  double e0 = 0.0;
  for (std::size_t a = 0; a < n; ++a) {
    const double f = momentum_factor(initial, a, policy);
    for (std::size_t d = 0; d < initial.dim; ++d) m[d] += f * initial.v[a * initial.dim + d];
    e0 += particle_energy(initial, a, policy);
  }
  AsymptoticLimits out;
  out.momentum = m;
  for (double& x : out.momentum) x /= nn;
  if (initial.model == Model::ClassicalTCS) {
    const double m2 = norm(m) * norm(m);
    out.T_inf = (e0 / nn - m2 / (2.0 * nn * nn)) / (0.5 * D);
    return out;
  }
  if (initial.model == Model::RelativisticCSMechanical) {
    // Temperatures are frozen in this model; report their mean.
    out.T_inf = std::accumulate(initial.T.begin(), initial.T.end(), 0.0) / nn;
    return out;
  }
  const auto bounds = temperature_bounds(initial, policy);
  double lo = 0.5 * bounds.lower;
  double hi = 2.0 * bounds.upper;
  if (initial.model == Model::RTCSSynge) {
    hi = std::min(hi, initial.c * initial.c / gamma_min(initial.chi));
  }
  const double target = e0 / nn;
  auto f = [&](double T) {
    const auto v = velocity_for_momentum(initial, T, out.momentum, policy);
    const Ensemble one = single_particle(initial, T, v);
    return particle_energy(one, 0, policy) - target;
  };
  double flo = 0.0;
  double fhi = 0.0;
  try {
    flo = f(lo);
    fhi = f(hi);
  } catch (const Error& e) {
    throw Error(ErrorKind::Solver, std::string("asymptotic temperature: ") + e.what());
  }
  if (!(flo < 0.0 && fhi > 0.0)) {
    throw Error(ErrorKind::Solver, "asymptotic temperature root is not bracketed in (" + fmt(lo) +
                                       ", " + fmt(hi) + ")");
  }
  std::uintmax_t iters = 200;
  const auto r = boost::math::tools::toms748_solve(
      f, lo, hi, flo, fhi, boost::math::tools::eps_tolerance<double>(50), iters);
  out.T_inf = 0.5 * (r.first + r.second);
  return out;
}

double chi_rate(const Kernel& phi, double U, double T_lower, double T_upper) {
  const double p0 = phi.profile(0.0);
  const double pu = phi.profile(U);
  return (T_lower * p0 * p0 - T_upper * (p0 - pu) * (p0 - pu)) / (2.0 * T_upper * T_lower * p0);
}

namespace {

bool is_unit_constant(const Kernel& k) {
  const auto* c = std::get_if<ConstantKernel>(&k.variant());
  return c && c->value == 1.0;
}

struct USearch {
  bool feasible = false;
  double U = 0.0;
  double lo = 0.0;
  double hi = 0.0;
  std::string note;
};

// Smallest U in [lo, hi] with χ(U) > 0 and U >= base + coeff/χ(U).
USearch search_U(const Kernel& phi, double base, double coeff, double T_lower, double T_upper,
                 const RegimeOptions& opts) {
  USearch out;
  out.lo = base;
  out.hi = 1e3 * (base + 1.0);
  auto chi_at = [&](double U) { return chi_rate(phi, U, T_lower, T_upper); };
  if (!(chi_at(out.lo) > 0.0)) {
    out.note = "chi(U) <= 0 already at the lower end of the search interval";
    return out;
  }
  auto g = [&](double U) {
    const double ch = chi_at(U);
    if (!(ch > 0.0)) return -std::numeric_limits<double>::infinity();
    return U - base - coeff / ch;
  };
  // χ is non-increasing in U for a non-increasing profile: cut the scan at its zero.
  double top = out.hi;
  if (!(chi_at(top) > 0.0)) {
    double a = out.lo;
    for (int k = 0; k < opts.bisection_steps; ++k) {
      const double mid = 0.5 * (a + top);
      if (mid <= a || mid >= top) break;
      (chi_at(mid) > 0.0 ? a : top) = mid;
    }
    top = a;
  }
  const int m = std::max(opts.search_points, 2);
  double prev = out.lo;
  if (g(prev) >= 0.0) {
    out.feasible = true;
    out.U = prev;
    return out;
  }
  for (int i = 1; i <= m; ++i) {
    const double U = out.lo + (top - out.lo) * static_cast<double>(i) / m;
    if (!(chi_at(U) > 0.0)) {
      out.note = "no admissible U before chi(U) reaches zero at U≈" + fmt(U);
      return out;
    }
    if (g(U) >= 0.0) {
      double a = prev;
      double b = U;
      for (int k = 0; k < opts.bisection_steps; ++k) {
        const double mid = 0.5 * (a + b);
        if (mid <= a || mid >= b) break;
        (g(mid) >= 0.0 ? b : a) = mid;
      }
      out.feasible = true;
      out.U = b;
      return out;
    }
    prev = U;
  }
  out.note = "no admissible U in the search interval";
  return out;
}

}  // namespace

BoundsReport regime_constants(const Ensemble& initial, const Kernel& phi, const Kernel& zeta,
                              int regime, const RegimeOptions& opts) {
  initial.check();
  if (regime < 1 || regime > 3) throw Error(ErrorKind::Usage, "regime must be 1, 2 or 3");
  if (!(opts.margin > 0.0)) throw Error(ErrorKind::Usage, "margin must be positive");
  const bool rel = is_relativistic(initial.model);
  if (rel && initial.model != Model::RTCSSynge) {
    throw Error(ErrorKind::Usage, "relativistic theorem constants are stated for rtcs_synge only");
  }
  if (regime == 1 && !(is_unit_constant(phi) && is_unit_constant(zeta))) {
    throw Error(ErrorKind::Usage, "regime 1 needs phi = zeta = 1");
  }
  if (regime == 2 && (phi.distance_dependent() || zeta.distance_dependent())) {
    throw Error(ErrorKind::Usage, "regime 2 needs distance-independent kernels");
  }
  if (regime == 3 && (!phi.has_profile() || !zeta.has_profile())) {
    throw Error(ErrorKind::Usage, "regime 3 needs mother-function kernels");
  }

  BoundsReport r;
  r.regime = regime;
  r.relativistic = rel;
  r.margin = opts.margin;
  r.n = initial.n;
  r.chi = initial.chi;
  r.c = initial.c;
  const auto tb = temperature_bounds(initial, opts.policy);
  r.T_lower = tb.lower;
  r.T_upper = tb.upper;
  r.energy0 = 0.5 * (2.0 * initial.chi + 1.0) * tb.upper;
  const auto lim = asymptotic_limits(initial, opts.policy);
  r.v_inf = lim.momentum;
  r.T_inf = lim.T_inf;
  const auto fm = flocking_metrics(initial, lim.T_inf, opts.policy);
  r.norm_x0 = fm.norm_x;
  r.norm_v0 = rel ? fm.norm_w : fm.norm_v;
  r.norm_that0 = fm.norm_that;
  r.stats = kernel_stats(phi, zeta, opts.validate);
  r.convention = rel ? "leading-order: every O(c^-2) term in the printed constants set to zero"
                     : "exact";

  const double N = static_cast<double>(initial.n);
  const double D = 2.0 * initial.chi + 1.0;
  const double Tb = r.T_upper;
  const double Tl = r.T_lower;
  const double Ti = r.T_inf;
  const double V2 = r.norm_v0 * r.norm_v0;
  const double eps = r.stats.epsilon;
  const double phi_lo = r.stats.phi_min;
  const double zeta_lo = r.stats.zeta_min;
  const double c2 = initial.c * initial.c;
  const double spread = (N - 1.0) * (N - 1.0) * (Tb - Tl) * (Tb - Tl) / (N * N * Tl * Ti);
  const double light = rel ? c2 / (1.0 + c2) : 1.0;
  const double grow = 1.0 + opts.margin;

  if (rel) {
    r.c_condition = (2.0 * initial.chi + 3.0) / (2.0 * c2) <= 1.0 / (2.0 * Tb);
    if (!r.c_condition) r.notes.push_back("light-speed condition (2chi+3)/(2c^2) <= 1/(2T_upper) fails");
  }

  double bracket = 0.0;  // term divided by A in the second entry of λ
  double rate_cap = 0.0;  // leading rate in the second entry of λ
  switch (regime) {
    case 1: {
      if (!rel) {
        r.A_threshold = V2 / (D * D * N * N * Tb) + Tb + spread * Tb / 4.0;
        bracket = 2.0 * V2 / (D * D * N * N * Tb * Tb) + 2.0 + spread / 2.0;
        r.velocity_rate = 1.0 / Tb;
        r.position_bound = r.norm_x0 + Tb * r.norm_v0;
      } else {
        r.A_threshold = Tb + spread * Tb / 4.0 + V2 / (D * D * N * N * Tb);
        bracket = 2.0 + spread / 2.0 + 2.0 * V2 / (D * D * N * N * Tb * Tb);
        r.velocity_rate = 1.0 / (2.0 * Tb);
        r.position_bound = r.norm_x0 + 2.0 * light * Tb * r.norm_v0;
      }
      r.lambda_temperature = 4.0 / (D * Tb * Tb);
      rate_cap = 2.0 / Tb;
      break;
    }
    case 2: {
      if (!rel) {
        r.eps_condition = phi_lo > 0.0 && Tl > 0.0 && eps <= phi_lo * Tl / (2.0 * Tb);
        const double vt = 2.0 + V2 / (2.0 * D * Tl);
        r.A_threshold = 4.0 / 7.0 *
                        (2.0 * zeta_lo * V2 / (D * D * N * N * phi_lo * Tb) +
                         (2.0 + spread / 2.0) * Tb + vt * eps * Tb / phi_lo);
        bracket = 2.0 * zeta_lo * V2 / (D * D * N * N * Tb * Tb) + vt * eps +
                  (2.0 + spread / 2.0) * phi_lo;
        r.position_bound = r.norm_x0 + 2.0 * Tb * r.norm_v0 / phi_lo;
      } else {
        r.eps_condition = 2.0 * eps / Tl <= phi_lo / Tb;
        const double tt = 2.0 + (Ti - Tl) * (Ti - Tl) / (2.0 * Tl * Ti);
        r.A_threshold = 4.0 / 7.0 *
                        (8.0 * zeta_lo * V2 / (D * D * phi_lo * Tb) + (2.0 + spread / 2.0) * Tb +
                         eps * Tb / phi_lo * tt);
        bracket = (2.0 + spread / 2.0) * phi_lo + 8.0 * zeta_lo * V2 / (D * D * Tb * Tb) + eps * tt;
        r.position_bound = r.norm_x0 + 2.0 * light * Tb * r.norm_v0 / phi_lo;
      }
      if (!r.eps_condition) r.notes.push_back("perturbation size condition on epsilon fails");
      r.velocity_rate = phi_lo / (2.0 * Tb);
      r.lambda_temperature = 4.0 * zeta_lo / (D * Tb * Tb);
      rate_cap = 7.0 * phi_lo / (4.0 * Tb);
      break;
    }
    case 3: {
      const double coeff = std::sqrt(2.0) * light * r.norm_v0;
      const auto s = search_U(phi, std::sqrt(2.0) * r.norm_x0, coeff, Tl, Tb, opts);
      r.U_search_lo = s.lo;
      r.U_search_hi = s.hi;
      r.feasible = s.feasible;
      r.position_scaled = true;
      if (!s.feasible) {
        r.notes.push_back("well-prepared condition not satisfiable: " + s.note);
        r.applicable = false;
        r.lambda_positive = false;
        return r;
      }
      r.U = s.U;
      r.chi_U = chi_rate(phi, s.U, Tl, Tb);
      const double zu = zeta.profile(s.U);
      const double p0 = phi.profile(0.0);
      const double tail = rel ? 2.0 + (Tb - Tl) * (Tb - Tl) / (2.0 * Tl * Ti)
                              : 2.0 + V2 / (2.0 * D * Tl);
      bracket = 2.0 * zu * V2 / (D * D * N * N * Tb * Tb) + tail * p0;
      r.A_threshold = bracket / (2.0 * r.chi_U);
      r.velocity_rate = r.chi_U;
      r.position_bound = s.U;
      r.lambda_temperature = 4.0 * zu / (D * Tb * Tb);
      rate_cap = 2.0 * r.chi_U;
      break;
    }
  }
  r.A = grow * r.A_threshold;
  r.lambda_velocity = rate_cap - bracket / r.A;
  r.lambda = std::min(r.lambda_temperature, r.lambda_velocity);
  r.lambda_positive = r.lambda > 0.0;
  if (!r.lambda_positive) r.notes.push_back("lambda <= 0 after margin");
  r.applicable = r.feasible && r.eps_condition && r.c_condition && r.lambda_positive;
  return r;
}

EnvelopeSample envelope_sample(double t, const Ensemble& ens, double T_inf,
                               const EvalPolicy& policy) {
  const auto m = flocking_metrics(ens, T_inf, policy);
  return {t, m.norm_x, is_relativistic(ens.model) ? m.norm_w : m.norm_v, m.norm_that};
}

EnvelopeReport envelope_check(const std::vector<EnvelopeSample>& samples, bool relativistic,
                              const BoundsReport& report) {
  if (samples.empty()) throw Error(ErrorKind::Usage, "envelope_check needs at least one sample");
  if (relativistic != report.relativistic) {
    throw Error(ErrorKind::Usage, "trajectory and bounds report disagree on the model family");
  }
  const auto& s0 = samples.front();
  const double root2 = std::sqrt(2.0);
  EnvelopeReport out;
  auto run = [&](const std::string& name, auto value, auto bound) {
    EnvelopeResult r;
    r.name = name;
    r.applicable = report.applicable;
    if (r.applicable) {
      r.worst_slack = std::numeric_limits<double>::infinity();
      for (const auto& s : samples) {
        const double b = bound(s);
        const double slack = b - value(s);
        if (slack < r.worst_slack) {
          r.worst_slack = slack;
          r.worst_t = s.t;
        }
        if (slack < -kEnvelopeTolerance * std::max(1.0, std::abs(b)) && r.first_violation_t < 0) {
          r.first_violation_t = s.t;
          r.pass = false;
        }
      }
    }
    out.all_pass = out.all_pass && r.pass;
    out.checks.push_back(r);
  };
  const double x_scale = report.position_scaled ? root2 : 1.0;
  run(
      "position", [&](const EnvelopeSample& s) { return x_scale * s.norm_x; },
      [&](const EnvelopeSample&) { return report.position_bound; });
  run(
      relativistic ? "momentum_decay" : "velocity_decay",
      [](const EnvelopeSample& s) { return s.norm_v; },
      [&](const EnvelopeSample& s) { return s0.norm_v * std::exp(-report.velocity_rate * s.t); });
  const double l0 = s0.norm_that * s0.norm_that + report.A * s0.norm_v * s0.norm_v;
  run(
      "lyapunov",
      [&](const EnvelopeSample& s) { return s.norm_that * s.norm_that + report.A * s.norm_v * s.norm_v; },
      [&](const EnvelopeSample& s) { return l0 * std::exp(-report.lambda * s.t); });
  return out;
}

DecayFit fit_decay_rate(const std::vector<double>& t, const std::vector<double>& y, double t0,
                        double t1) {
  if (t.size() != y.size()) throw Error(ErrorKind::Usage, "fit_decay_rate: size mismatch");
  std::vector<double> xs;
  std::vector<double> ls;
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (t[i] < t0 || t[i] > t1) continue;
    if (!(y[i] > 0.0)) {
      throw Error(ErrorKind::Domain, "fit_decay_rate: non-positive sample at t=" + fmt(t[i]));
    }
    xs.push_back(t[i]);
    ls.push_back(std::log(y[i]));
  }
  if (xs.size() < 10) {
    throw Error(ErrorKind::Usage, "fit_decay_rate: fewer than 10 samples in the window");
  }
  const auto fit = [&] {
    const double n = static_cast<double>(xs.size());
    const double mx = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
    const double my = std::accumulate(ls.begin(), ls.end(), 0.0) / n;
    double sxx = 0.0;
    double sxy = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
      sxx += (xs[i] - mx) * (xs[i] - mx);
      sxy += (xs[i] - mx) * (ls[i] - my);
    }
    const double slope = sxy / sxx;
    return std::pair{slope, my - slope * mx};
  }();
  DecayFit out;
  out.rate = -fit.first;
  out.t0 = xs.front();
  out.t1 = xs.back();
  out.count = xs.size();
  double r2 = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double e = ls[i] - (fit.second + fit.first * xs[i]);
    r2 += e * e;
  }
  out.residual = std::sqrt(r2 / static_cast<double>(xs.size()));
  return out;
}

LogLogFit loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) {
    throw Error(ErrorKind::Usage, "loglog_slope needs at least two matching points");
  }
  const double n = static_cast<double>(x.size());
  double mx = 0.0;
  double my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!(x[i] > 0.0) || !(y[i] > 0.0)) {
      throw Error(ErrorKind::Domain, "loglog_slope needs positive data");
    }
    mx += std::log(x[i]);
    my += std::log(y[i]);
  }
  mx /= n;
  my /= n;
  double sxx = 0.0;
  double sxy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double lx = std::log(x[i]) - mx;
    sxx += lx * lx;
    sxy += lx * (std::log(y[i]) - my);
  }
  const double slope = sxy / sxx;
  return {slope, my - slope * mx};
}

InvariantMonitor::InvariantMonitor(const Ensemble& initial, const Kernel& phi, const Kernel& zeta,
                                   const EvalPolicy& policy)
    : phi_(phi), zeta_(zeta), policy_(policy), relativistic_(is_relativistic(initial.model)) {
  first_ = conserved(initial, phi, zeta, policy);
  last_ = first_;
  const auto tb = temperature_bounds(initial, policy);
  sum_.T_lower = tb.lower;
  sum_.T_upper = tb.upper;
  log_prod0_ = sum_log_T(initial);
  T_inf_ = asymptotic_limits(initial, policy).T_inf;
  sum_.entropy = relativistic_ ? 0.0 : first_.entropy;
  sum_.entropy_min_step = std::numeric_limits<double>::infinity();
  sum_.T_min = std::numeric_limits<double>::infinity();
  sum_.T_max = -std::numeric_limits<double>::infinity();
}

void InvariantMonitor::observe(double t, const Ensemble& ens) {
  const auto cur = conserved(ens, phi_, zeta_, policy_);
  if (sum_.samples > 0) {
    double step = 0.0;
    if (relativistic_) {
      step = 0.5 * (last_.entropy_rate + cur.entropy_rate) * (t - last_t_);
      sum_.entropy += step;
    } else {
      step = cur.entropy - sum_.entropy;
      sum_.entropy = cur.entropy;
    }
    sum_.entropy_min_step = std::min(sum_.entropy_min_step, step);
  }
  const double e_scale = std::abs(first_.energy);
  sum_.energy_drift = std::max(sum_.energy_drift,
                               std::abs(cur.energy - first_.energy) / (e_scale > 0 ? e_scale : 1.0));
  double dm = 0.0;
  for (std::size_t d = 0; d < cur.momentum.size(); ++d) {
    const double diff = cur.momentum[d] - first_.momentum[d];
    dm += diff * diff;
  }
  sum_.momentum_drift = std::max(sum_.momentum_drift, std::sqrt(dm) / (1.0 + norm(first_.momentum)));

  const auto [lo, hi] = std::minmax_element(ens.T.begin(), ens.T.end());
  sum_.T_min = std::min(sum_.T_min, *lo);
  sum_.T_max = std::max(sum_.T_max, *hi);
  const double tol = 1e-12;
  if (relativistic_) {
    // Upper bound holds up to the O(c^-2) energy correction.
    const double relax = 1.0 + (2.0 * ens.chi + 3.0) * sum_.T_upper / (ens.c * ens.c);
    if (*hi > sum_.T_upper * relax * (1.0 + tol)) sum_.bounds_hold = false;
  } else if (*lo < sum_.T_lower * (1.0 - tol) || *hi > sum_.T_upper * (1.0 + tol)) {
    sum_.bounds_hold = false;
  }
  sum_.empirical_K = std::max(sum_.empirical_K, std::exp(log_prod0_ - sum_log_T(ens)));

  const double nn = static_cast<double>(ens.n);
  double pair = 0.0;
  double dev = 0.0;
  for (std::size_t a = 0; a < ens.n; ++a) {
    dev += (ens.T[a] - T_inf_) * (ens.T[a] - T_inf_);
    for (std::size_t b = 0; b < ens.n; ++b) pair += (ens.T[a] - ens.T[b]) * (ens.T[a] - ens.T[b]);
  }
  if (dev > 0.0) sum_.spread_ratio = std::max(sum_.spread_ratio, pair / (2.0 * nn * dev));

  last_ = cur;
  last_t_ = t;
  ++sum_.samples;
}

LimitStudy classical_limit_study(const Ensemble& base, const Kernel& phi, const Kernel& zeta,
                                 const std::vector<double>& c_values, const IntegratorConfig& cfg,
                                 RhsOptions opts) {
  auto flatten = [](const Ensemble& e) {
    std::vector<double> s;
    s.reserve(e.x.size() + e.v.size() + e.T.size());
    s.insert(s.end(), e.x.begin(), e.x.end());
    s.insert(s.end(), e.v.begin(), e.v.end());
    s.insert(s.end(), e.T.begin(), e.T.end());
    return s;
  };
  auto run = [&](Model model, double c, std::vector<std::vector<double>>& snaps) {
    Ensemble e = base;
    e.model = model;
    e.c = model == Model::ClassicalTCS ? kInfiniteLightSpeed : c;
    return integrate(e, phi, zeta, cfg, [&](double, const Ensemble& s) { snaps.push_back(flatten(s)); },
                     opts);
  };
  std::vector<std::vector<double>> ref;
  const auto ref_res = run(Model::ClassicalTCS, kInfiniteLightSpeed, ref);
  LimitStudy out;
  std::vector<double> cs;
  std::vector<double> devs;
  for (double c : c_values) {
    LimitRow row;
    row.c = c;
    if (!ref_res.ok) {
      row.ok = false;
      row.message = "classical reference run failed: " + ref_res.message;
      out.rows.push_back(row);
      continue;
    }
    std::vector<std::vector<double>> snaps;
    if (std::isinf(c)) {
      const auto res = run(Model::ClassicalTCS, c, snaps);
      row.ok = res.ok;
      row.message = res.message;
    } else {
      const auto res = run(Model::RTCSSynge, c, snaps);
      row.ok = res.ok;
      row.message = res.message;
    }
    if (row.ok && snaps.size() != ref.size()) {
      row.ok = false;
      row.message = "sample count differs from the classical run";
    }
    if (row.ok) {
      for (std::size_t k = 0; k < snaps.size(); ++k) {
        for (std::size_t i = 0; i < snaps[k].size(); ++i) {
          row.deviation = std::max(row.deviation, std::abs(snaps[k][i] - ref[k][i]));
        }
      }
      if (std::isfinite(c) && row.deviation > 0.0) {
        cs.push_back(c);
        devs.push_back(row.deviation);
      }
    }
    out.rows.push_back(row);
  }
  if (cs.size() >= 2) out.slope = loglog_slope(cs, devs).slope;
  return out;
}

}  // namespace flockd
