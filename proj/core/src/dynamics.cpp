#include "flockd/dynamics.hpp"

#include <tbb/blocked_range.h>
#include <tbb/parallel_for.h>
#include <tbb/task_arena.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <sstream>
#include <thread>
#include <variant>

#include "flockd/gas_model.hpp"

namespace flockd {
namespace {

constexpr std::size_t kParallelThreshold = 64;

std::string fmt(double x) {
  std::ostringstream os;
  os.precision(17);
  os << x;
  return os.str();
}

double dot(const double* a, const double* b, std::size_t dim) {
  double s = 0.0;
  for (std::size_t d = 0; d < dim; ++d) s += a[d] * b[d];
  return s;
}

// Kernel weights for one RHS evaluation: either a constant or an N×N table.
struct WeightTable {
  bool uniform = true;
  double value = 0.0;
  const double* data = nullptr;
  std::size_t n = 0;
  std::vector<double> storage;

  double operator()(std::size_t a, std::size_t b) const {
    return uniform ? value : data[a * n + b];
  }
};

}  // namespace

const char* to_string(Model m) {
  switch (m) {
    case Model::ClassicalTCS:
      return "classical_tcs";
    case Model::RTCSSynge:
      return "rtcs_synge";
    case Model::RTCSSimplified:
      return "rtcs_simplified";
    case Model::RelativisticCSMechanical:
      return "rcs_mechanical";
  }
  return "unknown";
}

Model model_from_string(const std::string& s) {
  for (Model m : {Model::ClassicalTCS, Model::RTCSSynge, Model::RTCSSimplified,
                  Model::RelativisticCSMechanical}) {
    if (s == to_string(m)) return m;
  }
  throw Error(ErrorKind::Validation, "unknown model '" + s +
                                         "' (expected classical_tcs, rtcs_synge, "
                                         "rtcs_simplified or rcs_mechanical)");
}

const char* to_string(Scheme s) { return s == Scheme::RK4 ? "rk4" : "rk45"; }

Scheme scheme_from_string(const std::string& s) {
  if (s == "rk4") return Scheme::RK4;
  if (s == "rk45") return Scheme::RK45;
  throw Error(ErrorKind::Validation, "unknown integrator scheme '" + s + "' (expected rk4 or rk45)");
}

double Ensemble::speed2(std::size_t a) const {
  const double* p = v.data() + a * dim;
  return dot(p, p, dim);
}

void Ensemble::check() const {
  if (n == 0 || dim == 0) throw Error(ErrorKind::Usage, "ensemble needs n >= 1 and dim >= 1");
  if (x.size() != n * dim || v.size() != n * dim || T.size() != n) {
    throw Error(ErrorKind::Usage, "ensemble arrays do not match n and dim");
  }
  check_chi(chi);
  if (is_relativistic(model) && !(c > 0.0 && std::isfinite(c))) {
    throw Error(ErrorKind::Usage, std::string("model ") + to_string(model) +
                                      " needs a finite positive light speed");
  }
  for (std::size_t a = 0; a < n; ++a) {
    if (!(T[a] > 0.0) || !std::isfinite(T[a])) {
      throw Error(ErrorKind::State, "temperature of particle " + std::to_string(a) +
                                        " is not positive: " + fmt(T[a]));
    }
    if (is_relativistic(model) && !(speed2(a) < c * c)) {
      throw Error(ErrorKind::Kinematics,
                  "particle " + std::to_string(a) + " moves at or above the light speed");
    }
  }
  for (double e : x) {
    if (!std::isfinite(e)) throw Error(ErrorKind::State, "non-finite position");
  }
  for (double e : v) {
    if (!std::isfinite(e)) throw Error(ErrorKind::State, "non-finite velocity");
  }
}

Ensemble make_ensemble(std::size_t n, std::size_t dim, Model model, int chi, double c) {
  Ensemble e;
  e.n = n;
  e.dim = dim;
  e.x.assign(n * dim, 0.0);
  e.v.assign(n * dim, 0.0);
  e.T.assign(n, 1.0);
  e.chi = chi;
  e.c = model == Model::ClassicalTCS ? kInfiniteLightSpeed : c;
  e.model = model;
  return e;
}

std::size_t worker_count() {
  if (const char* env = std::getenv("FLOCKD_THREADS")) {
    char* end = nullptr;
    const long k = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && k >= 1) return static_cast<std::size_t>(k);
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : hw;
}

struct RhsEvaluator::Impl {
  std::unique_ptr<tbb::task_arena> arena;
  WeightTable wphi;
  WeightTable wzeta;
  std::vector<double> q;     // vector transported by the momentum sum
  std::vector<double> s;     // scalar transported by the energy sum
  std::vector<double> smom;  // momentum sums
  std::vector<double> sen;   // energy sums
  std::vector<RelativisticClosure> closure;
  std::vector<LorentzFactor> lorentz;

  template <class F>
  void for_rows(std::size_t n, F&& f) {
    if (!arena || n < kParallelThreshold) {
      for (std::size_t a = 0; a < n; ++a) f(a);
      return;
    }
    arena->execute([&] {
      tbb::parallel_for(tbb::blocked_range<std::size_t>(0, n, 8),
                        [&](const tbb::blocked_range<std::size_t>& r) {
                          for (std::size_t a = r.begin(); a != r.end(); ++a) f(a);
                        });
    });
  }

  void fill_weights(const Kernel& k, const Ensemble& ens, WeightTable& w) {
    const std::size_t n = ens.n;
    if (const auto* c = std::get_if<ConstantKernel>(&k.variant())) {
      w.uniform = true;
      w.value = c->value;
      return;
    }
    w.uniform = false;
    w.n = n;
    if (const auto* m = std::get_if<PerturbedMatrixKernel>(&k.variant())) {
      if (m->n != n) {
        throw Error(ErrorKind::Usage, "kernel matrix size " + std::to_string(m->n) +
                                          " does not match particle count " + std::to_string(n));
      }
      w.data = m->entries.data();
      return;
    }
    w.storage.resize(n * n);
    const std::size_t dim = ens.dim;
    // Full rows; |x_a - x_b| and |x_b - x_a| round identically, so the
    // table is exactly symmetric.
    for_rows(n, [&](std::size_t a) {
      for (std::size_t b = 0; b < n; ++b) {
        double r2 = 0.0;
        for (std::size_t d = 0; d < dim; ++d) {
          const double dx = ens.x[a * dim + d] - ens.x[b * dim + d];
          r2 += dx * dx;
        }
        w.storage[a * n + b] = k.profile(std::sqrt(r2));
      }
    });
    w.data = w.storage.data();
  }

  // smom_a = (1/N) Σ_b φ_ab (q_b - q_a), sen_a = (1/N) Σ_b ζ_ab (s_a - s_b).
  void pair_sums(const Ensemble& ens, bool energy) {
    const std::size_t n = ens.n;
    const std::size_t dim = ens.dim;
    const double inv_n = 1.0 / static_cast<double>(n);
    smom.assign(n * dim, 0.0);
    sen.assign(n, 0.0);
    for_rows(n, [&](std::size_t a) {
      double* out = smom.data() + a * dim;
      const double* qa = q.data() + a * dim;
      double e = 0.0;
      for (std::size_t b = 0; b < n; ++b) {
        const double* qb = q.data() + b * dim;
        const double w = wphi(a, b);
        for (std::size_t d = 0; d < dim; ++d) out[d] += w * (qb[d] - qa[d]);
        if (energy) e += wzeta(a, b) * (s[a] - s[b]);
      }
      for (std::size_t d = 0; d < dim; ++d) out[d] *= inv_n;
      sen[a] = e * inv_n;
    });
  }
};

RhsEvaluator::RhsEvaluator(const Kernel& phi, const Kernel& zeta, RhsOptions opts)
    : phi_(phi),
      zeta_(zeta),
      opts_(opts),
      threads_(opts.threads == 0 ? worker_count() : opts.threads),
      impl_(std::make_unique<Impl>()) {
  check_policy(opts_.policy);
  if (threads_ > 1) impl_->arena = std::make_unique<tbb::task_arena>(static_cast<int>(threads_));
}

RhsEvaluator::~RhsEvaluator() = default;

void RhsEvaluator::operator()(const Ensemble& ens, Derivative& out,
                              std::vector<RtcsSolve>* solves) {
  ens.check();
  auto& im = *impl_;
  const std::size_t n = ens.n;
  const std::size_t dim = ens.dim;
  out.dx.assign(ens.v.begin(), ens.v.end());
  out.dv.assign(n * dim, 0.0);
  out.dT.assign(n, 0.0);
  im.q.resize(n * dim);
  im.s.resize(n);
  im.fill_weights(phi_, ens, im.wphi);
  const bool energy = ens.model != Model::RelativisticCSMechanical;
  if (energy) im.fill_weights(zeta_, ens, im.wzeta);
  const double c = ens.c;
  const double c2 = c * c;
  const int chi = ens.chi;

  switch (ens.model) {
    case Model::ClassicalTCS: {
      for (std::size_t a = 0; a < n; ++a) {
        const double inv_t = 1.0 / ens.T[a];
        for (std::size_t d = 0; d < dim; ++d) im.q[a * dim + d] = ens.v[a * dim + d] * inv_t;
        im.s[a] = inv_t;
      }
      im.pair_sums(ens, true);
      const double k = 2.0 / (2.0 * chi + 1.0);
      im.for_rows(n, [&](std::size_t a) {
        const double* sm = im.smom.data() + a * dim;
        std::copy(sm, sm + dim, out.dv.data() + a * dim);
        out.dT[a] = k * (im.sen[a] - dot(ens.v.data() + a * dim, sm, dim));
      });
      break;
    }
    case Model::RTCSSynge: {
      im.closure.resize(n);
      im.for_rows(n, [&](std::size_t a) {
        im.closure[a] = relativistic_closure(chi, ens.T[a], ens.speed2(a), c, opts_.policy);
        const double g = im.closure[a].lorentz;
        const double f = g / ens.T[a];
        for (std::size_t d = 0; d < dim; ++d) im.q[a * dim + d] = ens.v[a * dim + d] * f;
        im.s[a] = f;
      });
      im.pair_sums(ens, true);
      if (solves) solves->assign(n, RtcsSolve{});
      im.for_rows(n, [&](std::size_t a) {
        const auto& cl = im.closure[a];
        const double* va = ens.v.data() + a * dim;
        const double* sm = im.smom.data() + a * dim;
        const double g = cl.lorentz;
        const double ga = cl.gamma_a;
        const double h = cl.h;
        const double dh = cl.dh_dgamma;
        const double q2 = ens.speed2(a);
        const double a1 = g * q2 * dh;
        const double b1 = 0.5 * h * g * g * g;
        const double c1 = dot(sm, va, dim);
        const double a2 = c2 * (g * dh + 1.0 / (g * ga * ga));
        const double b2 = 0.5 * g * (g * g * h + 1.0 / ga);
        const double c2e = im.sen[a];
        const double det = a1 * b2 - a2 * b1;
        const double scale = std::abs(a1 * b2) + std::abs(a2 * b1);
        if (!(std::abs(det) > opts_.det_floor * scale) || !std::isfinite(det)) {
          throw Error(ErrorKind::DegenerateClosure,
                      "momentum/energy system is singular for particle " + std::to_string(a) +
                          " (determinant " + fmt(det) + ")");
        }
        const double dgamma = (c1 * b2 - c2e * b1) / det;
        const double dq2 = (a2 * c1 - a1 * c2e) / (a2 * b1 - a1 * b2);
        // Γ H dv = S - v (Γ' H + Γ H' γ') with Γ' = Γ³ (|v|²)' / (2c²).
        const double along = g * dh * dgamma;
        const double inv_gh = 1.0 / (g * h);
        const double shrink = g * g * dq2 / (2.0 * c2);
        double* dv = out.dv.data() + a * dim;
        for (std::size_t d = 0; d < dim; ++d) {
          dv[d] = (sm[d] - va[d] * along) * inv_gh - shrink * va[d];
        }
        out.dT[a] = -(ens.T[a] * ens.T[a] / c2) * dgamma;
        if (solves) (*solves)[a] = {det, dgamma, dq2, dot(va, dv, dim)};
      });
      break;
    }
    case Model::RTCSSimplified: {
      im.lorentz.resize(n);
      im.for_rows(n, [&](std::size_t a) {
        im.lorentz[a] = lorentz_factor(ens.speed2(a), c);
        const double f = im.lorentz[a].gamma / ens.T[a];
        for (std::size_t d = 0; d < dim; ++d) im.q[a * dim + d] = ens.v[a * dim + d] * f;
        im.s[a] = f;
      });
      im.pair_sums(ens, true);
      im.for_rows(n, [&](std::size_t a) {
        const double* va = ens.v.data() + a * dim;
        const double* sm = im.smom.data() + a * dim;
        const double g = im.lorentz[a].gamma;
        const double t = ens.T[a];
        const double q2 = ens.speed2(a);
        const double gg = 1.0 + t / c2;
        const double a1 = q2 * g / c2;
        const double b1 = 0.5 * g * g * g * gg;
        const double c1 = dot(sm, va, dim);
        const double a2 = g;
        const double b2 = 0.5 * g * g * g * (t + c2) / c2;
        const double c2e = im.sen[a];
        // a1 b2 - a2 b1 = -Γ⁴G(1 - |v|²/c²)/2 = -Γ²G/2
        const double det = -0.5 * g * g * gg;
        const double dt = (c1 * b2 - c2e * b1) / det;
        const double dq2 = (a1 * c2e - a2 * c1) / det;
        const double dgg = g * g * g * gg * dq2 / (2.0 * c2) + g * dt / c2;
        const double inv = 1.0 / (g * gg);
        double* dv = out.dv.data() + a * dim;
        for (std::size_t d = 0; d < dim; ++d) dv[d] = (sm[d] - va[d] * dgg) * inv;
        out.dT[a] = dt;
      });
      break;
    }
    case Model::RelativisticCSMechanical: {
      im.lorentz.resize(n);
      im.for_rows(n, [&](std::size_t a) {
        im.lorentz[a] = lorentz_factor(ens.speed2(a), c);
        for (std::size_t d = 0; d < dim; ++d) im.q[a * dim + d] = ens.v[a * dim + d];
      });
      im.pair_sums(ens, false);
      im.for_rows(n, [&](std::size_t a) {
        const double* va = ens.v.data() + a * dim;
        const double* sm = im.smom.data() + a * dim;
        const double g = im.lorentz[a].gamma;
        const double beta2 = ens.speed2(a) / c2;
        const double k = g + g * g / c2;
        const double lift = (1.0 + 2.0 * g / c2) * g * g * g;
        const double vdv = dot(sm, va, dim) / (lift * beta2 + k);
        const double dk = lift * vdv / c2;
        double* dv = out.dv.data() + a * dim;
        for (std::size_t d = 0; d < dim; ++d) dv[d] = (sm[d] - dk * va[d]) / k;
      });
      break;
    }
  }
}

Derivative tcs_rhs(const Ensemble& ens, const Kernel& phi, const Kernel& zeta) {
  if (ens.model != Model::ClassicalTCS) {
    throw Error(ErrorKind::Usage, "tcs_rhs needs a classical_tcs ensemble");
  }
  return evaluate_rhs(ens, phi, zeta);
}

Derivative rtcs_rhs(const Ensemble& ens, const Kernel& phi, const Kernel& zeta,
                    std::vector<RtcsSolve>* solves) {
  if (ens.model != Model::RTCSSynge) {
    throw Error(ErrorKind::Usage, "rtcs_rhs needs an rtcs_synge ensemble");
  }
  RhsEvaluator rhs(phi, zeta, RhsOptions{.threads = 1});
  Derivative d;
  rhs(ens, d, solves);
  return d;
}

Derivative rtcs_simplified_rhs(const Ensemble& ens, const Kernel& phi, const Kernel& zeta) {
  if (ens.model != Model::RTCSSimplified) {
    throw Error(ErrorKind::Usage, "rtcs_simplified_rhs needs an rtcs_simplified ensemble");
  }
  return evaluate_rhs(ens, phi, zeta);
}

Derivative rcs_mechanical_rhs(const Ensemble& ens, const Kernel& phi) {
  if (ens.model != Model::RelativisticCSMechanical) {
    throw Error(ErrorKind::Usage, "rcs_mechanical_rhs needs an rcs_mechanical ensemble");
  }
  return evaluate_rhs(ens, phi, phi);
}

Derivative evaluate_rhs(const Ensemble& ens, const Kernel& phi, const Kernel& zeta) {
  RhsEvaluator rhs(phi, zeta, RhsOptions{.threads = 1});
  Derivative d;
  rhs(ens, d);
  return d;
}

double momentum_factor(const Ensemble& ens, std::size_t a, const EvalPolicy& policy) {
  if (ens.model == Model::ClassicalTCS) return 1.0;
  const double c2 = ens.c * ens.c;
  const double q2 = ens.speed2(a);
  switch (ens.model) {
    case Model::RTCSSynge:
      return relativistic_closure(ens.chi, ens.T[a], q2, ens.c, policy).momentum_factor;
    case Model::RTCSSimplified:
      return lorentz_factor(q2, ens.c).gamma * (1.0 + ens.T[a] / c2);
    case Model::RelativisticCSMechanical: {
      const double g = lorentz_factor(q2, ens.c).gamma;
      return g + g * g / c2;
    }
    default:
      return 1.0;
  }
}

Ensemble normalize_frame(const Ensemble& ens, int max_iterations) {
  ens.check();
  Ensemble out = ens;
  const std::size_t n = ens.n;
  const std::size_t dim = ens.dim;
  if (ens.model == Model::ClassicalTCS) {
    std::vector<double> mean(dim, 0.0);
    for (std::size_t a = 0; a < n; ++a) {
      for (std::size_t d = 0; d < dim; ++d) mean[d] += ens.v[a * dim + d];
    }
    for (double& m : mean) m /= static_cast<double>(n);
    for (std::size_t a = 0; a < n; ++a) {
      for (std::size_t d = 0; d < dim; ++d) out.v[a * dim + d] -= mean[d];
    }
    return out;
  }
  const double tol = 1e-12 * static_cast<double>(n);
  std::vector<double> p(dim);
  for (int it = 0; it <= max_iterations; ++it) {
    std::fill(p.begin(), p.end(), 0.0);
    double total = 0.0;
    for (std::size_t a = 0; a < n; ++a) {
      const double m = momentum_factor(out, a);
      total += m;
      for (std::size_t d = 0; d < dim; ++d) p[d] += m * out.v[a * dim + d];
    }
    if (std::sqrt(dot(p.data(), p.data(), dim)) < tol) return out;
    if (it == max_iterations) break;
    for (std::size_t a = 0; a < n; ++a) {
      for (std::size_t d = 0; d < dim; ++d) out.v[a * dim + d] -= p[d] / total;
    }
    out.check();
  }
  throw Error(ErrorKind::Normalization, "zero-momentum frame shift did not converge in " +
                                            std::to_string(max_iterations) + " iterations");
}

void check_config(const IntegratorConfig& cfg) {
  auto bad = [](const std::string& what) { throw Error(ErrorKind::Validation, what); };
  if (!(cfg.dt > 0.0) || !std::isfinite(cfg.dt)) bad("integrator.dt must be positive");
  if (!(cfg.rtol > 0.0) || !(cfg.atol > 0.0)) bad("integrator rtol and atol must be positive");
  if (!(cfg.dt_min > 0.0)) bad("integrator.dt_min must be positive");
  if (!(cfg.dt_max >= cfg.dt_min)) bad("integrator.dt_max must be at least dt_min");
  if (!(cfg.t_end >= 0.0) || !std::isfinite(cfg.t_end)) bad("integrator.t_end must be >= 0");
  if (cfg.sample_stride == 0) bad("integrator.sample_stride must be >= 1");
  if (!(cfg.T_floor > 0.0)) bad("integrator.T_floor must be positive");
}

namespace {

// y_out = y + h Σ w_i k_i over the (x, v, T) blocks.
void combine(const Ensemble& y, double h, std::initializer_list<std::pair<double, const Derivative*>> ks,
             Ensemble& out) {
  out.n = y.n;
  out.dim = y.dim;
  out.chi = y.chi;
  out.c = y.c;
  out.model = y.model;
  out.x.resize(y.x.size());
  out.v.resize(y.v.size());
  out.T.resize(y.T.size());
  for (std::size_t i = 0; i < y.x.size(); ++i) {
    double s = 0.0;
    for (const auto& [w, k] : ks) s += w * k->dx[i];
    out.x[i] = y.x[i] + h * s;
  }
  for (std::size_t i = 0; i < y.v.size(); ++i) {
    double s = 0.0;
    for (const auto& [w, k] : ks) s += w * k->dv[i];
    out.v[i] = y.v[i] + h * s;
  }
  for (std::size_t i = 0; i < y.T.size(); ++i) {
    double s = 0.0;
    for (const auto& [w, k] : ks) s += w * k->dT[i];
    out.T[i] = y.T[i] + h * s;
  }
}

bool above_floor(const Ensemble& y, double floor) {
  return std::all_of(y.T.begin(), y.T.end(), [floor](double t) { return t > floor; });
}

bool recoverable(ErrorKind k) { return k == ErrorKind::State || k == ErrorKind::Kinematics; }

class Stepper {
 public:
  Stepper(const Kernel& phi, const Kernel& zeta, const IntegratorConfig& cfg, RhsOptions opts)
      : rhs_(phi, zeta, opts), cfg_(cfg) {}

  std::size_t rejected = 0;

  // Returns false when a stage or the result leaves T > T_floor or |v| < c.
  bool try_rk4(const Ensemble& y, double h, Ensemble& out) {
    try {
      rhs_(y, k_[0]);
      combine(y, 0.5 * h, {{1.0, &k_[0]}}, stage_);
      if (!above_floor(stage_, cfg_.T_floor)) return reject("temperature floor in stage 2");
      rhs_(stage_, k_[1]);
      combine(y, 0.5 * h, {{1.0, &k_[1]}}, stage_);
      if (!above_floor(stage_, cfg_.T_floor)) return reject("temperature floor in stage 3");
      rhs_(stage_, k_[2]);
      combine(y, h, {{1.0, &k_[2]}}, stage_);
      if (!above_floor(stage_, cfg_.T_floor)) return reject("temperature floor in stage 4");
      rhs_(stage_, k_[3]);
      combine(y, h / 6.0, {{1.0, &k_[0]}, {2.0, &k_[1]}, {2.0, &k_[2]}, {1.0, &k_[3]}}, out);
      if (!above_floor(out, cfg_.T_floor)) return reject("temperature floor crossed");
      return true;
    } catch (const Error& e) {
      if (!recoverable(e.kind())) throw;
      last_kind_ = e.kind();
      last_reason_ = e.what();
      return false;
    }
  }

  // Fixed step with recursive halving on rejection.
  void advance_rk4(Ensemble& y, double h) {
    if (try_rk4(y, h, trial_)) {
      std::swap(y, trial_);
      return;
    }
    ++rejected;
    if (std::abs(h) * 0.5 < cfg_.dt_min) fail(h);
    advance_rk4(y, 0.5 * h);
    advance_rk4(y, 0.5 * h);
  }

  // Dormand–Prince 5(4); returns the scaled error norm, or +inf on rejection.
  double try_dp45(const Ensemble& y, double h, bool have_k1, Ensemble& out) {
    static constexpr double a21 = 1.0 / 5.0;
    static constexpr double a31 = 3.0 / 40.0, a32 = 9.0 / 40.0;
    static constexpr double a41 = 44.0 / 45.0, a42 = -56.0 / 15.0, a43 = 32.0 / 9.0;
    static constexpr double a51 = 19372.0 / 6561.0, a52 = -25360.0 / 2187.0,
                            a53 = 64448.0 / 6561.0, a54 = -212.0 / 729.0;
    static constexpr double a61 = 9017.0 / 3168.0, a62 = -355.0 / 33.0, a63 = 46732.0 / 5247.0,
                            a64 = 49.0 / 176.0, a65 = -5103.0 / 18656.0;
    static constexpr double b1 = 35.0 / 384.0, b3 = 500.0 / 1113.0, b4 = 125.0 / 192.0,
                            b5 = -2187.0 / 6784.0, b6 = 11.0 / 84.0;
    static constexpr double e1 = 71.0 / 57600.0, e3 = -71.0 / 16695.0, e4 = 71.0 / 1920.0,
                            e5 = -17253.0 / 339200.0, e6 = 22.0 / 525.0, e7 = -1.0 / 40.0;
    try {
      if (!have_k1) rhs_(y, k_[0]);
      combine(y, h, {{a21, &k_[0]}}, stage_);
      if (!above_floor(stage_, cfg_.T_floor)) return reject_inf();
      rhs_(stage_, k_[1]);
      combine(y, h, {{a31, &k_[0]}, {a32, &k_[1]}}, stage_);
      if (!above_floor(stage_, cfg_.T_floor)) return reject_inf();
      rhs_(stage_, k_[2]);
      combine(y, h, {{a41, &k_[0]}, {a42, &k_[1]}, {a43, &k_[2]}}, stage_);
      if (!above_floor(stage_, cfg_.T_floor)) return reject_inf();
      rhs_(stage_, k_[3]);
      combine(y, h, {{a51, &k_[0]}, {a52, &k_[1]}, {a53, &k_[2]}, {a54, &k_[3]}}, stage_);
      if (!above_floor(stage_, cfg_.T_floor)) return reject_inf();
      rhs_(stage_, k_[4]);
      combine(y, h, {{a61, &k_[0]}, {a62, &k_[1]}, {a63, &k_[2]}, {a64, &k_[3]}, {a65, &k_[4]}},
              stage_);
      if (!above_floor(stage_, cfg_.T_floor)) return reject_inf();
      rhs_(stage_, k_[5]);
      combine(y, h, {{b1, &k_[0]}, {b3, &k_[2]}, {b4, &k_[3]}, {b5, &k_[4]}, {b6, &k_[5]}}, out);
      if (!above_floor(out, cfg_.T_floor)) return reject_inf();
      rhs_(out, k_[6]);
      combine(y, h,
              {{e1, &k_[0]}, {e3, &k_[2]}, {e4, &k_[3]}, {e5, &k_[4]}, {e6, &k_[5]}, {e7, &k_[6]}},
              err_);
    } catch (const Error& e) {
      if (!recoverable(e.kind())) throw;
      last_kind_ = e.kind();
      last_reason_ = e.what();
      return std::numeric_limits<double>::infinity();
    }
    double acc = 0.0;
    std::size_t count = 0;
    auto block = [&](const std::vector<double>& y0, const std::vector<double>& y1,
                     const std::vector<double>& ynew) {
      for (std::size_t i = 0; i < y0.size(); ++i) {
        const double sc = cfg_.atol + cfg_.rtol * std::max(std::abs(y0[i]), std::abs(ynew[i]));
        const double e = (y1[i] - y0[i]) / sc;
        acc += e * e;
        ++count;
      }
    };
    // err_ holds y + (b5 - b4) increment; subtract y to get the error vector.
    block(y.x, err_.x, out.x);
    block(y.v, err_.v, out.v);
    block(y.T, err_.T, out.T);
    return std::sqrt(acc / static_cast<double>(count));
  }

  // FSAL: after an accepted DP step k7 becomes k1 of the next.
  void shift_fsal() { std::swap(k_[0], k_[6]); }

  [[noreturn]] void fail(double h) {
    std::string why = last_reason_.empty() ? "step rejected" : last_reason_;
    throw Error(last_kind_ == ErrorKind::Kinematics ? ErrorKind::Kinematics : ErrorKind::Stiffness,
                "step size " + fmt(std::abs(h)) + " fell below dt_min after repeated rejection (" +
                    why + ")");
  }

  RhsEvaluator& rhs() { return rhs_; }

 private:
  bool reject(const char* why) {
    last_kind_ = ErrorKind::Stiffness;
    last_reason_ = why;
    return false;
  }
  double reject_inf() {
    last_kind_ = ErrorKind::Stiffness;
    last_reason_ = "temperature floor crossed";
    return std::numeric_limits<double>::infinity();
  }

  RhsEvaluator rhs_;
  IntegratorConfig cfg_;
  Derivative k_[7];
  Ensemble stage_;
  Ensemble trial_;
  Ensemble err_;
  ErrorKind last_kind_ = ErrorKind::Stiffness;
  std::string last_reason_;
};

}  // namespace

void rk4_step(Ensemble& ens, double dt, RhsEvaluator& rhs) {
  Derivative k1, k2, k3, k4;
  Ensemble s;
  rhs(ens, k1);
  combine(ens, 0.5 * dt, {{1.0, &k1}}, s);
  rhs(s, k2);
  combine(ens, 0.5 * dt, {{1.0, &k2}}, s);
  rhs(s, k3);
  combine(ens, dt, {{1.0, &k3}}, s);
  rhs(s, k4);
  Ensemble out;
  combine(ens, dt / 6.0, {{1.0, &k1}, {2.0, &k2}, {2.0, &k3}, {1.0, &k4}}, out);
  ens = std::move(out);
}

IntegrationResult integrate(Ensemble& ens, const Kernel& phi, const Kernel& zeta,
                            const IntegratorConfig& cfg, const Observer& observer,
                            RhsOptions opts) {
  check_config(cfg);
  IntegrationResult res;
  try {
    ens.check();
  } catch (const Error& e) {
    res.ok = false;
    res.error = e.kind();
    res.message = std::string(e.what()) + " at t=0";
    return res;
  }
  Stepper stepper(phi, zeta, cfg, opts);
  if (observer) observer(0.0, ens);
  double t = 0.0;
  try {
    if (cfg.scheme == Scheme::RK4) {
      const auto nsteps =
          static_cast<std::size_t>(std::ceil(cfg.t_end / cfg.dt - 1e-9));
      for (std::size_t k = 1; k <= nsteps; ++k) {
        const double t_next = k == nsteps ? cfg.t_end : static_cast<double>(k) * cfg.dt;
        stepper.advance_rk4(ens, t_next - t);
        t = t_next;
        ++res.steps;
        if (observer && (k % cfg.sample_stride == 0 || k == nsteps)) observer(t, ens);
      }
    } else {
      double h = std::min(cfg.dt, cfg.dt_max);
      bool have_k1 = false;
      Ensemble trial;
      std::size_t since_sample = 0;
      while (t < cfg.t_end) {
        const bool last = t + h >= cfg.t_end * (1.0 - 1e-15);
        const double step = last ? cfg.t_end - t : h;
        const double err = stepper.try_dp45(ens, step, have_k1, trial);
        if (err <= 1.0) {
          std::swap(ens, trial);
          t = last ? cfg.t_end : t + step;
          stepper.shift_fsal();
          have_k1 = true;
          ++res.steps;
          ++since_sample;
          const double fac = err == 0.0 ? 5.0 : std::clamp(0.9 * std::pow(err, -0.2), 0.2, 5.0);
          h = std::min(cfg.dt_max, step * fac);
          if (observer && (since_sample == cfg.sample_stride || t >= cfg.t_end)) {
            observer(t, ens);
            since_sample = 0;
          }
        } else {
          ++stepper.rejected;
          const double fac =
              std::isfinite(err) ? std::clamp(0.9 * std::pow(err, -0.2), 0.2, 0.9) : 0.5;
          h = step * fac;
          if (h < cfg.dt_min) stepper.fail(h);
        }
      }
    }
  } catch (const Error& e) {
    res.ok = false;
    res.error = e.kind();
    res.message = std::string(e.what()) + " at t=" + fmt(t);
  }
  res.t = t;
  res.rejected = stepper.rejected;
  return res;
}

}  // namespace flockd
