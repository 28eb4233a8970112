#pragma once

#include <cstddef>
#include <functional>
#include <limits>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "flockd/errors.hpp"
#include "flockd/kernels.hpp"
#include "flockd/special_functions.hpp"

namespace flockd {

enum class Model { ClassicalTCS, RTCSSynge, RTCSSimplified, RelativisticCSMechanical };

const char* to_string(Model m);
Model model_from_string(const std::string& s);
constexpr bool is_relativistic(Model m) { return m != Model::ClassicalTCS; }

inline constexpr double kInfiniteLightSpeed = std::numeric_limits<double>::infinity();

struct Ensemble {
  std::size_t n = 0;
  std::size_t dim = 3;
  std::vector<double> x;  // n·dim, row-major
  std::vector<double> v;  // n·dim
  std::vector<double> T;  // n
  int chi = 1;
  double c = kInfiniteLightSpeed;
  Model model = Model::ClassicalTCS;

  std::span<const double> pos(std::size_t a) const { return {x.data() + a * dim, dim}; }
  std::span<const double> vel(std::size_t a) const { return {v.data() + a * dim, dim}; }
  double speed2(std::size_t a) const;

  // Shape, positivity of T and |v| < c; throws Usage/State/Kinematics.
  void check() const;
};

Ensemble make_ensemble(std::size_t n, std::size_t dim, Model model, int chi, double c);

struct Derivative {
  std::vector<double> dx;
  std::vector<double> dv;
  std::vector<double> dT;
};

// Per-particle record of the 2×2 momentum/energy solve.
struct RtcsSolve {
  double det;        // a1 b2 - a2 b1
  double dgamma;     // dγ/dt
  double dspeed2;    // d|v|²/dt from the solve
  double v_dot_dv;   // v·dv of the extracted vector
};

// Worker count from FLOCKD_THREADS, else the hardware concurrency.
std::size_t worker_count();

struct RhsOptions {
  EvalPolicy policy{};
  std::size_t threads = 0;  // 0: worker_count()
  double det_floor = 1e-300;
};

// Reusable RHS evaluator; results are bitwise identical for any thread count.
class RhsEvaluator {
 public:
  RhsEvaluator(const Kernel& phi, const Kernel& zeta, RhsOptions opts = {});
  ~RhsEvaluator();
  RhsEvaluator(const RhsEvaluator&) = delete;
  RhsEvaluator& operator=(const RhsEvaluator&) = delete;

  void operator()(const Ensemble& ens, Derivative& out, std::vector<RtcsSolve>* solves = nullptr);

  const Kernel& phi() const { return phi_; }
  const Kernel& zeta() const { return zeta_; }
  std::size_t threads() const { return threads_; }

 private:
  struct Impl;
  const Kernel& phi_;
  const Kernel& zeta_;
  RhsOptions opts_;
  std::size_t threads_;
  std::unique_ptr<Impl> impl_;
};

Derivative tcs_rhs(const Ensemble& ens, const Kernel& phi, const Kernel& zeta);
Derivative rtcs_rhs(const Ensemble& ens, const Kernel& phi, const Kernel& zeta,
                    std::vector<RtcsSolve>* solves = nullptr);
Derivative rtcs_simplified_rhs(const Ensemble& ens, const Kernel& phi, const Kernel& zeta);
Derivative rcs_mechanical_rhs(const Ensemble& ens, const Kernel& phi);
Derivative evaluate_rhs(const Ensemble& ens, const Kernel& phi, const Kernel& zeta);

// Conserved-momentum factor m_a with Σ m_a v_a conserved by the model:
// 1 (classical), ΓH (Synge), Γ(1+T/c²) (simplified), Γ(1+Γ/c²) (mechanical).
double momentum_factor(const Ensemble& ens, std::size_t a, const EvalPolicy& policy = {});

// Zero total (auxiliary) momentum: Σv = 0 classically, Σw = 0 otherwise.
Ensemble normalize_frame(const Ensemble& ens, int max_iterations = 200);

enum class Scheme { RK4, RK45 };
const char* to_string(Scheme s);
Scheme scheme_from_string(const std::string& s);

struct IntegratorConfig {
  Scheme scheme = Scheme::RK4;
  double dt = 1e-3;  // RK4 step, RK45 initial step
  double rtol = 1e-8;
  double atol = 1e-10;
  double dt_min = 1e-12;
  double dt_max = 0.1;
  double t_end = 1.0;
  std::size_t sample_stride = 1;
  double T_floor = 1e-8;
};

void check_config(const IntegratorConfig& cfg);

// Called at t = 0, every sample_stride accepted steps, and at the end.
using Observer = std::function<void(double t, const Ensemble& state)>;

struct IntegrationResult {
  bool ok = true;
  double t = 0.0;
  std::size_t steps = 0;
  std::size_t rejected = 0;
  ErrorKind error = ErrorKind::Solver;
  std::string message;
};

IntegrationResult integrate(Ensemble& ens, const Kernel& phi, const Kernel& zeta,
                            const IntegratorConfig& cfg, const Observer& observer = {},
                            RhsOptions opts = {});

// One classical RK4 step of size dt (dt may be negative); no floor checks.
void rk4_step(Ensemble& ens, double dt, RhsEvaluator& rhs);

}  // namespace flockd
