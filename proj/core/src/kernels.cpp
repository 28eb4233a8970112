#include "flockd/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "flockd/errors.hpp"
#include "flockd/random.hpp"

namespace flockd {
namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

[[noreturn]] void invalid(const std::string& what) { throw Error(ErrorKind::Validation, what); }

std::string num(double x) {
  std::ostringstream os;
  os.precision(17);
  os << x;
  return os.str();
}

void check_structure(const Kernel::Variant& v) {
  std::visit(Overloaded{
                 [](const ConstantKernel& k) {
                   if (!(k.value > 0.0) || !std::isfinite(k.value)) {
                     invalid("constant kernel value must be positive and finite, got " +
                             num(k.value));
                   }
                 },
                 [](const PerturbedMatrixKernel& k) {
                   if (k.n == 0 || k.entries.size() != k.n * k.n) {
                     invalid("kernel matrix must be n×n with n >= 1");
                   }
                   for (std::size_t a = 0; a < k.n; ++a) {
                     for (std::size_t b = 0; b < k.n; ++b) {
                       const double w = k.entries[a * k.n + b];
                       if (!(w > 0.0) || !std::isfinite(w)) {
                         invalid("kernel matrix entry (" + std::to_string(a) + "," +
                                 std::to_string(b) + ") is not positive: " + num(w));
                       }
                       if (w != k.entries[b * k.n + a]) {
                         invalid("kernel matrix is not symmetric at (" + std::to_string(a) +
                                 "," + std::to_string(b) + ")");
                       }
                     }
                   }
                 },
                 [](const AlgebraicKernel& k) {
                   if (!(k.phi0 > 0.0) || !std::isfinite(k.phi0)) {
                     invalid("algebraic kernel needs phi0 > 0");
                   }
                   if (!(k.beta >= 0.0) || !std::isfinite(k.beta)) {
                     invalid("algebraic kernel needs beta >= 0");
                   }
                 },
                 [](const CutoffKernel& k) {
                   if (!(k.phi0 > 0.0) || !std::isfinite(k.phi0)) {
                     invalid("cutoff kernel needs phi0 > 0");
                   }
                   if (!(k.radius > 0.0) || !std::isfinite(k.radius)) {
                     invalid("cutoff kernel needs radius > 0");
                   }
                 },
                 [](const TabulatedKernel& k) {
                   if (k.r.empty() || k.r.size() != k.value.size()) {
                     invalid("tabulated kernel needs matching non-empty r and value columns");
                   }
                   for (std::size_t i = 0; i < k.r.size(); ++i) {
                     if (!std::isfinite(k.r[i]) || !std::isfinite(k.value[i])) {
                       invalid("tabulated kernel row " + std::to_string(i) + " is not finite");
                     }
                     if (k.r[i] < 0.0) invalid("tabulated kernel has negative distance");
                     if (i > 0 && !(k.r[i] > k.r[i - 1])) {
                       invalid("tabulated kernel distances must be strictly increasing (row " +
                               std::to_string(i) + ")");
                     }
                   }
                 },
             },
             v);
}

double interpolate(const TabulatedKernel& k, double r) {
  if (r <= k.r.front()) return k.value.front();
  if (r >= k.r.back()) return k.value.back();
  const auto it = std::upper_bound(k.r.begin(), k.r.end(), r);
  const std::size_t i = static_cast<std::size_t>(it - k.r.begin());
  const double t = (r - k.r[i - 1]) / (k.r[i] - k.r[i - 1]);
  return k.value[i - 1] + t * (k.value[i] - k.value[i - 1]);
}

}  // namespace

Kernel::Kernel(Variant v) : v_(std::move(v)) { check_structure(v_); }

Kernel Kernel::constant(double value) { return Kernel(ConstantKernel{value}); }

Kernel Kernel::matrix(std::size_t n, std::vector<double> entries, double base) {
  return Kernel(PerturbedMatrixKernel{n, std::move(entries), base});
}

Kernel Kernel::perturbed(std::size_t n, double base, double epsilon, std::uint64_t seed) {
  if (!(epsilon >= 0.0)) invalid("perturbation size must be non-negative");
  std::vector<double> m(n * n, base);
  const CounterRng rng(seed, 0x6b65726e656cULL);
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t b = a + 1; b < n; ++b) {
      const double w = base + epsilon * rng.uniform(a * n + b);
      m[a * n + b] = w;
      m[b * n + a] = w;
    }
  }
  if (n >= 2) {
    m[1] = base + epsilon;
    m[n] = base + epsilon;
  }
  return matrix(n, std::move(m), base);
}

Kernel Kernel::algebraic(double phi0, double beta) { return Kernel(AlgebraicKernel{phi0, beta}); }

Kernel Kernel::cutoff(double phi0, double radius) { return Kernel(CutoffKernel{phi0, radius}); }

Kernel Kernel::tabulated(std::vector<double> r, std::vector<double> value) {
  return Kernel(TabulatedKernel{std::move(r), std::move(value)});
}

bool Kernel::distance_dependent() const {
  return !std::holds_alternative<ConstantKernel>(v_) &&
         !std::holds_alternative<PerturbedMatrixKernel>(v_);
}

bool Kernel::has_profile() const { return !std::holds_alternative<PerturbedMatrixKernel>(v_); }

double Kernel::profile(double r) const {
  if (!(r >= 0.0)) {
    throw Error(ErrorKind::Domain, "kernel distance must be non-negative, got " + num(r));
  }
  return std::visit(
      Overloaded{
          [](const ConstantKernel& k) { return k.value; },
          [](const PerturbedMatrixKernel&) -> double {
            throw Error(ErrorKind::Usage, "a kernel matrix has no distance profile");
          },
          [r](const AlgebraicKernel& k) { return k.phi0 * std::pow(1.0 + r * r, -k.beta); },
          [r](const CutoffKernel& k) { return k.phi0 * std::max(0.0, 1.0 - r / k.radius); },
          [r](const TabulatedKernel& k) { return interpolate(k, r); },
      },
      v_);
}

double Kernel::weight(std::size_t a, std::size_t b, double r) const {
  if (!(r >= 0.0)) {
    throw Error(ErrorKind::Domain, "kernel distance must be non-negative, got " + num(r));
  }
  if (const auto* m = std::get_if<PerturbedMatrixKernel>(&v_)) {
    if (a >= m->n || b >= m->n) {
      throw Error(ErrorKind::Usage, "kernel matrix index (" + std::to_string(a) + "," +
                                        std::to_string(b) + ") out of range for n=" +
                                        std::to_string(m->n));
    }
    return m->entries[a * m->n + b];
  }
  return profile(r);
}

std::string Kernel::describe() const {
  return std::visit(
      Overloaded{
          [](const ConstantKernel& k) { return "constant(" + num(k.value) + ")"; },
          [](const PerturbedMatrixKernel& k) {
            return "matrix(n=" + std::to_string(k.n) + ", base=" + num(k.base) + ")";
          },
          [](const AlgebraicKernel& k) {
            return "algebraic(phi0=" + num(k.phi0) + ", beta=" + num(k.beta) + ")";
          },
          [](const CutoffKernel& k) {
            return "cutoff(phi0=" + num(k.phi0) + ", radius=" + num(k.radius) + ")";
          },
          [](const TabulatedKernel& k) {
            return "tabulated(" + std::to_string(k.r.size()) + " rows)";
          },
      },
      v_);
}

void pair_weights(const Kernel& k, std::span<const double> x, std::size_t n, std::size_t dim,
                  std::vector<double>& out) {
  out.resize(n * n);
  if (const auto* m = std::get_if<PerturbedMatrixKernel>(&k.variant())) {
    if (m->n != n) {
      throw Error(ErrorKind::Usage, "kernel matrix is " + std::to_string(m->n) + "×" +
                                        std::to_string(m->n) + " but the ensemble has " +
                                        std::to_string(n) + " particles");
    }
    std::copy(m->entries.begin(), m->entries.end(), out.begin());
    return;
  }
  if (const auto* c = std::get_if<ConstantKernel>(&k.variant())) {
    std::fill(out.begin(), out.end(), c->value);
    return;
  }
  for (std::size_t a = 0; a < n; ++a) {
    out[a * n + a] = k.profile(0.0);
    for (std::size_t b = a + 1; b < n; ++b) {
      double r2 = 0.0;
      for (std::size_t d = 0; d < dim; ++d) {
        const double dx = x[a * dim + d] - x[b * dim + d];
        r2 += dx * dx;
      }
      const double w = k.profile(std::sqrt(r2));
      out[a * n + b] = w;
      out[b * n + a] = w;
    }
  }
}

KernelRange validate(const Kernel& k, const ValidateOptions& opts) {
  if (!(opts.grid_step > 0.0) || !(opts.domain_hint > 0.0)) {
    throw Error(ErrorKind::Usage, "validate: grid_step and domain_hint must be positive");
  }
  if (const auto* m = std::get_if<PerturbedMatrixKernel>(&k.variant())) {
    const auto [lo, hi] = std::minmax_element(m->entries.begin(), m->entries.end());
    return {*hi, *lo, *hi - *lo, 0.0};
  }
  if (const auto* c = std::get_if<ConstantKernel>(&k.variant())) {
    return {c->value, c->value, 0.0, 0.0};
  }
  const double span = 2.0 * opts.domain_hint;
  const auto steps = static_cast<std::size_t>(std::ceil(span / opts.grid_step));
  double prev = k.profile(0.0);
  double lipschitz = 0.0;
  double r_prev = 0.0;
  double min_seen = prev;
  if (!(prev > 0.0)) invalid("kernel is not positive at r=0: f(0)=" + num(prev));
  for (std::size_t i = 1; i <= steps; ++i) {
    const double r = std::min(span, static_cast<double>(i) * opts.grid_step);
    const double f = k.profile(r);
    if (!(f > 0.0)) {
      invalid("kernel is not positive at r=" + num(r) + ": f=" + num(f));
    }
    if ((f - prev) * (r - r_prev) > 0.0) {
      invalid("kernel is not non-increasing: f(" + num(r_prev) + ")=" + num(prev) + " < f(" +
              num(r) + ")=" + num(f));
    }
    lipschitz = std::max(lipschitz, std::abs(f - prev) / (r - r_prev));
    min_seen = std::min(min_seen, f);
    prev = f;
    r_prev = r;
  }
  if (!std::isfinite(lipschitz)) invalid("kernel has no finite sampled Lipschitz bound");
  double lo = min_seen;
  if (opts.domain_bound) {
    lo = k.profile(*opts.domain_bound);
    if (!(lo > 0.0)) {
      invalid("kernel is not positive at the domain bound r=" + num(*opts.domain_bound));
    }
  }
  const double hi = k.profile(0.0);
  return {hi, lo, hi - lo, lipschitz};
}

KernelStats kernel_stats(const Kernel& phi, const Kernel& zeta, const ValidateOptions& opts) {
  const auto p = validate(phi, opts);
  const auto z = validate(zeta, opts);
  return {p.max, p.min, z.max, z.min, p.spread};
}

Kernel parse_tabulated_kernel(std::istream& in) {
  std::vector<double> r;
  std::vector<double> f;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream row(line);
    double a = 0.0;
    double b = 0.0;
    if (!(row >> a >> b)) {
      // A single non-numeric header row is allowed.
      if (r.empty() && lineno == 1) continue;
      invalid("tabulated kernel: cannot parse line " + std::to_string(lineno));
    }
    std::string rest;
    if (row >> rest) {
      invalid("tabulated kernel: line " + std::to_string(lineno) + " has more than two columns");
    }
    r.push_back(a);
    f.push_back(b);
  }
  return Kernel::tabulated(std::move(r), std::move(f));
}

Kernel load_tabulated_kernel(const std::string& path) {
  std::ifstream in(path);
  if (!in) invalid("cannot open tabulated kernel file: " + path);
  return parse_tabulated_kernel(in);
}

}  // namespace flockd
