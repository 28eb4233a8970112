#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

namespace flockd {

struct ConstantKernel {
  double value;
};

// Distance-independent symmetric N×N matrix, row-major.
struct PerturbedMatrixKernel {
  std::size_t n;
  std::vector<double> entries;
  double base;
};

// φ0 (1 + r²)^(-β)
struct AlgebraicKernel {
  double phi0;
  double beta;
};

// φ0 max(0, 1 - r/R)
struct CutoffKernel {
  double phi0;
  double radius;
};

// Piecewise-linear through (r_i, f_i), held constant outside the table.
struct TabulatedKernel {
  std::vector<double> r;
  std::vector<double> value;
};

class Kernel {
 public:
  using Variant = std::variant<ConstantKernel, PerturbedMatrixKernel, AlgebraicKernel,
                               CutoffKernel, TabulatedKernel>;

  // Checks structural well-formedness; throws ErrorKind::Validation.
  explicit Kernel(Variant v);

  static Kernel constant(double value);
  static Kernel matrix(std::size_t n, std::vector<double> entries, double base);
  // Entries base + ε·u_ab with u_ab uniform, spread pinned to exactly ε.
  static Kernel perturbed(std::size_t n, double base, double epsilon, std::uint64_t seed);
  static Kernel algebraic(double phi0, double beta);
  static Kernel cutoff(double phi0, double radius);
  static Kernel tabulated(std::vector<double> r, std::vector<double> value);

  double weight(std::size_t a, std::size_t b, double r) const;

  bool distance_dependent() const;
  bool has_profile() const;
  // Mother-function value f(r); constants are a degenerate profile.
  double profile(double r) const;

  const Variant& variant() const { return v_; }
  std::string describe() const;

 private:
  Variant v_;
};

// Symmetric N×N weights for the given positions (row-major x, N·dim).
void pair_weights(const Kernel& k, std::span<const double> x, std::size_t n, std::size_t dim,
                  std::vector<double>& out);

struct ValidateOptions {
  double grid_step = 1e-2;
  double domain_hint = 50.0;  // profile sampled on [0, 2·domain_hint]
  std::optional<double> domain_bound;
};

struct KernelRange {
  double max;
  double min;
  double spread;
  double lipschitz;  // sampled estimate, 0 for distance-free kernels
};

// Throws ErrorKind::Validation naming a witness pair on failure.
KernelRange validate(const Kernel& k, const ValidateOptions& opts = {});

struct KernelStats {
  double phi_max;
  double phi_min;
  double zeta_max;
  double zeta_min;
  double epsilon;
};

KernelStats kernel_stats(const Kernel& phi, const Kernel& zeta, const ValidateOptions& opts = {});

Kernel parse_tabulated_kernel(std::istream& in);
Kernel load_tabulated_kernel(const std::string& path);

}  // namespace flockd
