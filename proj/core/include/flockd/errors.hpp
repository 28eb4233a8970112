#pragma once

#include <stdexcept>
#include <string>

namespace flockd {

enum class ErrorKind {
  Domain,
  Convergence,
  Usage,
  ClosureSingularity,
  Kinematics,
  State,
  DegenerateClosure,
  Validation,
  Normalization,
  Solver,
  Stiffness,
};

constexpr const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Domain: return "domain";
    case ErrorKind::Convergence: return "convergence";
    case ErrorKind::Usage: return "usage";
    case ErrorKind::ClosureSingularity: return "closure-singularity";
    case ErrorKind::Kinematics: return "kinematics";
    case ErrorKind::State: return "state";
    case ErrorKind::DegenerateClosure: return "degenerate-closure";
    case ErrorKind::Validation: return "validation";
    case ErrorKind::Normalization: return "normalization";
    case ErrorKind::Solver: return "solver";
    case ErrorKind::Stiffness: return "stiffness";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace flockd
