#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "flockd/analysis.hpp"
#include "flockd_cli/config.hpp"
#include "flockd_cli/output.hpp"

namespace flockd::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitVerifyFailed = 1;
inline constexpr int kExitValidation = 2;
inline constexpr int kExitIntegration = 3;

struct CliOptions {
  std::filesystem::path config;
  std::filesystem::path out = "out";
  std::optional<std::uint64_t> seed;
  bool quiet = false;
  std::vector<std::string> sweep;  // "param=v1,v2,..."
};

// Kernels, initial data and (when a regime is set) the theorem constants.
struct Prepared {
  SimConfig cfg;
  Kernel phi;
  Kernel zeta;
  Ensemble initial;
  std::optional<BoundsReport> report;
};

Prepared prepare(const SimConfig& cfg, const std::optional<Ensemble>& initial = std::nullopt);

struct SimulationOutput {
  IntegrationResult result;
  InvariantSummary invariants;
  AsymptoticLimits limits;
  std::vector<EnvelopeSample> samples;
  Ensemble final_state;
  FlockingMetrics final_metrics;
  std::optional<DecayFit> fit;
  std::string fit_note;
};

// Integrates and, when out_dir is set, writes the trajectory and diagnostics CSVs.
SimulationOutput simulate(const Prepared& p, const std::filesystem::path* out_dir);

struct LedgerEntry {
  std::string name;
  std::string status;  // pass, fail or not-applicable
  ojson detail;
};

// Envelope checks plus the invariant battery for a finished run.
std::vector<LedgerEntry> verify_ledger(const Prepared& p, const SimulationOutput& sim);

int cmd_run(const CliOptions& opts, std::ostream& out, std::ostream& err);
int cmd_bounds(const CliOptions& opts, std::ostream& out, std::ostream& err);
int cmd_verify(const CliOptions& opts, std::ostream& out, std::ostream& err);
int cmd_sweep(const CliOptions& opts, std::ostream& out, std::ostream& err);

int run_cli(int argc, char** argv, std::ostream& out, std::ostream& err);

}  // namespace flockd::cli
