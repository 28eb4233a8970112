#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "flockd/dynamics.hpp"
#include "flockd/errors.hpp"
#include "flockd/kernels.hpp"

namespace flockd::cli {

using json = nlohmann::json;

// Validation error tied to a config field such as "init.T[2]".
class ConfigError : public Error {
 public:
  ConfigError(std::string field, const std::string& what)
      : Error(ErrorKind::Validation, field + ": " + what), field_(std::move(field)) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

struct InitSpec {
  bool random = true;
  std::uint64_t seed = 0;
  double box = 1.0;             // positions uniform in [-box, box]^dim
  double velocity_scale = 0.5;  // standard deviation of each component
  double T_min = 1.0;
  double T_max = 2.0;
  std::vector<double> x, v, T;  // explicit data, row-major
};

// Replay mode for verify: inflate ‖V‖ by `factor` at the first sample with t >= time.
struct CorruptSpec {
  double time = 0.0;
  double factor = 10.0;
};

struct SimConfig {
  Model model = Model::ClassicalTCS;
  int chi = 1;
  double c = kInfiniteLightSpeed;
  std::size_t n = 8;
  std::size_t dim = 3;
  json kernel_phi = {{"type", "constant"}, {"value", 1.0}};
  json kernel_zeta = {{"type", "constant"}, {"value", 1.0}};
  InitSpec init;
  bool normalize_frame = true;
  IntegratorConfig integrator;
  std::optional<int> regime;
  double margin = 0.1;
  std::optional<CorruptSpec> corrupt;
  std::string trajectory_file = "trajectory.csv";
  std::string diagnostics_file = "diagnostics.csv";
  std::filesystem::path base_dir;  // resolves relative kernel table paths
};

SimConfig parse_config(const json& j, const std::filesystem::path& base_dir = {});
SimConfig load_config(const std::filesystem::path& path);

// Resolved config as JSON; c is written as "inf" when infinite.
json config_to_json(const SimConfig& cfg);

Kernel make_kernel(const json& spec, const SimConfig& cfg, const std::string& field);

// Initial ensemble from the init block; frame-normalized when requested.
Ensemble make_initial(const SimConfig& cfg);

// Re-checks cross-field constraints after a sweep edits the config.
void check_config(const SimConfig& cfg);

}  // namespace flockd::cli
