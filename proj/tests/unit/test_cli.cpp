#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "flockd_cli/commands.hpp"

using namespace flockd;
using namespace flockd::cli;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("flockd_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

Result invoke(std::vector<std::string> args) {
  args.insert(args.begin(), "flockd");
  std::vector<char*> argv;
  for (auto& a : args) argv.push_back(a.data());
  std::ostringstream out, err;
  const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

Result run_with(const std::string& sub, const fs::path& dir, const std::string& config,
                std::vector<std::string> extra = {}) {
  const fs::path cfg = dir / "config.json";
  std::ofstream(cfg) << config;
  std::vector<std::string> args{sub, "--config", cfg.string(), "--out", (dir / "out").string(),
                                "--quiet"};
  args.insert(args.end(), extra.begin(), extra.end());
  return invoke(args);
}

json read_json(const fs::path& p) {
  std::ifstream in(p);
  return json::parse(in);
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

std::string first_line(const fs::path& p) {
  std::ifstream in(p);
  std::string line;
  std::getline(in, line);
  return line;
}

json last_error(const std::string& err) {
  const auto nl = err.rfind('\n', err.size() - 2);
  return json::parse(err.substr(nl == std::string::npos ? 0 : nl + 1))["error"];
}

const char* kRegime1 = R"(// regime-1 classical
{"model": "classical_tcs", "chi": 1, "c": "inf", "N": 4, "dim": 3,
 "init": {"type": "random", "seed": 42, "box": 1.0, "velocity_scale": 0.5, "T_range": [1, 2]},
 "integrator": {"scheme": "rk4", "dt": 1e-2, "t_end": 10, "sample_stride": 10},
 "regime": 1})";

const char* kTwoParticles = R"({"model": "classical_tcs", "N": 2, "dim": 3,
 "init": {"type": "explicit", "x": [[0,0,0],[1,0,0]], "v": [[1,0,0],[5,0,0]], "T": [1, %T%]},
 "integrator": {"scheme": "rk4", "dt": 1e-2, "t_end": 10, "T_floor": 0.9},
 "normalize_frame": false})";

std::string two_particles(const std::string& t2) {
  std::string s = kTwoParticles;
  s.replace(s.find("%T%"), 3, t2);
  return s;
}

}  // namespace

TEST(Config, NegativeTemperatureNamesField) {
  const auto dir = scratch("negT");
  const Result r = run_with("run", dir, two_particles("-1"));
  EXPECT_EQ(r.code, kExitValidation);
  const json e = last_error(r.err);
  EXPECT_EQ(e["kind"], "validation");
  EXPECT_EQ(e["field"], "init.T[1]");
  EXPECT_FALSE(fs::exists(dir / "out" / "trajectory.csv"));
}

TEST(Config, LightSpeedModelConflicts) {
  const auto dir = scratch("conflict");
  Result r = run_with("run", dir, R"({"model": "rtcs_synge", "c": "inf"})");
  EXPECT_EQ(r.code, kExitValidation);
  EXPECT_EQ(last_error(r.err)["field"], "c");
  r = run_with("run", dir, R"({"model": "classical_tcs", "c": 100})");
  EXPECT_EQ(r.code, kExitValidation);
  EXPECT_EQ(last_error(r.err)["field"], "c");
}

TEST(Config, UnknownKeysAndBadValues) {
  const auto dir = scratch("unknown");
  Result r = run_with("run", dir, R"({"modle": "classical_tcs"})");
  EXPECT_EQ(r.code, kExitValidation);
  EXPECT_EQ(last_error(r.err)["field"], "modle");
  r = run_with("run", dir, R"({"integrator": {"dt": 1e-2, "stride": 3}})");
  EXPECT_EQ(last_error(r.err)["field"], "integrator.stride");
  r = run_with("run", dir, R"({"kernel_phi": {"type": "gaussian"}})");
  EXPECT_EQ(last_error(r.err)["field"], "kernel_phi.type");
  r = run_with("run", dir, R"({"chi": 7})");
  EXPECT_EQ(last_error(r.err)["field"], "chi");
  r = run_with("run", dir, "{not json");
  EXPECT_EQ(r.code, kExitValidation);
  EXPECT_EQ(last_error(r.err)["field"], "--config");
  r = invoke({"run", "--config", "/nonexistent/flockd.json"});
  EXPECT_EQ(r.code, kExitValidation);
  r = run_with("run", dir, kRegime1, {"--seed", "-4"});
  EXPECT_EQ(last_error(r.err)["field"], "--seed");
}

TEST(Config, UsageErrors) {
  EXPECT_EQ(invoke({}).code, kExitValidation);
  EXPECT_EQ(invoke({"launch"}).code, kExitValidation);
  const Result r = invoke({"run"});
  EXPECT_EQ(r.code, kExitValidation);
  EXPECT_EQ(last_error(r.err)["kind"], "usage");
}

TEST(Config, RoundTripsThroughJson) {
  const SimConfig a = parse_config(json::parse(R"({"model": "rtcs_synge", "chi": 3, "c": 50,
    "N": 5, "dim": 2, "regime": 2, "margin": 0.2,
    "kernel_phi": {"type": "perturbed", "base": 1.0, "epsilon": 0.01, "seed": 3}})"));
  const SimConfig b = parse_config(config_to_json(a));
  EXPECT_EQ(config_to_json(a), config_to_json(b));
  EXPECT_EQ(b.model, Model::RTCSSynge);
  EXPECT_EQ(b.chi, 3);
  EXPECT_EQ(b.c, 50.0);
  EXPECT_EQ(*b.regime, 2);
  EXPECT_EQ(config_to_json(parse_config(json::object()))["c"], "inf");
}

TEST(Run, WritesArtifactsWithSchemas) {
  const auto dir = scratch("run");
  const Result r = run_with("run", dir, kRegime1);
  ASSERT_EQ(r.code, kExitOk) << r.err;
  const fs::path out = dir / "out";
  EXPECT_EQ(first_line(out / "trajectory.csv").rfind("# flockd-trajectory", 0), 0u);
  EXPECT_EQ(first_line(out / "diagnostics.csv").rfind("# flockd-diagnostics", 0), 0u);
  const json s = read_json(out / "summary.json");
  EXPECT_EQ(s["schema"], "flockd-summary v1");
  EXPECT_EQ(s["command"], "run");
  EXPECT_TRUE(s["integration"]["ok"].get<bool>());
  EXPECT_EQ(s["config"]["c"], "inf");
  EXPECT_FALSE(s["bounds"].is_null());
  // t=0 plus one row per 10 steps.
  std::ifstream traj(out / "trajectory.csv");
  int rows = 0;
  for (std::string line; std::getline(traj, line);) rows += !line.empty() && line[0] != '#';
  EXPECT_EQ(rows, 1 + 1 + 100);
}

TEST(Run, RepeatedRunsAreByteIdentical) {
  const auto a = scratch("repeat_a");
  const auto b = scratch("repeat_b");
  ASSERT_EQ(run_with("run", a, kRegime1).code, kExitOk);
  ASSERT_EQ(run_with("run", b, kRegime1).code, kExitOk);
  for (const char* f : {"trajectory.csv", "diagnostics.csv"}) {
    EXPECT_EQ(slurp(a / "out" / f), slurp(b / "out" / f)) << f;
  }
  const auto c = scratch("repeat_c");
  ASSERT_EQ(run_with("run", c, kRegime1, {"--seed", "43"}).code, kExitOk);
  EXPECT_NE(slurp(a / "out" / "trajectory.csv"), slurp(c / "out" / "trajectory.csv"));
}

TEST(Run, StiffRunExitsWithErrorTime) {
  const auto dir = scratch("stiff");
  const Result r = run_with("run", dir, two_particles("1"));
  EXPECT_EQ(r.code, kExitIntegration);
  const json e = last_error(r.err);
  EXPECT_EQ(e["kind"], "stiffness");
  ASSERT_TRUE(e["t"].is_number());
  EXPECT_GT(e["t"].get<double>(), 0.0);
  EXPECT_LT(e["t"].get<double>(), 10.0);
  const json s = read_json(dir / "out" / "summary.json");
  EXPECT_FALSE(s["integration"]["ok"].get<bool>());
}

TEST(Bounds, PrintsReportWithoutIntegrating) {
  const auto dir = scratch("bounds");
  const Result r = run_with("bounds", dir, kRegime1);
  ASSERT_EQ(r.code, kExitOk) << r.err;
  const json j = json::parse(r.out);
  EXPECT_EQ(j["schema"], "flockd-bounds v1");
  EXPECT_TRUE(j["applicable"].get<bool>());
  EXPECT_FALSE(fs::exists(dir / "out" / "trajectory.csv"));
  const std::string no_regime = R"({"N": 3})";
  EXPECT_EQ(run_with("bounds", dir, no_regime).code, kExitValidation);
}

TEST(Verify, RegimeOnePasses) {
  const auto dir = scratch("verify");
  const Result r = run_with("verify", dir, kRegime1);
  EXPECT_EQ(r.code, kExitOk) << r.err;
  const json l = read_json(dir / "out" / "ledger.json");
  EXPECT_EQ(l["schema"], "flockd-ledger v1");
  EXPECT_TRUE(l["pass"].get<bool>());
  for (const auto& e : l["entries"]) EXPECT_NE(e["status"], "fail") << e.dump();
}

TEST(Verify, CorruptedReplayFails) {
  const auto dir = scratch("corrupt");
  json cfg = json::parse(kRegime1, nullptr, true, true);
  cfg["verify"] = {{"corrupt", {{"time", 1.0}, {"factor", 10.0}}}};
  const Result r = run_with("verify", dir, cfg.dump());
  EXPECT_EQ(r.code, kExitVerifyFailed) << r.err;
  const json l = read_json(dir / "out" / "ledger.json");
  EXPECT_FALSE(l["pass"].get<bool>());
}

TEST(Verify, InfeasibleRegimeThreeIsNotApplicable) {
  const auto dir = scratch("regime3");
  const char* cfg = R"({"model": "classical_tcs", "N": 4, "dim": 3,
   "kernel_phi": {"type": "algebraic", "phi0": 1.0, "beta": 1.0},
   "kernel_zeta": {"type": "algebraic", "phi0": 1.0, "beta": 1.0},
   "init": {"type": "random", "seed": 7, "box": 3.0, "velocity_scale": 0.002, "T_range": [1, 1.02]},
   "integrator": {"scheme": "rk4", "dt": 1e-2, "t_end": 2, "sample_stride": 10},
   "regime": 3})";
  const Result r = run_with("verify", dir, cfg);
  EXPECT_EQ(r.code, kExitOk) << r.err;
  const json l = read_json(dir / "out" / "ledger.json");
  EXPECT_FALSE(l["applicable"].get<bool>());
  int na = 0;
  for (const auto& e : l["entries"]) na += e["status"] == "not-applicable";
  EXPECT_GE(na, 3);
}

TEST(Sweep, EmptyListIsValidationError) {
  const auto dir = scratch("sweep_empty");
  EXPECT_EQ(run_with("sweep", dir, kRegime1, {"--sweep", "c="}).code, kExitValidation);
  EXPECT_EQ(run_with("sweep", dir, kRegime1, {"--sweep", "mass=1,2"}).code, kExitValidation);
}

TEST(Sweep, LightSpeedSlope) {
  const auto dir = scratch("sweep_c");
  const char* cfg = R"({"model": "rtcs_synge", "chi": 2, "c": 100, "N": 3, "dim": 2,
   "init": {"type": "random", "seed": 5, "box": 1.0, "velocity_scale": 0.5, "T_range": [1, 1.5]},
   "integrator": {"scheme": "rk4", "dt": 1e-2, "t_end": 1, "sample_stride": 10}})";
  const Result r = run_with("sweep", dir, cfg, {"--sweep", "c=100,200,400"});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  EXPECT_EQ(first_line(dir / "out" / "sweep.csv"), "# flockd-sweep v1");
  const json s = read_json(dir / "out" / "summary.json");
  EXPECT_EQ(s["schema"], "flockd-sweep-summary v1");
  EXPECT_EQ(s["rows"].size(), 3u);
  ASSERT_EQ(s["slopes"].size(), 1u);
  EXPECT_NEAR(s["slopes"][0]["slope"].get<double>(), -2.0, 0.2);
}

TEST(Sweep, ChiRowsReportDrift) {
  const auto dir = scratch("sweep_chi");
  const char* cfg = R"({"model": "rtcs_simplified", "c": 50, "N": 3, "dim": 3,
   "init": {"type": "random", "seed": 9},
   "integrator": {"scheme": "rk4", "dt": 1e-2, "t_end": 1}})";
  const Result r = run_with("sweep", dir, cfg, {"--sweep", "chi=1,2,3,4"});
  ASSERT_EQ(r.code, kExitOk) << r.err;
  const json s = read_json(dir / "out" / "summary.json");
  ASSERT_EQ(s["rows"].size(), 4u);
  for (const auto& row : s["rows"]) {
    ASSERT_TRUE(row.contains("invariants")) << row.dump();
    EXPECT_LT(row["invariants"]["momentum_drift"].get<double>(), 1e-7) << row.dump();
  }
}

TEST(Output, NumbersRoundTrip) {
  for (double x : {0.1, 1.0 / 3.0, 1e-300, 6.02214076e23, -2.5, 0.0}) {
    EXPECT_EQ(std::stod(format_number(x)), x) << format_number(x);
  }
  EXPECT_EQ(format_number(1.0), "1");
  EXPECT_EQ(format_number(INFINITY), "inf");
  EXPECT_EQ(format_number(-INFINITY), "-inf");
  EXPECT_EQ(format_number(NAN), "nan");
  EXPECT_EQ(json_number(INFINITY), "inf");
  EXPECT_EQ(json_number(0.5), 0.5);
}
