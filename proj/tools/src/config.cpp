#include "flockd_cli/config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "flockd/random.hpp"

namespace flockd::cli {
namespace {

void allow_keys(const json& j, const std::string& field, std::initializer_list<const char*> keys) {
  const std::set<std::string> ok(keys.begin(), keys.end());
  for (const auto& [k, _] : j.items()) {
    if (!ok.count(k)) throw ConfigError(field.empty() ? k : field + "." + k, "unknown key");
  }
}

std::string join(const std::string& field, const std::string& key) {
  return field.empty() ? key : field + "." + key;
}

const json& object(const json& j, const std::string& field) {
  if (!j.is_object()) throw ConfigError(field, "must be an object");
  return j;
}

double number(const json& j, const std::string& field) {
  if (!j.is_number()) throw ConfigError(field, "must be a number");
  const double x = j.get<double>();
  if (!std::isfinite(x)) throw ConfigError(field, "must be finite");
  return x;
}

double positive(const json& j, const std::string& field) {
  const double x = number(j, field);
  if (!(x > 0.0)) throw ConfigError(field, "must be positive");
  return x;
}

std::int64_t integer(const json& j, const std::string& field) {
  if (!j.is_number_integer()) throw ConfigError(field, "must be an integer");
  return j.get<std::int64_t>();
}

std::uint64_t seed_value(const json& j, const std::string& field) {
  if (j.is_number_unsigned()) return j.get<std::uint64_t>();
  const auto s = integer(j, field);
  if (s < 0) throw ConfigError(field, "must be non-negative");
  return static_cast<std::uint64_t>(s);
}

// Accepts [[..],[..]] with `cols` entries per row, or a flat array.
std::vector<double> matrix_values(const json& j, std::size_t rows, std::size_t cols,
                                  const std::string& field) {
  if (!j.is_array()) throw ConfigError(field, "must be an array");
  std::vector<double> out;
  if (!j.empty() && j.front().is_array()) {
    if (j.size() != rows) {
      throw ConfigError(field, "expected " + std::to_string(rows) + " rows, got " +
                                   std::to_string(j.size()));
    }
    for (std::size_t a = 0; a < j.size(); ++a) {
      const std::string f = field + "[" + std::to_string(a) + "]";
      if (!j[a].is_array() || j[a].size() != cols) {
        throw ConfigError(f, "expected " + std::to_string(cols) + " numbers");
      }
      for (std::size_t d = 0; d < cols; ++d) {
        out.push_back(number(j[a][d], f + "[" + std::to_string(d) + "]"));
      }
    }
  } else {
    if (j.size() != rows * cols) {
      throw ConfigError(field, "expected " + std::to_string(rows * cols) + " numbers, got " +
                                   std::to_string(j.size()));
    }
    for (std::size_t i = 0; i < j.size(); ++i) {
      out.push_back(number(j[i], field + "[" + std::to_string(i) + "]"));
    }
  }
  return out;
}

std::vector<double> vector_values(const json& j, const std::string& field) {
  if (!j.is_array()) throw ConfigError(field, "must be an array");
  std::vector<double> out;
  for (std::size_t i = 0; i < j.size(); ++i) {
    out.push_back(number(j[i], field + "[" + std::to_string(i) + "]"));
  }
  return out;
}

double parse_c(const json& j) {
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "inf" || s == "infinity") return kInfiniteLightSpeed;
    throw ConfigError("c", "must be a positive number or \"inf\"");
  }
  return positive(j, "c");
}

void check_kernel_spec(const json& spec, const std::string& field) {
  object(spec, field);
  if (!spec.contains("type") || !spec["type"].is_string()) {
    throw ConfigError(join(field, "type"), "must be a string");
  }
  const auto type = spec["type"].get<std::string>();
  if (type == "constant") {
    allow_keys(spec, field, {"type", "value"});
  } else if (type == "perturbed") {
    allow_keys(spec, field, {"type", "base", "epsilon", "seed"});
  } else if (type == "matrix") {
    allow_keys(spec, field, {"type", "entries", "base"});
  } else if (type == "algebraic") {
    allow_keys(spec, field, {"type", "phi0", "beta"});
  } else if (type == "cutoff") {
    allow_keys(spec, field, {"type", "phi0", "radius"});
  } else if (type == "tabulated") {
    allow_keys(spec, field, {"type", "r", "value", "file"});
  } else {
    throw ConfigError(join(field, "type"), "unknown kernel type \"" + type + "\"");
  }
}

const json& require(const json& spec, const char* key, const std::string& field) {
  if (!spec.contains(key)) throw ConfigError(join(field, key), "is required");
  return spec[key];
}

}  // namespace

Kernel make_kernel(const json& spec, const SimConfig& cfg, const std::string& field) {
  check_kernel_spec(spec, field);
  const auto type = spec["type"].get<std::string>();
  try {
    Kernel k = [&] {
      if (type == "constant") {
        return Kernel::constant(positive(require(spec, "value", field), join(field, "value")));
      }
      if (type == "perturbed") {
        const double base = positive(require(spec, "base", field), join(field, "base"));
        const double eps = number(require(spec, "epsilon", field), join(field, "epsilon"));
        if (eps < 0.0) throw ConfigError(join(field, "epsilon"), "must be non-negative");
        const std::uint64_t seed =
            spec.contains("seed") ? seed_value(spec["seed"], join(field, "seed")) : cfg.init.seed;
        return Kernel::perturbed(cfg.n, base, eps, seed);
      }
      if (type == "matrix") {
        auto m = matrix_values(require(spec, "entries", field), cfg.n, cfg.n,
                               join(field, "entries"));
        double base = m.empty() ? 1.0 : *std::min_element(m.begin(), m.end());
        if (spec.contains("base")) base = positive(spec["base"], join(field, "base"));
        return Kernel::matrix(cfg.n, std::move(m), base);
      }
      if (type == "algebraic") {
        return Kernel::algebraic(positive(require(spec, "phi0", field), join(field, "phi0")),
                                 positive(require(spec, "beta", field), join(field, "beta")));
      }
      if (type == "cutoff") {
        return Kernel::cutoff(positive(require(spec, "phi0", field), join(field, "phi0")),
                              positive(require(spec, "radius", field), join(field, "radius")));
      }
      if (spec.contains("file")) {
        if (!spec["file"].is_string()) throw ConfigError(join(field, "file"), "must be a string");
        std::filesystem::path p = spec["file"].get<std::string>();
        if (p.is_relative()) p = cfg.base_dir / p;
        return load_tabulated_kernel(p.string());
      }
      return Kernel::tabulated(vector_values(require(spec, "r", field), join(field, "r")),
                               vector_values(require(spec, "value", field), join(field, "value")));
    }();
    validate(k);
    return k;
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(field, e.what());
  }
}

void check_config(const SimConfig& cfg) {
  if (cfg.chi < 1 || cfg.chi > 4) throw ConfigError("chi", "must be 1, 2, 3 or 4");
  if (cfg.dim != 2 && cfg.dim != 3) throw ConfigError("dim", "must be 2 or 3");
  if (cfg.n < 1) throw ConfigError("N", "must be at least 1");
  const bool inf = std::isinf(cfg.c);
  if (inf && is_relativistic(cfg.model)) {
    throw ConfigError("c", "\"inf\" selects the classical model but model is " +
                               std::string(to_string(cfg.model)));
  }
  if (!inf && !is_relativistic(cfg.model)) {
    throw ConfigError("c", "finite light speed conflicts with model classical_tcs");
  }
  if (cfg.init.random) {
    if (!(cfg.init.T_min > 0.0) || cfg.init.T_max < cfg.init.T_min) {
      throw ConfigError("init.T_range", "needs 0 < T_min <= T_max");
    }
  } else {
    if (cfg.init.T.size() != cfg.n) throw ConfigError("init.T", "length must equal N");
    if (cfg.init.x.size() != cfg.n * cfg.dim) throw ConfigError("init.x", "shape must be N x dim");
    if (cfg.init.v.size() != cfg.n * cfg.dim) throw ConfigError("init.v", "shape must be N x dim");
    for (std::size_t a = 0; a < cfg.n; ++a) {
      if (!(cfg.init.T[a] > 0.0)) {
        throw ConfigError("init.T[" + std::to_string(a) + "]", "temperature must be positive");
      }
      double s2 = 0.0;
      for (std::size_t d = 0; d < cfg.dim; ++d) s2 += cfg.init.v[a * cfg.dim + d] * cfg.init.v[a * cfg.dim + d];
      if (!inf && !(std::sqrt(s2) < cfg.c)) {
        throw ConfigError("init.v[" + std::to_string(a) + "]", "speed must be below c");
      }
    }
  }
  try {
    flockd::check_config(cfg.integrator);
  } catch (const Error& e) {
    throw ConfigError("integrator", e.what());
  }
  if (cfg.regime && (*cfg.regime < 1 || *cfg.regime > 3)) {
    throw ConfigError("regime", "must be 1, 2 or 3");
  }
  if (!(cfg.margin > 0.0)) throw ConfigError("margin", "must be positive");
  make_kernel(cfg.kernel_phi, cfg, "kernel_phi");
  make_kernel(cfg.kernel_zeta, cfg, "kernel_zeta");
}

SimConfig parse_config(const json& j, const std::filesystem::path& base_dir) {
  object(j, "config");
  allow_keys(j, "", {"model", "chi", "c", "N", "dim", "kernel_phi", "kernel_zeta", "init",
                     "normalize_frame", "integrator", "regime", "margin", "verify", "output"});
  SimConfig cfg;
  cfg.base_dir = base_dir;
  if (j.contains("c")) cfg.c = parse_c(j["c"]);
  if (j.contains("model")) {
    if (!j["model"].is_string()) throw ConfigError("model", "must be a string");
    try {
      cfg.model = model_from_string(j["model"].get<std::string>());
    } catch (const Error& e) {
      throw ConfigError("model", e.what());
    }
  } else {
    cfg.model = std::isinf(cfg.c) ? Model::ClassicalTCS : Model::RTCSSynge;
  }
  if (j.contains("chi")) cfg.chi = static_cast<int>(integer(j["chi"], "chi"));
  if (cfg.chi < 1 || cfg.chi > 4) throw ConfigError("chi", "must be 1, 2, 3 or 4");
  if (j.contains("dim")) {
    const auto d = integer(j["dim"], "dim");
    if (d != 2 && d != 3) throw ConfigError("dim", "must be 2 or 3");
    cfg.dim = static_cast<std::size_t>(d);
  }
  std::optional<std::size_t> n;
  if (j.contains("N")) {
    const auto v = integer(j["N"], "N");
    if (v < 1) throw ConfigError("N", "must be at least 1");
    n = static_cast<std::size_t>(v);
  }

  if (j.contains("init")) {
    const auto& in = object(j["init"], "init");
    const std::string type = in.contains("type") && in["type"].is_string()
                                 ? in["type"].get<std::string>()
                                 : std::string("random");
    if (type == "random") {
      allow_keys(in, "init", {"type", "seed", "box", "velocity_scale", "T_range"});
      if (in.contains("seed")) cfg.init.seed = seed_value(in["seed"], "init.seed");
      if (in.contains("box")) cfg.init.box = positive(in["box"], "init.box");
      if (in.contains("velocity_scale")) {
        cfg.init.velocity_scale = number(in["velocity_scale"], "init.velocity_scale");
        if (cfg.init.velocity_scale < 0.0) {
          throw ConfigError("init.velocity_scale", "must be non-negative");
        }
      }
      if (in.contains("T_range")) {
        const auto r = vector_values(in["T_range"], "init.T_range");
        if (r.size() != 2) throw ConfigError("init.T_range", "must be [T_min, T_max]");
        cfg.init.T_min = r[0];
        cfg.init.T_max = r[1];
      }
    } else if (type == "explicit") {
      allow_keys(in, "init", {"type", "x", "v", "T"});
      cfg.init.random = false;
      cfg.init.T = vector_values(require(in, "T", "init"), "init.T");
      if (n && *n != cfg.init.T.size()) throw ConfigError("init.T", "length must equal N");
      n = cfg.init.T.size();
      if (*n == 0) throw ConfigError("init.T", "must not be empty");
      cfg.init.x = matrix_values(require(in, "x", "init"), *n, cfg.dim, "init.x");
      cfg.init.v = matrix_values(require(in, "v", "init"), *n, cfg.dim, "init.v");
    } else {
      throw ConfigError("init.type", "must be \"random\" or \"explicit\"");
    }
  }
  if (n) cfg.n = *n;

  if (j.contains("kernel_phi")) cfg.kernel_phi = j["kernel_phi"];
  if (j.contains("kernel_zeta")) cfg.kernel_zeta = j["kernel_zeta"];
  check_kernel_spec(cfg.kernel_phi, "kernel_phi");
  check_kernel_spec(cfg.kernel_zeta, "kernel_zeta");

  if (j.contains("normalize_frame")) {
    if (!j["normalize_frame"].is_boolean()) throw ConfigError("normalize_frame", "must be a boolean");
    cfg.normalize_frame = j["normalize_frame"].get<bool>();
  }
  if (j.contains("integrator")) {
    const auto& ig = object(j["integrator"], "integrator");
    allow_keys(ig, "integrator", {"scheme", "dt", "t_end", "rtol", "atol", "dt_min", "dt_max",
                                  "sample_stride", "T_floor"});
    auto& c = cfg.integrator;
    if (ig.contains("scheme")) {
      if (!ig["scheme"].is_string()) throw ConfigError("integrator.scheme", "must be a string");
      try {
        c.scheme = scheme_from_string(ig["scheme"].get<std::string>());
      } catch (const Error& e) {
        throw ConfigError("integrator.scheme", e.what());
      }
    }
    if (ig.contains("dt")) c.dt = positive(ig["dt"], "integrator.dt");
    if (ig.contains("t_end")) c.t_end = positive(ig["t_end"], "integrator.t_end");
    if (ig.contains("rtol")) c.rtol = positive(ig["rtol"], "integrator.rtol");
    if (ig.contains("atol")) c.atol = positive(ig["atol"], "integrator.atol");
    if (ig.contains("dt_min")) c.dt_min = positive(ig["dt_min"], "integrator.dt_min");
    if (ig.contains("dt_max")) c.dt_max = positive(ig["dt_max"], "integrator.dt_max");
    if (ig.contains("T_floor")) c.T_floor = positive(ig["T_floor"], "integrator.T_floor");
    if (ig.contains("sample_stride")) {
      const auto s = integer(ig["sample_stride"], "integrator.sample_stride");
      if (s < 1) throw ConfigError("integrator.sample_stride", "must be at least 1");
      c.sample_stride = static_cast<std::size_t>(s);
    }
  }
  if (j.contains("regime") && !j["regime"].is_null()) {
    cfg.regime = static_cast<int>(integer(j["regime"], "regime"));
  }
  if (j.contains("margin")) cfg.margin = positive(j["margin"], "margin");
  if (j.contains("verify")) {
    const auto& vf = object(j["verify"], "verify");
    allow_keys(vf, "verify", {"corrupt"});
    if (vf.contains("corrupt") && !vf["corrupt"].is_null()) {
      const auto& co = object(vf["corrupt"], "verify.corrupt");
      allow_keys(co, "verify.corrupt", {"time", "factor"});
      CorruptSpec s;
      if (co.contains("time")) s.time = number(co["time"], "verify.corrupt.time");
      if (co.contains("factor")) s.factor = positive(co["factor"], "verify.corrupt.factor");
      cfg.corrupt = s;
    }
  }
  if (j.contains("output")) {
    const auto& out = object(j["output"], "output");
    allow_keys(out, "output", {"trajectory", "diagnostics"});
    auto name = [&](const char* key, std::string& dst) {
      if (!out.contains(key)) return;
      const std::string f = std::string("output.") + key;
      if (!out[key].is_string()) throw ConfigError(f, "must be a string");
      dst = out[key].get<std::string>();
      if (dst.empty() || dst.find('/') != std::string::npos) {
        throw ConfigError(f, "must be a plain file name");
      }
    };
    name("trajectory", cfg.trajectory_file);
    name("diagnostics", cfg.diagnostics_file);
  }
  check_config(cfg);
  return cfg;
}

SimConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("--config", "cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  json j;
  try {
    j = json::parse(ss.str(), nullptr, true, true);
  } catch (const json::parse_error& e) {
    throw ConfigError("--config", std::string("parse error: ") + e.what());
  }
  return parse_config(j, path.parent_path());
}

json config_to_json(const SimConfig& cfg) {
  json j = json::object();
  j["model"] = to_string(cfg.model);
  j["chi"] = cfg.chi;
  if (std::isinf(cfg.c)) {
    j["c"] = "inf";
  } else {
    j["c"] = cfg.c;
  }
  j["N"] = cfg.n;
  j["dim"] = cfg.dim;
  j["kernel_phi"] = cfg.kernel_phi;
  j["kernel_zeta"] = cfg.kernel_zeta;
  if (cfg.init.random) {
    j["init"] = {{"type", "random"},
                 {"seed", cfg.init.seed},
                 {"box", cfg.init.box},
                 {"velocity_scale", cfg.init.velocity_scale},
                 {"T_range", {cfg.init.T_min, cfg.init.T_max}}};
  } else {
    j["init"] = {{"type", "explicit"}, {"x", cfg.init.x}, {"v", cfg.init.v}, {"T", cfg.init.T}};
  }
  j["normalize_frame"] = cfg.normalize_frame;
  const auto& c = cfg.integrator;
  j["integrator"] = {{"scheme", to_string(c.scheme)}, {"dt", c.dt},         {"t_end", c.t_end},
                     {"rtol", c.rtol},                {"atol", c.atol},     {"dt_min", c.dt_min},
                     {"dt_max", c.dt_max},            {"T_floor", c.T_floor},
                     {"sample_stride", c.sample_stride}};
  j["regime"] = cfg.regime ? json(*cfg.regime) : json(nullptr);
  j["margin"] = cfg.margin;
  if (cfg.corrupt) {
    j["verify"] = {{"corrupt", {{"time", cfg.corrupt->time}, {"factor", cfg.corrupt->factor}}}};
  }
  j["output"] = {{"trajectory", cfg.trajectory_file}, {"diagnostics", cfg.diagnostics_file}};
  return j;
}

Ensemble make_initial(const SimConfig& cfg) {
  Ensemble e = make_ensemble(cfg.n, cfg.dim, cfg.model, cfg.chi, cfg.c);
  if (cfg.init.random) {
    const CounterRng xs(cfg.init.seed, 1);
    const CounterRng vs(cfg.init.seed, 2);
    const CounterRng ts(cfg.init.seed, 3);
    for (std::size_t i = 0; i < e.x.size(); ++i) e.x[i] = cfg.init.box * (2.0 * xs.uniform(i) - 1.0);
    for (std::size_t i = 0; i < e.v.size(); ++i) e.v[i] = cfg.init.velocity_scale * vs.normal(i);
    for (std::size_t a = 0; a < e.n; ++a) {
      e.T[a] = cfg.init.T_min + (cfg.init.T_max - cfg.init.T_min) * ts.uniform(a);
    }
    if (!std::isinf(cfg.c)) {
      for (std::size_t a = 0; a < e.n; ++a) {
        if (!(e.speed2(a) < cfg.c * cfg.c)) {
          throw ConfigError("init.velocity_scale", "random speed of particle " + std::to_string(a) +
                                                       " reaches c");
        }
      }
    }
  } else {
    e.x = cfg.init.x;
    e.v = cfg.init.v;
    e.T = cfg.init.T;
  }
  e.check();
  if (!cfg.normalize_frame) return e;
  try {
    return normalize_frame(e);
  } catch (const Error& err) {
    throw ConfigError("normalize_frame", err.what());
  }
}

}  // namespace flockd::cli
