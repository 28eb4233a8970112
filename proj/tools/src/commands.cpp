#include "flockd_cli/commands.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <iostream>
#include <map>
#include <sstream>

namespace flockd::cli {
namespace {

constexpr double kClassicalDrift = 1e-8;
constexpr double kRelativisticDrift = 1e-7;
constexpr double kEntropyStep = -1e-10;
constexpr double kDecaySlack = 0.05;
constexpr double kSpreadKappa = 0.01;
constexpr double kFitFloor = 1e-10;  // decay fit stops once ‖V‖ falls below this fraction of ‖V(0)‖

void emit_error(std::ostream& err, const ojson& body) { err << ojson{{"error", body}}.dump() << '\n'; }

ojson error_body(const Error& e) {
  ojson b = {{"kind", to_string(e.kind())}, {"message", e.what()}};
  if (const auto* ce = dynamic_cast<const ConfigError*>(&e)) b["field"] = ce->field();
  return b;
}

SimConfig load(const CliOptions& opts) {
  SimConfig cfg = load_config(opts.config);
  if (opts.seed) {
    cfg.init.seed = *opts.seed;
    check_config(cfg);
  }
  return cfg;
}

std::vector<std::string> trajectory_columns(const Ensemble& e) {
  std::vector<std::string> cols{"t"};
  for (std::size_t a = 0; a < e.n; ++a) {
    const std::string p = std::to_string(a);
    for (std::size_t d = 0; d < e.dim; ++d) cols.push_back("x" + p + "_" + std::to_string(d));
    for (std::size_t d = 0; d < e.dim; ++d) cols.push_back("v" + p + "_" + std::to_string(d));
    cols.push_back("T" + p);
  }
  return cols;
}

std::vector<std::string> diagnostics_columns(const Ensemble& e) {
  const bool rel = is_relativistic(e.model);
  std::vector<std::string> cols{"t"};
  for (std::size_t d = 0; d < e.dim; ++d) cols.push_back("M_" + std::to_string(d));
  for (const char* c : {"E", "S", "S_rate", "D_x", "D_v", "D_T", "D_w"}) cols.emplace_back(c);
  cols.emplace_back(rel ? "norm_w" : "norm_v");
  for (const char* c : {"norm_that", "slack_position", "slack_velocity", "slack_lyapunov"}) {
    cols.emplace_back(c);
  }
  return cols;
}

ojson entry_json(const LedgerEntry& e) {
  ojson j = {{"name", e.name}, {"status", e.status}};
  for (const auto& [k, v] : e.detail.items()) j[k] = v;
  return j;
}

std::string status(bool applicable, bool pass) {
  return !applicable ? "not-applicable" : (pass ? "pass" : "fail");
}

void write_summary(const std::filesystem::path& dir, const std::string& command, const Prepared& p,
                   const SimulationOutput& sim, const ojson* ledger) {
  ojson j;
  j["schema"] = "flockd-summary v1";
  j["command"] = command;
  j["config"] = ojson::parse(config_to_json(p.cfg).dump());
  j["integration"] = to_json(sim.result);
  j["limits"] = {{"momentum", vector_json(sim.limits.momentum)},
                 {"T_inf", json_number(sim.limits.T_inf)}};
  j["invariants"] = to_json(sim.invariants);
  j["final"] = to_json(sim.final_metrics);
  j["decay_fit"] = sim.fit ? to_json(*sim.fit) : ojson(nullptr);
  if (!sim.fit_note.empty()) j["decay_fit_note"] = sim.fit_note;
  j["bounds"] = p.report ? to_json(*p.report) : ojson(nullptr);
  if (ledger) j["ledger"] = *ledger;
  write_json(dir / "summary.json", j);
}

int integration_failure(std::ostream& err, const IntegrationResult& r) {
  emit_error(err, {{"kind", to_string(r.error)}, {"message", r.message}, {"t", json_number(r.t)}});
  return kExitIntegration;
}

}  // namespace

Prepared prepare(const SimConfig& cfg, const std::optional<Ensemble>& initial) {
  Kernel phi = make_kernel(cfg.kernel_phi, cfg, "kernel_phi");
  Kernel zeta = make_kernel(cfg.kernel_zeta, cfg, "kernel_zeta");
  Ensemble ens = initial ? *initial : make_initial(cfg);
  ens.model = cfg.model;
  ens.c = cfg.c;
  ens.chi = cfg.chi;
  ens.check();
  Prepared p{cfg, std::move(phi), std::move(zeta), std::move(ens), std::nullopt};
  if (cfg.regime) {
    RegimeOptions ro;
    ro.margin = cfg.margin;
    p.report = regime_constants(p.initial, p.phi, p.zeta, *cfg.regime, ro);
  }
  return p;
}

SimulationOutput simulate(const Prepared& p, const std::filesystem::path* out_dir) {
  SimulationOutput out;
  out.limits = asymptotic_limits(p.initial);
  InvariantMonitor monitor(p.initial, p.phi, p.zeta);
  const bool rel = is_relativistic(p.cfg.model);
  std::optional<CsvWriter> traj;
  std::optional<CsvWriter> diag;
  if (out_dir) {
    traj.emplace(*out_dir / p.cfg.trajectory_file, "flockd-trajectory v1",
                 trajectory_columns(p.initial));
    diag.emplace(*out_dir / p.cfg.diagnostics_file, "flockd-diagnostics v1",
                 diagnostics_columns(p.initial));
  }
  const double T_inf = monitor.T_inf();
  const auto& rep = p.report;
  auto observer = [&](double t, const Ensemble& s) {
    monitor.observe(t, s);
    const auto m = flocking_metrics(s, T_inf);
    const EnvelopeSample es{t, m.norm_x, rel ? m.norm_w : m.norm_v, m.norm_that};
    out.samples.push_back(es);
    if (!out_dir) return;
    std::vector<double> row{t};
    for (std::size_t a = 0; a < s.n; ++a) {
      for (std::size_t d = 0; d < s.dim; ++d) row.push_back(s.x[a * s.dim + d]);
      for (std::size_t d = 0; d < s.dim; ++d) row.push_back(s.v[a * s.dim + d]);
      row.push_back(s.T[a]);
    }
    traj->row(row);

    const auto& cs = monitor.last();
    std::vector<std::string> cells{format_number(t)};
    for (double x : cs.momentum) cells.push_back(format_number(x));
    const double S = rel ? monitor.summary().entropy : cs.entropy;
    for (double x : {cs.energy, S, cs.entropy_rate, m.d_x, m.d_v, m.d_T, m.d_w, es.norm_v,
                     es.norm_that}) {
      cells.push_back(format_number(x));
    }
    if (rep) {
      const auto& s0 = out.samples.front();
      const double xs = rep->position_scaled ? std::sqrt(2.0) : 1.0;
      const double l0 = s0.norm_that * s0.norm_that + rep->A * s0.norm_v * s0.norm_v;
      const double l = es.norm_that * es.norm_that + rep->A * es.norm_v * es.norm_v;
      cells.push_back(format_number(rep->position_bound - xs * es.norm_x));
      cells.push_back(format_number(s0.norm_v * std::exp(-rep->velocity_rate * t) - es.norm_v));
      cells.push_back(format_number(l0 * std::exp(-rep->lambda * t) - l));
    } else {
      cells.insert(cells.end(), 3, "");
    }
    diag->row(cells);
  };
  Ensemble state = p.initial;
  out.result = integrate(state, p.phi, p.zeta, p.cfg.integrator, observer);
  out.invariants = monitor.summary();
  out.final_state = state;
  out.final_metrics = flocking_metrics(state, T_inf);

  std::vector<double> ts;
  std::vector<double> ys;
  const double y0 = out.samples.empty() ? 0.0 : out.samples.front().norm_v;
  for (const auto& s : out.samples) {
    if (!(s.norm_v > kFitFloor * y0)) break;
    ts.push_back(s.t);
    ys.push_back(s.norm_v);
  }
  if (!(y0 > 0.0)) {
    out.fit_note = "initial velocity norm is zero";
  } else if (ts.size() < 10) {
    out.fit_note = "fewer than 10 samples above the fit floor";
  } else {
    out.fit = fit_decay_rate(ts, ys, ts.front(), ts.back());
  }
  return out;
}

std::vector<LedgerEntry> verify_ledger(const Prepared& p, const SimulationOutput& sim) {
  std::vector<LedgerEntry> ledger;
  const bool rel = is_relativistic(p.cfg.model);
  const bool mechanical = p.cfg.model == Model::RelativisticCSMechanical;
  const auto& inv = sim.invariants;
  const double drift = rel ? kRelativisticDrift : kClassicalDrift;

  ledger.push_back({"integration", sim.result.ok ? "pass" : "fail", to_json(sim.result)});
  ledger.push_back({"energy_conservation", status(!mechanical, inv.energy_drift <= drift),
                    {{"value", json_number(inv.energy_drift)}, {"threshold", drift}}});
  ledger.push_back({"momentum_conservation", inv.momentum_drift <= drift ? "pass" : "fail",
                    {{"value", json_number(inv.momentum_drift)}, {"threshold", drift}}});
  ledger.push_back({"entropy_monotone", status(!mechanical, inv.entropy_min_step >= kEntropyStep),
                    {{"value", json_number(inv.entropy_min_step)}, {"threshold", kEntropyStep}}});
  ledger.push_back({"temperature_bounds", status(!mechanical, inv.bounds_hold),
                    {{"T_min", json_number(inv.T_min)},
                     {"T_max", json_number(inv.T_max)},
                     {"T_lower", json_number(inv.T_lower)},
                     {"T_upper", json_number(inv.T_upper)},
                     {"empirical_K", json_number(inv.empirical_K)}}});
  if (rel && !mechanical) {
    ledger.push_back({"temperature_spread", inv.spread_ratio <= 1.0 + kSpreadKappa ? "pass" : "fail",
                      {{"value", json_number(inv.spread_ratio)}, {"threshold", 1.0 + kSpreadKappa}}});
  }
  if (!p.report || sim.samples.empty()) return ledger;

  const auto& rep = *p.report;
  auto samples = sim.samples;
  ojson corrupted = nullptr;
  if (p.cfg.corrupt) {
    for (auto& s : samples) {
      if (s.t >= p.cfg.corrupt->time) {
        s.norm_v *= p.cfg.corrupt->factor;
        corrupted = {{"t", json_number(s.t)}, {"factor", p.cfg.corrupt->factor}};
        break;
      }
    }
  }
  const auto env = envelope_check(samples, rel, rep);
  for (const auto& r : env.checks) {
    auto j = to_json(r);
    const std::string st = j["status"];
    j.erase("name");
    j.erase("status");
    if (!corrupted.is_null()) j["corrupted_sample"] = corrupted;
    ledger.push_back({"envelope_" + r.name, st, j});
  }

  const bool fit_ok = sim.fit.has_value();
  const double fit_rate = fit_ok ? sim.fit->rate : 0.0;
  const double fit_threshold = rep.velocity_rate - kDecaySlack;
  ojson fit_detail = {{"value", fit_ok ? json_number(fit_rate) : ojson(nullptr)},
                      {"threshold", json_number(fit_threshold)}};
  if (!fit_ok) fit_detail["note"] = sim.fit_note;
  ledger.push_back(
      {"decay_rate", status(rep.applicable && fit_ok, fit_rate >= fit_threshold), fit_detail});

  if (rep.regime == 1) {
    const auto& s0 = sim.samples.front();
    const double D = 2.0 * p.cfg.chi + 1.0;
    const double l0 = s0.norm_that * s0.norm_that + rep.A * s0.norm_v * s0.norm_v;
    const double tol = std::sqrt(l0 * std::max(2.0 / D, 1.0 / rep.A)) *
                       std::exp(-0.5 * rep.lambda * sim.result.t);
    const auto& e = sim.final_state;
    double dev = 0.0;
    for (std::size_t a = 0; a < e.n; ++a) {
      const double m = momentum_factor(e, a);
      for (std::size_t d = 0; d < e.dim; ++d) {
        dev = std::max(dev, std::abs(m * e.v[a * e.dim + d] - sim.limits.momentum[d]));
      }
      dev = std::max(dev, std::abs(e.T[a] - sim.limits.T_inf));
    }
    ledger.push_back({"limit_consistency", status(rep.applicable && sim.result.ok, dev <= tol),
                      {{"value", json_number(dev)}, {"threshold", json_number(tol)}}});
  }
  return ledger;
}

int cmd_run(const CliOptions& opts, std::ostream& out, std::ostream& err) {
  const Prepared p = prepare(load(opts));
  std::filesystem::create_directories(opts.out);
  const auto sim = simulate(p, &opts.out);
  write_summary(opts.out, "run", p, sim, nullptr);
  if (!sim.result.ok) return integration_failure(err, sim.result);
  if (!opts.quiet) {
    out << "run ok: t=" << format_number(sim.result.t) << " steps=" << sim.result.steps
        << " energy_drift=" << format_number(sim.invariants.energy_drift)
        << " momentum_drift=" << format_number(sim.invariants.momentum_drift) << '\n';
  }
  return kExitOk;
}

int cmd_bounds(const CliOptions& opts, std::ostream& out, std::ostream&) {
  const SimConfig cfg = load(opts);
  if (!cfg.regime) throw ConfigError("regime", "bounds needs a regime (1, 2 or 3)");
  const Prepared p = prepare(cfg);
  ojson j;
  j["schema"] = "flockd-bounds v1";
  const ojson report = to_json(*p.report);
  for (const auto& [k, v] : report.items()) j[k] = v;
  out << j.dump(2) << '\n';
  return kExitOk;
}

int cmd_verify(const CliOptions& opts, std::ostream& out, std::ostream& err) {
  const SimConfig cfg = load(opts);
  if (!cfg.regime) throw ConfigError("regime", "verify needs a regime (1, 2 or 3)");
  const Prepared p = prepare(cfg);
  std::filesystem::create_directories(opts.out);
  const auto sim = simulate(p, &opts.out);
  const auto ledger = verify_ledger(p, sim);
  bool pass = true;
  ojson entries = ojson::array();
  for (const auto& e : ledger) {
    pass = pass && e.status != "fail";
    entries.push_back(entry_json(e));
  }
  ojson lj;
  lj["schema"] = "flockd-ledger v1";
  lj["pass"] = pass;
  lj["regime"] = *cfg.regime;
  lj["applicable"] = p.report->applicable;
  lj["entries"] = entries;
  write_json(opts.out / "ledger.json", lj);
  ojson brief = {{"pass", pass}, {"entries", ledger.size()}};
  write_summary(opts.out, "verify", p, sim, &brief);
  if (!sim.result.ok) return integration_failure(err, sim.result);
  if (!opts.quiet) {
    for (const auto& e : ledger) out << e.status << ' ' << e.name << '\n';
    out << (pass ? "verify: pass" : "verify: FAIL") << '\n';
  }
  return pass ? kExitOk : kExitVerifyFailed;
}

namespace {

struct SweepAxis {
  std::string param;
  std::vector<double> values;
};

SweepAxis parse_sweep(const std::string& spec) {
  const auto eq = spec.find('=');
  if (eq == std::string::npos) throw ConfigError("--sweep", "expected param=v1,v2,...");
  SweepAxis ax;
  ax.param = spec.substr(0, eq);
  static const std::vector<std::string> known{"c", "chi", "N", "epsilon", "dt"};
  if (std::find(known.begin(), known.end(), ax.param) == known.end()) {
    throw ConfigError("--sweep", "unknown parameter \"" + ax.param + "\"");
  }
  std::stringstream ss(spec.substr(eq + 1));
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    if (ax.param == "c" && (item == "inf" || item == "infinity")) {
      ax.values.push_back(kInfiniteLightSpeed);
      continue;
    }
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != item.size() || !std::isfinite(v)) {
      throw ConfigError("--sweep", "bad value \"" + item + "\" for " + ax.param);
    }
    if ((ax.param == "chi" || ax.param == "N") && v != std::floor(v)) {
      throw ConfigError("--sweep", ax.param + " values must be integers");
    }
    ax.values.push_back(v);
  }
  if (ax.values.empty()) throw ConfigError("--sweep", "empty value list for " + ax.param);
  return ax;
}

void apply(SimConfig& cfg, const std::string& param, double v) {
  if (param == "c") {
    if (!(v > 0.0)) throw ConfigError("--sweep", "c must be positive");
    cfg.c = v;
    if (std::isinf(v)) {
      cfg.model = Model::ClassicalTCS;
    } else if (!is_relativistic(cfg.model)) {
      cfg.model = Model::RTCSSynge;
    }
  } else if (param == "chi") {
    cfg.chi = static_cast<int>(v);
  } else if (param == "N") {
    if (!cfg.init.random) throw ConfigError("--sweep", "N sweeps need random initial data");
    if (v < 1) throw ConfigError("--sweep", "N must be at least 1");
    cfg.n = static_cast<std::size_t>(v);
  } else if (param == "epsilon") {
    bool any = false;
    for (json* k : {&cfg.kernel_phi, &cfg.kernel_zeta}) {
      if ((*k)["type"] == "perturbed") {
        (*k)["epsilon"] = v;
        any = true;
      }
    }
    if (!any) throw ConfigError("--sweep", "epsilon sweeps need a perturbed kernel");
  } else if (param == "dt") {
    cfg.integrator.dt = v;
  }
  check_config(cfg);
}

struct SweepRow {
  std::map<std::string, double> params;
  bool ok = false;
  std::string error;
  SimulationOutput sim;
  std::optional<double> deviation;
};

const std::vector<std::string> kParamColumns{"chi", "N", "c", "epsilon", "dt"};

std::map<std::string, double> row_params(const SimConfig& cfg) {
  std::map<std::string, double> m{{"chi", cfg.chi},
                                  {"N", static_cast<double>(cfg.n)},
                                  {"c", cfg.c},
                                  {"dt", cfg.integrator.dt}};
  for (const json* k : {&cfg.kernel_phi, &cfg.kernel_zeta}) {
    if ((*k)["type"] == "perturbed") m["epsilon"] = (*k)["epsilon"].get<double>();
  }
  return m;
}

}  // namespace

int cmd_sweep(const CliOptions& opts, std::ostream& out, std::ostream& err) {
  if (opts.sweep.empty()) throw ConfigError("--sweep", "sweep needs at least one --sweep param=list");
  std::vector<SweepAxis> axes;
  for (const auto& s : opts.sweep) axes.push_back(parse_sweep(s));
  const SimConfig base = load(opts);

  std::optional<SweepAxis> c_axis;
  std::vector<SweepAxis> others;
  for (auto& a : axes) {
    if (a.param == "c") {
      if (c_axis) throw ConfigError("--sweep", "c given twice");
      c_axis = a;
    } else {
      others.push_back(a);
    }
  }
  // Cross product of the non-c axes; each group then runs the c list (or a single row).
  std::vector<std::vector<std::pair<std::string, double>>> groups{{}};
  for (const auto& ax : others) {
    std::vector<std::vector<std::pair<std::string, double>>> next;
    for (const auto& g : groups) {
      for (double v : ax.values) {
        auto h = g;
        h.emplace_back(ax.param, v);
        next.push_back(h);
      }
    }
    groups = std::move(next);
  }

  std::filesystem::create_directories(opts.out);
  CsvWriter csv(opts.out / "sweep.csv", "flockd-sweep v1",
                {"kind", "chi", "N", "c", "epsilon", "dt", "ok", "error", "steps", "energy_drift",
                 "momentum_drift", "entropy_min_step", "T_min", "T_max", "norm_v_final",
                 "norm_that_final", "deviation", "slope"});
  auto param_cells = [](const std::map<std::string, double>& m) {
    std::vector<std::string> cells;
    for (const auto& k : kParamColumns) {
      const auto it = m.find(k);
      cells.push_back(it == m.end() ? "" : format_number(it->second));
    }
    return cells;
  };
  ojson rows_json = ojson::array();
  ojson slopes_json = ojson::array();
  std::size_t ok_rows = 0;
  std::size_t total = 0;

  for (const auto& g : groups) {
    SimConfig gcfg = base;
    std::string group_error;
    try {
      for (const auto& [k, v] : g) apply(gcfg, k, v);
    } catch (const Error& e) {
      group_error = e.what();
    }
    const std::vector<double> cs = c_axis ? c_axis->values : std::vector<double>{gcfg.c};
    std::optional<Ensemble> shared;
    std::optional<LimitStudy> study;
    if (c_axis && group_error.empty()) {
      // Identical initial data for every c, prepared under the classical model.
      try {
        SimConfig cl = gcfg;
        apply(cl, "c", kInfiniteLightSpeed);
        const Prepared pc = prepare(cl);
        shared = pc.initial;
        study = classical_limit_study(pc.initial, pc.phi, pc.zeta, cs, cl.integrator);
      } catch (const Error& e) {
        group_error = e.what();
      }
    }
    for (std::size_t i = 0; i < cs.size(); ++i) {
      SweepRow row;
      SimConfig rc = gcfg;
      ++total;
      try {
        if (!group_error.empty()) throw Error(ErrorKind::Validation, group_error);
        if (c_axis) apply(rc, "c", cs[i]);
        const Prepared p = prepare(rc, shared);
        row.sim = simulate(p, nullptr);
        row.ok = row.sim.result.ok;
        if (!row.ok) row.error = row.sim.result.message;
        if (study) {
          const auto& lr = study->rows[i];
          if (lr.ok) {
            row.deviation = lr.deviation;
          } else if (row.ok) {
            row.ok = false;
            row.error = lr.message;
          }
        }
      } catch (const Error& e) {
        row.error = e.what();
      }
      row.params = row_params(rc);
      for (const auto& [k, v] : g) row.params[k] = v;
      if (c_axis) row.params["c"] = cs[i];
      if (row.ok) ++ok_rows;

      auto cells = param_cells(row.params);
      cells.insert(cells.begin(), "row");
      cells.push_back(row.ok ? "1" : "0");
      std::string msg = row.error;
      std::replace(msg.begin(), msg.end(), ',', ';');
      std::replace(msg.begin(), msg.end(), '\n', ' ');
      cells.push_back(msg);
      const auto& inv = row.sim.invariants;
      const bool have = row.sim.result.steps > 0 || row.ok;
      cells.push_back(have ? std::to_string(row.sim.result.steps) : "");
      for (double x : {inv.energy_drift, inv.momentum_drift, inv.entropy_min_step, inv.T_min,
                       inv.T_max, row.sim.final_metrics.norm_v, row.sim.final_metrics.norm_that}) {
        cells.push_back(have ? format_number(x) : "");
      }
      cells.push_back(row.deviation ? format_number(*row.deviation) : "");
      cells.push_back("");
      csv.row(cells);

      ojson rj;
      for (const auto& [k, v] : row.params) rj[k] = json_number(v);
      rj["ok"] = row.ok;
      if (!row.error.empty()) rj["error"] = row.error;
      if (have) {
        rj["integration"] = to_json(row.sim.result);
        rj["invariants"] = to_json(inv);
      }
      rj["deviation"] = row.deviation ? json_number(*row.deviation) : ojson(nullptr);
      rows_json.push_back(rj);
    }
    if (study) {
      std::map<std::string, double> sp = row_params(gcfg);
      for (const auto& [k, v] : g) sp[k] = v;
      sp.erase("c");
      auto cells = param_cells(sp);
      cells.insert(cells.begin(), "slope");
      cells.insert(cells.end(), 11, "");
      cells.push_back(study->slope ? format_number(*study->slope) : "");
      csv.row(cells);
      ojson sj;
      for (const auto& [k, v] : sp) sj[k] = json_number(v);
      sj["slope"] = study->slope ? json_number(*study->slope) : ojson(nullptr);
      slopes_json.push_back(sj);
    }
  }
  ojson summary;
  summary["schema"] = "flockd-sweep-summary v1";
  summary["config"] = ojson::parse(config_to_json(base).dump());
  summary["sweep"] = opts.sweep;
  summary["rows"] = rows_json;
  summary["slopes"] = slopes_json;
  write_json(opts.out / "summary.json", summary);
  if (!opts.quiet) {
    out << "sweep: " << ok_rows << "/" << total << " rows ok\n";
    for (const auto& s : slopes_json) out << "classical-limit slope: " << s["slope"].dump() << '\n';
  }
  if (ok_rows == 0) {
    emit_error(err, {{"kind", "solver"}, {"message", "every sweep row failed"}});
    return kExitIntegration;
  }
  return kExitOk;
}

int run_cli(int argc, char** argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Thermodynamic flocking simulator"};
  app.require_subcommand(1);
  CliOptions opts;
  std::string seed_text;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", opts.config, "Config file (JSON, comments allowed)")->required();
    sub->add_option("--out", opts.out, "Output directory");
    sub->add_option("--seed", seed_text, "Override init.seed");
    sub->add_flag("--quiet", opts.quiet, "Suppress progress output");
  };
  auto* run = app.add_subcommand("run", "Integrate and write trajectory, diagnostics and summary");
  auto* bounds = app.add_subcommand("bounds", "Print the theorem constants without integrating");
  auto* verify = app.add_subcommand("verify", "Run and check every envelope and invariant");
  auto* sweep = app.add_subcommand("sweep", "Run a parameter sweep");
  for (auto* s : {run, bounds, verify, sweep}) add_common(s);
  sweep->add_option("--sweep", opts.sweep, "param=v1,v2,... (c, chi, N, epsilon, dt)")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    emit_error(err, {{"kind", "usage"}, {"message", e.what()}});
    return kExitValidation;
  }
  try {
    if (!seed_text.empty()) {
      std::size_t used = 0;
      unsigned long long s = 0;
      try {
        s = std::stoull(seed_text, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used != seed_text.size() || seed_text.front() == '-') {
        throw ConfigError("--seed", "must be an unsigned 64-bit integer");
      }
      opts.seed = s;
    }
    if (run->parsed()) return cmd_run(opts, out, err);
    if (bounds->parsed()) return cmd_bounds(opts, out, err);
    if (verify->parsed()) return cmd_verify(opts, out, err);
    return cmd_sweep(opts, out, err);
  } catch (const Error& e) {
    emit_error(err, error_body(e));
    return kExitValidation;
  } catch (const std::exception& e) {
    emit_error(err, {{"kind", "io"}, {"message", e.what()}});
    return kExitValidation;
  }
}

}  // namespace flockd::cli
