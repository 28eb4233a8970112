#include "flockd_cli/output.hpp"

#include <charconv>
#include <cmath>

#include "flockd/errors.hpp"

namespace flockd::cli {

std::string format_number(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, r.ptr);
}

ojson json_number(double x) {
  if (std::isfinite(x)) return x;
  return format_number(x);
}

CsvWriter::CsvWriter(const std::filesystem::path& path, const std::string& schema,
                     const std::vector<std::string>& columns)
    : out_(path, std::ios::binary), width_(columns.size()) {
  if (!out_) throw Error(ErrorKind::Usage, "cannot write " + path.string());
  out_ << "# " << schema << '\n';
  for (std::size_t i = 0; i < columns.size(); ++i) out_ << (i ? "," : "") << columns[i];
  out_ << '\n';
}

void CsvWriter::row(const std::vector<std::string>& cells) {
  if (cells.size() != width_) throw Error(ErrorKind::Usage, "csv row width mismatch");
  for (std::size_t i = 0; i < cells.size(); ++i) out_ << (i ? "," : "") << cells[i];
  out_ << '\n';
}

void CsvWriter::row(const std::vector<double>& values) {
  std::vector<std::string> cells;
  cells.reserve(values.size());
  for (double v : values) cells.push_back(format_number(v));
  row(cells);
}

void write_json(const std::filesystem::path& path, const ojson& j) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::Usage, "cannot write " + path.string());
  out << j.dump(2) << '\n';
}

ojson vector_json(const std::vector<double>& v) {
  ojson a = ojson::array();
  for (double x : v) a.push_back(json_number(x));
  return a;
}

ojson to_json(const BoundsReport& r) {
  ojson j;
  j["regime"] = r.regime;
  j["relativistic"] = r.relativistic;
  j["convention"] = r.convention;
  j["margin"] = r.margin;
  j["N"] = r.n;
  j["chi"] = r.chi;
  j["c"] = json_number(r.c);
  j["energy0"] = json_number(r.energy0);
  j["T_lower"] = json_number(r.T_lower);
  j["T_upper"] = json_number(r.T_upper);
  j["v_inf"] = vector_json(r.v_inf);
  j["T_inf"] = json_number(r.T_inf);
  j["norm_x0"] = json_number(r.norm_x0);
  j["norm_v0"] = json_number(r.norm_v0);
  j["norm_that0"] = json_number(r.norm_that0);
  j["kernel_stats"] = {{"phi_max", json_number(r.stats.phi_max)},
                       {"phi_min", json_number(r.stats.phi_min)},
                       {"zeta_max", json_number(r.stats.zeta_max)},
                       {"zeta_min", json_number(r.stats.zeta_min)},
                       {"epsilon", json_number(r.stats.epsilon)}};
  j["A_threshold"] = json_number(r.A_threshold);
  j["A"] = json_number(r.A);
  j["lambda"] = json_number(r.lambda);
  j["lambda_temperature"] = json_number(r.lambda_temperature);
  j["lambda_velocity"] = json_number(r.lambda_velocity);
  j["velocity_rate"] = json_number(r.velocity_rate);
  j["position_bound"] = json_number(r.position_bound);
  j["position_scaled"] = r.position_scaled;
  j["feasible"] = r.feasible;
  j["U"] = r.U ? json_number(*r.U) : ojson(nullptr);
  j["chi_U"] = json_number(r.chi_U);
  j["U_search"] = {json_number(r.U_search_lo), json_number(r.U_search_hi)};
  j["eps_condition"] = r.eps_condition;
  j["c_condition"] = r.c_condition;
  j["lambda_positive"] = r.lambda_positive;
  j["applicable"] = r.applicable;
  j["notes"] = r.notes;
  return j;
}

ojson to_json(const InvariantSummary& s) {
  return {{"samples", s.samples},
          {"energy_drift", json_number(s.energy_drift)},
          {"momentum_drift", json_number(s.momentum_drift)},
          {"entropy_min_step", json_number(s.entropy_min_step)},
          {"entropy", json_number(s.entropy)},
          {"T_min", json_number(s.T_min)},
          {"T_max", json_number(s.T_max)},
          {"T_lower", json_number(s.T_lower)},
          {"T_upper", json_number(s.T_upper)},
          {"bounds_hold", s.bounds_hold},
          {"empirical_K", json_number(s.empirical_K)},
          {"spread_ratio", json_number(s.spread_ratio)}};
}

ojson to_json(const DecayFit& f) {
  return {{"rate", json_number(f.rate)},
          {"t0", json_number(f.t0)},
          {"t1", json_number(f.t1)},
          {"residual", json_number(f.residual)},
          {"count", f.count}};
}

ojson to_json(const IntegrationResult& r) {
  ojson j = {{"ok", r.ok}, {"t", json_number(r.t)}, {"steps", r.steps}, {"rejected", r.rejected}};
  if (!r.ok) {
    j["error"] = to_string(r.error);
    j["message"] = r.message;
  }
  return j;
}

ojson to_json(const FlockingMetrics& m) {
  return {{"d_x", json_number(m.d_x)},       {"d_v", json_number(m.d_v)},
          {"d_T", json_number(m.d_T)},       {"d_w", json_number(m.d_w)},
          {"norm_x", json_number(m.norm_x)}, {"norm_v", json_number(m.norm_v)},
          {"norm_w", json_number(m.norm_w)}, {"norm_that", json_number(m.norm_that)}};
}

ojson to_json(const EnvelopeResult& r) {
  ojson j = {{"name", r.name},
             {"status", !r.applicable ? "not-applicable" : (r.pass ? "pass" : "fail")}};
  if (r.applicable) {
    j["worst_slack"] = json_number(r.worst_slack);
    j["worst_t"] = json_number(r.worst_t);
    j["first_violation_t"] = r.first_violation_t >= 0 ? json_number(r.first_violation_t)
                                                      : ojson(nullptr);
  }
  return j;
}

}  // namespace flockd::cli
