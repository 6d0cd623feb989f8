#include "lanemden/pipeline.hpp"

#include "lanemden/analysis.hpp"
#include "lanemden/field_io.hpp"
#include "lanemden/radial_greens.hpp"

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <functional>
#include <initializer_list>
#include <iostream>
#include <limits>
#include <random>
#include <sstream>
#include <thread>

namespace lanemden {

namespace {

using Json = nlohmann::ordered_json;
namespace fs = std::filesystem;

// ---------------------------------------------------------------- config

std::string join_key(const std::string& path, const std::string& key) {
  return path.empty() ? key : path + "." + key;
}

void expect_object(const Json& j, const std::string& path, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw ConfigError(path + ": expected an object");
  for (const auto& item : j.items()) {
    const bool ok = std::any_of(allowed.begin(), allowed.end(), [&](const char* k) { return item.key() == k; });
    if (!ok) throw ConfigError(join_key(path, item.key()) + ": unknown key");
  }
}

double number_at(const Json& j, const std::string& path) {
  if (!j.is_number()) throw ConfigError(path + ": expected a number");
  const double v = j.get<double>();
  if (!std::isfinite(v)) throw ConfigError(path + ": expected a finite number");
  return v;
}

long long integer_at(const Json& j, const std::string& path) {
  const double v = number_at(j, path);
  if (v != std::floor(v) || std::abs(v) > 9e15) throw ConfigError(path + ": expected an integer");
  return static_cast<long long>(v);
}

std::string string_at(const Json& j, const std::string& path) {
  if (!j.is_string()) throw ConfigError(path + ": expected a string");
  return j.get<std::string>();
}

fs::path resolve(const fs::path& base, const std::string& text) {
  fs::path p(text);
  if (p.is_relative() && !base.empty()) p = base / p;
  return p;
}

SystemParams parse_params(const Json& j, const std::string& path) {
  expect_object(j, path, {"n", "p", "q", "r", "s"});
  SystemParams sp;
  for (const char* key : {"n", "p", "q"}) {
    if (!j.contains(key)) throw ConfigError(join_key(path, key) + ": missing");
  }
  sp.n = static_cast<int>(integer_at(j.at("n"), join_key(path, "n")));
  sp.p = number_at(j.at("p"), join_key(path, "p"));
  sp.q = number_at(j.at("q"), join_key(path, "q"));
  if (j.contains("r")) sp.r = number_at(j.at("r"), join_key(path, "r"));
  if (j.contains("s")) sp.s = number_at(j.at("s"), join_key(path, "s"));
  return sp;
}

void parse_solver(const Json& j, RunConfig& cfg) {
  const std::string path = "solver";
  expect_object(j, path,
                {"method", "r_start", "r_max", "ode_tol", "beta_bracket", "max_bisections", "event_tol",
                 "bracket_widenings", "picard_damping", "picard_max_iters"});
  ShootingConfig& sc = cfg.shooting;
  if (j.contains("method")) {
    cfg.method = string_at(j.at("method"), "solver.method");
    if (cfg.method != "shooting" && cfg.method != "picard" && cfg.method != "both") {
      throw ConfigError("solver.method: expected shooting, picard or both");
    }
  }
  if (j.contains("r_start")) sc.r_start = number_at(j.at("r_start"), "solver.r_start");
  if (j.contains("r_max")) sc.r_max = number_at(j.at("r_max"), "solver.r_max");
  if (j.contains("ode_tol")) sc.ode_tol = number_at(j.at("ode_tol"), "solver.ode_tol");
  if (j.contains("beta_bracket")) {
    const Json& b = j.at("beta_bracket");
    if (!b.is_array() || b.size() != 2) throw ConfigError("solver.beta_bracket: expected [lo, hi]");
    sc.beta_lo = number_at(b[0], "solver.beta_bracket[0]");
    sc.beta_hi = number_at(b[1], "solver.beta_bracket[1]");
    // An explicit bracket is taken as given unless widening is requested.
    sc.max_widenings = 0;
  }
  if (j.contains("bracket_widenings")) {
    sc.max_widenings = static_cast<int>(integer_at(j.at("bracket_widenings"), "solver.bracket_widenings"));
  }
  if (j.contains("max_bisections")) {
    sc.max_bisections = static_cast<int>(integer_at(j.at("max_bisections"), "solver.max_bisections"));
  }
  if (j.contains("event_tol")) sc.event_tol = number_at(j.at("event_tol"), "solver.event_tol");
  if (j.contains("picard_damping")) cfg.picard.damping = number_at(j.at("picard_damping"), "solver.picard_damping");
  if (j.contains("picard_max_iters")) {
    cfg.picard.max_iters = static_cast<int>(integer_at(j.at("picard_max_iters"), "solver.picard_max_iters"));
  }
  try {
    sc.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("solver: ") + e.what());
  }
  if (!(cfg.picard.damping > 0.0 && cfg.picard.damping <= 1.0)) {
    throw ConfigError("solver.picard_damping: expected a value in (0, 1]");
  }
  if (cfg.picard.max_iters < 1) throw ConfigError("solver.picard_max_iters: expected a positive integer");
}

std::vector<double> parse_axis_values(const Json& j, const std::string& path) {
  std::vector<double> values;
  if (j.is_array()) {
    for (std::size_t i = 0; i < j.size(); ++i) values.push_back(number_at(j[i], path + "[" + std::to_string(i) + "]"));
  } else if (j.is_object()) {
    expect_object(j, path, {"start", "stop", "step"});
    for (const char* key : {"start", "stop", "step"}) {
      if (!j.contains(key)) throw ConfigError(join_key(path, key) + ": missing");
    }
    const double start = number_at(j.at("start"), join_key(path, "start"));
    const double stop = number_at(j.at("stop"), join_key(path, "stop"));
    const double step = number_at(j.at("step"), join_key(path, "step"));
    if (!(step > 0.0)) throw ConfigError(join_key(path, "step") + ": expected a positive number");
    for (long long k = 0;; ++k) {
      const double v = start + static_cast<double>(k) * step;
      if (v > stop + 1e-9 * step) break;
      if (k > 1000000) throw ConfigError(path + ": range too long");
      values.push_back(v);
    }
  } else {
    values.push_back(number_at(j, path));
  }
  if (values.empty()) throw ConfigError(path + ": empty range");
  return values;
}

SweepSpec parse_sweep(const Json& j) {
  expect_object(j, "sweep", {"n", "p", "q", "r", "s", "random"});
  SweepSpec spec;
  for (const auto& item : j.items()) {
    const std::string key = item.key();
    const std::string path = "sweep." + key;
    if (key == "random") {
      expect_object(item.value(), path, {"count", "seed"});
      if (!item.value().contains("count")) throw ConfigError(path + ".count: missing");
      const long long count = integer_at(item.value().at("count"), path + ".count");
      if (count < 1) throw ConfigError(path + ".count: expected a positive integer");
      spec.random_count = static_cast<std::size_t>(count);
      if (item.value().contains("seed")) {
        spec.random_seed = static_cast<std::uint64_t>(integer_at(item.value().at("seed"), path + ".seed"));
      }
      continue;
    }
    if (key == "p" && item.value().is_string()) {
      if (item.value().get<std::string>() != "critical_hyperbola") {
        throw ConfigError(path + ": expected a range or \"critical_hyperbola\"");
      }
      spec.p_on_critical_hyperbola = true;
      continue;
    }
    spec.axes.push_back({key, parse_axis_values(item.value(), path)});
  }
  if (spec.random_count > 0 && (!spec.axes.empty() || spec.p_on_critical_hyperbola)) {
    throw ConfigError("sweep.random: cannot be combined with explicit ranges");
  }
  if (spec.random_count == 0 && spec.axes.empty()) throw ConfigError("sweep: no ranges declared");
  return spec;
}

}  // namespace

const std::vector<std::string>& known_checks() {
  static const std::vector<std::string> names{"green_residuals", "decay",    "theorem4", "th4_integral", "comparison",
                                              "envelope",        "membership", "blowup", "scale_invariance"};
  return names;
}

RunConfig parse_config(const std::string& text, const fs::path& base_dir) {
  Json j;
  try {
    j = Json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  expect_object(j, "", {"params", "solver", "grid", "checks", "output", "sweep", "state", "th4_sets", "field"});
  RunConfig cfg;
  if (j.contains("params")) cfg.params = parse_params(j.at("params"), "params");
  if (j.contains("solver")) parse_solver(j.at("solver"), cfg);
  if (j.contains("grid")) {
    const Json& g = j.at("grid");
    expect_object(g, "grid", {"rho_min", "rho_max", "points"});
    if (g.contains("rho_min")) cfg.grid.rho_min = number_at(g.at("rho_min"), "grid.rho_min");
    if (g.contains("rho_max")) cfg.grid.rho_max = number_at(g.at("rho_max"), "grid.rho_max");
    if (g.contains("points")) cfg.grid.points = static_cast<Index>(integer_at(g.at("points"), "grid.points"));
  }
  if (!(cfg.grid.rho_min > 0.0 && cfg.grid.rho_max > cfg.grid.rho_min)) {
    throw ConfigError("grid: expected 0 < rho_min < rho_max");
  }
  if (cfg.grid.points < RadialGrid::kMinPoints || cfg.grid.points > 10000000) {
    throw ConfigError("grid.points: expected an integer in [16, 1e7]");
  }
  if (j.contains("checks")) {
    const Json& c = j.at("checks");
    if (!c.is_array()) throw ConfigError("checks: expected an array of check names");
    for (std::size_t i = 0; i < c.size(); ++i) {
      const std::string path = "checks[" + std::to_string(i) + "]";
      const std::string name = string_at(c[i], path);
      const auto& known = known_checks();
      if (std::find(known.begin(), known.end(), name) == known.end()) {
        throw ConfigError(path + ": unknown check '" + name + "'");
      }
      cfg.checks.push_back(name);
    }
  }
  if (j.contains("output")) {
    const Json& o = j.at("output");
    expect_object(o, "output", {"directory", "formats"});
    if (o.contains("directory")) cfg.output_dir = resolve(base_dir, string_at(o.at("directory"), "output.directory"));
    if (o.contains("formats")) {
      const Json& f = o.at("formats");
      if (!f.is_array() || f.empty()) throw ConfigError("output.formats: expected a nonempty array");
      cfg.formats.clear();
      for (std::size_t i = 0; i < f.size(); ++i) {
        const std::string path = "output.formats[" + std::to_string(i) + "]";
        const std::string fmt = string_at(f[i], path);
        if (fmt != "csv" && fmt != "json") throw ConfigError(path + ": expected csv or json");
        cfg.formats.push_back(fmt);
      }
    }
  } else if (!base_dir.empty()) {
    cfg.output_dir = base_dir;
  }
  if (j.contains("sweep")) cfg.sweep = parse_sweep(j.at("sweep"));
  if (j.contains("state")) {
    const Json& s = j.at("state");
    expect_object(s, "state", {"u", "v"});
    if (!s.contains("u") || !s.contains("v")) throw ConfigError("state: both u and v paths are required");
    cfg.state_u = resolve(base_dir, string_at(s.at("u"), "state.u"));
    cfg.state_v = resolve(base_dir, string_at(s.at("v"), "state.v"));
  }
  if (j.contains("th4_sets")) {
    const Json& t = j.at("th4_sets");
    if (!t.is_array() || t.empty()) throw ConfigError("th4_sets: expected a nonempty array");
    for (std::size_t i = 0; i < t.size(); ++i) {
      const std::string path = "th4_sets[" + std::to_string(i) + "]";
      expect_object(t[i], path, {"n", "q", "s"});
      for (const char* key : {"n", "q", "s"}) {
        if (!t[i].contains(key)) throw ConfigError(join_key(path, key) + ": missing");
      }
      cfg.th4_sets.push_back({static_cast<int>(integer_at(t[i].at("n"), path + ".n")),
                              number_at(t[i].at("q"), path + ".q"), number_at(t[i].at("s"), path + ".s")});
    }
  }
  if (j.contains("field")) cfg.field = resolve(base_dir, string_at(j.at("field"), "field"));
  return cfg;
}

RunConfig load_config(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str(), path.parent_path());
}

namespace {

// ---------------------------------------------------------------- output helpers

std::string csv_escape(const std::string& text) {
  if (text.find_first_of(",\"\n") == std::string::npos) return text;
  std::string out = "\"";
  for (char c : text) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

Json json_number(double v) {
  if (std::isfinite(v)) return v;
  if (std::isnan(v)) return "nan";
  return v > 0 ? "inf" : "-inf";
}

struct Sink {
  const RunConfig& config;
  const CommandOptions& options;

  fs::path dir() const { return options.out.value_or(config.output_dir); }

  bool wants(const std::string& fmt) const {
    if (options.format) return *options.format == fmt;
    return std::find(config.formats.begin(), config.formats.end(), fmt) != config.formats.end();
  }

  std::string stdout_format() const {
    if (options.format) return *options.format;
    return wants("json") ? "json" : "csv";
  }

  void write(const std::string& name, const std::string& content) const {
    fs::create_directories(dir());
    std::ofstream out(dir() / name, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + (dir() / name).string());
    out << content;
  }
};

Json params_json(const SystemParams& sp) {
  return Json{{"n", sp.n}, {"p", sp.p}, {"q", sp.q}, {"r", sp.r}, {"s", sp.s}};
}

Json profile_json(const DecayProfile& d) { return Json{{"exponent", d.exponent}, {"log_power", d.log_power}}; }

Json report_json(const SystemParams& sp, const ScalingReport& rep) {
  const IdentityResiduals id = check_scale_identities(rep, sp);
  const CriticalCheck cc = check_critical_condition(rep, sp.n);
  const SignRequirements sr = sign_requirements(sp);
  Json j;
  j["params"] = params_json(sp);
  j["a"] = rep.a;
  j["b"] = rep.b;
  j["admissible"] = rep.admissible;
  j["regime"] = to_string(rep.regime);
  j["u_profile"] = profile_json(rep.u_profile);
  j["v_profile"] = profile_json(rep.v_profile);
  j["c_nqs"] = json_number(rep.c_nqs);
  j["th4_constant"] = json_number(rep.th4_constant);
  j["identity_residuals"] = {json_number(id.first), json_number(id.second)};
  j["critical_condition"] = {{"holds", cc.holds}, {"residual", cc.residual}};
  j["sign_requirements"] = {{"u_nonnegative", sr.u_nonnegative}, {"v_nonnegative", sr.v_nonnegative}};
  return j;
}

RadialGrid make_grid(const RunConfig& cfg, int n) {
  return RadialGrid::log_uniform(cfg.grid.rho_min, cfg.grid.rho_max, cfg.grid.points, n);
}

const SystemParams& require_params(const RunConfig& cfg) {
  if (!cfg.params) throw ConfigError("params: missing");
  return *cfg.params;
}

// ---------------------------------------------------------------- classify

int cmd_classify(const RunConfig& cfg, const Sink& sink, std::ostream& out, std::ostream& err) {
  const SystemParams& sp = require_params(cfg);
  const ScalingReport rep = derive_scaling(sp);
  const Json j = report_json(sp, rep);

  std::ostringstream csv;
  csv << "key,value\n";
  const Json flat = j.flatten();
  for (const auto& item : flat.items()) {
    const Json& v = item.value();
    std::string text;
    if (v.is_number_float()) {
      text = format_double(v.get<double>());
    } else if (v.is_string()) {
      text = v.get<std::string>();
    } else {
      text = v.dump();
    }
    csv << csv_escape(item.key().substr(1)) << ',' << csv_escape(text) << '\n';
  }
  if (sink.wants("csv")) sink.write("classify.csv", csv.str());
  if (sink.wants("json")) sink.write("classify.json", j.dump(2) + "\n");
  out << (sink.stdout_format() == "json" ? j.dump(2) + "\n" : csv.str());
  if (!rep.admissible) {
    err << "inadmissible parameters: a = " << format_double(rep.a) << ", b = " << format_double(rep.b)
        << " must both exceed n/(n-2) = " << format_double(critical_sum(sp.n)) << "\n";
    return kExitInvalidInput;
  }
  return kExitOk;
}

// ---------------------------------------------------------------- solve

GroundState default_seed(const SystemParams& sp, const RadialGrid& grid) {
  const ScalingReport rep = require_admissible(sp);
  const double mu = rep.u_profile.exponent;
  const double mv = rep.v_profile.exponent;
  const double kv = rep.v_profile.log_power;
  Eigen::VectorXd u(grid.size());
  Eigen::VectorXd v(grid.size());
  for (Index i = 0; i < grid.size(); ++i) {
    const double rho = grid[i];
    u[i] = std::pow(1.0 + rho * rho, -0.5 * mu);
    v[i] = std::pow(1.0 + rho * rho, -0.5 * mv) * std::pow(std::log(std::exp(1.0) + rho), kv);
  }
  return assemble_state(sp, grid, u, v, 1.0, 1.0);
}

Json state_diagnostics(const GroundState& st) {
  Json j;
  j["method"] = to_string(st.method);
  j["params"] = params_json(st.params);
  j["beta_star"] = st.beta_star;
  j["residuals"] = {{"ode", st.residuals.ode}, {"green_u", st.residuals.green_u}, {"green_v", st.residuals.green_v}};
  j["converged"] = st.converged;
  j["status"] = st.status;
  j["iterations"] = st.iterations;
  j["clamp_count"] = st.clamp_count;
  if (st.method == SolveMethod::Shooting) {
    j["window"] = {st.window_lo, st.window_hi};
    j["window_width"] = st.window_hi - st.window_lo;
    Json hist = Json::array();
    for (const auto& h : st.history) {
      Json e{{"beta", h.beta}, {"label", to_string(h.label)}};
      e["event_radius"] = h.event_radius ? Json(*h.event_radius) : Json(nullptr);
      hist.push_back(e);
    }
    j["history"] = hist;
  } else {
    Json changes = Json::array();
    for (double c : st.change_history) changes.push_back(json_number(c));
    j["change_history"] = changes;
  }
  j["grid"] = {{"rho_min", st.u.grid.front()}, {"rho_max", st.u.grid.back()}, {"points", st.u.size()}};
  return j;
}

struct Solved {
  GroundState state;
  std::optional<GroundState> picard;
  double cross_difference = std::numeric_limits<double>::quiet_NaN();
};

/// Max relative difference between two states on [rho_1, 10].
double cross_method_difference(const GroundState& a, const GroundState& b) {
  double worst = 0.0;
  const double lo = std::max(a.u.grid.front(), b.u.grid.front());
  for (Index i = 0; i < b.u.size(); ++i) {
    const double rho = b.u.grid[i];
    if (rho < lo || rho > 10.0) continue;
    worst = std::max(worst, std::abs(b.u.values[i] - a.u(rho)) / a.u(rho));
    worst = std::max(worst, std::abs(b.v.values[i] - a.v(rho)) / a.v(rho));
  }
  return worst;
}

Solved solve_state(const RunConfig& cfg) {
  const SystemParams& sp = require_params(cfg);
  require_admissible(sp);
  const RadialGrid grid = make_grid(cfg, sp.n);
  Solved s;
  if (cfg.method == "picard") {
    s.state = picard_solve(sp, default_seed(sp, grid), cfg.picard);
  } else {
    s.state = bisect_ground_state(sp, cfg.shooting, grid);
    if (cfg.method == "both") {
      s.picard = picard_solve(sp, s.state, cfg.picard);
      if (s.picard->converged) s.cross_difference = cross_method_difference(s.state, *s.picard);
    }
  }
  return s;
}

int cmd_solve(const RunConfig& cfg, const Sink& sink, std::ostream& out, std::ostream& err) {
  Solved s;
  try {
    s = solve_state(cfg);
  } catch (const SolverError& e) {
    Json j{{"status", to_string(e.kind())}, {"message", e.what()}, {"interval", {e.interval_lo(), e.interval_hi()}}};
    j["params"] = params_json(require_params(cfg));
    sink.write("diagnostics.json", j.dump(2) + "\n");
    err << to_string(e.kind()) << ": " << e.what() << "\n";
    return kExitNonConvergence;
  }
  Json diag = state_diagnostics(s.state);
  save_field(sink.dir() / "u.csv", s.state.u);
  save_field(sink.dir() / "v.csv", s.state.v);
  if (s.picard) {
    diag["picard"] = state_diagnostics(*s.picard);
    diag["cross_method_difference"] = json_number(s.cross_difference);
    if (s.picard->converged) {
      save_field(sink.dir() / "picard_u.csv", s.picard->u);
      save_field(sink.dir() / "picard_v.csv", s.picard->v);
    }
  }
  sink.write("diagnostics.json", diag.dump(2) + "\n");

  Json summary{{"method", cfg.method},
               {"beta_star", s.state.beta_star},
               {"green_u", s.state.residuals.green_u},
               {"green_v", s.state.residuals.green_v},
               {"status", s.state.status}};
  out << summary.dump() << "\n";
  if (!s.state.converged) {
    err << "NonConvergence: Picard iteration " << s.state.status << "\n";
    return kExitNonConvergence;
  }
  return kExitOk;
}

// ---------------------------------------------------------------- verify

struct CheckRun {
  std::vector<CheckRecord> records;
  Json details = Json::object();
};

CheckRecord finite_positive(std::string name, double measured) {
  CheckRecord r;
  r.name = std::move(name);
  r.predicted = 0.0;
  r.measured = measured;
  r.rel_error = measured;
  r.tolerance = 0.0;
  r.pass = std::isfinite(measured) && measured > 0.0;
  return r;
}

std::string sigma_label(const std::string& base, double sigma) {
  return base + "[sigma=" + format_double(sigma) + "]";
}

Json fit_json(const DecayFit& f) {
  return Json{{"exponent", f.exponent},   {"log_power", f.log_power},       {"amplitude", f.amplitude},
              {"window", {f.window_lo, f.window_hi}}, {"rms_residual", f.rms_residual}, {"samples", f.samples}};
}

std::vector<std::string> default_checks(const SystemParams& sp) {
  std::vector<std::string> checks{"green_residuals", "decay", "comparison", "envelope", "membership",
                                  "scale_invariance"};
  switch (classify_regime(sp)) {
    case Regime::Subcritical:
      checks.push_back("theorem4");
      checks.push_back("th4_integral");
      break;
    case Regime::Critical:
      checks.push_back("blowup");
      break;
    case Regime::Supercritical:
      break;
  }
  return checks;
}

void run_th4_integrals(const RunConfig& cfg, CheckRun& run) {
  std::vector<SystemParams> sets;
  for (const auto& t : cfg.th4_sets) {
    // The integral depends on (n, q, s) only; p is set on the critical hyperbola.
    SystemParams sp{t.n, 0.0, t.q, 0.0, t.s};
    sp.p = critical_hyperbola_p(t.n, t.q, 0.0, t.s);
    sets.push_back(sp);
  }
  if (sets.empty()) sets.push_back(require_params(cfg));
  for (const SystemParams& sp : sets) {
    const Th4Integral r = verify_th4_integral(sp);
    std::ostringstream name;
    name << "th4_integral[n=" << sp.n << ",q=" << sp.q << ",s=" << sp.s << "]";
    run.records.push_back(make_check(name.str(), r.closed_form, r.quadrature, 1e-6));
  }
}

void run_state_check(const std::string& name, const GroundState& st, CheckRun& run) {
  const SystemParams& sp = st.params;
  const ScalingReport rep = require_admissible(sp);
  const int n = sp.n;
  auto& recs = run.records;
  if (name == "green_residuals") {
    recs.push_back(make_bound_check("green_residual_u", st.residuals.green_u, kGreenResidualTol));
    recs.push_back(make_bound_check("green_residual_v", st.residuals.green_v, kGreenResidualTol));
  } else if (name == "decay") {
    const DecayFit fu = estimate_decay(st.u);
    recs.push_back(make_check("decay_u_exponent", n - 2.0, fu.exponent, 0.02));
    run.details["decay_u"] = fit_json(fu);
    if (rep.regime == Regime::Critical) {
      FitOptions o;
      o.expected_log = true;
      o.fixed_exponent = n - 2.0;
      const DecayFit fv = estimate_decay(st.v, o);
      recs.push_back(make_check("decay_v_log_power", rep.v_profile.log_power, fv.log_power, 0.15));
      run.details["decay_v"] = fit_json(fv);
    } else {
      const DecayFit fv = estimate_decay(st.v);
      recs.push_back(make_check("decay_v_exponent", rep.v_profile.exponent, fv.exponent, 0.02));
      run.details["decay_v"] = fit_json(fv);
    }
  } else if (name == "theorem4") {
    const Theorem4Result t = theorem4_check(st);
    recs.push_back(make_check("theorem4_product", t.predicted, t.measured, 0.05));
    CheckRecord th3;
    th3.name = "theorem3_hypothesis";
    th3.predicted = t.threshold;
    th3.measured = t.measured;
    th3.rel_error = t.measured / t.threshold;
    th3.tolerance = 1.0;
    th3.pass = t.below_threshold;
    recs.push_back(th3);
    run.details["theorem4"] = {{"u_fit", fit_json(t.u_fit)},
                               {"v_fit", fit_json(t.v_fit)},
                               {"measured", t.measured},
                               {"predicted", t.predicted},
                               {"threshold", json_number(t.threshold)}};
  } else if (name == "comparison") {
    const ComparisonResult c = check_comparison(st);
    recs.push_back(make_bound_check("comparison_violation", c.max_violation, kComparisonTol));
    run.details["comparison"] = {{"max_violation", c.max_violation}, {"at_radius", c.at_radius}};
  } else if (name == "envelope") {
    const EnvelopeReport e = envelope_report(st);
    recs.push_back(finite_positive("envelope_sup_ratio_u", e.sup_ratio_u));
    recs.push_back(finite_positive("envelope_inf_ratio_u", e.inf_ratio_u));
    recs.push_back(finite_positive("envelope_sup_ratio_v", e.sup_ratio_v));
    recs.push_back(finite_positive("envelope_inf_ratio_v", e.inf_ratio_v));
  } else if (name == "membership") {
    const MembershipReport m = membership_report(st);
    for (const auto& e : m.entries) recs.push_back(finite_positive(sigma_label("weak_norm_" + e.component, e.sigma), e.value));
    if (rep.regime == Regime::Critical) {
      CheckRecord r;
      r.name = "critical_ladder_increasing";
      r.predicted = 1.0;
      r.measured = m.ladder_increasing ? 1.0 : 0.0;
      r.rel_error = m.ladder_increasing ? 0.0 : 1.0;
      r.tolerance = 0.0;
      r.pass = m.ladder_increasing;
      recs.push_back(r);
    }
  } else if (name == "blowup") {
    const BlowupFit b = critical_blowup_fit(st, critical_ladder(n));
    recs.push_back(make_check("blowup_slope", 1.0 / (1.0 - sp.s), b.slope, 0.15));
    Json ladder = Json::array();
    for (std::size_t k = 0; k < b.sigmas.size(); ++k) ladder.push_back({b.sigmas[k], json_number(b.norms[k])});
    run.details["blowup"] = {{"slope", b.slope}, {"prefactor", b.prefactor}, {"ladder", ladder}};
  } else if (name == "scale_invariance") {
    const GroundState scaled = rescale(st, 2.0);
    recs.push_back(make_check("rescale_weak_norm_u_La", lorentz_weak_quasinorm(st.u, rep.a),
                              lorentz_weak_quasinorm(scaled.u, rep.a), 1e-3));
    recs.push_back(make_check("rescale_weak_norm_v_Lb", lorentz_weak_quasinorm(st.v, rep.b),
                              lorentz_weak_quasinorm(scaled.v, rep.b), 1e-3));
    recs.push_back(make_check("rescale_ode_residual", st.residuals.ode, scaled.residuals.ode, 0.1));
    if (rep.regime == Regime::Subcritical) {
      recs.push_back(make_check("rescale_theorem4_product", theorem4_check(st).measured,
                                theorem4_check(scaled).measured, 1e-6));
    }
  }
}

std::string checks_csv(const std::vector<CheckRecord>& recs) {
  std::ostringstream os;
  os << "check_name,predicted,measured,rel_error,tolerance,pass\n";
  for (const auto& r : recs) {
    os << csv_escape(r.name) << ',' << format_double(r.predicted) << ',' << format_double(r.measured) << ','
       << format_double(r.rel_error) << ',' << format_double(r.tolerance) << ',' << (r.pass ? "true" : "false")
       << '\n';
  }
  return os.str();
}

int cmd_verify(const RunConfig& cfg, const Sink& sink, std::ostream& out, std::ostream& err) {
  std::vector<std::string> checks = cfg.checks;
  if (checks.empty()) {
    if (cfg.params) {
      checks = default_checks(*cfg.params);
    } else if (!cfg.th4_sets.empty()) {
      checks = {"th4_integral"};
    } else {
      throw ConfigError("params: missing");
    }
  }
  CheckRun run;
  const bool needs_state = std::any_of(checks.begin(), checks.end(), [](const std::string& c) { return c != "th4_integral"; });
  std::optional<GroundState> state;
  if (needs_state) {
    const SystemParams& sp = require_params(cfg);
    require_admissible(sp);
    if (cfg.state_u) {
      GroundState st;
      st.params = sp;
      st.u = load_field(*cfg.state_u);
      st.v = load_field(*cfg.state_v);
      if (st.u.dimension() != sp.n || st.v.dimension() != sp.n) {
        throw FieldError("state files do not match the dimension n = " + std::to_string(sp.n));
      }
      st.beta_star = st.v.value_at_zero;
      st.residuals = compute_residuals(sp, st.u, st.v);
      state = st;
      run.details["state_source"] = "files";
    } else {
      try {
        state = solve_state(cfg).state;
      } catch (const SolverError& e) {
        err << to_string(e.kind()) << ": " << e.what() << "\n";
        return kExitNonConvergence;
      }
      run.details["state_source"] = "solved";
      run.details["beta_star"] = state->beta_star;
    }
  }
  for (const auto& name : checks) {
    if (name == "th4_integral") {
      run_th4_integrals(cfg, run);
    } else {
      run_state_check(name, *state, run);
    }
  }

  bool all_pass = true;
  Json arr = Json::array();
  for (const auto& r : run.records) {
    all_pass = all_pass && r.pass;
    arr.push_back({{"check_name", r.name},
                   {"predicted", json_number(r.predicted)},
                   {"measured", json_number(r.measured)},
                   {"rel_error", json_number(r.rel_error)},
                   {"tolerance", json_number(r.tolerance)},
                   {"pass", r.pass}});
  }
  Json doc{{"checks", arr}, {"all_pass", all_pass}, {"diagnostics", run.details}};
  const std::string csv = checks_csv(run.records);
  if (sink.wants("csv")) sink.write("checks.csv", csv);
  if (sink.wants("json")) sink.write("checks.json", doc.dump(2) + "\n");
  out << (sink.stdout_format() == "json" ? doc.dump(2) + "\n" : csv);
  for (const auto& r : run.records) {
    if (!r.pass) err << "check failed: " << r.name << "\n";
  }
  return all_pass ? kExitOk : kExitCheckFailure;
}

// ---------------------------------------------------------------- sweep

struct SweepRow {
  SystemParams params;
  bool valid = false;
  std::string note;
  ScalingReport report;
  IdentityResiduals identities;
  CriticalCheck critical;
};

double uniform(std::mt19937_64& rng, double lo, double hi) {
  // 53 random bits mapped to [0, 1); identical on every platform.
  const double unit = static_cast<double>(rng() >> 11) * 0x1.0p-53;
  return lo + (hi - lo) * unit;
}

std::vector<SystemParams> sweep_tuples(const RunConfig& cfg, const SweepSpec& spec) {
  std::vector<SystemParams> tuples;
  if (spec.random_count > 0) {
    std::mt19937_64 rng(spec.random_seed);
    while (tuples.size() < spec.random_count) {
      SystemParams sp;
      sp.n = 3 + static_cast<int>(rng() % 6);
      sp.q = uniform(rng, 1.0, 6.0);
      sp.r = uniform(rng, 0.0, 2.0);
      sp.s = uniform(rng, 0.0, 2.0);
      const double p_min = std::max(1.0, sp.q - sp.r + sp.s);
      sp.p = uniform(rng, p_min, p_min + 8.0);
      try {
        validate(sp);
      } catch (const HypothesisError&) {
        continue;
      }
      if (derive_scaling(sp).admissible) tuples.push_back(sp);
    }
    return tuples;
  }

  SystemParams base = cfg.params.value_or(SystemParams{3, 1.0, 1.0, 0.0, 0.0});
  auto declared = [&](const char* key) {
    return std::any_of(spec.axes.begin(), spec.axes.end(), [&](const SweepAxis& a) { return a.name == key; });
  };
  if (!cfg.params) {
    for (const char* key : {"n", "q"}) {
      if (!declared(key)) throw ConfigError(std::string("sweep.") + key + ": missing and no params given");
    }
    if (!declared("p") && !spec.p_on_critical_hyperbola) throw ConfigError("sweep.p: missing and no params given");
  }
  if (spec.p_on_critical_hyperbola && declared("p")) throw ConfigError("sweep.p: declared twice");

  std::vector<std::size_t> pos(spec.axes.size(), 0);
  while (true) {
    SystemParams sp = base;
    for (std::size_t k = 0; k < spec.axes.size(); ++k) {
      const double v = spec.axes[k].values[pos[k]];
      const std::string& key = spec.axes[k].name;
      if (key == "n") {
        if (v != std::floor(v)) throw ConfigError("sweep.n: expected integers");
        sp.n = static_cast<int>(v);
      } else if (key == "p") {
        sp.p = v;
      } else if (key == "q") {
        sp.q = v;
      } else if (key == "r") {
        sp.r = v;
      } else {
        sp.s = v;
      }
    }
    if (spec.p_on_critical_hyperbola) {
      sp.p = ((sp.n - 2) * sp.q == 2.0) ? std::numeric_limits<double>::quiet_NaN()
                                        : critical_hyperbola_p(sp.n, sp.q, sp.r, sp.s);
    }
    tuples.push_back(sp);
    // Last declared axis varies fastest.
    std::size_t k = spec.axes.size();
    while (k > 0) {
      --k;
      if (++pos[k] < spec.axes[k].values.size()) break;
      pos[k] = 0;
      if (k == 0) return tuples;
    }
    if (spec.axes.empty()) return tuples;
  }
}

SweepRow evaluate_row(const SystemParams& sp) {
  SweepRow row;
  row.params = sp;
  try {
    if (std::isnan(sp.p)) throw HypothesisError("critical hyperbola undefined for (n-2) q = 2");
    row.report = derive_scaling(sp);
    row.valid = true;
    row.identities = check_scale_identities(row.report, sp);
    row.critical = check_critical_condition(row.report, sp.n);
    if (!row.report.admissible) row.note = "inadmissible: a or b <= n/(n-2)";
  } catch (const HypothesisError& e) {
    row.note = e.what();
  }
  return row;
}

int cmd_sweep(const RunConfig& cfg, const Sink& sink, std::ostream& out, unsigned jobs) {
  if (!cfg.sweep) throw ConfigError("sweep: missing");
  const std::vector<SystemParams> tuples = sweep_tuples(cfg, *cfg.sweep);
  std::vector<SweepRow> rows(tuples.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < tuples.size(); i = next++) rows[i] = evaluate_row(tuples[i]);
  };
  const unsigned threads = std::max(1u, std::min<unsigned>(jobs, static_cast<unsigned>(tuples.size())));
  std::vector<std::thread> pool;
  for (unsigned t = 1; t < threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  const double nan = std::numeric_limits<double>::quiet_NaN();
  std::ostringstream csv;
  csv << "n,p,q,r,s,valid,admissible,a,b,regime,critical_condition,critical_residual,identity_residual_1,"
         "identity_residual_2,c_nqs,th4_constant,note\n";
  Json arr = Json::array();
  for (const auto& row : rows) {
    const SystemParams& sp = row.params;
    const bool ok = row.valid;
    const ScalingReport& r = row.report;
    csv << sp.n << ',' << format_double(sp.p) << ',' << format_double(sp.q) << ',' << format_double(sp.r) << ','
        << format_double(sp.s) << ',' << (ok ? "true" : "false") << ',' << (ok && r.admissible ? "true" : "false")
        << ',' << format_double(ok ? r.a : nan) << ',' << format_double(ok ? r.b : nan) << ','
        << (ok ? short_label(r.regime) : "") << ',' << (ok && row.critical.holds ? "true" : "false") << ','
        << format_double(ok ? row.critical.residual : nan) << ','
        << format_double(ok ? row.identities.first : nan) << ','
        << format_double(ok ? row.identities.second : nan) << ',' << format_double(ok ? r.c_nqs : nan) << ','
        << format_double(ok ? r.th4_constant : nan) << ',' << csv_escape(row.note) << '\n';
    Json j{{"params", params_json(sp)}, {"valid", ok}, {"note", row.note}};
    if (ok) {
      j["admissible"] = r.admissible;
      j["a"] = r.a;
      j["b"] = r.b;
      j["regime"] = short_label(r.regime);
      j["critical_condition"] = row.critical.holds;
      j["critical_residual"] = row.critical.residual;
      j["identity_residuals"] = {row.identities.first, row.identities.second};
      j["c_nqs"] = json_number(r.c_nqs);
      j["th4_constant"] = json_number(r.th4_constant);
    }
    arr.push_back(j);
  }
  if (sink.wants("csv")) sink.write("sweep.csv", csv.str());
  if (sink.wants("json")) sink.write("sweep.json", Json{{"rows", arr}}.dump(2) + "\n");
  out << (sink.stdout_format() == "json" ? Json{{"rows", arr}}.dump(2) + "\n" : csv.str());
  return kExitOk;
}

// ---------------------------------------------------------------- potential

int cmd_potential(const RunConfig& cfg, const Sink& sink, std::ostream& out) {
  if (!cfg.field) throw ConfigError("field: missing");
  const RadialField f = load_field(*cfg.field);
  const RadialField w = newton_potential(f);
  save_field(sink.dir() / "potential.csv", w);
  std::ostringstream os;
  write_field_csv(os, w);
  out << os.str();
  return kExitOk;
}

}  // namespace

int run_command(const std::string& command, const RunConfig& config, const CommandOptions& options,
                std::ostream& out, std::ostream& err) {
  if (options.format && *options.format != "csv" && *options.format != "json") {
    throw ConfigError("--format: expected csv or json");
  }
  const Sink sink{config, options};
  fs::create_directories(sink.dir());
  if (command == "classify") return cmd_classify(config, sink, out, err);
  if (command == "solve") return cmd_solve(config, sink, out, err);
  if (command == "verify") return cmd_verify(config, sink, out, err);
  if (command == "sweep") return cmd_sweep(config, sink, out, std::max(1u, options.jobs));
  if (command == "potential") return cmd_potential(config, sink, out);
  throw ConfigError("unknown command '" + command + "'");
}

int run_cli(const std::string& command, const fs::path& config_path, const CommandOptions& options, std::ostream& out,
            std::ostream& err) {
  try {
    const RunConfig config = load_config(config_path);
    return run_command(command, config, options, out, err);
  } catch (const SolverError& e) {
    err << to_string(e.kind()) << ": " << e.what() << "\n";
    return kExitNonConvergence;
  } catch (const ConfigError& e) {
    err << "invalid config: " << e.what() << "\n";
    return kExitInvalidInput;
  } catch (const HypothesisError& e) {
    err << "hypothesis violated: " << e.what() << "\n";
    return kExitInvalidInput;
  } catch (const FieldError& e) {
    err << "invalid field: " << e.what() << "\n";
    return kExitInvalidInput;
  } catch (const std::invalid_argument& e) {
    err << "invalid input: " << e.what() << "\n";
    return kExitInvalidInput;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitInvalidInput;
  }
}

}  // namespace lanemden
