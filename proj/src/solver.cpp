#include "lanemden/solver.hpp"

#include "lanemden/radial_greens.hpp"

#include <boost/numeric/odeint.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <sstream>

namespace lanemden {

namespace odeint = boost::numeric::odeint;

namespace {

using State = std::array<double, 4>;  // u, u_t, v, v_t with t = ln rho

double clamp_pow(double x, double e) {
  if (e == 0.0) return 1.0;
  return std::pow(std::max(x, 0.0), e);
}

struct RadialRhs {
  const SystemParams& params;
  std::size_t* clamps;

  void operator()(const State& y, State& dy, double t) const {
    if (y[0] < 0.0 || y[2] < 0.0) ++*clamps;
    const double k = params.n - 2.0;
    const double e2t = std::exp(2.0 * t);
    dy[0] = y[1];
    dy[1] = -k * y[1] - e2t * clamp_pow(y[2], params.p) * clamp_pow(y[0], params.r);
    dy[2] = y[3];
    dy[3] = -k * y[3] - e2t * clamp_pow(y[0], params.q) * clamp_pow(y[2], params.s);
  }
};

std::string format_interval(double lo, double hi) {
  std::ostringstream os;
  os.precision(17);
  os << '[' << lo << ", " << hi << ']';
  return os.str();
}

double profile_slope(const DecayProfile& profile, double rho) {
  double slope = -profile.exponent;
  if (profile.log_power != 0.0) slope += profile.log_power / std::log(rho);
  return slope;
}

Tail matched_tail(const DecayProfile& profile, double rho, double value) {
  Tail tail{0.0, profile.exponent, profile.log_power};
  double scale = std::pow(rho, -profile.exponent);
  if (profile.log_power != 0.0) {
    const double lr = std::log(rho);
    if (!(lr > 0.0)) throw FieldError("log-corrected tail needs the grid to end beyond rho = 1");
    scale *= std::pow(lr, profile.log_power);
  }
  tail.amplitude = value / scale;
  return tail;
}

RadialField make_field(const RadialGrid& grid, Eigen::VectorXd values, double at_zero, const DecayProfile& profile) {
  RadialField f;
  f.grid = grid;
  f.values = std::move(values);
  f.value_at_zero = at_zero;
  f.nonnegative = true;
  f.tail = matched_tail(profile, grid.back(), f.values[f.size() - 1]);
  return f;
}

RadialField power_source(const RadialField& x, double ex, const RadialField& y, double ey) {
  RadialField f;
  f.grid = x.grid;
  f.values.resize(x.size());
  for (Index i = 0; i < x.size(); ++i) f.values[i] = clamp_pow(x.values[i], ex) * clamp_pow(y.values[i], ey);
  f.value_at_zero = clamp_pow(x.value_at_zero, ex) * clamp_pow(y.value_at_zero, ey);
  f.nonnegative = true;
  f.tail.amplitude = clamp_pow(x.tail.amplitude, ex) * clamp_pow(y.tail.amplitude, ey);
  f.tail.exponent = ex * x.tail.exponent + ey * y.tail.exponent;
  f.tail.log_power = ex * x.tail.log_power + ey * y.tail.log_power;
  return f;
}

double max_relative_gap(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  return ((a - b).array().abs() / b.array().abs()).maxCoeff();
}

}  // namespace

void ShootingConfig::validate() const {
  if (!(r_start > 0.0 && r_start < 1e-2)) throw std::invalid_argument("r_start must lie in (0, 1e-2)");
  if (!(r_max >= 1.0)) throw std::invalid_argument("r_max must be at least 1");
  if (!(ode_tol > 0.0 && ode_tol < 1e-2)) throw std::invalid_argument("ode_tol must lie in (0, 1e-2)");
  if (!(beta_lo > 0.0 && beta_hi > beta_lo)) throw std::invalid_argument("beta_bracket must satisfy 0 < lo < hi");
  if (max_bisections < 1) throw std::invalid_argument("max_bisections must be positive");
  if (!(event_tol > 0.0)) throw std::invalid_argument("event_tol must be positive");
  if (max_widenings < 0) throw std::invalid_argument("max_widenings must be nonnegative");
  if (!(widen_factor > 1.0)) throw std::invalid_argument("widen_factor must exceed 1");
  if (!(slope_tolerance > 0.0)) throw std::invalid_argument("slope_tolerance must be positive");
}

const char* to_string(TrajectoryLabel label) {
  switch (label) {
    case TrajectoryLabel::UHitsZero: return "UHitsZero";
    case TrajectoryLabel::VHitsZero: return "VHitsZero";
    case TrajectoryLabel::NonDecaying: return "NonDecaying";
    case TrajectoryLabel::Decaying: return "Decaying";
  }
  return "?";
}

const char* to_string(SolverFailureKind kind) {
  switch (kind) {
    case SolverFailureKind::BracketFailure: return "BracketFailure";
    case SolverFailureKind::NonConvergence: return "NonConvergence";
    case SolverFailureKind::StepUnderflow: return "StepUnderflow";
  }
  return "?";
}

const char* to_string(SolveMethod method) {
  return method == SolveMethod::Shooting ? "shooting" : "picard";
}

Trajectory integrate_radial(const SystemParams& params, double alpha, double beta, const ShootingConfig& config,
                            const RadialGrid* grid) {
  const ScalingReport report = require_admissible(params);
  config.validate();
  if (!(alpha > 0.0) || !(beta > 0.0)) throw std::invalid_argument("u(0) and v(0) must be positive");

  const int n = params.n;
  const double r0 = config.r_start;
  const double c_u = std::pow(beta, params.p) * std::pow(alpha, params.r);
  const double c_v = std::pow(alpha, params.q) * std::pow(beta, params.s);
  State y{alpha - c_u * r0 * r0 / (2.0 * n), -c_u * r0 * r0 / n, beta - c_v * r0 * r0 / (2.0 * n), -c_v * r0 * r0 / n};

  const double t0 = std::log(r0);
  double r_end = config.r_max;
  if (grid != nullptr) r_end = std::max(r_end, grid->back());
  const double t_end = std::log(r_end);

  Trajectory traj;
  Index next = 0;
  std::vector<double> rho_s;
  std::vector<double> u_s;
  std::vector<double> v_s;
  if (grid != nullptr) {
    rho_s.reserve(grid->size());
    u_s.reserve(grid->size());
    v_s.reserve(grid->size());
    for (; next < grid->size() && (*grid)[next] <= r0; ++next) {
      const double rho = (*grid)[next];
      rho_s.push_back(rho);
      u_s.push_back(alpha - c_u * rho * rho / (2.0 * n));
      v_s.push_back(beta - c_v * rho * rho / (2.0 * n));
    }
  }

  RadialRhs rhs{params, &traj.clamp_count};
  auto stepper = odeint::make_dense_output(1e-30, config.ode_tol, odeint::runge_kutta_dopri5<State>());
  stepper.initialize(y, t0, 1e-3);

  bool has_event = false;
  double event_t = 0.0;
  TrajectoryLabel event_label = TrajectoryLabel::Decaying;
  State probe;
  try {
    while (stepper.current_time() < t_end) {
      const auto [ta, tb] = stepper.do_step(std::ref(rhs));
      ++traj.steps;
      if (!(tb - ta > 1e-14)) throw SolverError(SolverFailureKind::StepUnderflow, "integrator step size underflow");
      const State& cur = stepper.current_state();
      if (!std::isfinite(cur[0]) || !std::isfinite(cur[2])) {
        throw SolverError(SolverFailureKind::StepUnderflow, "integrator produced non-finite values");
      }
      if (cur[0] <= 0.0 || cur[2] <= 0.0) {
        // Earliest sign change of either component inside [ta, tb].
        auto first_crossing = [&](int comp) -> std::optional<double> {
          if (cur[comp] > 0.0) return std::nullopt;
          double lo = ta;
          double hi = tb;
          while (hi - lo > config.event_tol) {
            const double mid = 0.5 * (lo + hi);
            stepper.calc_state(mid, probe);
            (probe[comp] > 0.0 ? lo : hi) = mid;
          }
          return hi;
        };
        const auto tu = first_crossing(0);
        const auto tv = first_crossing(2);
        if (tu && (!tv || *tu <= *tv)) {
          event_t = *tu;
          event_label = TrajectoryLabel::UHitsZero;
        } else {
          event_t = *tv;
          event_label = TrajectoryLabel::VHitsZero;
        }
        has_event = event_t <= t_end;
      }
      const double t_stop = std::min(has_event ? event_t : tb, t_end);
      if (grid != nullptr) {
        for (; next < grid->size() && std::log((*grid)[next]) <= t_stop; ++next) {
          stepper.calc_state(std::log((*grid)[next]), probe);
          rho_s.push_back((*grid)[next]);
          u_s.push_back(probe[0]);
          v_s.push_back(probe[2]);
        }
      }
      if (has_event || cur[0] <= 0.0 || cur[2] <= 0.0) break;
    }
  } catch (const odeint::step_adjustment_error& e) {
    throw SolverError(SolverFailureKind::StepUnderflow, std::string("integrator step size underflow: ") + e.what());
  }

  traj.rho = Eigen::Map<Eigen::VectorXd>(rho_s.data(), static_cast<Index>(rho_s.size()));
  traj.u = Eigen::Map<Eigen::VectorXd>(u_s.data(), static_cast<Index>(u_s.size()));
  traj.v = Eigen::Map<Eigen::VectorXd>(v_s.data(), static_cast<Index>(v_s.size()));

  if (has_event) {
    traj.classification = {event_label, std::exp(event_t)};
    traj.end_radius = std::exp(event_t);
    return traj;
  }

  stepper.calc_state(t_end, probe);
  traj.end_radius = r_end;
  traj.u_slope = probe[1] / probe[0];
  traj.v_slope = probe[3] / probe[2];
  traj.u_offset = probe[0] + probe[1] / (n - 2.0);
  const double target_u = profile_slope(report.u_profile, r_end);
  const double target_v = profile_slope(report.v_profile, r_end);
  const bool u_ok = std::abs(traj.u_slope - target_u) <= config.slope_tolerance * std::abs(target_u);
  const bool v_ok = std::abs(traj.v_slope - target_v) <= config.slope_tolerance * std::abs(target_v);
  traj.classification.label = (u_ok && v_ok) ? TrajectoryLabel::Decaying : TrajectoryLabel::NonDecaying;
  return traj;
}

RadialField source_u(const SystemParams& params, const RadialField& u, const RadialField& v) {
  return power_source(v, params.p, u, params.r);
}

RadialField source_v(const SystemParams& params, const RadialField& u, const RadialField& v) {
  return power_source(u, params.q, v, params.s);
}

Residuals compute_residuals(const SystemParams& params, const RadialField& u, const RadialField& v) {
  Residuals res;
  const RadialField fu = source_u(params, u, v);
  const RadialField fv = source_v(params, u, v);

  auto ode = [](const RadialField& w, const RadialField& src) {
    const auto lap = radial_laplacian(w);
    const double floor = 100.0 * w.grid.front();
    const double scale = src.values.cwiseAbs().maxCoeff();
    double worst = 0.0;
    for (Index i = lap.low_accuracy_front + 1; i < lap.low_accuracy_back; ++i) {
      if (w.grid[i] < floor) continue;
      worst = std::max(worst, std::abs(lap.field.values[i] - src.values[i]));
    }
    return scale > 0.0 ? worst / scale : worst;
  };
  res.ode = std::max(ode(u, fu), ode(v, fv));
  res.green_u = max_relative_gap(newton_potential(fu).values, u.values);
  res.green_v = max_relative_gap(newton_potential(fv).values, v.values);
  return res;
}

GroundState assemble_state(const SystemParams& params, const RadialGrid& grid, const Eigen::VectorXd& u_values,
                           const Eigen::VectorXd& v_values, double u0, double v0) {
  const ScalingReport report = require_admissible(params);
  if (u_values.size() != grid.size() || v_values.size() != grid.size()) {
    throw FieldError("state values do not cover the grid");
  }
  if (!(u_values.minCoeff() > 0.0) || !(v_values.minCoeff() > 0.0)) {
    throw FieldError("ground state components must be positive at every node");
  }
  GroundState state;
  state.params = params;
  state.u = make_field(grid, u_values, u0, report.u_profile);
  state.v = make_field(grid, v_values, v0, report.v_profile);
  state.u.validate();
  state.v.validate();
  state.beta_star = v0;
  return state;
}

GroundState bisect_ground_state(const SystemParams& params, const ShootingConfig& shooting, const RadialGrid& grid) {
  require_admissible(params);
  shooting.validate();
  if (grid.dimension() != params.n) throw FieldError("grid dimension does not match n");
  // Classify every trial on the same horizon as the final sampled run.
  ShootingConfig config = shooting;
  config.r_max = std::max(config.r_max, grid.back());

  std::vector<BisectionStep> history;
  auto classify = [&](double beta) {
    const Trajectory t = integrate_radial(params, 1.0, beta, config);
    history.push_back({beta, t.classification.label, t.classification.event_radius});
    return t.classification.label;
  };

  // Small v(0) starves u's source so v dies first; large v(0) kills u.
  double lo = config.beta_lo;
  double hi = config.beta_hi;
  TrajectoryLabel lo_label = classify(lo);
  TrajectoryLabel hi_label = classify(hi);
  int widenings = 0;
  while (!(lo_label == TrajectoryLabel::VHitsZero && hi_label == TrajectoryLabel::UHitsZero)) {
    if (widenings == config.max_widenings) {
      throw SolverError(SolverFailureKind::BracketFailure,
                        "bracket " + format_interval(lo, hi) + " does not separate VHitsZero (" + to_string(lo_label) +
                            ") from UHitsZero (" + to_string(hi_label) + ")",
                        lo, hi);
    }
    ++widenings;
    lo /= config.widen_factor;
    hi *= config.widen_factor;
    lo_label = classify(lo);
    hi_label = classify(hi);
  }

  // Survivors with u settling above its decaying profile lie on the
  // v-extinction side, and vice versa.
  int used = 0;
  while (used < config.max_bisections && hi / lo - 1.0 > 4.0 * std::numeric_limits<double>::epsilon()) {
    const double mid = std::sqrt(lo * hi);
    ++used;
    const Trajectory t = integrate_radial(params, 1.0, mid, config);
    history.push_back({mid, t.classification.label, t.classification.event_radius});
    bool v_side = t.classification.label == TrajectoryLabel::VHitsZero;
    if (!t.classification.hit_zero()) v_side = t.u_offset > 0.0;
    (v_side ? lo : hi) = mid;
  }
  const double window_lo = lo;
  const double window_hi = hi;
  const double beta_star = 0.5 * (window_lo + window_hi);

  Trajectory final = integrate_radial(params, 1.0, beta_star, config, &grid);
  history.push_back({beta_star, final.classification.label, final.classification.event_radius});
  if (final.classification.label != TrajectoryLabel::Decaying || final.u.size() != grid.size()) {
    throw SolverError(SolverFailureKind::NonConvergence,
                      "no Decaying trajectory found; final interval " + format_interval(window_lo, window_hi) +
                          " classifies as " + to_string(final.classification.label),
                      window_lo, window_hi);
  }

  GroundState state = assemble_state(params, grid, final.u, final.v, 1.0, beta_star);
  state.method = SolveMethod::Shooting;
  state.history = std::move(history);
  state.window_lo = window_lo;
  state.window_hi = window_hi;
  state.iterations = static_cast<int>(state.history.size());
  state.clamp_count = final.clamp_count;
  state.residuals = compute_residuals(params, state.u, state.v);
  if (state.residuals.green_u > kGreenResidualTol || state.residuals.green_v > kGreenResidualTol) {
    std::ostringstream os;
    os << "Green residuals " << state.residuals.green_u << ", " << state.residuals.green_v << " exceed "
       << kGreenResidualTol;
    throw SolverError(SolverFailureKind::NonConvergence, os.str(), window_lo, window_hi);
  }
  return state;
}

GroundState picard_solve(const SystemParams& params, const GroundState& initial, const PicardOptions& options) {
  const ScalingReport report = require_admissible(params);
  if (!(options.damping > 0.0 && options.damping <= 1.0)) throw std::invalid_argument("damping must lie in (0, 1]");
  if (options.max_iters < 1) throw std::invalid_argument("max_iters must be positive");
  initial.u.validate();
  initial.v.validate();
  if (!(initial.u.values.minCoeff() > 0.0) || !(initial.v.values.minCoeff() > 0.0)) {
    throw FieldError("Picard seed must be positive");
  }
  const RadialGrid& grid = initial.u.grid;
  if (!grid.same_nodes(initial.v.grid)) throw FieldError("Picard seed components must share a grid");

  // Iterate on shapes normalised to 1 at the origin; the amplitudes solve the
  // two scalar balance equations exactly at every sweep.
  double alpha = initial.u.value_at_zero;
  double beta = initial.v.value_at_zero;
  RadialField su = make_field(grid, initial.u.values / alpha, 1.0, report.u_profile);
  RadialField sv = make_field(grid, initial.v.values / beta, 1.0, report.v_profile);

  const double lam = options.damping;
  const double det = (1.0 - params.r) * (1.0 - params.s) - params.p * params.q;
  GroundState out;
  out.method = SolveMethod::Picard;
  out.converged = false;
  out.status = "max_iters";
  double previous = std::numeric_limits<double>::infinity();
  int growing = 0;

  for (int it = 1; it <= options.max_iters; ++it) {
    const RadialField g1 = newton_potential(source_u(params, su, sv));
    const RadialField g2 = newton_potential(source_v(params, su, sv));
    const double k1 = g1.value_at_zero;
    const double k2 = g2.value_at_zero;
    const double l1 = std::log(k1);
    const double l2 = std::log(k2);
    // (1-r) x - p y = ln k1,  -q x + (1-s) y = ln k2.
    const double x = ((1.0 - params.s) * l1 + params.p * l2) / det;
    const double y = (params.q * l1 + (1.0 - params.r) * l2) / det;
    const double new_alpha = std::exp(x);
    const double new_beta = std::exp(y);

    const Eigen::VectorXd nu = (1.0 - lam) * su.values + lam * g1.values / k1;
    const Eigen::VectorXd nv = (1.0 - lam) * sv.values + lam * g2.values / k2;
    const double change = std::max({max_relative_gap(su.values, nu), max_relative_gap(sv.values, nv),
                                    std::abs(new_alpha - alpha) / new_alpha, std::abs(new_beta - beta) / new_beta});
    out.change_history.push_back(change);
    out.iterations = it;

    su = make_field(grid, nu, 1.0, report.u_profile);
    sv = make_field(grid, nv, 1.0, report.v_profile);
    alpha = new_alpha;
    beta = new_beta;

    if (!std::isfinite(change)) {
      out.status = "diverged";
      break;
    }
    if (change <= options.tolerance) {
      out.converged = true;
      out.status = "converged";
      break;
    }
    growing = change > previous ? growing + 1 : 0;
    previous = change;
    if (growing >= options.divergence_window) {
      out.status = "diverged";
      break;
    }
  }

  GroundState raw = assemble_state(params, grid, alpha * su.values, beta * sv.values, alpha, beta);
  GroundState state = rescale(raw, std::pow(alpha, -report.a / params.n));
  state.method = SolveMethod::Picard;
  state.iterations = out.iterations;
  state.converged = out.converged;
  state.status = out.status;
  state.change_history = std::move(out.change_history);
  if (state.converged &&
      (state.residuals.green_u > kGreenResidualTol || state.residuals.green_v > kGreenResidualTol)) {
    state.converged = false;
    state.status = "residual";
  }
  return state;
}

GroundState rescale(const GroundState& state, double mu) {
  if (!(mu > 0.0) || !std::isfinite(mu)) throw std::invalid_argument("rescale factor must be positive");
  const ScalingReport report = require_admissible(state.params);
  const int n = state.params.n;
  const double fu = std::pow(mu, n / report.a);
  const double fv = std::pow(mu, n / report.b);

  auto transform = [mu](const RadialField& f, double factor) {
    RadialField g = f;
    g.grid = f.grid.scaled(1.0 / mu);
    g.values = factor * f.values;
    g.value_at_zero = factor * f.value_at_zero;
    if (f.tail.log_power == 0.0) {
      g.tail.amplitude = factor * std::pow(mu, -f.tail.exponent) * f.tail.amplitude;
    } else {
      g.tail = matched_tail({f.tail.exponent, f.tail.log_power}, g.grid.back(), g.values[g.size() - 1]);
    }
    return g;
  };

  GroundState out = state;
  out.u = transform(state.u, fu);
  out.v = transform(state.v, fv);
  out.beta_star = fv * state.beta_star;
  out.residuals = compute_residuals(state.params, out.u, out.v);
  return out;
}

}  // namespace lanemden
