#include "lanemden/analysis.hpp"

#include "lanemden/radial_greens.hpp"

#include <Eigen/QR>

#include <algorithm>
#include <cmath>
#include <limits>

namespace lanemden {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kMonotoneTol = 1e-12;
constexpr double kJunctionTol = 1e-6;
constexpr double kExponentTie = 1e-12;

std::string at_index(Index i) { return " at index " + std::to_string(i); }

/// |f| as a field, after checking it is radially nonincreasing.
RadialField monotone_magnitude(const RadialField& f) {
  f.validate();
  RadialField a = f;
  a.values = f.values.cwiseAbs();
  a.value_at_zero = std::abs(f.value_at_zero);
  a.tail.amplitude = std::abs(f.tail.amplitude);
  a.nonnegative = true;
  if (!a.singular_at_origin() && a.values[0] > a.value_at_zero * (1.0 + kMonotoneTol)) {
    throw FieldError("|f| is not nonincreasing" + at_index(0));
  }
  for (Index i = 0; i + 1 < a.size(); ++i) {
    if (a.values[i + 1] > a.values[i] * (1.0 + kMonotoneTol)) {
      throw FieldError("|f| is not nonincreasing" + at_index(i + 1));
    }
  }
  if (!a.tail.is_zero()) {
    const double edge = a.grid.back();
    const double last = a.values[a.size() - 1];
    if (a.tail(edge) > last * (1.0 + kJunctionTol) + std::numeric_limits<double>::min()) {
      throw FieldError("tail model exceeds the last sample; |f| is not nonincreasing" + at_index(a.size() - 1));
    }
    if (a.tail.log_power > a.tail.exponent * std::log(edge)) {
      throw FieldError("tail model is increasing beyond the grid");
    }
  }
  return a;
}

double solid_angle(int n) { return kernel_constants<double>(n).omega; }

}  // namespace

std::pair<double, double> default_fit_window(const RadialGrid& grid) {
  const double span = std::log(grid.back() / grid.front());
  return {grid.front() * std::exp(0.5 * span), grid.front() * std::exp(0.9 * span)};
}

DecayFit estimate_decay(const RadialField& f, const FitOptions& options) {
  f.validate();
  const auto [lo, hi] = options.window.value_or(default_fit_window(f.grid));
  if (!(lo > 0.0 && hi > lo)) throw FieldError("fit window must satisfy 0 < lo < hi");
  const double slack = 1e-12;
  std::vector<Index> idx;
  for (Index i = 0; i < f.size(); ++i) {
    if (f.grid[i] >= lo * (1.0 - slack) && f.grid[i] <= hi * (1.0 + slack)) idx.push_back(i);
  }
  const bool fit_m = !options.fixed_exponent.has_value();
  const bool use_log = options.expected_log;
  const bool fit_k = use_log && !options.fixed_log_power.has_value();
  const Index cols = 1 + (fit_m ? 1 : 0) + (fit_k ? 1 : 0);
  const Index rows = static_cast<Index>(idx.size());
  if (rows < cols + 1) throw FieldError("fit window holds too few nodes");

  Eigen::MatrixXd design(rows, cols);
  Eigen::VectorXd target(rows);
  Eigen::VectorXd lr(rows);
  Eigen::VectorXd llr(rows);
  for (Index k = 0; k < rows; ++k) {
    const Index i = idx[static_cast<std::size_t>(k)];
    const double value = f.values[i];
    if (!(value > 0.0)) throw FieldError("non-positive sample in the fit window" + at_index(i));
    lr[k] = std::log(f.grid[i]);
    if (use_log) {
      if (!(lr[k] > 0.0)) throw FieldError("log-corrected fit needs the window beyond rho = 1");
      llr[k] = std::log(lr[k]);
    } else {
      llr[k] = 0.0;
    }
    double y = std::log(value);
    Index c = 0;
    design(k, c++) = 1.0;
    if (fit_m) {
      design(k, c++) = -lr[k];
    } else {
      y += *options.fixed_exponent * lr[k];
    }
    if (fit_k) {
      design(k, c++) = llr[k];
    } else if (use_log) {
      y -= *options.fixed_log_power * llr[k];
    }
    target[k] = y;
  }

  const Eigen::VectorXd coef = design.colPivHouseholderQr().solve(target);
  DecayFit fit;
  Index c = 0;
  fit.amplitude = std::exp(coef[c++]);
  fit.exponent = fit_m ? coef[c++] : *options.fixed_exponent;
  fit.log_power = fit_k ? coef[c++] : (use_log ? *options.fixed_log_power : 0.0);
  fit.window_lo = lo;
  fit.window_hi = hi;
  fit.samples = rows;
  fit.rms_residual = std::sqrt((design * coef - target).squaredNorm() / static_cast<double>(rows));
  return fit;
}

double lorentz_weak_quasinorm(const RadialField& f, double sigma) {
  if (!(sigma > 1.0)) throw std::invalid_argument("sigma must exceed 1");
  const RadialField a = monotone_magnitude(f);
  const int n = a.dimension();
  const double k = n / sigma;
  const double c = std::pow(solid_angle(n) / n, 1.0 / sigma);
  const Index count = a.size();

  // sup_h h mu(h)^{1/sigma} equals c sup_rho |f(rho)| rho^{n/sigma}.
  double best = 0.0;
  auto consider = [&](double value) { best = std::max(best, value); };

  const double r0 = a.grid.front();
  if (a.singular_at_origin()) {
    if (a.origin_power > k + kExponentTie) return kInf;
  } else {
    const double curvature = (a.values[0] - a.value_at_zero) / (r0 * r0);
    if (curvature < 0.0) {
      const double rho2 = -k * a.value_at_zero / ((k + 2.0) * curvature);
      if (rho2 < r0 * r0) consider((a.value_at_zero + curvature * rho2) * std::pow(rho2, 0.5 * k));
    }
  }

  for (Index i = 0; i < count; ++i) consider(a.values[i] * std::pow(a.grid[i], k));
  for (Index i = 0; i + 1 < count; ++i) {
    const double lo = a.values[i];
    const double hi = a.values[i + 1];
    if (lo > 0.0 && hi > 0.0) continue;  // power-law segments peak at an end node
    if (lo > 0.0 && hi == 0.0) {
      const double b = a.grid[i + 1];
      const double peak = k * b / (k + 1.0);
      if (peak > a.grid[i] && peak < b) consider(lo * (b - peak) / (b - a.grid[i]) * std::pow(peak, k));
    }
  }

  if (!a.tail.is_zero()) {
    const double amp = a.tail.amplitude;
    const double kappa = a.tail.log_power;
    const double d = a.tail.exponent - k;
    if (d < -kExponentTie) return kInf;
    if (d <= kExponentTie) {
      if (kappa > 0.0) return kInf;
      consider(amp);
    } else if (kappa > 0.0) {
      const double peak_log = kappa / d;
      if (peak_log > std::log(a.grid.back())) consider(amp * std::exp(-kappa) * std::pow(peak_log, kappa));
    }
  }
  return c * best;
}

double dual_average_norm(const RadialField& f, double sigma) {
  if (!(sigma > 1.0)) throw std::invalid_argument("sigma must exceed 1");
  const RadialField a = monotone_magnitude(f);
  const int n = a.dimension();
  const double nd = n;
  const double omega = solid_angle(n);
  const double inv_dual = (sigma - 1.0) / sigma;  // 1/sigma'
  const Index count = a.size();

  if (a.singular_at_origin() && a.origin_power > nd / sigma + kExponentTie) return kInf;

  const Eigen::VectorXd inner = inner_moments(a, nd - 1.0, Interpolation::PowerLaw);
  auto average = [&](long double integral, long double radius) {
    const long double volume = static_cast<long double>(omega) * std::pow(radius, static_cast<long double>(n)) / nd;
    return static_cast<double>(static_cast<long double>(omega) * integral / std::pow(volume, inv_dual));
  };

  double best = 0.0;
  for (Index i = 0; i < count; ++i) best = std::max(best, average(inner[i], a.grid[i]));

  if (!a.tail.is_zero()) {
    const double amp = a.tail.amplitude;
    const double gamma = a.tail.exponent;
    const double kappa = a.tail.log_power;
    const double d = gamma - nd / sigma;
    if (d < -kExponentTie || (std::abs(d) <= kExponentTie && kappa > 0.0)) return kInf;
    if (std::abs(d) <= kExponentTie) {
      best = std::max(best, amp * omega / (nd - gamma) / std::pow(omega / nd, inv_dual));
    }
    // Extend the ball radius over 40 decades beyond the grid with an
    // 8-point Gauss-Legendre rule in x = ln t on each twentieth of a decade.
    static constexpr long double gx[4] = {0.1834346424956498049394761L, 0.5255324099163289858177390L,
                                          0.7966664774136267395915539L, 0.9602898564975362316835609L};
    static constexpr long double gw[4] = {0.3626837833783619829651504L, 0.3137066458778872873379622L,
                                          0.2223810344533744705443560L, 0.1012285362903762591525314L};
    const long double step = std::log(10.0L) / 20.0L;
    long double x0 = std::log(static_cast<long double>(a.grid.back()));
    long double integral = inner[count - 1];
    auto integrand = [&](long double x) {
      long double v = amp * std::exp((nd - gamma) * x);
      if (kappa != 0.0) v *= std::pow(x, static_cast<long double>(kappa));
      return v;
    };
    if (kappa == 0.0 || x0 > 0.0L) {
      for (int j = 0; j < 800; ++j) {
        const long double mid = x0 + 0.5L * step;
        long double seg = 0.0L;
        for (int g = 0; g < 4; ++g) {
          seg += gw[g] * (integrand(mid - 0.5L * step * gx[g]) + integrand(mid + 0.5L * step * gx[g]));
        }
        integral += 0.5L * step * seg;
        x0 += step;
        best = std::max(best, average(integral, std::exp(x0)));
      }
    }
  }
  return best;
}

std::vector<double> critical_ladder(int n) {
  std::vector<double> ladder;
  const double base = critical_sum(n);
  for (int k = 0; k <= 6; ++k) ladder.push_back(base + std::ldexp(1.0, -k));
  return ladder;
}

MembershipReport membership_report(const GroundState& state) {
  const SystemParams& params = state.params;
  const ScalingReport report = require_admissible(params);
  const int n = params.n;
  MembershipReport out;
  const double base = critical_sum(n);
  out.entries.push_back({"u", base, lorentz_weak_quasinorm(state.u, base)});
  switch (report.regime) {
    case Regime::Supercritical:
      out.entries.push_back({"v", base, lorentz_weak_quasinorm(state.v, base)});
      break;
    case Regime::Subcritical: {
      const double sigma = n * (1.0 - params.s) / ((n - 2) * params.q - 2.0);
      out.entries.push_back({"v", sigma, lorentz_weak_quasinorm(state.v, sigma)});
      break;
    }
    case Regime::Critical: {
      double previous = 0.0;
      for (double sigma : critical_ladder(n)) {
        const double value = lorentz_weak_quasinorm(state.v, sigma);
        if (!(value > previous)) out.ladder_increasing = false;
        previous = value;
        out.entries.push_back({"v", sigma, value});
      }
      break;
    }
  }
  for (const auto& e : out.entries) out.all_finite = out.all_finite && std::isfinite(e.value);
  return out;
}

BlowupFit critical_blowup_fit(const RadialField& v, const std::vector<double>& ladder) {
  if (ladder.size() < 4) throw std::invalid_argument("blow-up fit needs at least four sigma values");
  const int n = v.dimension();
  BlowupFit fit;
  Eigen::MatrixXd design(static_cast<Index>(ladder.size()), 2);
  Eigen::VectorXd target(static_cast<Index>(ladder.size()));
  for (std::size_t k = 0; k < ladder.size(); ++k) {
    const double sigma = ladder[k];
    const double gap = (n - 2) * sigma - n;
    if (!(gap > 0.0)) throw std::invalid_argument("ladder values must exceed n/(n-2)");
    const double norm = lorentz_weak_quasinorm(v, sigma);
    if (!std::isfinite(norm) || !(norm > 0.0)) throw FieldError("quasinorm on the ladder is not finite and positive");
    fit.sigmas.push_back(sigma);
    fit.norms.push_back(norm);
    design(static_cast<Index>(k), 0) = 1.0;
    design(static_cast<Index>(k), 1) = -std::log(gap);
    target[static_cast<Index>(k)] = std::log(norm);
  }
  const Eigen::VectorXd coef = design.colPivHouseholderQr().solve(target);
  fit.prefactor = std::exp(coef[0]);
  fit.slope = coef[1];
  return fit;
}

BlowupFit critical_blowup_fit(const GroundState& state, const std::vector<double>& ladder) {
  require_admissible(state.params);
  if (classify_regime(state.params) != Regime::Critical) {
    throw HypothesisError("blow-up fit applies to the Critical regime only; got " +
                          std::string(to_string(classify_regime(state.params))));
  }
  return critical_blowup_fit(state.v, ladder);
}

ComparisonResult check_comparison(const GroundState& state) {
  const SystemParams& params = state.params;
  if (params.p < params.s) throw HypothesisError("comparison requires p >= s");
  state.u.validate();
  state.v.validate();
  if (!state.u.grid.same_nodes(state.v.grid)) throw FieldError("u and v must share a grid");
  if (state.u.values.minCoeff() < 0.0 || state.u.value_at_zero < 0.0) throw FieldError("comparison requires u >= 0");
  const double ev = params.p - params.s + 1.0;
  const double eu = params.q - params.r + 1.0;
  auto gap = [&](double u, double v) { return std::pow(std::abs(v), ev) / ev - std::pow(u, eu) / eu; };

  ComparisonResult out;
  out.max_violation = gap(state.u.value_at_zero, state.v.value_at_zero);
  out.at_radius = 0.0;
  for (Index i = 0; i < state.u.size(); ++i) {
    const double g = gap(state.u.values[i], state.v.values[i]);
    if (g > out.max_violation) {
      out.max_violation = g;
      out.at_radius = state.u.grid[i];
    }
  }
  return out;
}

double envelope_profile(const SystemParams& params, double rho) {
  const int n = params.n;
  switch (classify_regime(params)) {
    case Regime::Supercritical: return std::pow(rho, n - 2);
    case Regime::Critical: return std::pow(rho, n - 2) * std::pow(std::log1p(rho), -1.0 / (1.0 - params.s));
    case Regime::Subcritical: return std::pow(rho, ((n - 2) * params.q - 2.0) / (1.0 - params.s));
  }
  return 0.0;
}

namespace {

/// lim rho->inf of tail(rho) rho^{e} (ln rho)^{-kappa}.
double tail_ratio_limit(const Tail& tail, double e, double kappa) {
  if (tail.is_zero()) return 0.0;
  const double de = tail.exponent - e;
  if (de > kExponentTie) return 0.0;
  if (de < -kExponentTie) return kInf;
  const double dk = tail.log_power - kappa;
  if (dk > kExponentTie) return kInf;
  if (dk < -kExponentTie) return 0.0;
  return std::abs(tail.amplitude);
}

}  // namespace

EnvelopeReport envelope_report(const GroundState& state) {
  const SystemParams& params = state.params;
  const ScalingReport report = require_admissible(params);
  state.u.validate();
  state.v.validate();
  if (!(state.u.values.minCoeff() > 0.0) || !(state.v.values.minCoeff() > 0.0)) {
    throw FieldError("envelope report requires positive fields");
  }
  const int n = params.n;
  EnvelopeReport out;
  out.sup_ratio_u = out.inf_ratio_u = state.u.value_at_zero;
  out.sup_ratio_v = out.inf_ratio_v = state.v.value_at_zero;
  auto update = [](double value, double& sup, double& inf) {
    sup = std::max(sup, value);
    inf = std::min(inf, value);
  };
  for (Index i = 0; i < state.u.size(); ++i) {
    const double rho = state.u.grid[i];
    update(state.u.values[i] * (1.0 + std::pow(rho, n - 2)), out.sup_ratio_u, out.inf_ratio_u);
    update(state.v.values[i] * (1.0 + envelope_profile(params, rho)), out.sup_ratio_v, out.inf_ratio_v);
  }
  // h ~ rho^{m} (ln rho)^{-kappa} at infinity in every regime.
  update(tail_ratio_limit(state.u.tail, n - 2.0, 0.0), out.sup_ratio_u, out.inf_ratio_u);
  update(tail_ratio_limit(state.v.tail, report.v_profile.exponent, report.v_profile.log_power), out.sup_ratio_v,
         out.inf_ratio_v);
  return out;
}

Theorem4Result theorem4_check(const GroundState& state) {
  const SystemParams& params = state.params;
  const ScalingReport report = require_admissible(params);
  if (report.regime != Regime::Subcritical) {
    throw HypothesisError("theorem4_check applies to the Subcritical regime only; got " +
                          std::string(to_string(report.regime)));
  }
  Theorem4Result out;
  FitOptions fu;
  fu.fixed_exponent = report.u_profile.exponent;
  FitOptions fv;
  fv.fixed_exponent = report.v_profile.exponent;
  out.u_fit = estimate_decay(state.u, fu);
  out.v_fit = estimate_decay(state.v, fv);
  if (out.u_fit.rms_residual > kFitRmsLimit || out.v_fit.rms_residual > kFitRmsLimit) {
    throw FieldError("decay fits are unreliable (rms residual above 0.05)");
  }
  out.measured = std::pow(out.u_fit.amplitude, params.q) * std::pow(out.v_fit.amplitude, params.s - 1.0);
  out.predicted = theorem4_constant(params);
  out.rel_error = std::abs(out.measured - out.predicted) / out.predicted;
  out.threshold = threshold_constant(params);
  out.below_threshold = out.measured < out.threshold;
  return out;
}

Th4Integral verify_th4_integral(const SystemParams& params, Index points) {
  Th4Integral out;
  out.closed_form = 1.0 / theorem4_constant(params);
  const int n = params.n;
  const double e = (params.q * (n - 2) - 2.0 * params.s) / (1.0 - params.s);
  if (points % 2 == 0) ++points;
  const RadialGrid grid = RadialGrid::log_uniform(1e-6, 1e6, points, n);
  RadialField f = sample_field(
      grid, [e](double t) { return std::pow(t, -e); }, kInf, Tail{1.0, e, 0.0}, true);
  f.origin_power = e;
  const RadialField w = newton_potential(f);
  const Index mid = (points - 1) / 2;
  // w is an exact power law, so rescale the node nearest 1 back to rho = 1.
  out.quadrature = w.values[mid] * std::pow(grid[mid], e - 2.0);
  out.rel_error = std::abs(out.quadrature - out.closed_form) / out.closed_form;
  return out;
}

CheckRecord make_check(std::string name, double predicted, double measured, double tolerance) {
  CheckRecord r;
  r.name = std::move(name);
  r.predicted = predicted;
  r.measured = measured;
  r.rel_error = predicted != 0.0 ? std::abs(measured - predicted) / std::abs(predicted) : std::abs(measured);
  r.tolerance = tolerance;
  r.pass = r.rel_error <= tolerance;
  return r;
}

CheckRecord make_bound_check(std::string name, double measured, double bound) {
  CheckRecord r;
  r.name = std::move(name);
  r.predicted = 0.0;
  r.measured = measured;
  r.rel_error = std::max(measured, 0.0);
  r.tolerance = bound;
  r.pass = measured <= bound;
  return r;
}

}  // namespace lanemden
