#include "lanemden/exponents.hpp"

#include <cmath>
#include <limits>
#include <sstream>

namespace lanemden {

namespace {

constexpr double kRegimeTol = 1e-12;
constexpr double kCriticalConditionTol = 1e-10;

// (n-2) q - 2 and n - (n-2)(q+s): the two factors shared by both constants.
double decay_factor(const SystemParams& prm) { return (prm.n - 2) * prm.q - 2.0; }
double gap_factor(const SystemParams& prm) { return prm.n - (prm.n - 2) * (prm.q + prm.s); }

double threshold_value(const SystemParams& prm) {
  if (prm.s == 0.0) return std::numeric_limits<double>::infinity();
  const double nm2 = prm.n - 2.0;
  if (2.0 * prm.q + prm.s >= (prm.n + 2.0) / nm2) return nm2 * nm2 / (4.0 * prm.s);
  const double one_minus_s = 1.0 - prm.s;
  return decay_factor(prm) * gap_factor(prm) / (prm.s * one_minus_s * one_minus_s);
}

double asymptotic_value(const SystemParams& prm) {
  const double one_minus_s = 1.0 - prm.s;
  return decay_factor(prm) * gap_factor(prm) / (one_minus_s * one_minus_s);
}

void require_subcritical(const SystemParams& params, const char* what) {
  validate(params);
  const ScalingReport report = derive_scaling(params);
  if (!report.admissible) {
    throw HypothesisError(std::string(what) + ": a, b > n/(n-2) fails for " + describe(params));
  }
  if (report.regime != Regime::Subcritical) {
    throw HypothesisError(std::string(what) + " is only defined for q + s < n/(n-2); got " +
                          to_string(report.regime) + " for " + describe(params));
  }
}

}  // namespace

void validate(const SystemParams& prm) {
  if (prm.n < 3) throw HypothesisError("n >= 3 violated: n = " + std::to_string(prm.n));
  if (!(prm.p >= 1.0)) throw HypothesisError("p >= 1 violated in " + describe(prm));
  if (!(prm.q >= 1.0)) throw HypothesisError("q >= 1 violated in " + describe(prm));
  if (!(prm.r >= 0.0)) throw HypothesisError("r >= 0 violated in " + describe(prm));
  if (!(prm.s >= 0.0)) throw HypothesisError("s >= 0 violated in " + describe(prm));
  if (!std::isfinite(prm.p) || !std::isfinite(prm.q) || !std::isfinite(prm.r) || !std::isfinite(prm.s)) {
    throw HypothesisError("exponents must be finite in " + describe(prm));
  }
  if (!(prm.p - prm.s >= prm.q - prm.r)) {
    throw HypothesisError("p - s >= q - r violated in " + describe(prm));
  }
  if (!(prm.q - prm.r > -1.0)) throw HypothesisError("q - r > -1 violated in " + describe(prm));
}

const char* to_string(Regime regime) {
  switch (regime) {
    case Regime::Supercritical: return "Supercritical";
    case Regime::Critical: return "Critical";
    case Regime::Subcritical: return "Subcritical";
  }
  return "?";
}

const char* short_label(Regime regime) {
  switch (regime) {
    case Regime::Supercritical: return "Super";
    case Regime::Critical: return "Critical";
    case Regime::Subcritical: return "Sub";
  }
  return "?";
}

double critical_sum(int n) { return static_cast<double>(n) / (n - 2); }

Regime classify_regime(const SystemParams& prm) {
  const double diff = (prm.q + prm.s) - critical_sum(prm.n);
  if (std::abs(diff) <= kRegimeTol) return Regime::Critical;
  return diff > 0 ? Regime::Supercritical : Regime::Subcritical;
}

ScalingReport derive_scaling(const SystemParams& prm) {
  validate(prm);
  ScalingReport rep;
  const double n = prm.n;
  const double det = prm.p * prm.q - (prm.r - 1.0) * (prm.s - 1.0);
  rep.a = n * det / (2.0 * (prm.p - prm.s + 1.0));
  rep.b = n * det / (2.0 * (prm.q - prm.r + 1.0));
  rep.admissible = rep.a > critical_sum(prm.n) && rep.b > critical_sum(prm.n);
  rep.regime = classify_regime(prm);
  rep.u_profile = {n - 2.0, 0.0};

  const double nan = std::numeric_limits<double>::quiet_NaN();
  rep.c_nqs = nan;
  rep.th4_constant = nan;
  switch (rep.regime) {
    case Regime::Supercritical:
      rep.v_profile = {n - 2.0, 0.0};
      break;
    case Regime::Critical:
      rep.v_profile = {n - 2.0, 1.0 / (1.0 - prm.s)};
      break;
    case Regime::Subcritical:
      rep.v_profile = {decay_factor(prm) / (1.0 - prm.s), 0.0};
      if (rep.admissible) {
        rep.c_nqs = threshold_value(prm);
        rep.th4_constant = asymptotic_value(prm);
      }
      break;
  }
  return rep;
}

ScalingReport require_admissible(const SystemParams& params) {
  ScalingReport rep = derive_scaling(params);
  if (!rep.admissible) {
    throw HypothesisError("a, b > n/(n-2) fails (a = " + std::to_string(rep.a) +
                          ", b = " + std::to_string(rep.b) + ") for " + describe(params));
  }
  return rep;
}

IdentityResiduals check_scale_identities(const ScalingReport& rep, const SystemParams& prm) {
  const double two_over_n = 2.0 / prm.n;
  return {std::abs(prm.p / rep.b + prm.r / rep.a - two_over_n - 1.0 / rep.a),
          std::abs(prm.q / rep.a + prm.s / rep.b - two_over_n - 1.0 / rep.b)};
}

CriticalCheck check_critical_condition(const ScalingReport& rep, int n) {
  const double residual = 1.0 / rep.a + 1.0 / rep.b - static_cast<double>(n - 2) / n;
  return {std::abs(residual) <= kCriticalConditionTol, residual};
}

double threshold_constant(const SystemParams& prm) {
  require_subcritical(prm, "threshold constant C_{n,q,s}");
  return threshold_value(prm);
}

double theorem4_constant(const SystemParams& prm) {
  require_subcritical(prm, "asymptotic constant");
  const double gap = gap_factor(prm);
  if (!(gap > 0.0)) {
    throw HypothesisError("asymptotic constant degenerates at q + s = n/(n-2)");
  }
  const double value = asymptotic_value(prm);
  if (prm.s > 0.0 && !(value < threshold_value(prm))) {
    throw std::logic_error("asymptotic constant not below C_{n,q,s} for " + describe(prm));
  }
  return value;
}

SignRequirements sign_requirements(const SystemParams& prm) {
  SignRequirements req;
  req.u_nonnegative = prm.r == 0.0 || (prm.r < 1.0 && prm.s < 1.0);
  req.v_nonnegative = prm.s == 0.0;
  return req;
}

double critical_hyperbola_p(int n, double q, double r, double s) {
  // 2 (p + q - r - s + 2) = (n - 2)(p q - (r - 1)(s - 1)) solved for p.
  const double denom = (n - 2) * q - 2.0;
  if (denom == 0.0) throw HypothesisError("critical hyperbola has no p for (n - 2) q = 2");
  return (2.0 * (q - r - s + 2.0) + (n - 2) * (r - 1.0) * (s - 1.0)) / denom;
}

std::string describe(const SystemParams& prm) {
  std::ostringstream os;
  os.precision(17);
  os << "(n=" << prm.n << ", p=" << prm.p << ", q=" << prm.q << ", r=" << prm.r << ", s=" << prm.s << ")";
  return os.str();
}

}  // namespace lanemden
