#ifndef LANEMDEN_EXPONENTS_HPP
#define LANEMDEN_EXPONENTS_HPP

#include <stdexcept>
#include <string>

namespace lanemden {

/// Raised when an exponent tuple violates the standing hypotheses
/// (n >= 3, p,q >= 1, r,s >= 0, p - s >= q - r > -1) or when an operation
/// is asked for a constant outside the regime where it is defined.
class HypothesisError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Exponent tuple of the system
///   -Lap u = v^p u^r,   -Lap v = u^q v^s   in R^n.
struct SystemParams {
  int n = 3;
  double p = 1.0;
  double q = 1.0;
  double r = 0.0;
  double s = 0.0;
};

/// Throws HypothesisError naming the first violated inequality.
void validate(const SystemParams& params);

enum class Regime { Supercritical, Critical, Subcritical };

const char* to_string(Regime regime);
const char* short_label(Regime regime);

/// Decay model rho^{-exponent} (ln rho)^{log_power}.
struct DecayProfile {
  double exponent = 0.0;
  double log_power = 0.0;
};

struct ScalingReport {
  double a = 0.0;
  double b = 0.0;
  bool admissible = false;
  Regime regime = Regime::Supercritical;
  DecayProfile u_profile;
  DecayProfile v_profile;
  /// +infinity when s == 0; NaN outside the subcritical regime.
  double c_nqs = 0.0;
  /// NaN outside the subcritical regime.
  double th4_constant = 0.0;
};

/// n / (n - 2), the threshold that separates the three regimes.
double critical_sum(int n);

/// Regime of q + s against n/(n-2). Ties within 1e-12 classify as Critical.
Regime classify_regime(const SystemParams& params);

/// Computes (a, b), regime, decay profiles and the subcritical constants.
/// Inadmissible tuples (a or b <= n/(n-2)) still get a and b filled in so
/// sweeps can report them; `admissible` is false in that case.
ScalingReport derive_scaling(const SystemParams& params);

/// Throws HypothesisError unless derive_scaling(params).admissible.
ScalingReport require_admissible(const SystemParams& params);

struct IdentityResiduals {
  double first = 0.0;   // |p/b + r/a - 2/n - 1/a|
  double second = 0.0;  // |q/a + s/b - 2/n - 1/b|
};

IdentityResiduals check_scale_identities(const ScalingReport& report, const SystemParams& params);

struct CriticalCheck {
  bool holds = false;
  double residual = 0.0;  // 1/a + 1/b - (n-2)/n
};

CriticalCheck check_critical_condition(const ScalingReport& report, int n);

/// Upper bound on l_u^q l_v^{s-1} below which radial symmetry follows in
/// the subcritical regime. +infinity when s == 0.
double threshold_constant(const SystemParams& params);

/// Closed-form value of l_u^q l_v^{s-1} for power-like subcritical solutions.
double theorem4_constant(const SystemParams& params);

struct SignRequirements {
  bool u_nonnegative = false;
  bool v_nonnegative = false;
};

SignRequirements sign_requirements(const SystemParams& params);

/// Value of p placing (n, p, q, r, s) on the hyperbola 1/a + 1/b = (n-2)/n.
/// Requires (n - 2) q != 2.
double critical_hyperbola_p(int n, double q, double r, double s);

std::string describe(const SystemParams& params);

}  // namespace lanemden

#endif  // LANEMDEN_EXPONENTS_HPP
