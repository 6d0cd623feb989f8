#ifndef LANEMDEN_ANALYSIS_HPP
#define LANEMDEN_ANALYSIS_HPP

#include "lanemden/exponents.hpp"
#include "lanemden/radial_field.hpp"
#include "lanemden/solver.hpp"

#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace lanemden {

/// f ~ amplitude * rho^{-exponent} * (ln rho)^{log_power} on the fit window.
struct DecayFit {
  double exponent = 0.0;
  double log_power = 0.0;
  double amplitude = 0.0;
  double window_lo = 0.0;
  double window_hi = 0.0;
  /// Root-mean-square residual of ln f.
  double rms_residual = 0.0;
  Index samples = 0;
};

struct FitOptions {
  bool expected_log = false;
  /// Hold the exponent at this value and fit only the remaining terms.
  std::optional<double> fixed_exponent;
  /// Hold the log power (ignored when expected_log is false, where it is 0).
  std::optional<double> fixed_log_power;
  /// Explicit window; defaults to default_fit_window(grid).
  std::optional<std::pair<double, double>> window;
};

/// [rho_1 R^{1/2}, rho_1 R^{9/10}] with R = rho_N / rho_1.
std::pair<double, double> default_fit_window(const RadialGrid& grid);

/// Least-squares fit of ln f = ln A - m ln rho + kappa ln ln rho over the
/// nodes inside the window.
DecayFit estimate_decay(const RadialField& f, const FitOptions& options = {});

/// sup_h h |{|f| > h}|^{1/sigma} for radially nonincreasing |f|. Returns
/// +infinity when the tail or origin model is not in L^{sigma, infinity}.
double lorentz_weak_quasinorm(const RadialField& f, double sigma);

/// sup over centred balls B of |B|^{-1/sigma'} int_B |f|.
double dual_average_norm(const RadialField& f, double sigma);

struct MembershipEntry {
  std::string component;
  double sigma = 0.0;
  double value = 0.0;
};

struct MembershipReport {
  std::vector<MembershipEntry> entries;
  bool all_finite = true;
  /// For the Critical ladder: values grow as sigma decreases to n/(n-2).
  bool ladder_increasing = true;
};

/// sigma_k = n/(n-2) + 2^{-k}, k = 0..6, used for the Critical regime.
std::vector<double> critical_ladder(int n);

MembershipReport membership_report(const GroundState& state);

struct BlowupFit {
  /// Slope of ln ||v||_{sigma,inf} against -ln((n-2) sigma - n).
  double slope = 0.0;
  double prefactor = 0.0;
  std::vector<double> sigmas;
  std::vector<double> norms;
};

BlowupFit critical_blowup_fit(const RadialField& v, const std::vector<double>& ladder);
/// Refuses states outside the Critical regime.
BlowupFit critical_blowup_fit(const GroundState& state, const std::vector<double>& ladder);

struct ComparisonResult {
  /// max of v^{p-s+1}/(p-s+1) - u^{q-r+1}/(q-r+1) over the origin and the nodes.
  double max_violation = 0.0;
  /// Radius of the maximum (0 for the origin).
  double at_radius = 0.0;
};

inline constexpr double kComparisonTol = 1e-8;

ComparisonResult check_comparison(const GroundState& state);

struct EnvelopeReport {
  double sup_ratio_u = 0.0;
  double inf_ratio_u = 0.0;
  double sup_ratio_v = 0.0;
  double inf_ratio_v = 0.0;
};

/// Profile h of v for the regime: rho^{n-2}, rho^{n-2} ln(1+rho)^{-1/(1-s)},
/// or rho^{((n-2)q-2)/(1-s)}.
double envelope_profile(const SystemParams& params, double rho);

EnvelopeReport envelope_report(const GroundState& state);

struct Theorem4Result {
  DecayFit u_fit;
  DecayFit v_fit;
  double measured = 0.0;
  double predicted = 0.0;
  double rel_error = 0.0;
  double threshold = 0.0;
  bool below_threshold = false;
};

inline constexpr double kFitRmsLimit = 0.05;

/// Fits l_u, l_v with the theoretical exponents held fixed and compares
/// l_u^q l_v^{s-1} with the closed-form constant.
Theorem4Result theorem4_check(const GroundState& state);

struct Th4Integral {
  double quadrature = 0.0;
  double closed_form = 0.0;
  double rel_error = 0.0;
};

/// Newton potential of |y|^{(2s - q(n-2))/(1-s)} at |x| = 1 against
/// (1-s)^2 / (((n-2)q-2)(n-(n-2)(q+s))).
Th4Integral verify_th4_integral(const SystemParams& params, Index points = 4097);

struct CheckRecord {
  std::string name;
  double predicted = 0.0;
  double measured = 0.0;
  double rel_error = 0.0;
  double tolerance = 0.0;
  bool pass = false;
};

/// rel_error = |measured - predicted| / |predicted| (absolute when predicted is 0).
CheckRecord make_check(std::string name, double predicted, double measured, double tolerance);
/// One-sided check against a zero target: pass iff measured <= bound.
CheckRecord make_bound_check(std::string name, double measured, double bound);

}  // namespace lanemden

#endif  // LANEMDEN_ANALYSIS_HPP
