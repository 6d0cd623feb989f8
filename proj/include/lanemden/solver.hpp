#ifndef LANEMDEN_SOLVER_HPP
#define LANEMDEN_SOLVER_HPP

#include "lanemden/exponents.hpp"
#include "lanemden/radial_field.hpp"

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace lanemden {

struct ShootingConfig {
  double r_start = 1e-6;
  double r_max = 1e6;
  double ode_tol = 1e-10;
  double beta_lo = 1e-3;
  double beta_hi = 1e3;
  int max_bisections = 200;
  /// Zero-crossing refinement tolerance in t = ln rho.
  double event_tol = 1e-12;
  int max_widenings = 3;
  double widen_factor = 10.0;
  /// Relative tolerance on terminal log-slopes for the Decaying class.
  double slope_tolerance = 0.1;

  void validate() const;
};

enum class TrajectoryLabel { UHitsZero, VHitsZero, NonDecaying, Decaying };

const char* to_string(TrajectoryLabel label);

struct TrajectoryClass {
  TrajectoryLabel label = TrajectoryLabel::Decaying;
  std::optional<double> event_radius;

  bool hit_zero() const { return event_radius.has_value(); }
};

struct Trajectory {
  TrajectoryClass classification;
  /// Samples at the grid nodes reached before the end of integration.
  Eigen::VectorXd rho;
  Eigen::VectorXd u;
  Eigen::VectorXd v;
  double end_radius = 0.0;
  /// Terminal logarithmic slopes d ln u / d ln rho and d ln v / d ln rho.
  double u_slope = 0.0;
  double v_slope = 0.0;
  /// Constant harmonic component of u at the end radius, u + rho u' / (n-2).
  /// It vanishes on the ground state and changes sign across it.
  double u_offset = 0.0;
  std::size_t steps = 0;
  /// Times a negative component was clamped to zero before powering.
  std::size_t clamp_count = 0;
};

enum class SolverFailureKind { BracketFailure, NonConvergence, StepUnderflow };

const char* to_string(SolverFailureKind kind);

class SolverError : public std::runtime_error {
 public:
  SolverError(SolverFailureKind kind, const std::string& what, double lo = 0.0, double hi = 0.0)
      : std::runtime_error(what), kind_(kind), lo_(lo), hi_(hi) {}

  SolverFailureKind kind() const { return kind_; }
  /// Final beta interval for bisection failures.
  double interval_lo() const { return lo_; }
  double interval_hi() const { return hi_; }

 private:
  SolverFailureKind kind_;
  double lo_;
  double hi_;
};

/// Integrates the radial system from the series start and classifies the
/// trajectory. When `grid` is given, u and v are sampled at every node that
/// the integration reaches (nodes below r_start come from the series).
Trajectory integrate_radial(const SystemParams& params, double alpha, double beta, const ShootingConfig& config,
                            const RadialGrid* grid = nullptr);

enum class SolveMethod { Shooting, Picard };

const char* to_string(SolveMethod method);

struct Residuals {
  /// sup |-Lap w - source| / sup |source| over interior nodes, max over u and v.
  double ode = 0.0;
  /// sup |w - Gamma * source| / |w| over the nodes, per component.
  double green_u = 0.0;
  double green_v = 0.0;
};

struct BisectionStep {
  double beta = 0.0;
  TrajectoryLabel label = TrajectoryLabel::Decaying;
  std::optional<double> event_radius;
};

struct GroundState {
  SystemParams params;
  RadialField u;
  RadialField v;
  double beta_star = 0.0;
  Residuals residuals;
  SolveMethod method = SolveMethod::Shooting;

  // Diagnostics.
  std::vector<BisectionStep> history;
  double window_lo = 0.0;
  double window_hi = 0.0;
  int iterations = 0;
  bool converged = true;
  std::string status = "accepted";
  std::size_t clamp_count = 0;
  std::vector<double> change_history;
};

/// Residual contract for accepted states.
inline constexpr double kGreenResidualTol = 1e-3;

/// Recomputes the ODE and Green-identity residuals of (u, v).
Residuals compute_residuals(const SystemParams& params, const RadialField& u, const RadialField& v);

/// Source terms v^p u^r and u^q v^s as fields (tails and origin models included).
RadialField source_u(const SystemParams& params, const RadialField& u, const RadialField& v);
RadialField source_v(const SystemParams& params, const RadialField& u, const RadialField& v);

/// Builds nonnegative fields for (u, v) sampled on `grid`, with tails matched
/// to the regime's decay profiles at the last node.
GroundState assemble_state(const SystemParams& params, const RadialGrid& grid, const Eigen::VectorXd& u_values,
                           const Eigen::VectorXd& v_values, double u0, double v0);

/// Shooting with u(0) = 1, bisecting v(0) between u-extinction and
/// v-extinction. Trajectories that survive to r_max are sorted by the sign of
/// their harmonic offset, so the bisection converges onto the ground state
/// rather than onto an arbitrary point of the surviving window. Throws
/// SolverError on bracket or convergence failure.
GroundState bisect_ground_state(const SystemParams& params, const ShootingConfig& config, const RadialGrid& grid);

struct PicardOptions {
  double damping = 0.5;
  int max_iters = 500;
  double tolerance = 1e-8;
  /// Consecutive growing updates before the iteration is declared divergent.
  int divergence_window = 10;
};

/// Damped fixed-point iteration of the Green representation
///   u = Gamma * (v^p u^r),  v = Gamma * (u^q v^s)
/// seeded with `initial`. The result is normalised with the scaling map so
/// that u(0) = 1. Divergence is reported through `converged` / `status`.
GroundState picard_solve(const SystemParams& params, const GroundState& initial, const PicardOptions& options = {});

/// (mu^{n/a} u(mu x), mu^{n/b} v(mu x)) on the dilated grid.
GroundState rescale(const GroundState& state, double mu);

}  // namespace lanemden

#endif  // LANEMDEN_SOLVER_HPP
