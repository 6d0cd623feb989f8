#ifndef LANEMDEN_RADIAL_FIELD_HPP
#define LANEMDEN_RADIAL_FIELD_HPP

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>

namespace lanemden {

using Index = Eigen::Index;

/// Raised for malformed grids and fields (non-log-uniform nodes, non-finite
/// samples, sign violations, non-monotone input where monotonicity is required).
class FieldError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Asymptotic model f(rho) ~ amplitude * rho^{-exponent} * (ln rho)^{log_power}
/// used beyond the last grid node. A zero amplitude means the field vanishes
/// identically past the grid.
template <typename Scalar>
struct PowerTail {
  Scalar amplitude = Scalar(0);
  Scalar exponent = Scalar(0);
  Scalar log_power = Scalar(0);

  bool is_zero() const { return amplitude == Scalar(0); }

  Scalar operator()(Scalar rho) const {
    using std::log;
    using std::pow;
    Scalar value = amplitude * pow(rho, -exponent);
    if (log_power != Scalar(0)) value *= pow(log(rho), log_power);
    return value;
  }
};

/// Strictly increasing, log-uniform radii rho_0 < ... < rho_{N-1} in R^n.
template <typename Scalar>
class RadialGridT {
 public:
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  static constexpr Index kMinPoints = 16;

  RadialGridT() = default;

  static RadialGridT log_uniform(Scalar rho_min, Scalar rho_max, Index points, int dimension) {
    using std::exp;
    using std::log;
    if (!(rho_min > Scalar(0)) || !(rho_max > rho_min)) {
      throw FieldError("grid requires 0 < rho_min < rho_max");
    }
    if (points < kMinPoints) throw FieldError("grid requires at least 16 nodes");
    RadialGridT grid;
    grid.dimension_ = dimension;
    grid.log_step_ = (log(rho_max) - log(rho_min)) / Scalar(points - 1);
    grid.nodes_.resize(points);
    const Scalar log_min = log(rho_min);
    for (Index i = 0; i < points; ++i) grid.nodes_[i] = exp(log_min + grid.log_step_ * Scalar(i));
    grid.nodes_[0] = rho_min;
    grid.nodes_[points - 1] = rho_max;
    return grid;
  }

  /// Adopts externally supplied nodes after checking the log-uniform invariant.
  static RadialGridT from_nodes(Vector nodes, int dimension) {
    using std::abs;
    using std::log;
    const Index count = nodes.size();
    if (count < kMinPoints) throw FieldError("grid requires at least 16 nodes");
    if (!(nodes[0] > Scalar(0))) throw FieldError("grid nodes must be positive");
    RadialGridT grid;
    grid.dimension_ = dimension;
    grid.log_step_ = (log(nodes[count - 1]) - log(nodes[0])) / Scalar(count - 1);
    if (!(grid.log_step_ > Scalar(0))) throw FieldError("grid nodes must be strictly increasing");
    for (Index i = 0; i + 1 < count; ++i) {
      const Scalar step = log(nodes[i + 1] / nodes[i]);
      if (!(step > Scalar(0))) {
        throw FieldError("grid nodes not strictly increasing at index " + std::to_string(i + 1));
      }
      if (abs(step - grid.log_step_) > Scalar(1e-12)) {
        throw FieldError("grid is not log-uniform at index " + std::to_string(i + 1));
      }
    }
    grid.nodes_ = std::move(nodes);
    return grid;
  }

  Index size() const { return nodes_.size(); }
  int dimension() const { return dimension_; }
  Scalar log_step() const { return log_step_; }
  const Vector& nodes() const { return nodes_; }
  Scalar operator[](Index i) const { return nodes_[i]; }
  Scalar front() const { return nodes_[0]; }
  Scalar back() const { return nodes_[nodes_.size() - 1]; }

  /// Grid with every node multiplied by `factor` (same log step).
  RadialGridT scaled(Scalar factor) const {
    RadialGridT grid = *this;
    grid.nodes_ *= factor;
    return grid;
  }

  bool same_nodes(const RadialGridT& other) const {
    return dimension_ == other.dimension_ && nodes_.size() == other.nodes_.size() && nodes_ == other.nodes_;
  }

 private:
  Vector nodes_;
  Scalar log_step_ = Scalar(0);
  int dimension_ = 3;
};

/// Radial function sampled on a log grid, with a model at the origin and a
/// power-law tail beyond the last node.
///
/// Near the origin the field is either regular, f(rho) ~ f(0) + c rho^2, or
/// singular with a known power, f(rho) ~ f(rho_0) (rho/rho_0)^{-origin_power}
/// (in which case value_at_zero is +infinity).
template <typename Scalar>
struct RadialFieldT {
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  using Grid = RadialGridT<Scalar>;

  Grid grid;
  Vector values;
  Scalar value_at_zero = Scalar(0);
  Scalar origin_power = Scalar(0);
  PowerTail<Scalar> tail;
  bool nonnegative = false;

  Index size() const { return values.size(); }
  int dimension() const { return grid.dimension(); }
  bool singular_at_origin() const { return origin_power > Scalar(0); }

  /// Checks the sampled values are finite and the declared sign holds.
  void validate() const {
    using std::isfinite;
    if (values.size() != grid.size()) throw FieldError("field has " + std::to_string(values.size()) +
                                                       " values for " + std::to_string(grid.size()) + " nodes");
    for (Index i = 0; i < values.size(); ++i) {
      if (!isfinite(values[i])) throw FieldError("non-finite field value at index " + std::to_string(i));
      if (nonnegative && values[i] < Scalar(0)) {
        throw FieldError("field declared nonnegative has a negative value at index " + std::to_string(i));
      }
    }
    if (!singular_at_origin() && !isfinite(value_at_zero)) {
      throw FieldError("regular field needs a finite value at the origin");
    }
  }

  /// Evaluates the field at any radius using the origin model, piecewise
  /// power-law interpolation between same-sign nodes (linear otherwise), and
  /// the tail model beyond the grid.
  Scalar operator()(Scalar rho) const {
    using std::log;
    using std::pow;
    const Index count = values.size();
    if (rho <= Scalar(0)) return value_at_zero;
    if (rho < grid.front()) {
      if (singular_at_origin()) return values[0] * pow(rho / grid.front(), -origin_power);
      const Scalar ratio = rho / grid.front();
      return value_at_zero + (values[0] - value_at_zero) * ratio * ratio;
    }
    if (rho >= grid.back()) return rho == grid.back() ? values[count - 1] : tail(rho);
    Index i = static_cast<Index>((log(rho) - log(grid.front())) / grid.log_step());
    i = std::clamp<Index>(i, 0, count - 2);
    while (i > 0 && grid[i] > rho) --i;
    while (i + 2 < count && grid[i + 1] <= rho) ++i;
    const Scalar lo = values[i];
    const Scalar hi = values[i + 1];
    if ((lo > Scalar(0) && hi > Scalar(0)) || (lo < Scalar(0) && hi < Scalar(0))) {
      const Scalar frac = log(rho / grid[i]) / grid.log_step();
      return lo * pow(hi / lo, frac);
    }
    return lo + (hi - lo) * (rho - grid[i]) / (grid[i + 1] - grid[i]);
  }
};

using RadialGrid = RadialGridT<double>;
using RadialField = RadialFieldT<double>;
using Tail = PowerTail<double>;

/// Samples `fn` at every node. `at_zero` gives the origin value.
template <typename Scalar, typename Fn>
RadialFieldT<Scalar> sample_field(const RadialGridT<Scalar>& grid, Fn&& fn, Scalar at_zero,
                                  PowerTail<Scalar> tail, bool nonnegative = false) {
  RadialFieldT<Scalar> field;
  field.grid = grid;
  field.values.resize(grid.size());
  for (Index i = 0; i < grid.size(); ++i) field.values[i] = fn(grid[i]);
  field.value_at_zero = at_zero;
  field.tail = tail;
  field.nonnegative = nonnegative;
  return field;
}

/// Field g with g(rho) = f(factor * rho): same values on nodes divided by factor.
template <typename Scalar>
RadialFieldT<Scalar> dilate(const RadialFieldT<Scalar>& f, Scalar factor) {
  using std::pow;
  if (!(factor > Scalar(0))) throw FieldError("dilation factor must be positive");
  RadialFieldT<Scalar> out = f;
  out.grid = f.grid.scaled(Scalar(1) / factor);
  // A rho^{-g} (ln rho)^k at factor*rho ~ A factor^{-g} rho^{-g} (ln rho)^k asymptotically.
  out.tail.amplitude = f.tail.amplitude * pow(factor, -f.tail.exponent);
  return out;
}

/// Linear combination alpha f + beta g on a shared grid. Tails must share
/// exponent and log power unless one amplitude vanishes.
template <typename Scalar>
RadialFieldT<Scalar> combine(Scalar alpha, const RadialFieldT<Scalar>& f, Scalar beta, const RadialFieldT<Scalar>& g) {
  if (!f.grid.same_nodes(g.grid)) throw FieldError("combine requires identical grids");
  if (f.origin_power != g.origin_power) throw FieldError("combine requires matching origin models");
  RadialFieldT<Scalar> out = f;
  out.values = alpha * f.values + beta * g.values;
  out.value_at_zero = alpha * f.value_at_zero + beta * g.value_at_zero;
  out.nonnegative = false;
  if (f.tail.is_zero()) {
    out.tail = g.tail;
    out.tail.amplitude *= beta;
  } else if (g.tail.is_zero()) {
    out.tail.amplitude *= alpha;
  } else {
    if (f.tail.exponent != g.tail.exponent || f.tail.log_power != g.tail.log_power) {
      throw FieldError("combine requires matching tail models");
    }
    out.tail.amplitude = alpha * f.tail.amplitude + beta * g.tail.amplitude;
  }
  return out;
}

}  // namespace lanemden

#endif  // LANEMDEN_RADIAL_FIELD_HPP
