#ifndef LANEMDEN_RADIAL_GREENS_HPP
#define LANEMDEN_RADIAL_GREENS_HPP

// Newtonian potential of radial functions on R^n and its inverse, the radial
// Laplacian, on log-uniform grids.
//
//   (Gamma * f)(rho) = 1/(n-2) [ rho^{2-n} int_0^rho f t^{n-1} dt + int_rho^inf f t dt ]
//
// All radial moments int f t^m dt are split into an origin piece [0, rho_0],
// grid segments, and a closed-form tail piece [rho_{N-1}, inf).

#include "lanemden/radial_field.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <string>

namespace lanemden {

template <typename Scalar>
struct KernelConstants {
  int n = 3;
  Scalar omega = Scalar(0);       // surface area of S^{n-1}
  Scalar gamma_norm = Scalar(0);  // 1 / ((n-2) omega)
};

template <typename Scalar>
KernelConstants<Scalar> kernel_constants(int n) {
  using std::pow;
  using std::tgamma;
  const Scalar pi = std::numbers::pi_v<Scalar>;
  KernelConstants<Scalar> k;
  k.n = n;
  k.omega = Scalar(2) * pow(pi, Scalar(n) / Scalar(2)) / tgamma(Scalar(n) / Scalar(2));
  k.gamma_norm = Scalar(1) / (Scalar(n - 2) * k.omega);
  return k;
}

/// |B_radius| in R^n.
template <typename Scalar>
Scalar ball_volume(int n, Scalar radius) {
  using std::pow;
  return kernel_constants<Scalar>(n).omega / Scalar(n) * pow(radius, Scalar(n));
}

/// How a sampled field is continued between nodes when integrating.
enum class Interpolation {
  /// Fixed-weight fourth-order rule in ln(rho); linear in the field values.
  Smooth,
  /// Log-log linear between same-sign nodes (exact on pure powers), linear
  /// in rho across sign changes or zeros.
  PowerLaw,
};

namespace detail {

/// expm1(x) / x with the removable singularity filled in.
template <typename Scalar>
Scalar expm1_ratio(Scalar x) {
  using std::abs;
  using std::expm1;
  if (abs(x) < Scalar(1e-8)) return Scalar(1) + x / Scalar(2);
  return expm1(x) / x;
}

/// Upper incomplete gamma function Gamma(a, x) for a > 0, x >= 0.
template <typename Scalar>
Scalar upper_incomplete_gamma(Scalar a, Scalar x) {
  using std::abs;
  using std::exp;
  using std::log;
  using std::tgamma;
  const Scalar eps = std::numeric_limits<Scalar>::epsilon();
  const Scalar tiny = std::numeric_limits<Scalar>::min() / eps;
  const Scalar prefactor = exp(-x + a * log(x));
  if (x < a + Scalar(1)) {
    // Series for the lower function.
    Scalar term = Scalar(1) / a;
    Scalar sum = term;
    for (int k = 1; k < 10000; ++k) {
      term *= x / (a + Scalar(k));
      sum += term;
      if (abs(term) < abs(sum) * eps) break;
    }
    return tgamma(a) - prefactor * sum;
  }
  // Modified Lentz evaluation of the continued fraction.
  Scalar b = x + Scalar(1) - a;
  Scalar c = Scalar(1) / tiny;
  Scalar d = Scalar(1) / b;
  Scalar h = d;
  for (int k = 1; k < 10000; ++k) {
    const Scalar an = -Scalar(k) * (Scalar(k) - a);
    b += Scalar(2);
    d = an * d + b;
    if (abs(d) < tiny) d = tiny;
    c = b + an / c;
    if (abs(c) < tiny) c = tiny;
    d = Scalar(1) / d;
    const Scalar delta = d * c;
    h *= delta;
    if (abs(delta - Scalar(1)) < eps) break;
  }
  return prefactor * h;
}

}  // namespace detail

/// int_0^{rho_0} f t^m dt from the field's origin model. +infinity when the
/// origin singularity is not integrable against t^m.
template <typename Scalar>
Scalar origin_moment(const RadialFieldT<Scalar>& f, Scalar m) {
  using std::pow;
  const Scalar r0 = f.grid.front();
  if (f.singular_at_origin()) {
    const Scalar e = m + Scalar(1) - f.origin_power;
    if (!(e > Scalar(0))) return std::numeric_limits<Scalar>::infinity();
    return f.values[0] * pow(r0, m + Scalar(1)) / e;
  }
  const Scalar curvature = (f.values[0] - f.value_at_zero) / (r0 * r0);
  return f.value_at_zero * pow(r0, m + Scalar(1)) / (m + Scalar(1)) +
         curvature * pow(r0, m + Scalar(3)) / (m + Scalar(3));
}

/// int_{rho_{N-1}}^inf f t^m dt from the tail model. Throws when divergent.
template <typename Scalar>
Scalar tail_moment(const RadialFieldT<Scalar>& f, Scalar m) {
  using std::log;
  using std::pow;
  const PowerTail<Scalar>& tail = f.tail;
  if (tail.is_zero()) return Scalar(0);
  const Scalar decay = tail.exponent - m - Scalar(1);
  if (!(decay > Scalar(0))) {
    throw FieldError("tail moment diverges: exponent " + std::to_string(static_cast<double>(tail.exponent)) +
                     " <= " + std::to_string(static_cast<double>(m + Scalar(1))));
  }
  const Scalar edge = f.grid.back();
  if (tail.log_power == Scalar(0)) return tail.amplitude * pow(edge, -decay) / decay;
  const Scalar log_edge = log(edge);
  if (!(log_edge > Scalar(0))) throw FieldError("log-corrected tail requires the grid to extend past rho = 1");
  const Scalar shape = tail.log_power + Scalar(1);
  return tail.amplitude * pow(decay, -shape) * detail::upper_incomplete_gamma(shape, decay * log_edge);
}

/// Integrals of f t^m over each grid segment [rho_i, rho_{i+1}].
template <typename Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, 1> segment_moments(const RadialFieldT<Scalar>& f, Scalar m,
                                                         Interpolation interp) {
  using std::log;
  using std::pow;
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  const Index count = f.size();
  const Scalar h = f.grid.log_step();
  Vector seg(count - 1);

  if (interp == Interpolation::Smooth) {
    // g(t) = f(e^t) e^{(m+1) t}; four-point Lagrange rule on each segment.
    Vector g(count);
    for (Index i = 0; i < count; ++i) g[i] = f.values[i] * pow(f.grid[i], m + Scalar(1));
    const Scalar w = h / Scalar(24);
    seg[0] = w * (Scalar(9) * g[0] + Scalar(19) * g[1] - Scalar(5) * g[2] + g[3]);
    for (Index i = 1; i + 2 < count; ++i) {
      seg[i] = w * (-g[i - 1] + Scalar(13) * g[i] + Scalar(13) * g[i + 1] - g[i + 2]);
    }
    const Index last = count - 2;
    seg[last] = w * (g[last - 2] - Scalar(5) * g[last - 1] + Scalar(19) * g[last] + Scalar(9) * g[last + 1]);
    return seg;
  }

  for (Index i = 0; i + 1 < count; ++i) {
    const Scalar lo = f.values[i];
    const Scalar hi = f.values[i + 1];
    const Scalar a = f.grid[i];
    if ((lo > Scalar(0) && hi > Scalar(0)) || (lo < Scalar(0) && hi < Scalar(0))) {
      const Scalar slope = log(hi / lo) / h;
      const Scalar e = slope + m + Scalar(1);
      seg[i] = lo * pow(a, m + Scalar(1)) * h * detail::expm1_ratio(e * h);
    } else {
      const Scalar b = f.grid[i + 1];
      const Scalar beta = (hi - lo) / (b - a);
      const Scalar alpha = lo - beta * a;
      seg[i] = alpha * (pow(b, m + Scalar(1)) - pow(a, m + Scalar(1))) / (m + Scalar(1)) +
               beta * (pow(b, m + Scalar(2)) - pow(a, m + Scalar(2))) / (m + Scalar(2));
    }
  }
  return seg;
}

/// I_i = int_0^{rho_i} f t^m dt at every node (origin piece included).
template <typename Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, 1> inner_moments(const RadialFieldT<Scalar>& f, Scalar m,
                                                       Interpolation interp = Interpolation::Smooth) {
  const auto seg = segment_moments(f, m, interp);
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> acc(f.size());
  acc[0] = origin_moment(f, m);
  for (Index i = 1; i < f.size(); ++i) acc[i] = acc[i - 1] + seg[i - 1];
  return acc;
}

/// J_i = int_{rho_i}^inf f t^m dt at every node (tail piece included).
template <typename Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, 1> outer_moments(const RadialFieldT<Scalar>& f, Scalar m,
                                                       Interpolation interp = Interpolation::Smooth) {
  const auto seg = segment_moments(f, m, interp);
  const Index count = f.size();
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> acc(count);
  acc[count - 1] = tail_moment(f, m);
  for (Index i = count - 2; i >= 0; --i) acc[i] = acc[i + 1] + seg[i];
  return acc;
}

/// Tolerance used to recognise the borderline tail exponent gamma == n.
inline constexpr double kTailExponentTol = 1e-9;

/// Decaying radial solution w of -Lap w = f, i.e. the Newtonian potential
/// Gamma * f. Requires a tail exponent above 2 (or a vanishing tail).
///
/// The returned tail is the closed-form asymptotic: for gamma > n it is the
/// total mass over (n-2) rho^{n-2}; for 2 < gamma < n it is
/// A rho^{2-gamma} / ((gamma-2)(n-gamma)); at gamma == n the log power
/// increases by one.
template <typename Scalar>
RadialFieldT<Scalar> newton_potential(const RadialFieldT<Scalar>& f) {
  using std::abs;
  using std::pow;
  f.validate();
  if (!(f.grid.front() > Scalar(0))) throw FieldError("negative or zero radius in grid");
  const int n = f.dimension();
  const Scalar nd = Scalar(n);
  const Scalar nm2 = nd - Scalar(2);
  if (!f.tail.is_zero() && !(f.tail.exponent > Scalar(2))) {
    throw FieldError("newton potential needs tail exponent > 2, got " +
                     std::to_string(static_cast<double>(f.tail.exponent)));
  }

  const auto inner = inner_moments(f, nd - Scalar(1));
  const auto outer = outer_moments(f, Scalar(1));
  const Index count = f.size();

  RadialFieldT<Scalar> w;
  w.grid = f.grid;
  w.values.resize(count);
  for (Index i = 0; i < count; ++i) {
    w.values[i] = (pow(f.grid[i], Scalar(2) - nd) * inner[i] + outer[i]) / nm2;
  }
  w.nonnegative = f.nonnegative;

  if (f.singular_at_origin() && f.origin_power >= Scalar(2)) {
    w.value_at_zero = std::numeric_limits<Scalar>::infinity();
    w.origin_power = f.origin_power - Scalar(2);
  } else {
    w.value_at_zero = (origin_moment(f, Scalar(1)) + outer[0]) / nm2;
    w.origin_power = Scalar(0);
  }

  const PowerTail<Scalar>& src = f.tail;
  if (src.is_zero() || src.exponent > nd + Scalar(kTailExponentTol)) {
    const Scalar mass = inner[count - 1] + tail_moment(f, nd - Scalar(1));
    w.tail = {mass / nm2, nm2, Scalar(0)};
  } else if (abs(src.exponent - nd) <= Scalar(kTailExponentTol)) {
    const Scalar kappa = src.log_power + Scalar(1);
    w.tail = {src.amplitude / (nm2 * kappa), nm2, kappa};
  } else {
    const Scalar e = src.exponent;
    w.tail = {src.amplitude / ((e - Scalar(2)) * (nd - e)), e - Scalar(2), src.log_power};
  }
  return w;
}

template <typename Scalar>
struct LaplacianResult {
  RadialFieldT<Scalar> field;
  /// Nodes computed with one-sided stencils (low accuracy).
  Index low_accuracy_front = 0;
  Index low_accuracy_back = 0;
};

/// -Lap f = -(f'' + (n-1)/rho f') on the grid nodes.
///
/// Interior nodes use a three-point stencil in t = ln rho that is exact on
/// both radial harmonics 1 and rho^{2-n}; the first and last nodes use
/// one-sided second-order differences.
template <typename Scalar>
LaplacianResult<Scalar> radial_laplacian(const RadialFieldT<Scalar>& f) {
  using std::abs;
  using std::exp;
  using std::expm1;
  using std::pow;
  const Index count = f.size();
  if (count < 4) throw FieldError("radial laplacian needs at least four nodes");
  const int n = f.dimension();
  const Scalar k = Scalar(n - 2);
  const Scalar h = f.grid.log_step();
  const auto& y = f.values;

  LaplacianResult<Scalar> out;
  RadialFieldT<Scalar>& lap = out.field;
  lap.grid = f.grid;
  lap.values.resize(count);

  // L f = f_tt + (n-2) f_t = e^{-kt} (e^{kt} f_t)_t, with fluxes exact on e^{-kt}.
  const Scalar em1 = expm1(-k * h);
  const Scalar decay = exp(-k * h);
  const Scalar coeff = -k / (h * em1);
  for (Index i = 1; i + 1 < count; ++i) {
    const Scalar lf = coeff * ((y[i + 1] - y[i]) - decay * (y[i] - y[i - 1]));
    lap.values[i] = -lf / (f.grid[i] * f.grid[i]);
  }
  auto one_sided = [&](Index i, int dir) {
    const Scalar f0 = y[i];
    const Scalar f1 = y[i + dir];
    const Scalar f2 = y[i + 2 * dir];
    const Scalar f3 = y[i + 3 * dir];
    const Scalar ft = Scalar(dir) * (-Scalar(3) * f0 + Scalar(4) * f1 - f2) / (Scalar(2) * h);
    const Scalar ftt = (Scalar(2) * f0 - Scalar(5) * f1 + Scalar(4) * f2 - f3) / (h * h);
    return -(ftt + k * ft) / (f.grid[i] * f.grid[i]);
  };
  lap.values[0] = one_sided(0, 1);
  lap.values[count - 1] = one_sided(count - 1, -1);
  out.low_accuracy_front = 0;
  out.low_accuracy_back = count - 1;

  if (f.singular_at_origin()) {
    const Scalar a = f.origin_power;
    lap.origin_power = a + Scalar(2);
    lap.value_at_zero = std::numeric_limits<Scalar>::infinity();
  } else {
    const Scalar r0 = f.grid.front();
    lap.value_at_zero = -Scalar(2 * n) * (y[0] - f.value_at_zero) / (r0 * r0);
  }

  const PowerTail<Scalar>& t = f.tail;
  if (t.is_zero()) {
    lap.tail = {};
  } else if (abs(t.exponent - k) <= Scalar(kTailExponentTol)) {
    // -Lap(rho^{2-n} (ln rho)^kappa) ~ (n-2) kappa rho^{-n} (ln rho)^{kappa-1}.
    if (t.log_power == Scalar(0)) {
      lap.tail = {};
    } else {
      lap.tail = {t.amplitude * k * t.log_power, k + Scalar(2), t.log_power - Scalar(1)};
    }
  } else {
    lap.tail = {t.amplitude * t.exponent * (k - t.exponent), t.exponent + Scalar(2), t.log_power};
  }
  return out;
}

}  // namespace lanemden

#endif  // LANEMDEN_RADIAL_GREENS_HPP
