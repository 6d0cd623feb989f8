#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "lanemden/field_io.hpp"
#include "lanemden/radial_greens.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

using namespace lanemden;

namespace {

double bubble(double rho) { return 1.0 / std::sqrt(1.0 + rho * rho / 3.0); }

RadialField bubble_source(const RadialGrid& grid) {
  // U^5 ~ 3^{5/2} rho^{-5}.
  return sample_field(grid, [](double r) { return std::pow(bubble(r), 5); }, 1.0, Tail{std::pow(3.0, 2.5), 5.0, 0.0},
                      true);
}

RadialField bubble_field(const RadialGrid& grid) {
  return sample_field(grid, bubble, 1.0, Tail{std::sqrt(3.0), 1.0, 0.0}, true);
}

double max_rel_error(const RadialField& f, double (*exact)(double), double lo, double hi) {
  double worst = 0.0;
  for (Index i = 0; i < f.size(); ++i) {
    if (f.grid[i] < lo || f.grid[i] > hi) continue;
    worst = std::max(worst, std::abs(f.values[i] - exact(f.grid[i])) / std::abs(exact(f.grid[i])));
  }
  return worst;
}

}  // namespace

TEST_CASE("kernel constants use the sphere surface area") {
  CHECK(kernel_constants<double>(3).omega == doctest::Approx(4.0 * std::numbers::pi).epsilon(1e-15));
  CHECK(kernel_constants<double>(4).omega == doctest::Approx(2.0 * std::numbers::pi * std::numbers::pi).epsilon(1e-15));
  CHECK(kernel_constants<double>(5).omega == doctest::Approx(8.0 * std::pow(std::numbers::pi, 2) / 3.0).epsilon(1e-15));
  const auto k = kernel_constants<double>(3);
  CHECK(k.gamma_norm == doctest::Approx(1.0 / (4.0 * std::numbers::pi)).epsilon(1e-15));
  CHECK(ball_volume(3, 1.0) == doctest::Approx(4.0 * std::numbers::pi / 3.0).epsilon(1e-15));
}

TEST_CASE("grid invariants") {
  const RadialGrid g = RadialGrid::log_uniform(1e-4, 1e6, 4096, 3);
  CHECK(g.size() == 4096);
  CHECK(g.front() == 1e-4);
  CHECK(g.back() == 1e6);
  for (Index i = 0; i + 1 < g.size(); ++i) REQUIRE(std::abs(std::log(g[i + 1] / g[i]) - g.log_step()) <= 1e-12);
  CHECK_THROWS_AS(RadialGrid::log_uniform(1e-4, 1e6, 15, 3), FieldError);
  CHECK_THROWS_AS(RadialGrid::log_uniform(-1.0, 1e6, 64, 3), FieldError);
  Eigen::VectorXd nodes = g.nodes();
  nodes[100] *= 1.001;
  CHECK_THROWS_WITH_AS(RadialGrid::from_nodes(nodes, 3), doctest::Contains("log-uniform"), FieldError);
  nodes = g.nodes();
  nodes[100] = nodes[99];
  CHECK_THROWS_WITH_AS(RadialGrid::from_nodes(nodes, 3), doctest::Contains("strictly increasing"), FieldError);
}

TEST_CASE("potential of the unit ball indicator") {
  const RadialGrid g = RadialGrid::log_uniform(1e-4, 1e4, 8193, 3);
  const RadialField f = sample_field(g, [](double r) { return r <= 1.0 + 1e-12 ? 1.0 : 0.0; }, 1.0, Tail{}, true);
  const RadialField w = newton_potential(f);
  CHECK(w.value_at_zero == doctest::Approx(0.5).epsilon(1e-3));
  // Inside: 1/2 - rho^2/6; outside: 1/(3 rho).
  CHECK(w(0.5) == doctest::Approx(0.5 - 0.25 / 6.0).epsilon(1e-3));
  CHECK(w(10.0) == doctest::Approx(1.0 / 30.0).epsilon(1e-3));
  CHECK(w.tail.exponent == 1.0);
  CHECK(w.tail.amplitude == doctest::Approx(1.0 / 3.0).epsilon(1e-3));
}

TEST_CASE("potential of the bubble source reproduces the bubble") {
  const RadialGrid g = RadialGrid::log_uniform(1e-4, 1e6, 4096, 3);
  const RadialField w = newton_potential(bubble_source(g));
  CHECK(w.value_at_zero == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(max_rel_error(w, bubble, 0.0, 100.0) <= 1e-6);
  CHECK(w.tail.exponent == 1.0);
  CHECK(w.tail.amplitude == doctest::Approx(std::sqrt(3.0)).epsilon(1e-6));
}

TEST_CASE("potential of a singular power at the unit sphere") {
  const double e = 30.0 / 7.0;
  const RadialGrid g = RadialGrid::log_uniform(1e-6, 1e6, 4097, 5);
  RadialField f = sample_field(g, [e](double r) { return std::pow(r, -e); }, std::numeric_limits<double>::infinity(),
                               Tail{1.0, e, 0.0}, true);
  f.origin_power = e;
  const RadialField w = newton_potential(f);
  CHECK(w.values[2048] == doctest::Approx(0.6125).epsilon(1e-6));
  CHECK(w.tail.exponent == doctest::Approx(e - 2.0).epsilon(1e-15));
  CHECK(w.tail.amplitude == doctest::Approx(0.6125).epsilon(1e-12));
  CHECK(std::isinf(w.value_at_zero));
}

TEST_CASE("power-law segments are exact on pure powers") {
  const RadialGrid g = RadialGrid::log_uniform(1e-3, 1e3, 64, 3);
  const RadialField f = sample_field(g, [](double r) { return std::pow(r, -0.5); }, 0.0, Tail{}, true);
  const Eigen::VectorXd seg = segment_moments(f, 2.0, Interpolation::PowerLaw);
  for (Index i = 0; i + 1 < g.size(); ++i) {
    const double exact = (std::pow(g[i + 1], 2.5) - std::pow(g[i], 2.5)) / 2.5;
    REQUIRE(seg[i] == doctest::Approx(exact).epsilon(1e-13));
  }
}

TEST_CASE("tail exponent at most two is rejected") {
  const RadialGrid g = RadialGrid::log_uniform(1e-4, 1e6, 256, 3);
  const RadialField f = bubble_field(g);
  CHECK_THROWS_WITH_AS(newton_potential(f), doctest::Contains("tail exponent > 2"), FieldError);
  RadialField two = sample_field(g, [](double r) { return 1.0 / (1.0 + r * r); }, 1.0, Tail{1.0, 2.0, 0.0}, true);
  CHECK_THROWS_AS(newton_potential(two), FieldError);
}

TEST_CASE("potential is linear") {
  const RadialGrid g = RadialGrid::log_uniform(1e-4, 1e6, 2048, 3);
  const RadialField f = bubble_source(g);
  const RadialField h =
      sample_field(g, [](double r) { return std::exp(-r * r) + std::pow(1.0 + r, -5.0); }, 2.0, Tail{1.0, 5.0, 0.0});
  const double alpha = 1.7;
  const double beta = -0.3;
  const RadialField lhs = newton_potential(combine(alpha, f, beta, h));
  const RadialField wf = newton_potential(f);
  const RadialField wh = newton_potential(h);
  double worst = 0.0;
  for (Index i = 0; i < g.size(); ++i) {
    const double rhs = alpha * wf.values[i] + beta * wh.values[i];
    worst = std::max(worst, std::abs(lhs.values[i] - rhs) / std::abs(rhs));
  }
  CHECK(worst <= 1e-12);
}

TEST_CASE("potential of a nonnegative field is positive with a monotone far field") {
  const RadialGrid g = RadialGrid::log_uniform(1e-4, 1e6, 4096, 3);
  const RadialField f = sample_field(g, [](double r) { return std::pow(1.0 + r * r, -3.0); }, 1.0,
                                     Tail{1.0, 6.0, 0.0}, true);
  const RadialField w = newton_potential(f);
  for (Index i = 0; i < g.size(); ++i) REQUIRE(w.values[i] > 0.0);
  // rho w(rho) is nondecreasing once the source is negligible and tends to the tail amplitude.
  Index first = 0;
  while (g[first] < 1.0) ++first;
  for (Index i = first; i + 1 < g.size(); ++i) REQUIRE(g[i + 1] * w.values[i + 1] >= g[i] * w.values[i] * (1.0 - 1e-14));
  CHECK(g.back() * w.values[g.size() - 1] == doctest::Approx(w.tail.amplitude).epsilon(1e-10));
  // Total mass int_0^inf t^2 (1+t^2)^{-3} dt = pi/16.
  CHECK(w.tail.amplitude == doctest::Approx(std::numbers::pi / 16.0).epsilon(1e-8));
}

TEST_CASE("radial laplacian examples") {
  const RadialGrid g = RadialGrid::log_uniform(1e-4, 1e6, 4096, 3);
  const auto lap = radial_laplacian(bubble_field(g));
  double worst = 0.0;
  for (Index i = 1; i + 1 < g.size(); ++i) {
    if (g[i] < 1e-3 || g[i] >= 1e3) continue;
    const double target = std::pow(bubble(g[i]), 5);
    worst = std::max(worst, std::abs(lap.field.values[i] - target) / target);
  }
  CHECK(worst <= 1e-4);
  CHECK(lap.low_accuracy_front == 0);
  CHECK(lap.low_accuracy_back == g.size() - 1);

  // Constants and the fundamental solution are harmonic; scale by the local source size.
  const RadialGrid h = RadialGrid::log_uniform(1e-2, 1e2, 512, 3);
  const auto flat = radial_laplacian(sample_field(h, [](double) { return 2.5; }, 2.5, Tail{}));
  const auto fund = radial_laplacian(sample_field(h, [](double r) { return 1.0 / r; }, 0.0, Tail{1.0, 1.0, 0.0}));
  for (Index i = 1; i + 1 < h.size(); ++i) {
    const double r2 = h[i] * h[i];
    REQUIRE(std::abs(flat.field.values[i]) * r2 <= 1e-9);
    REQUIRE(std::abs(fund.field.values[i]) * r2 * h[i] <= 1e-9);
  }
}

TEST_CASE("laplacian inverts the potential") {
  const RadialGrid g = RadialGrid::log_uniform(1e-4, 1e6, 4096, 3);
  const RadialField f = sample_field(g, [](double r) { return std::exp(-r) + std::pow(1.0 + r * r, -3.0); }, 2.0,
                                     Tail{1.0, 6.0, 0.0}, true);
  const auto back = radial_laplacian(newton_potential(f));
  double worst = 0.0;
  for (Index i = 1; i + 1 < g.size(); ++i) {
    if (g[i] < 1e-3) continue;
    if (g[i] > 10.0) break;
    worst = std::max(worst, std::abs(back.field.values[i] - f.values[i]) / f.values[i]);
  }
  CHECK(worst <= 1e-3);
}

TEST_CASE("long double instantiation") {
  using LGrid = RadialGridT<long double>;
  const LGrid g = LGrid::log_uniform(1e-4L, 1e6L, 4096, 3);
  const auto f = sample_field(
      g, [](long double r) { return std::pow(1.0L + r * r / 3.0L, -2.5L); }, 1.0L,
      PowerTail<long double>{std::pow(3.0L, 2.5L), 5.0L, 0.0L}, true);
  const auto w = newton_potential(f);
  long double worst = 0.0L;
  for (Index i = 0; i < g.size(); ++i) {
    if (g[i] > 100.0L) break;
    const long double exact = 1.0L / std::sqrt(1.0L + g[i] * g[i] / 3.0L);
    worst = std::max(worst, std::abs(w.values[i] - exact) / exact);
  }
  CHECK(static_cast<double>(worst) <= 1e-6);
  CHECK(static_cast<double>(kernel_constants<long double>(3).omega) == doctest::Approx(4.0 * std::numbers::pi));
}

TEST_CASE("field csv round trip is bit exact") {
  const RadialGrid g = RadialGrid::log_uniform(1e-4, 1e8, 1000, 3);
  RadialField f = sample_field(g, [](double r) { return std::pow(r, -1.0 / 3.0) * std::log(std::exp(1.0) + r); },
                               std::numeric_limits<double>::infinity(), Tail{0.123456789012345678, 1.0 / 3.0, 1.0},
                               true);
  f.origin_power = 1.0 / 3.0;
  std::stringstream buf;
  write_field_csv(buf, f);
  const std::string first = buf.str();
  const RadialField back = read_field_csv(buf);
  CHECK(back.grid.same_nodes(f.grid));
  CHECK(back.values == f.values);
  CHECK(std::isinf(back.value_at_zero));
  CHECK(back.origin_power == f.origin_power);
  CHECK(back.tail.amplitude == f.tail.amplitude);
  CHECK(back.tail.exponent == f.tail.exponent);
  CHECK(back.tail.log_power == f.tail.log_power);
  CHECK(back.nonnegative);
  std::stringstream again;
  write_field_csv(again, back);
  CHECK(again.str() == first);
  CHECK(format_double(0.1) == "0.10000000000000001");
}

TEST_CASE("field csv rejects malformed input") {
  std::stringstream empty;
  CHECK_THROWS_AS(read_field_csv(empty), FieldError);
  const RadialGrid g = RadialGrid::log_uniform(1.0, 100.0, 16, 3);
  std::stringstream buf;
  write_field_csv(buf, sample_field(g, [](double r) { return 1.0 / r; }, 0.0, Tail{}));
  std::string text = buf.str();
  text.replace(text.rfind('\n', text.size() - 2) + 1, std::string::npos, "not,a-number\n");
  std::stringstream bad(text);
  CHECK_THROWS_AS(read_field_csv(bad), FieldError);
}
