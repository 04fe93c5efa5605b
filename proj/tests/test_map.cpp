#include <cmath>
#include <random>

#include "doctest.h"
#include "slowrec/map.hpp"

using namespace slowrec;

namespace {

// Reference Lorenz map at a = 0.6: s(u) = 0.7 u^a + 0.3 u^(2a) on each branch.
double lorenz_ref(double x, double a) {
  auto s = [a](double u) { return 0.7 * std::pow(u, a) + 0.3 * std::pow(u, 2.0 * a); };
  return x < 0.5 ? 1.0 - s(1.0 - 2.0 * x) : s(2.0 * x - 1.0);
}

PiecewiseMap single_point_map() {
  // D = {0+} on the identity-doubled line; only used for distance formulas.
  Branch b;
  b.lo = 0.0;
  b.hi = 1.0;
  b.value_lo = 0.0;
  b.value_hi = 1.0;
  OneSidedPoint p;
  p.location = 0.0;
  p.side = Side::plus;
  return PiecewiseMap("line", {b}, {p});
}

}  // namespace

TEST_CASE("doubling map values") {
  auto f = make_doubling_map();
  CHECK(f.evaluate(0.3) == doctest::Approx(0.6).epsilon(1e-15));
  CHECK(f.evaluate(0.75) == 0.5);
  CHECK(f.derivative(0.3) == 2.0);
  CHECK(f.derivative(0.9) == 2.0);
  CHECK(f.sigma() == 2.0);
  CHECK_FALSE(f.has_singular());
}

TEST_CASE("evaluate rejects points of D") {
  auto f = make_doubling_map();
  CHECK_THROWS_AS(f.evaluate(0.5), SingularPoint);
  CHECK_THROWS_AS(f.evaluate(0.5 + 1e-15), SingularPoint);
  CHECK_THROWS_AS(f.evaluate(0.0), SingularPoint);
  CHECK_NOTHROW(f.evaluate(0.5 + 1e-12));
}

TEST_CASE("lorenz map matches the closed form") {
  auto f = make_lorenz_map(0.6);
  CHECK(f.evaluate(1.0) == 1.0);
  CHECK(f.evaluate(0.0) == 0.0);
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int k = 0; k < 1000; ++k) {
    double x = u(rng);
    if (std::fabs(x - 0.5) < 1e-9) continue;
    CHECK(f.evaluate(x) == doctest::Approx(lorenz_ref(x, 0.6)).epsilon(1e-13));
  }
  for (auto i : f.singular_points()) CHECK(f.point(i).order == 0.6);
  CHECK(f.beta0() == 0.6);
  CHECK(f.beta1() == 0.6);
}

TEST_CASE("power branch derivative") {
  Branch b;
  b.lo = 0.0;
  b.hi = 1.0;
  b.kind = BranchKind::power;
  b.exponent = 0.5;
  b.weight = 1.0;
  CHECK(b.evaluate(0.25) == doctest::Approx(0.5));
  CHECK(b.derivative(0.25) == doctest::Approx(1.0));
  CHECK(b.inverse(0.5) == doctest::Approx(0.25));
}

TEST_CASE("derivative blows up toward the singularity") {
  auto f = make_lorenz_map(0.6);
  double prev = 0.0;
  for (int k = 3; k <= 10; ++k) {
    double d = std::fabs(f.derivative(0.5 + std::pow(10.0, -k)));
    CHECK(d > prev);
    prev = d;
  }
  prev = 0.0;
  for (int k = 3; k <= 10; ++k) {
    double d = std::fabs(f.derivative(0.5 - std::pow(10.0, -k)));
    CHECK(d > prev);
    prev = d;
  }
}

TEST_CASE("derivative agrees with centred differences") {
  for (double alpha : {0.3, 0.6, 0.8}) {
    auto f = make_lorenz_map(alpha);
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const double h = 1e-6;
    int tested = 0;
    for (int k = 0; k < 10000; ++k) {
      double x = u(rng);
      if (f.distance_to_boundary(x) < 1e3 * h || x < h || x > 1.0 - h) continue;
      double fd = (f.evaluate(x + h) - f.evaluate(x - h)) / (2 * h);
      double d = f.distance_to_boundary(x);
      // second derivative scales like d^(alpha-2); bound the centred-difference error by it
      double tol = 10.0 * h * h * std::pow(d, alpha - 3.0) + 1e-7;
      CHECK(std::fabs(f.derivative(x) - fd) <= tol);
      ++tested;
    }
    CHECK(tested > 9000);
  }
}

TEST_CASE("inverse round trip on every preset") {
  for (const auto& f : {make_lorenz_map(0.6), make_lorenz_map(0.25), make_connected_map(0.6, 1),
                        make_connected_map(0.4, 2), make_tent_map()}) {
    for (const auto& b : f.branches()) {
      for (int k = 1; k < 200; ++k) {
        double x = b.lo + (b.hi - b.lo) * k / 200.0;
        CHECK(b.inverse(b.evaluate(x)) == doctest::Approx(x).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("truncated distance cases") {
  auto f = single_point_map();
  TruncationParams p{0.1};
  CHECK(truncated_distance(0.05, f, p) == doctest::Approx(0.05));
  CHECK(truncated_distance(0.15, f, p) == doctest::Approx(0.55));
  CHECK(truncated_distance(0.5, f, p) == 1.0);
  CHECK(recurrence_observable(0.05, f, p) == doctest::Approx(2.995732273553991));
  CHECK(recurrence_observable(0.5, f, p) == 0.0);
  CHECK(recurrence_observable(0.2 - 1e-12, f, p) < 1e-10);
  CHECK(truncated_distance(0.0, f, p) == 0.0);
  CHECK_THROWS_AS(recurrence_observable(0.0, f, p), InfiniteRecurrence);
}

TEST_CASE("truncated distance is continuous") {
  auto f = make_lorenz_map(0.6);
  TruncationParams p{0.07};
  double prev = truncated_distance(0.0, f, p);
  double worst = 0.0;
  const int n = 100000;
  for (int k = 1; k <= n; ++k) {
    double x = k / double(n);
    double v = truncated_distance(x, f, p);
    worst = std::max(worst, std::fabs(v - prev));
    prev = v;
  }
  // slope is at most (1-delta)/delta, so adjacent grid values differ by < 1e-5/0.07*0.93
  CHECK(worst <= (1.0 - p.delta) / p.delta / n + 1e-12);
  // case boundaries
  for (double d : {p.delta, 2 * p.delta}) {
    double l = truncate_distance(d - 1e-12, p.delta), r = truncate_distance(d + 1e-12, p.delta);
    CHECK(std::fabs(l - r) < 1e-9);
  }
}

TEST_CASE("birkhoff sums") {
  auto f = make_doubling_map();
  CHECK(birkhoff_sum(f, [](double) { return 1.0; }, 0.3, 7) == 7.0);
  CHECK(birkhoff_sum(f, [](double x) { return x; }, 1.0 / 7.0, 3) ==
        doctest::Approx(1.0).epsilon(1e-14));
  TruncationParams p{0.1};
  auto g = [&](double x) { return recurrence_observable(x, f, p); };
  // 0.3 is 0.2 from 1/2; 0.6 is 0.1 from 1/2.
  CHECK(birkhoff_sum(f, g, 0.3, 2) == doctest::Approx(-std::log(0.1)));
  CHECK(birkhoff_sum(f, g, 0.3, 1) == 0.0);
  try {
    birkhoff_sum(f, [](double x) { return x; }, 0.125, 5);
    FAIL("expected OrbitHitSingular");
  } catch (const OrbitHitSingular& e) {
    CHECK(e.iterate() == 2);
  }
}

TEST_CASE("birkhoff sum is additive") {
  auto f = make_lorenz_map(0.6);
  auto g1 = [](double x) { return std::sin(7 * x); };
  auto g2 = [](double x) { return x * x; };
  for (double x : {0.1234, 0.77, 0.3141}) {
    long n = 500;
    double a = birkhoff_sum(f, g1, x, n) + birkhoff_sum(f, g2, x, n);
    double b = birkhoff_sum(f, [&](double t) { return g1(t) + g2(t); }, x, n);
    CHECK(std::fabs(a - b) <= n * 1e-12);
  }
}

TEST_CASE("lorenz orbits rarely meet the tolerance ball") {
  auto f = make_lorenz_map(0.6);
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const int samples = 20000;
  int hit = 0;
  for (int k = 0; k < samples; ++k) {
    double x = u(rng);
    for (int j = 0; j < 1000; ++j) {
      if (f.distance_to_boundary(x) <= f.tolerance()) {
        ++hit;
        break;
      }
      x = f.evaluate(x);
    }
  }
  CHECK(hit < samples * 1e-3);
}

TEST_CASE("exact integral of the observable") {
  auto f = make_lorenz_map(0.6);
  for (double delta : {0.01, 0.05, 0.2}) {
    // midpoint rule on a fine grid, graded near 1/2
    double sum = 0.0;
    const int n = 2000000;
    for (int k = 0; k < n; ++k) {
      double x = (k + 0.5) / n;
      sum += recurrence_observable(x, f, {delta}) / n;
    }
    CHECK(integrate_recurrence_observable(f, delta) == doctest::Approx(sum).epsilon(1e-4));
  }
}

TEST_CASE("validation reports") {
  auto dbl = validate_map(make_doubling_map());
  CHECK(dbl.sigma_hat == doctest::Approx(2.0));
  CHECK(dbl.singular_fits.empty());
  CHECK_FALSE(dbl.has_singular);
  CHECK_FALSE(dbl.hypotheses_hold);

  auto lor = validate_map(make_lorenz_map(0.6));
  REQUIRE(lor.singular_fits.size() == 2);
  for (const auto& s : lor.singular_fits) {
    CHECK(std::fabs(s.fitted_exponent + 0.4) <= 0.02);
  }
  CHECK(lor.passed);
  CHECK(lor.hypotheses_hold);

  Branch flat;
  flat.lo = 0.0;
  flat.hi = 0.5;
  flat.value_lo = 0.0;
  flat.value_hi = 0.5;
  Branch steep;
  steep.lo = 0.5;
  steep.hi = 1.0;
  steep.value_lo = 0.0;
  steep.value_hi = 1.0;
  OneSidedPoint a, b;
  a.location = b.location = 0.5;
  a.side = Side::minus;
  b.side = Side::plus;
  auto broken = validate_map(PiecewiseMap("broken", {flat, steep}, {a, b}));
  CHECK(broken.sigma_hat <= 1.0);
  CHECK_FALSE(broken.sigma_ok);
  CHECK_FALSE(broken.passed);
}

TEST_CASE("connected maps carry valid connections") {
  for (int steps : {1, 2}) {
    auto f = make_connected_map(0.6, steps);
    auto rep = validate_map(f);
    CHECK(rep.sigma_ok);
    REQUIRE(rep.connections.size() == 2);
    for (const auto& c : rep.connections) {
      CHECK(c.ok);
      CHECK(c.containment == 1.0);
    }
    CHECK(rep.hypotheses_hold);
    // independent containment: grid of 10^3 points near 1/4- lands just left of 1/2
    for (int k = 1; k <= 1000; ++k) {
      double x = 0.25 - 1e-4 * k / 1000.0;
      double y = x;
      for (int j = 0; j < steps; ++j) y = f.evaluate(y);
      CHECK(y < 0.5);
      CHECK(y > 0.5 - 0.125);
    }
  }
  CHECK_THROWS_AS(make_connected_map(0.6, 3), InvalidParameters);
  CHECK_THROWS_AS(make_lorenz_map(1.0), InvalidParameters);
}

TEST_CASE("half gaps and comparability") {
  auto f = make_lorenz_map(0.6);
  for (const auto& p : f.boundary_points()) {
    CHECK(p.half_gap == 0.25);
    // |f'| d^0.4 = 1.2 * 2^(-0.4) * (0.7 + 0.6 (2d)^0.6), increasing in d
    auto r = [](double d) { return 1.2 * std::pow(2.0, -0.4) * (0.7 + 0.6 * std::pow(2.0 * d, 0.6)); };
    double lo = r(0.25e-8), hi = r(0.25);
    CHECK(p.comparability == doctest::Approx(std::max(hi, 1.0 / lo)).epsilon(1e-6));
  }
}
