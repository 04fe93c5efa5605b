#include <cmath>
#include <random>
#include <vector>

#include "doctest.h"
#include "slowrec/semiflow.hpp"

using namespace slowrec;

namespace {

FlowObservable coordinate_x() {
  return {[](double x, double, double) { return x; }, 1.0};
}

// S_k tau along the skew orbit, summed left to right.
std::vector<double> roof_sums(const SkewProductSemiflow& flow, double x, double y, long k) {
  std::vector<double> out{0.0};
  for (long j = 0; j < k; ++j) {
    out.push_back(out.back() + flow.tau(x, y));
    double ny = 0.5 * y + 0.4 * (x - 0.5);
    x = flow.sp.base().evaluate(x);
    y = ny;
  }
  return out;
}

SemiflowState random_state(const SkewProductSemiflow& flow, std::mt19937_64& gen) {
  std::uniform_real_distribution<double> U(0.0, 1.0);
  SemiflowState z;
  z.x = U(gen);
  z.y = 2.0 * U(gen) - 1.0;
  z.s = U(gen) * flow.tau(z.x, z.y);
  return z;
}

}  // namespace

TEST_CASE("skew product") {
  SkewProduct flat(make_lorenz_map(0.6), 0.5, [](double) { return 0.0; });
  CHECK(skew_step(flat, 0.3, 0.0).second == 0.0);

  auto flow = make_lorenz_semiflow();
  const auto& sp = flow.sp;
  std::mt19937_64 gen(3);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  for (int i = 0; i < 1000; ++i) {
    double x = U(gen), y1 = 2 * U(gen) - 1, y2 = 2 * U(gen) - 1;
    double d = std::fabs(skew_step(sp, x, y1).second - skew_step(sp, x, y2).second);
    CHECK(d == doctest::Approx(0.5 * std::fabs(y1 - y2)).epsilon(1e-12));
  }
  double x = 0.123, lo = -0.999, hi = 0.999;
  for (int n = 1; n <= 20; ++n) {
    auto a = skew_step(sp, x, lo);
    auto b = skew_step(sp, x, hi);
    x = a.first;
    lo = a.second;
    hi = b.second;
    CHECK(std::fabs(hi - lo) <= 2.0 * std::pow(0.5, n));
    CHECK(std::fabs(lo) < 1.0);
  }
  CHECK_THROWS_AS(skew_step(sp, 0.5, 0.0), SingularPoint);
  CHECK_THROWS_AS(SkewProduct(make_lorenz_map(0.6), 1.0, [](double) { return 0.0; }), InvalidParameters);
  CHECK_THROWS_AS(SkewProduct(make_lorenz_map(0.6), 0.5, [](double x) { return x; }), InvalidParameters);
}

TEST_CASE("roof function") {
  auto flow = make_lorenz_semiflow();
  const auto& f = flow.sp.base();
  std::mt19937_64 gen(5);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  for (int i = 0; i < 10000; ++i) {
    double x = U(gen);
    double t = flow.tau(x, 0.0);
    CHECK(t >= 1.0);
    CHECK(t <= 1.0 + std::fabs(std::log(f.distance_to_boundary(x))) + 1e-12);
  }
  for (double d : {1e-3, 1e-6, 0.04}) {
    double x = 0.5 + d;
    CHECK(flow.tau(x, 0.0) == doctest::Approx(1.0 - std::log(x - 0.5)).epsilon(1e-15));
  }

  // midpoint rule on a fine grid
  const int M = 2000000;
  double s = 0.0;
  for (int i = 0; i < M; ++i) s += flow.tau((i + 0.5) / M, 0.0);
  CHECK(std::fabs(s / M - flow.roof.lebesgue_mean(f)) < 1e-4);

  RoofFunction bad;
  bad.tau0 = 0.0;
  CHECK_THROWS_AS(bad.validate(), InvalidParameters);
  RoofFunction tilted;
  tilted.fiber_lipschitz = 0.25;
  CHECK(tilted.lebesgue_mean(f) == doctest::Approx(flow.roof.lebesgue_mean(f) + 0.25));
  CHECK(tilted(f, 0.3, 0.6) - tilted(f, 0.3, 0.2) == doctest::Approx(0.1));
}

TEST_CASE("lap number") {
  auto flat = make_lorenz_semiflow(0.6, 0.5, RoofFunction{1.0, 0.0, 0.05, 0.0});
  auto lap = lap_number(flat, {0.3, 0.0, 0.0}, 3.5);
  CHECK(lap.n == 3);
  CHECK(lap.residual == 0.5);
  auto flow = make_lorenz_semiflow();
  double tau = flow.tau(0.3, 0.2);
  auto none = lap_number(flow, {0.3, 0.2, 0.1}, 0.5 * (tau - 0.1));
  CHECK(none.n == 0);
  CHECK(none.residual == 0.1 + 0.5 * (tau - 0.1));

  std::mt19937_64 gen(11);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  int exact = 0;
  for (int i = 0; i < 10000; ++i) {
    auto z = random_state(flow, gen);
    double t = 30.0 * U(gen);
    auto l = lap_number(flow, z, t);
    auto S = roof_sums(flow, z.x, z.y, l.n + 1);
    exact += S[l.n] <= z.s + t && z.s + t < S[l.n + 1] && l.partial_sum == S[l.n];
  }
  CHECK(exact == 10000);
  CHECK_THROWS_AS(lap_number(flow, {0.5, 0.0, 0.0}, 1.0), OrbitHitSingular);
  CHECK_THROWS_AS(lap_number(flow, {0.3, 0.0, -1.0}, 1.0), InvalidParameters);
}

TEST_CASE("flow evolution") {
  auto flow = make_lorenz_semiflow();
  SemiflowState z{0.3, 0.1, 0.4};
  auto same = flow_evolve(flow, z, 0.0);
  CHECK(same.x == z.x);
  CHECK(same.y == z.y);
  CHECK(same.s == z.s);

  auto a = flow_evolve(flow, flow_evolve(flow, z, 0.7), 1.3);
  auto b = flow_evolve(flow, z, 2.0);
  CHECK(std::fabs(a.x - b.x) < 1e-10);
  CHECK(std::fabs(a.s - b.s) < 1e-10);

  double tau = flow.tau(z.x, z.y);
  auto one = flow_evolve(flow, {z.x, z.y, tau - 1e-3}, 2e-3);
  CHECK(one.x == flow.sp.base().evaluate(z.x));
  CHECK(one.s == doctest::Approx(1e-3).epsilon(1e-9));

  std::mt19937_64 gen(13);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  double worst = 0.0;
  for (int i = 0; i < 10000; ++i) {
    auto w = random_state(flow, gen);
    double t = 5.0 * U(gen), u = 5.0 * U(gen);
    auto p = flow_evolve(flow, flow_evolve(flow, w, u), t);
    auto q = flow_evolve(flow, w, t + u);
    worst = std::max({worst, std::fabs(p.x - q.x), std::fabs(p.y - q.y), std::fabs(p.s - q.s)});
  }
  CHECK(worst < 1e-10);
}

TEST_CASE("induced observable") {
  auto flow = make_lorenz_semiflow();
  auto one = induce_observable({[](double, double, double) { return 1.0; }, 1.0}, flow);
  CHECK(one.quadrature_step() == 1.0 / 64.0);
  FlowObservable ramp{[&](double x, double y, double s) {
                        double t = flow.tau(x, y);
                        return 2.0 * s / (t * t);
                      },
                      std::numeric_limits<double>::infinity()};
  auto unit = induce_observable(ramp, flow, 0.01);
  FlowObservable wave{[](double x, double y, double s) { return std::sin(7.0 * x * s) + 0.5 * y; }, 1.5};
  auto phi = induce_observable(wave, flow);
  std::mt19937_64 gen(17);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  for (int i = 0; i < 10000; ++i) {
    double x = U(gen), y = 2 * U(gen) - 1;
    double t = flow.tau(x, y);
    CHECK(one(x, y) == doctest::Approx(t).epsilon(1e-13));
    CHECK(unit(x, y) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(std::fabs(phi(x, y)) <= t * 1.5);
  }
  CHECK(one.base_fn(0.2) == doctest::Approx(flow.tau(0.2, 0.0)));
  CHECK_THROWS_AS(one(0.5, 0.0), SingularPoint);
  CHECK_THROWS_AS(induce_observable(wave, flow, -1.0), InvalidParameters);
}

TEST_CASE("flow time averages") {
  auto flow = make_lorenz_semiflow();
  FlowObservable one{[](double, double, double) { return 1.0; }, 1.0};
  std::mt19937_64 gen(19);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  for (int i = 0; i < 200; ++i) {
    auto z = random_state(flow, gen);
    CHECK(flow_time_average(one, flow, z, 0.1 + 40.0 * U(gen)).value == doctest::Approx(1.0).epsilon(1e-12));
  }

  auto flat = make_lorenz_semiflow(0.6, 0.5, RoofFunction{1.0, 0.0, 0.05, 0.0});
  FlowObservable cosx{[](double x, double, double) { return std::cos(3.0 * x); }, 1.0};
  for (int i = 0; i < 200; ++i) {
    auto z = random_state(flat, gen);
    double T = 1.0 + 50.0 * U(gen);
    auto avg = flow_time_average(cosx, flat, z, T);
    long n = lap_number(flat, z, T).n;
    double x = z.x, base = 0.0;
    for (long j = 0; j < n; ++j, x = flat.sp.base().evaluate(x)) base += std::cos(3.0 * x);
    CHECK(std::fabs(avg.value - base / T) <= 2.0 / T + 1e-9);
  }

  FlowObservable wave{[](double x, double y, double s) { return x * std::cos(s) + 0.3 * y; }, 1.3};
  int bounded = 0, split = 0;
  for (int i = 0; i < 10000; ++i) {
    auto z = random_state(flow, gen);
    double T = 1.0 + 20.0 * U(gen);
    auto a = flow_time_average(wave, flow, z, T);
    bounded += std::fabs(a.correction) <= a.correction_bound;
    split += std::fabs(a.value - (a.birkhoff + a.correction)) < 1e-6;
    if (i < 100) CHECK(a.laps == lap_number(flow, z, T).n);
  }
  CHECK(bounded == 10000);
  CHECK(split == 10000);

  auto acims = solve_acims(flow.sp.base(), 4096, 1e-13);
  auto target = flow_targets(coordinate_x(), flow, acims);
  REQUIRE(target.size() == 1);
  SemiflowState z{0.2137, 0.1, 0.3};
  double a3 = flow_time_average(coordinate_x(), flow, z, 1e3).value;
  double a4 = flow_time_average(coordinate_x(), flow, z, 1e4).value;
  CHECK(std::fabs(a3 - a4) < 1e-2);
  CHECK(std::fabs(a4 - target[0]) < 1e-2);
  CHECK(flow_targets(one, flow, acims)[0] == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("flow deviation measure") {
  auto flow = make_lorenz_semiflow();
  auto acims = solve_acims(flow.sp.base(), 1024, 1e-13);
  auto psi = coordinate_x();
  auto target = flow_targets(psi, flow, acims);
  Sampler s;
  s.count = 20000;
  s.seed = 23;

  FlowObservable one{[](double, double, double) { return 1.0; }, 1.0};
  auto flat_target = flow_targets(one, flow, acims);
  CHECK(flow_deviation_measure(one, flow, flat_target, 1e-9, 20.0, s).measure == 0.0);
  CHECK(flow_deviation_measure(psi, flow, target, 1e9, 20.0, s).measure == 0.0);
  CHECK(flow_deviation_measure(psi, flow, target, 1e-12, 5.0, s).measure > 0.99);

  double Ts[] = {10, 20, 30, 40, 50};
  auto series = flow_deviation_series(psi, flow, target, 0.1, Ts, s);
  DeviationSeries d;
  for (std::size_t k = 0; k < 5; ++k) d.add(static_cast<long>(Ts[k]), series[k]);
  auto fit = fit_exponential_rate(d);
  CHECK(fit.ci95_upper < 0.0);

  Sampler par = s;
  par.workers = 3;
  auto again = flow_deviation_series(psi, flow, target, 0.1, Ts, par);
  for (std::size_t k = 0; k < 5; ++k) CHECK(again[k].measure == series[k].measure);

  Sampler big = s;
  big.budget = 10;
  CHECK_THROWS_AS(flow_deviation_measure(psi, flow, target, 0.1, 10.0, big), SampleBudgetExceeded);
  double bad[] = {20, 10};
  CHECK_THROWS_AS(flow_deviation_series(psi, flow, target, 0.1, bad, s), InvalidParameters);
}

TEST_CASE("flow escape measure") {
  auto flow = make_lorenz_semiflow();
  Sampler s;
  s.count = 20000;
  s.seed = 29;
  std::pair<double, double> all[] = {{0.0, 1.0}};
  CHECK(flow_escape_measure(flow, all, 50.0, s).measure == 1.0);

  std::pair<double, double> K[] = {{0.0, 0.45}, {0.55, 1.0}};
  double Ts[] = {2, 4, 6, 8, 10, 12};
  auto est = flow_escape_series(flow, K, Ts, s);
  for (std::size_t k = 1; k < est.size(); ++k)
    CHECK(est[k].measure <= est[k - 1].measure + 3.0 * est[k - 1].stderr_);
  DeviationSeries d;
  for (std::size_t k = 0; k < est.size(); ++k) d.add(static_cast<long>(Ts[k]), est[k]);
  CHECK(fit_exponential_rate(d).ci95_upper < 0.0);

  Sampler par = s;
  par.workers = 4;
  auto again = flow_escape_series(flow, K, Ts, par);
  for (std::size_t k = 0; k < est.size(); ++k) CHECK(again[k].measure == est[k].measure);
}
