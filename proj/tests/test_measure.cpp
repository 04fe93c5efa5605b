#include <algorithm>
#include <cmath>
#include <utility>
#include <vector>

#include "doctest.h"
#include "slowrec/measure.hpp"

using namespace slowrec;

namespace {

using Intervals = std::vector<std::pair<double, double>>;

// Survivors of the doubling map with the hole at 0 = 1, by closed-form inverse branches.
std::vector<double> doubling_survivors(double delta, long n) {
  Intervals h{{0.0, 1.0}};
  std::vector<double> lens{1.0};
  std::vector<double> out{1.0};
  for (long k = 2; k <= n; ++k) {
    std::vector<std::pair<std::pair<double, double>, double>> pre;
    for (const auto& [a0, b0] : h) {
      double a = std::max(a0, delta), b = std::min(b0, 1.0 - delta);
      if (!(b > a)) continue;
      pre.push_back({{a / 2, b / 2}, (b - a) / 2});
      pre.push_back({{(a + 1) / 2, (b + 1) / 2}, (b - a) / 2});
    }
    std::sort(pre.begin(), pre.end());
    h.clear();
    lens.clear();
    for (const auto& [iv, len] : pre) {
      if (!h.empty() && iv.first <= h.back().second) {
        h.back().second = std::max(h.back().second, iv.second);
        lens.back() += len;
      } else {
        h.push_back(iv);
        lens.push_back(len);
      }
    }
    double total = 0.0;
    for (double l : lens) total += l;
    out.push_back(total);
  }
  return out;
}

DeviationSeries synthetic(double rate, double scale, Method method) {
  DeviationSeries s;
  for (long n = 5; n <= 40; n += 5)
    s.entries.push_back({n, scale * std::exp(-rate * n),
                         method == Method::exact_intervals ? 0.0 : 0.01 * scale * std::exp(-rate * n),
                         method});
  return s;
}

}  // namespace

TEST_CASE("survivors of the doubling map") {
  auto m = make_doubling_map();
  double holes[] = {0.0, 1.0};
  auto two = survivor_measure(m, 0.1, 2, holes);
  CHECK(two.total_measure == 0.8);
  REQUIRE(two.intervals.size() == 2);
  CHECK(two.intervals[0].first == doctest::Approx(0.05));
  CHECK(two.intervals[0].second == doctest::Approx(0.45));
  CHECK(two.intervals[1].first == doctest::Approx(0.55));
  CHECK(two.intervals[1].second == doctest::Approx(0.95));

  auto one = survivor_measure(m, 0.1, 1, holes);
  CHECK(one.total_measure == 1.0);

  auto series = survivor_series(m, 0.1, 20, holes);
  auto oracle = doubling_survivors(0.1, 20);
  bool same = true, nested = true;
  for (std::size_t k = 0; k < series.size(); ++k) {
    same = same && series[k].total_measure == oracle[k];
    double s = 0.0;
    for (double l : series[k].lengths) s += l;
    same = same && s == series[k].total_measure;
    if (k > 0) nested = nested && series[k].total_measure <= series[k - 1].total_measure;
    for (std::size_t i = 1; i < series[k].intervals.size(); ++i)
      nested = nested && series[k].intervals[i - 1].second < series[k].intervals[i].first;
  }
  CHECK(same);
  CHECK(nested);

  auto again = survivor_series(m, 0.1, 20, holes);
  CHECK(again.back().total_measure == series.back().total_measure);

  SUBCASE("default holes are the points of D") {
    auto d = survivor_measure(m, 0.1, 2);
    CHECK(d.total_measure == doctest::Approx(0.6));
  }
  SUBCASE("errors") {
    CHECK_THROWS_AS(survivor_measure(m, 0.3, 2), InvalidParameters);
    CHECK_THROWS_AS(survivor_measure(m, 0.01, 30, holes, 1000), IntervalCountOverflow);
  }
}

TEST_CASE("survivor decay rate") {
  auto m = make_doubling_map();
  double holes[] = {0.0, 1.0};
  auto series = survivor_series(m, 0.1, 20, holes);
  DeviationSeries ds;
  for (const auto& s : series) ds.entries.push_back({s.n, s.total_measure, 0.0, Method::exact_intervals});
  auto fit = fit_exponential_rate(ds);
  double tail = std::log(series[19].total_measure / series[18].total_measure);
  CHECK(fit.slope < 0.0);
  CHECK(std::fabs(fit.slope - tail) / std::fabs(tail) < 0.02);
  CHECK(fit.r_squared >= 0.999);
}

TEST_CASE("exact recurrence deviation") {
  auto m = make_doubling_map();
  SUBCASE("eps = 0 at n = 1 is the 2 delta neighbourhood of D") {
    auto e = recurrence_deviation_exact(m, 0.01, 0.0, 1);
    CHECK(e.measure == doctest::Approx(0.08).epsilon(1e-10));
    CHECK(e.method == Method::exact_intervals);
  }
  SUBCASE("huge eps gives the empty set") {
    CHECK(recurrence_deviation_exact(m, 0.01, 1e9, 8).measure == 0.0);
  }
  SUBCASE("monotone in eps") {
    double prev = 2.0;
    for (double eps : {0.0, 0.1, 0.3, 0.5, 1.0, 2.0}) {
      double v = recurrence_deviation_exact(m, 0.01, eps, 8).measure;
      CHECK(v <= prev);
      prev = v;
    }
  }
  SUBCASE("reproducible") {
    CHECK(recurrence_deviation_exact(m, 0.01, 0.5, 9).measure ==
          recurrence_deviation_exact(m, 0.01, 0.5, 9).measure);
  }
  SUBCASE("cap") {
    CHECK_THROWS_AS(recurrence_deviation_exact(m, 0.01, 0.5, 40), ExactCapExceeded);
  }
}

TEST_CASE("Monte Carlo agrees with exact mode") {
  auto m = make_doubling_map();
  auto exact = recurrence_deviation_exact(m, 0.01, 0.5, 10).measure;
  Sampler s;
  s.seed = 11;
  s.count = 1000000;
  auto mc = recurrence_deviation_measure(m, 0.01, 0.5, 10, s);
  CHECK(std::fabs(mc.measure - exact) <= 3.0 * mc.stderr_);

  int within = 0;
  for (std::uint64_t seed = 1; seed <= 100; ++seed) {
    Sampler r;
    r.seed = seed;
    r.count = 20000;
    auto e = recurrence_deviation_measure(m, 0.01, 0.5, 10, r);
    if (std::fabs(e.measure - exact) <= 3.0 * e.stderr_) ++within;
  }
  CHECK(within >= 99);

  auto lorenz = make_lorenz_map(0.6);
  double lx = recurrence_deviation_exact(lorenz, 0.02, 0.5, 8).measure;
  auto lm = recurrence_deviation_measure(lorenz, 0.02, 0.5, 8, s);
  CHECK(std::fabs(lm.measure - lx) <= 3.0 * lm.stderr_);
}

TEST_CASE("Monte Carlo series") {
  auto m = make_lorenz_map(0.6);
  Sampler s;
  s.seed = 5;
  s.count = 200000;
  long ns[] = {5, 10, 20};
  auto one = recurrence_deviation_series(m, 0.02, 0.5, ns, s);
  s.workers = 3;
  auto three = recurrence_deviation_series(m, 0.02, 0.5, ns, s);
  for (std::size_t k = 0; k < 3; ++k) {
    CHECK(one[k].hits == three[k].hits);
    CHECK(one[k].measure == three[k].measure);
    auto single = recurrence_deviation_measure(m, 0.02, 0.5, ns[k], s);
    CHECK(single.hits == one[k].hits);
  }
  CHECK(recurrence_deviation_measure(m, 0.02, 1e9, 10, s).measure == 0.0);
  CHECK(recurrence_deviation_measure(m, 0.02, 0.0, 10, s).measure > 0.0);

  Sampler big;
  big.count = 10;
  big.budget = 5;
  CHECK_THROWS_AS(recurrence_deviation_measure(m, 0.02, 0.5, 10, big), SampleBudgetExceeded);
  long bad[] = {10, 5};
  CHECK_THROWS_AS(recurrence_deviation_series(m, 0.02, 0.5, bad, s), InvalidParameters);
}

TEST_CASE("stderr conventions") {
  CHECK(binomial_stderr(0, 1000) == doctest::Approx(3e-3));
  CHECK(binomial_stderr(250, 1000) == doctest::Approx(std::sqrt(0.25 * 0.75 / 1000)));
}

TEST_CASE("observable deviation") {
  auto m = make_doubling_map();
  Observable phi = [](double x) { return x; };
  Sampler s;
  s.seed = 3;
  s.count = 1000000;
  double half[] = {0.5};
  CHECK(observable_deviation_measure(m, phi, half, 0.4, 30, s).measure < 1e-2);
  s.count = 100000;
  CHECK(observable_deviation_measure(m, phi, half, 0.0, 5, s).measure > 0.99);
  double twice[] = {0.5, 0.5};
  CHECK(observable_deviation_measure(m, phi, twice, 0.1, 5, s).hits ==
        observable_deviation_measure(m, phi, half, 0.1, 5, s).hits);
  double hull[] = {0.6, 0.4};
  CHECK(observable_deviation_measure(m, phi, hull, 0.1, 5, s).measure <
        observable_deviation_measure(m, phi, half, 0.1, 5, s).measure);
  CHECK_THROWS_AS(observable_deviation_measure(m, phi, {}, 0.1, 5, s), InvalidParameters);
}

TEST_CASE("tail sets") {
  auto m = make_lorenz_map(0.6);
  Sampler s;
  s.seed = 9;
  s.count = 100000;
  auto none = tail_set_report(m, 0.02, 1e9, 10, s);
  CHECK(none.at_window.measure == 0.0);
  CHECK(none.at_double_window.measure == 0.0);

  DeviationSeries ds;
  double prev = 1.0, prev_err = 0.0;
  for (long n = 5; n <= 40; n += 5) {
    auto r = tail_set_report(m, 0.02, 0.5, n, s);
    CHECK(r.at_window.measure <= r.at_double_window.measure);
    CHECK(r.at_window.measure <= prev + 3.0 * (prev_err + r.at_window.stderr_));
    prev = r.at_window.measure;
    prev_err = r.at_window.stderr_;
    ds.add(n, r.at_window);
  }
  auto fit = fit_exponential_rate(ds);
  CHECK(fit.slope < 0.0);
}

TEST_CASE("rate fit") {
  auto exact = fit_exponential_rate(synthetic(0.3, 1.0, Method::exact_intervals));
  CHECK(exact.slope == doctest::Approx(-0.3).epsilon(1e-6));
  CHECK(exact.r_squared > 0.9999);
  CHECK(exact.decaying);
  CHECK(exact.n_lo == 5);
  CHECK(exact.n_hi == 40);

  auto mc = fit_exponential_rate(synthetic(0.3, 1.0, Method::monte_carlo));
  auto scaled = fit_exponential_rate(synthetic(0.3, 7.5, Method::monte_carlo));
  CHECK(std::fabs(mc.slope - scaled.slope) < 1e-12);
  CHECK(scaled.intercept == doctest::Approx(mc.intercept + std::log(7.5)));

  DeviationSeries flat;
  for (long n = 1; n <= 6; ++n) flat.entries.push_back({n, 0.2, 0.0, Method::exact_intervals});
  auto f = fit_exponential_rate(flat);
  CHECK(f.slope == doctest::Approx(0.0).epsilon(1e-12));
  CHECK_FALSE(f.decaying);

  DeviationSeries noisy = synthetic(0.2, 1.0, Method::monte_carlo);
  for (std::size_t i = 0; i < noisy.entries.size(); ++i)
    noisy.entries[i].measure *= 1.0 + (i % 2 ? 0.02 : -0.02);
  auto nf = fit_exponential_rate(noisy);
  CHECK(nf.ci95_upper > nf.slope);
  CHECK(nf.ci95_upper < 0.0);

  DeviationSeries zeros = synthetic(0.3, 1.0, Method::monte_carlo);
  zeros.entries.push_back({45, 0.0, 3e-6, Method::monte_carlo});
  auto z = fit_exponential_rate(zeros);
  REQUIRE(z.below_resolution.size() == 1);
  CHECK(z.below_resolution[0] == 45);

  DeviationSeries few;
  few.entries = {{1, 0.5, 0.0, Method::exact_intervals}, {2, 0.25, 0.0, Method::exact_intervals},
                 {3, 0.0, 0.0, Method::exact_intervals}, {4, 0.1, 0.0, Method::exact_intervals}};
  CHECK_THROWS_AS(fit_exponential_rate(few), InsufficientData);
}
