#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <utility>
#include <vector>

#include "slowrec/map.hpp"

namespace slowrec {

enum class Method : std::uint8_t { monte_carlo, exact_intervals };

const char* method_name(Method m);

struct Sampler {
  std::uint64_t seed = 1;
  std::uint64_t count = 100000;
  int workers = 1;
  std::uint64_t budget = 4000000000ULL;
};

struct MeasureEstimate {
  double measure = 0.0;
  double stderr_ = 0.0;
  Method method = Method::monte_carlo;
  std::uint64_t samples = 0;
  std::uint64_t hits = 0;
};

struct DeviationEntry {
  long n = 0;
  double measure = 0.0;
  double stderr_ = 0.0;
  Method method = Method::monte_carlo;
};

struct DeviationSeries {
  std::vector<DeviationEntry> entries;

  void add(long n, const MeasureEstimate& e) { entries.push_back({n, e.measure, e.stderr_, e.method}); }
};

struct RateFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r_squared = 0.0;
  double ci95_upper = 0.0;
  double slope_stderr = 0.0;
  long n_lo = 0, n_hi = 0;
  bool decaying = false;            // ci95_upper < 0
  std::vector<long> below_resolution;  // entries with measure 0
};

// Binomial standard error; zero counts get the rule of three.
double binomial_stderr(std::uint64_t hits, std::uint64_t samples);

// Monte Carlo for {x : (1/n) S_n Delta_delta(x) > eps}, one estimate per n in ns.
// Every n uses the same sample points.
std::vector<MeasureEstimate> recurrence_deviation_series(const PiecewiseMap& map, double delta,
                                                         double eps, std::span<const long> ns,
                                                         const Sampler& sampler);
MeasureEstimate recurrence_deviation_measure(const PiecewiseMap& map, double delta, double eps,
                                             long n, const Sampler& sampler);

struct ExactOptions {
  long n_cap = 16;
  std::size_t piece_cap = 50000000;
  double tolerance = 0.0;  // bisection bracket; 0 means full double resolution
};

// Exact interval arithmetic on the monotone smooth pieces of S_n Delta_delta.
MeasureEstimate recurrence_deviation_exact(const PiecewiseMap& map, double delta, double eps,
                                           long n, const ExactOptions& opts = {});

struct SurvivorSet {
  long n = 0;
  std::vector<std::pair<double, double>> intervals;
  // Per interval, measured in branch coordinates; total_measure sums them in order.
  std::vector<double> lengths;
  double total_measure = 0.0;
};

// {x : d(f^j x, H) > delta, 0 < j < n} by recursive pullback; H defaults to the locations of D.
SurvivorSet survivor_measure(const PiecewiseMap& map, double delta, long n,
                             std::span<const double> hole_centres = {},
                             std::size_t max_intervals = std::size_t(1) << 26);
// Every level 1..n, sharing the pullbacks.
std::vector<SurvivorSet> survivor_series(const PiecewiseMap& map, double delta, long n,
                                         std::span<const double> hole_centres = {},
                                         std::size_t max_intervals = std::size_t(1) << 26);

using Observable = std::function<double(double)>;

// Distance of (1/n) S_n phi from [min mean, max mean] exceeds eps.
std::vector<MeasureEstimate> observable_deviation_series(const PiecewiseMap& map,
                                                         const Observable& phi,
                                                         std::span<const double> means, double eps,
                                                         std::span<const long> ns,
                                                         const Sampler& sampler);
MeasureEstimate observable_deviation_measure(const PiecewiseMap& map, const Observable& phi,
                                             std::span<const double> means, double eps, long n,
                                             const Sampler& sampler);

struct TailReport {
  long n = 0;
  long window = 50;
  MeasureEstimate at_window;         // some m in [n, n + W] has S_m >= zeta m
  MeasureEstimate at_double_window;  // same with 2W
};

TailReport tail_set_report(const PiecewiseMap& map, double delta, double zeta, long n,
                           const Sampler& sampler, long window = 50);

RateFit fit_exponential_rate(const DeviationSeries& series);

}  // namespace slowrec
