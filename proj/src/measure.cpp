#include "slowrec/measure.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <tuple>

#include <boost/math/distributions/students_t.hpp>

#include "slowrec/parallel.hpp"

namespace slowrec {

const char* method_name(Method m) {
  return m == Method::monte_carlo ? "monte_carlo" : "exact_intervals";
}

double binomial_stderr(std::uint64_t hits, std::uint64_t samples) {
  if (samples == 0) return 0.0;
  double N = static_cast<double>(samples);
  if (hits == 0) return 3.0 / N;
  double p = static_cast<double>(hits) / N;
  return std::sqrt(p * (1.0 - p) / N);
}

namespace {

constexpr std::uint64_t kChunk = 65536;

double step(const PiecewiseMap& map, double x) { return map.branch(map.locate(x)).evaluate(x); }

// Delta_delta at x; +inf on D.
double delta_term(const PiecewiseMap& map, double x, double delta) {
  return log_truncated(map.distance_to_boundary(x), delta);
}

void check_sampler(const Sampler& s) {
  if (s.count == 0) throw InvalidParameters("sample count must be positive");
  if (s.count > s.budget)
    throw SampleBudgetExceeded("requested " + std::to_string(s.count) + " samples, budget " +
                               std::to_string(s.budget));
}

void check_ns(std::span<const long> ns) {
  if (ns.empty()) throw InvalidParameters("no n requested");
  for (std::size_t i = 0; i < ns.size(); ++i) {
    if (ns[i] < 1) throw InvalidParameters("n must be positive");
    if (i > 0 && ns[i] <= ns[i - 1]) throw InvalidParameters("n values must increase");
  }
}

// Runs per-sample orbit statistics: hit(x, counts) adds to counts[k] for each n index k.
template <class PerSample>
std::vector<MeasureEstimate> sample_counts(std::size_t slots, const Sampler& sampler,
                                           PerSample&& per_sample) {
  check_sampler(sampler);
  std::uint64_t chunks = (sampler.count + kChunk - 1) / kChunk;
  std::vector<std::vector<std::uint64_t>> counts(chunks, std::vector<std::uint64_t>(slots, 0));
  CounterRng rng{sampler.seed};
  parallel_chunks(chunks, sampler.workers, [&](std::size_t c) {
    std::uint64_t end = std::min<std::uint64_t>(sampler.count, (c + 1) * kChunk);
    for (std::uint64_t i = c * kChunk; i < end; ++i) per_sample(rng, i, counts[c]);
  });
  std::vector<MeasureEstimate> out(slots);
  for (std::size_t k = 0; k < slots; ++k) {
    std::uint64_t hits = 0;
    for (const auto& c : counts) hits += c[k];
    out[k].samples = sampler.count;
    out[k].hits = hits;
    out[k].measure = static_cast<double>(hits) / static_cast<double>(sampler.count);
    out[k].stderr_ = binomial_stderr(hits, sampler.count);
  }
  return out;
}

}  // namespace

std::vector<MeasureEstimate> recurrence_deviation_series(const PiecewiseMap& map, double delta,
                                                         double eps, std::span<const long> ns,
                                                         const Sampler& sampler) {
  if (!(delta > 0.0 && delta < 0.5)) throw InvalidParameters("delta must lie in (0,1/2)");
  if (!(eps >= 0.0)) throw InvalidParameters("eps must be non-negative");
  check_ns(ns);
  long n_max = ns.back();
  return sample_counts(ns.size(), sampler, [&](const CounterRng& rng, std::uint64_t i,
                                               std::vector<std::uint64_t>& counts) {
    double x = rng.uniform(i);
    double s = 0.0;
    std::size_t k = 0;
    for (long j = 1; j <= n_max; ++j) {
      s += delta_term(map, x, delta);
      if (j == ns[k]) {
        if (s > eps * static_cast<double>(j)) ++counts[k];
        if (++k == ns.size()) break;
      }
      x = step(map, x);
    }
  });
}

MeasureEstimate recurrence_deviation_measure(const PiecewiseMap& map, double delta, double eps,
                                             long n, const Sampler& sampler) {
  long ns[] = {n};
  return recurrence_deviation_series(map, delta, eps, ns, sampler)[0];
}

namespace {

struct ExactWalk {
  const PiecewiseMap& map;
  double delta, eps;
  long n;
  ExactOptions opts;
  std::vector<double> cuts;  // breakpoints of Delta_delta and of the branches, sorted
  std::vector<std::uint8_t> path;
  std::size_t pieces = 0;
  double measure = 0.0;

  double pull(double y) const {
    for (std::size_t j = path.size(); j-- > 0;) y = map.branch(path[j]).inverse(y);
    return y;
  }

  // S_n Delta_delta(x) - n eps along the recorded path.
  double excess(double x) const {
    double s = 0.0;
    for (long j = 0; j < n; ++j) {
      s += delta_term(map, x, delta);
      if (j + 1 < n) x = map.branch(path[j]).evaluate(x);
    }
    return s - eps * static_cast<double>(n);
  }

  void leaf(double a, double b) {
    if (++pieces > opts.piece_cap)
      throw ExactCapExceeded("exact mode exceeded " + std::to_string(opts.piece_cap) + " pieces");
    const int K = 16;
    double tol = opts.tolerance;
    double prev_x = a, prev_f = excess(a);
    double start = prev_f > 0.0 ? a : std::numeric_limits<double>::quiet_NaN();
    for (int k = 1; k <= K; ++k) {
      double x = k == K ? b : a + (b - a) * (static_cast<double>(k) / K);
      double f = excess(x);
      if ((prev_f > 0.0) != (f > 0.0)) {
        double lo = prev_x, hi = x;
        bool lo_pos = prev_f > 0.0;
        while (hi - lo > tol) {
          double mid = 0.5 * (lo + hi);
          if (mid == lo || mid == hi) break;
          if ((excess(mid) > 0.0) == lo_pos)
            lo = mid;
          else
            hi = mid;
        }
        double cross = lo_pos ? lo : hi;
        if (lo_pos) {
          measure += cross - start;
          start = std::numeric_limits<double>::quiet_NaN();
        } else {
          start = cross;
        }
      }
      prev_x = x;
      prev_f = f;
    }
    if (!std::isnan(start)) measure += b - start;
  }

  // [ylo, yhi] = f^j of the current piece; x_lo and x_hi map to ylo and yhi.
  void visit(long j, double x_lo, double x_hi, double ylo, double yhi) {
    double u = ylo;
    for (auto it = std::upper_bound(cuts.begin(), cuts.end(), ylo);; ++it) {
      double v = (it == cuts.end() || *it >= yhi) ? yhi : *it;
      double xa = u == ylo ? x_lo : pull(u);
      double xb = v == yhi ? x_hi : pull(v);
      if (xa != xb) {
        if (j + 1 == n) {
          leaf(std::min(xa, xb), std::max(xa, xb));
        } else {
          std::size_t br = map.locate(0.5 * (u + v));
          const Branch& B = map.branch(br);
          double y1 = B.evaluate(u), y2 = B.evaluate(v);
          path.push_back(static_cast<std::uint8_t>(br));
          if (y1 <= y2)
            visit(j + 1, xa, xb, y1, y2);
          else
            visit(j + 1, xb, xa, y2, y1);
          path.pop_back();
        }
      }
      if (v >= yhi) break;
      u = v;
    }
  }
};

}  // namespace

MeasureEstimate recurrence_deviation_exact(const PiecewiseMap& map, double delta, double eps,
                                           long n, const ExactOptions& opts) {
  if (!(delta > 0.0 && delta < 0.5)) throw InvalidParameters("delta must lie in (0,1/2)");
  if (n < 1) throw InvalidParameters("n must be positive");
  if (n > opts.n_cap)
    throw ExactCapExceeded("exact mode is capped at n = " + std::to_string(opts.n_cap));
  ExactWalk w{map, delta, eps, n, opts, {}, {}, 0, 0.0};
  const auto& loc = map.locations();
  for (std::size_t k = 0; k < loc.size(); ++k) {
    double c = loc[k];
    for (double d : {-2.0 * delta, -delta, 0.0, delta, 2.0 * delta}) w.cuts.push_back(c + d);
    if (k + 1 < loc.size()) w.cuts.push_back(0.5 * (c + loc[k + 1]));
  }
  for (const auto& b : map.branches()) w.cuts.push_back(b.lo);
  std::erase_if(w.cuts, [](double c) { return !(c > 0.0 && c < 1.0); });
  std::sort(w.cuts.begin(), w.cuts.end());
  w.cuts.erase(std::unique(w.cuts.begin(), w.cuts.end()), w.cuts.end());
  w.visit(0, 0.0, 1.0, 0.0, 1.0);
  MeasureEstimate e;
  e.measure = w.measure;
  e.method = Method::exact_intervals;
  return e;
}

namespace {

using Intervals = std::vector<std::pair<double, double>>;

Intervals allowed_set(double delta, std::span<const double> holes) {
  std::vector<std::pair<double, double>> removed;
  for (double c : holes) removed.push_back({c - delta, c + delta});
  std::sort(removed.begin(), removed.end());
  Intervals out;
  double at = 0.0;
  for (const auto& [a, b] : removed) {
    if (a > at) out.push_back({at, std::min(a, 1.0)});
    at = std::max(at, b);
    if (at >= 1.0) break;
  }
  if (at < 1.0) out.push_back({at, 1.0});
  return out;
}

Intervals intersect(const Intervals& a, const Intervals& b) {
  Intervals out;
  std::size_t i = 0, j = 0;
  while (i < a.size() && j < b.size()) {
    double lo = std::max(a[i].first, b[j].first), hi = std::min(a[i].second, b[j].second);
    if (hi > lo) out.push_back({lo, hi});
    if (a[i].second < b[j].second)
      ++i;
    else
      ++j;
  }
  return out;
}

struct Pulled {
  Intervals intervals;
  std::vector<double> lengths;
};

Pulled pullback(const PiecewiseMap& map, const Intervals& target, std::size_t cap, long level) {
  std::vector<std::tuple<double, double, double>> out;
  for (const auto& br : map.branches()) {
    double r_lo = std::min(br.value_lo, br.value_hi), r_hi = std::max(br.value_lo, br.value_hi);
    for (const auto& [a, b] : target) {
      double lo = std::max(a, r_lo), hi = std::min(b, r_hi);
      if (!(hi > lo)) continue;
      double x1 = br.inverse(lo), x2 = br.inverse(hi);
      if (x1 > x2) std::swap(x1, x2);
      if (x2 > x1) out.emplace_back(x1, x2, br.inverse_length(lo, hi));
    }
    if (out.size() > cap)
      throw IntervalCountOverflow("survivor set exceeded " + std::to_string(cap) +
                                  " intervals at level " + std::to_string(level));
  }
  std::sort(out.begin(), out.end());
  Pulled p;
  for (const auto& [lo, hi, len] : out) {
    if (!p.intervals.empty() && lo <= p.intervals.back().second) {
      p.intervals.back().second = std::max(p.intervals.back().second, hi);
      p.lengths.back() += len;
    } else {
      p.intervals.push_back({lo, hi});
      p.lengths.push_back(len);
    }
  }
  return p;
}

}  // namespace

std::vector<SurvivorSet> survivor_series(const PiecewiseMap& map, double delta, long n,
                                         std::span<const double> hole_centres,
                                         std::size_t max_intervals) {
  if (n < 1) throw InvalidParameters("n must be positive");
  double shortest = 1.0;
  for (const auto& b : map.branches()) shortest = std::min(shortest, b.length());
  if (!(delta > 0.0 && delta < 0.5 * shortest))
    throw InvalidParameters("delta must lie in (0, min branch length / 2)");
  std::vector<double> holes(hole_centres.begin(), hole_centres.end());
  if (holes.empty()) holes = map.locations();
  Intervals allowed = allowed_set(delta, holes);

  std::vector<SurvivorSet> out;
  Pulled h{{{0.0, 1.0}}, {1.0}};
  for (long k = 1; k <= n; ++k) {
    if (k > 1) h = pullback(map, intersect(allowed, h.intervals), max_intervals, k);
    SurvivorSet s;
    s.n = k;
    for (double len : h.lengths) s.total_measure += len;
    s.intervals = h.intervals;
    s.lengths = h.lengths;
    out.push_back(std::move(s));
  }
  return out;
}

SurvivorSet survivor_measure(const PiecewiseMap& map, double delta, long n,
                             std::span<const double> hole_centres, std::size_t max_intervals) {
  auto all = survivor_series(map, delta, n, hole_centres, max_intervals);
  return std::move(all.back());
}

std::vector<MeasureEstimate> observable_deviation_series(const PiecewiseMap& map,
                                                         const Observable& phi,
                                                         std::span<const double> means, double eps,
                                                         std::span<const long> ns,
                                                         const Sampler& sampler) {
  if (means.empty()) throw InvalidParameters("the equilibrium set is empty");
  if (!(eps >= 0.0)) throw InvalidParameters("eps must be non-negative");
  check_ns(ns);
  double m_lo = *std::min_element(means.begin(), means.end());
  double m_hi = *std::max_element(means.begin(), means.end());
  long n_max = ns.back();
  return sample_counts(ns.size(), sampler, [&](const CounterRng& rng, std::uint64_t i,
                                               std::vector<std::uint64_t>& counts) {
    double x = rng.uniform(i);
    double s = 0.0;
    std::size_t k = 0;
    for (long j = 1; j <= n_max; ++j) {
      s += phi(x);
      if (j == ns[k]) {
        double avg = s / static_cast<double>(j);
        double dist = avg < m_lo ? m_lo - avg : (avg > m_hi ? avg - m_hi : 0.0);
        if (dist > eps) ++counts[k];
        if (++k == ns.size()) break;
      }
      x = step(map, x);
    }
  });
}

MeasureEstimate observable_deviation_measure(const PiecewiseMap& map, const Observable& phi,
                                             std::span<const double> means, double eps, long n,
                                             const Sampler& sampler) {
  long ns[] = {n};
  return observable_deviation_series(map, phi, means, eps, ns, sampler)[0];
}

TailReport tail_set_report(const PiecewiseMap& map, double delta, double zeta, long n,
                           const Sampler& sampler, long window) {
  if (!(zeta > 0.0)) throw InvalidParameters("zeta must be positive");
  if (n < 1 || window < 0) throw InvalidParameters("n must be positive and window non-negative");
  auto est = sample_counts(2, sampler, [&](const CounterRng& rng, std::uint64_t i,
                                           std::vector<std::uint64_t>& counts) {
    double x = rng.uniform(i);
    double s = 0.0;
    bool first = false, second = false;
    for (long m = 1; m <= n + 2 * window; ++m) {
      s += delta_term(map, x, delta);
      if (m >= n && s >= zeta * static_cast<double>(m)) {
        second = true;
        if (m <= n + window) first = true;
        break;
      }
      x = step(map, x);
    }
    counts[0] += first;
    counts[1] += second;
  });
  TailReport r;
  r.n = n;
  r.window = window;
  r.at_window = est[0];
  r.at_double_window = est[1];
  return r;
}

RateFit fit_exponential_rate(const DeviationSeries& series) {
  RateFit fit;
  std::vector<double> xs, ys, ws;
  bool any_mc = false;
  for (const auto& e : series.entries)
    if (e.measure > 0.0 && e.method == Method::monte_carlo && e.stderr_ > 0.0) any_mc = true;
  for (const auto& e : series.entries) {
    if (!(e.measure > 0.0)) {
      fit.below_resolution.push_back(e.n);
      continue;
    }
    double w;
    if (e.method == Method::exact_intervals || !(e.stderr_ > 0.0))
      w = any_mc ? 1e12 : 1.0;
    else
      w = (e.measure / e.stderr_) * (e.measure / e.stderr_);
    xs.push_back(static_cast<double>(e.n));
    ys.push_back(std::log(e.measure));
    ws.push_back(w);
  }
  if (xs.size() < 4)
    throw InsufficientData("need at least 4 entries with positive measure, have " +
                           std::to_string(xs.size()));
  double W = 0.0, mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    W += ws[i];
    mx += ws[i] * xs[i];
    my += ws[i] * ys[i];
  }
  mx /= W;
  my /= W;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    double dx = xs[i] - mx, dy = ys[i] - my;
    sxx += ws[i] * dx * dx;
    sxy += ws[i] * dx * dy;
    syy += ws[i] * dy * dy;
  }
  if (!(sxx > 0.0)) throw InsufficientData("all entries share one n");
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  double sse = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    double r = ys[i] - (fit.intercept + fit.slope * xs[i]);
    sse += ws[i] * r * r;
  }
  fit.r_squared = syy > 0.0 ? 1.0 - sse / syy : 1.0;
  double dof = static_cast<double>(xs.size()) - 2.0;
  fit.slope_stderr = std::sqrt(sse / dof / sxx);
  boost::math::students_t dist(dof);
  double t = boost::math::quantile(dist, 0.975);
  fit.ci95_upper = fit.slope + t * fit.slope_stderr;
  fit.decaying = fit.ci95_upper < 0.0;
  fit.n_lo = static_cast<long>(xs.front());
  fit.n_hi = static_cast<long>(xs.back());
  return fit;
}

}  // namespace slowrec
