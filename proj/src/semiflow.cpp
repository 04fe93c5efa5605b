#include "slowrec/semiflow.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "slowrec/parallel.hpp"

namespace slowrec {

SkewProduct::SkewProduct(PiecewiseMap base, double lambda, FiberDrift drift)
    : base_(std::move(base)), lambda_(lambda), drift_(std::move(drift)) {
  if (!(lambda_ > 0.0 && lambda_ < 1.0)) throw InvalidParameters("fiber contraction must lie in (0,1)");
  if (!drift_) throw InvalidParameters("fiber drift is empty");
  double sup = 0.0;
  for (int i = 0; i <= 4096; ++i) sup = std::max(sup, std::fabs(drift_(i / 4096.0)));
  if (!(sup < 1.0 - lambda_))
    throw InvalidParameters("sup|u| = " + std::to_string(sup) + " must be below 1 - lambda");
}

std::pair<double, double> skew_step(const SkewProduct& sp, double x, double y) {
  const auto& f = sp.base();
  if (f.distance_to_boundary(x) <= f.tolerance())
    throw SingularPoint(x, "skew step at a point of D: x = " + std::to_string(x));
  return {f.evaluate(x), sp.fiber(x, y)};
}

void RoofFunction::validate() const {
  if (!(tau0 > 0.0)) throw InvalidParameters("tau0 must be positive");
  if (!(K >= 0.0)) throw InvalidParameters("K must be non-negative");
  if (!(delta_roof > 0.0 && delta_roof < 0.5)) throw InvalidParameters("delta_roof must lie in (0,1/2)");
  if (!(fiber_lipschitz >= 0.0)) throw InvalidParameters("fiber_lipschitz must be non-negative");
}

double RoofFunction::operator()(const PiecewiseMap& map, double x, double y) const {
  double t = tau0 + fiber_lipschitz * (1.0 + y);
  if (K > 0.0) t += K * log_truncated(map.distance_to_boundary(x), delta_roof);
  return t;
}

double RoofFunction::lebesgue_mean(const PiecewiseMap& map) const {
  return tau0 + fiber_lipschitz + K * integrate_recurrence_observable(map, delta_roof);
}

SkewProductSemiflow make_lorenz_semiflow(double alpha, double lambda, const RoofFunction& roof) {
  roof.validate();
  return {SkewProduct(make_lorenz_map(alpha), lambda, [](double x) { return 0.4 * (x - 0.5); }), roof};
}

double fiber_integral(const FlowObservable& psi, double x, double y, double a, double b, double h) {
  if (!(h > 0.0)) throw InvalidParameters("quadrature step must be positive");
  double len = b - a;
  if (!(len > 0.0)) return 0.0;
  long m = 2 * std::max(1L, static_cast<long>(std::ceil(len / (2.0 * h))));
  double step = len / static_cast<double>(m);
  double s = psi(x, y, a) + psi(x, y, b);
  for (long k = 1; k < m; ++k) s += (k % 2 ? 4.0 : 2.0) * psi(x, y, a + step * static_cast<double>(k));
  return s * step / 3.0;
}

namespace {

double resolve_step(const SkewProductSemiflow& flow, double h) {
  if (h == 0.0) return flow.roof.tau0 / 64.0;
  if (!(h > 0.0)) throw InvalidParameters("quadrature step must be positive");
  return h;
}

void check_state(const SkewProductSemiflow& flow, const SemiflowState& z) {
  const auto& f = flow.sp.base();
  if (!(z.x >= 0.0 && z.x <= 1.0)) throw InvalidParameters("x must lie in [0,1]");
  if (!(z.y > -1.0 && z.y < 1.0)) throw InvalidParameters("y must lie in (-1,1)");
  if (f.distance_to_boundary(z.x) <= f.tolerance())
    throw OrbitHitSingular(0, z.x, "state lies on the singular fiber");
  if (!(z.s >= 0.0 && z.s < flow.tau(z.x, z.y))) throw InvalidParameters("s must lie in [0, tau(x))");
}

// Walks the laps of one state. With checked = true every base point is tested against D.
template <bool checked>
struct LapWalk {
  const SkewProductSemiflow& flow;
  double x, y, s;
  long j = 0;
  double S = 0.0;  // S_j tau
  double tau_j;

  LapWalk(const SkewProductSemiflow& fl, const SemiflowState& z)
      : flow(fl), x(z.x), y(z.y), s(z.s), tau_j(fl.tau(z.x, z.y)) {}

  // Advances while S_{j+1} <= target; on_lap(j, x_j, y_j, tau_j) runs for each completed lap.
  template <class OnLap>
  void advance(double target, OnLap&& on_lap) {
    while (S + tau_j <= target) {
      on_lap(j, x, y, tau_j);
      S += tau_j;
      const auto& f = flow.sp.base();
      double ny = flow.sp.fiber(x, y);
      x = f.branch(f.locate(x)).evaluate(x);
      y = ny;
      ++j;
      if constexpr (checked) {
        if (f.distance_to_boundary(x) <= f.tolerance())
          throw OrbitHitSingular(j, x, "flow orbit hit D at base iterate " + std::to_string(j));
      }
      tau_j = flow.tau(x, y);
    }
  }
  void advance(double target) {
    advance(target, [](long, double, double, double) {});
  }
};

// int_0^T psi along the flow, as head + full laps + tail; cum carries the head and full laps.
template <bool checked>
struct FlowIntegrator {
  const FlowObservable& psi;
  double h;
  LapWalk<checked> walk;
  double cum = 0.0;

  FlowIntegrator(const FlowObservable& p, const SkewProductSemiflow& fl, const SemiflowState& z,
                 double step)
      : psi(p), h(step), walk(fl, z) {}

  double integral(double T) {
    walk.advance(walk.s + T, [&](long j, double x, double y, double tau) {
      cum += j == 0 ? fiber_integral(psi, x, y, walk.s, tau, h) : fiber_integral(psi, x, y, 0.0, tau, h);
    });
    if (walk.j == 0) return fiber_integral(psi, walk.x, walk.y, walk.s, walk.s + T, h);
    return cum + fiber_integral(psi, walk.x, walk.y, 0.0, walk.s + T - walk.S, h);
  }
};

void check_times(std::span<const double> Ts) {
  if (Ts.empty()) throw InvalidParameters("no T requested");
  for (std::size_t i = 0; i < Ts.size(); ++i) {
    if (!(Ts[i] > 0.0)) throw InvalidParameters("T must be positive");
    if (i > 0 && !(Ts[i] > Ts[i - 1])) throw InvalidParameters("T values must increase");
  }
}

constexpr std::uint64_t kChunk = 4096;

struct WeightedChunk {
  double w = 0.0, w2 = 0.0;
  std::vector<double> a, a2;
  std::vector<std::uint64_t> hits;
};

// Self-normalized estimate sum(w 1) / sum(w) with per-sample weight tau(x, y).
// per_sample(z, flags) fills flags[k] for each slot.
template <class PerSample>
std::vector<MeasureEstimate> weighted_counts(const SkewProductSemiflow& flow, std::size_t slots,
                                             const Sampler& sampler, PerSample&& per_sample) {
  if (sampler.count == 0) throw InvalidParameters("sample count must be positive");
  if (sampler.count > sampler.budget)
    throw SampleBudgetExceeded("requested " + std::to_string(sampler.count) + " samples, budget " +
                               std::to_string(sampler.budget));
  std::uint64_t chunks = (sampler.count + kChunk - 1) / kChunk;
  std::vector<WeightedChunk> parts(chunks);
  CounterRng rng{sampler.seed};
  parallel_chunks(chunks, sampler.workers, [&](std::size_t c) {
    auto& p = parts[c];
    p.a.assign(slots, 0.0);
    p.a2.assign(slots, 0.0);
    p.hits.assign(slots, 0);
    std::vector<char> flags(slots);
    std::uint64_t end = std::min<std::uint64_t>(sampler.count, (c + 1) * kChunk);
    for (std::uint64_t i = c * kChunk; i < end; ++i) {
      SemiflowState z;
      z.x = rng.uniform(i, 0);
      z.y = 2.0 * rng.uniform(i, 1) - 1.0;
      double tau = flow.tau(z.x, z.y);
      z.s = rng.uniform(i, 2) * tau;
      std::fill(flags.begin(), flags.end(), 0);
      per_sample(z, flags);
      p.w += tau;
      p.w2 += tau * tau;
      for (std::size_t k = 0; k < slots; ++k)
        if (flags[k]) {
          p.a[k] += tau;
          p.a2[k] += tau * tau;
          ++p.hits[k];
        }
    }
  });
  double W = 0.0, W2 = 0.0;
  for (const auto& p : parts) {
    W += p.w;
    W2 += p.w2;
  }
  std::vector<MeasureEstimate> out(slots);
  for (std::size_t k = 0; k < slots; ++k) {
    double A = 0.0, A2 = 0.0;
    std::uint64_t hits = 0;
    for (const auto& p : parts) {
      A += p.a[k];
      A2 += p.a2[k];
      hits += p.hits[k];
    }
    auto& e = out[k];
    e.samples = sampler.count;
    e.hits = hits;
    e.measure = A / W;
    if (hits == 0) {
      e.stderr_ = 3.0 * W2 / (W * W);
    } else {
      double m = e.measure;
      double var = ((1.0 - 2.0 * m) * A2 + m * m * W2) / (W * W);
      e.stderr_ = std::sqrt(std::max(0.0, var));
    }
  }
  return out;
}

}  // namespace

Lap lap_number(const SkewProductSemiflow& flow, const SemiflowState& z, double t) {
  if (!(t >= 0.0)) throw InvalidParameters("t must be non-negative");
  check_state(flow, z);
  LapWalk<true> walk(flow, z);
  walk.advance(z.s + t);
  return {walk.j, z.s + t - walk.S, walk.x, walk.y, walk.S};
}

SemiflowState flow_evolve(const SkewProductSemiflow& flow, const SemiflowState& z, double t) {
  auto lap = lap_number(flow, z, t);
  return {lap.x, lap.y, lap.residual};
}

InducedObservable::InducedObservable(FlowObservable psi, const SkewProductSemiflow& flow, double h)
    : psi_(std::move(psi)), flow_(&flow), h_(resolve_step(flow, h)) {}

double InducedObservable::operator()(double x, double y) const {
  const auto& f = flow_->sp.base();
  if (f.distance_to_boundary(x) <= f.tolerance())
    throw SingularPoint(x, "induced observable at a point of D: x = " + std::to_string(x));
  return fiber_integral(psi_, x, y, 0.0, flow_->tau(x, y), h_);
}

InducedObservable induce_observable(const FlowObservable& psi, const SkewProductSemiflow& flow,
                                    double h) {
  return InducedObservable(psi, flow, h);
}

FlowAverage flow_time_average(const FlowObservable& psi, const SkewProductSemiflow& flow,
                              const SemiflowState& z, double T, double h) {
  if (!(T > 0.0)) throw InvalidParameters("T must be positive");
  check_state(flow, z);
  h = resolve_step(flow, h);
  FlowIntegrator<true> integ(psi, flow, z, h);
  double total = integ.integral(T);
  const auto& w = integ.walk;
  FlowAverage out;
  out.laps = w.j;
  out.value = total / T;
  double head_gap = fiber_integral(psi, z.x, z.y, 0.0, z.s, h);
  double tail = w.j == 0 ? fiber_integral(psi, z.x, z.y, 0.0, z.s + T, h)
                         : fiber_integral(psi, w.x, w.y, 0.0, z.s + T - w.S, h);
  out.correction = (tail - head_gap) / T;
  if (w.j > 0) out.birkhoff = (integ.cum + head_gap) / T;
  out.correction_bound = (2.0 * z.s + w.tau_j) * psi.sup / T;
  return out;
}

std::vector<double> flow_targets(const FlowObservable& psi, const SkewProductSemiflow& flow,
                                 const EquilibriumSet& acims, double h) {
  if (acims.densities.empty()) throw InvalidParameters("the equilibrium set is empty");
  auto phi = induce_observable(psi, flow, h);
  const auto& f = flow.sp.base();
  std::vector<double> out;
  for (const auto& d : acims.densities) {
    double mphi = integrate_observable(f, d, [&](double x) { return phi.base_fn(x); });
    double mtau = integrate_observable(f, d, [&](double x) { return flow.tau(x, 0.0); });
    out.push_back(mphi / mtau);
  }
  return out;
}

std::vector<MeasureEstimate> flow_deviation_series(const FlowObservable& psi,
                                                   const SkewProductSemiflow& flow,
                                                   std::span<const double> targets, double eps,
                                                   std::span<const double> Ts,
                                                   const Sampler& sampler, double h) {
  if (targets.empty()) throw InvalidParameters("the equilibrium set is empty");
  if (!(eps >= 0.0)) throw InvalidParameters("eps must be non-negative");
  check_times(Ts);
  h = resolve_step(flow, h);
  double lo = *std::min_element(targets.begin(), targets.end());
  double hi = *std::max_element(targets.begin(), targets.end());
  return weighted_counts(flow, Ts.size(), sampler, [&](const SemiflowState& z, std::vector<char>& flags) {
    FlowIntegrator<false> integ(psi, flow, z, h);
    for (std::size_t k = 0; k < Ts.size(); ++k) {
      double avg = integ.integral(Ts[k]) / Ts[k];
      double dist = avg < lo ? lo - avg : (avg > hi ? avg - hi : 0.0);
      flags[k] = dist > eps;
    }
  });
}

MeasureEstimate flow_deviation_measure(const FlowObservable& psi, const SkewProductSemiflow& flow,
                                       std::span<const double> targets, double eps, double T,
                                       const Sampler& sampler, double h) {
  double Ts[] = {T};
  return flow_deviation_series(psi, flow, targets, eps, Ts, sampler, h)[0];
}

std::vector<MeasureEstimate> flow_escape_series(const SkewProductSemiflow& flow,
                                                std::span<const std::pair<double, double>> K,
                                                std::span<const double> Ts,
                                                const Sampler& sampler) {
  check_times(Ts);
  for (const auto& [a, b] : K)
    if (!(a <= b)) throw InvalidParameters("K intervals must have lo <= hi");
  auto inside = [&](double x) {
    for (const auto& [a, b] : K)
      if (x >= a && x <= b) return true;
    return false;
  };
  return weighted_counts(flow, Ts.size(), sampler, [&](const SemiflowState& z, std::vector<char>& flags) {
    if (!inside(z.x)) return;
    LapWalk<false> walk(flow, z);
    bool alive = true;
    for (std::size_t k = 0; k < Ts.size() && alive; ++k) {
      walk.advance(z.s + Ts[k], [&](long, double x, double, double) { alive = alive && inside(x); });
      alive = alive && inside(walk.x);
      flags[k] = alive;
    }
  });
}

MeasureEstimate flow_escape_measure(const SkewProductSemiflow& flow,
                                    std::span<const std::pair<double, double>> K, double T,
                                    const Sampler& sampler) {
  double Ts[] = {T};
  return flow_escape_series(flow, K, Ts, sampler)[0];
}

}  // namespace slowrec
