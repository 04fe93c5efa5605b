#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>

#include "partition_detail.hpp"

namespace slowrec {

double GridSequence::value(long p) const { return std::pow(static_cast<double>(p), gamma); }

double GridSequence::gap(long p) const {
  double pd = static_cast<double>(p);
  return value(p) * -std::expm1(gamma * std::log1p(1.0 / pd));
}

long GridSequence::first_below(double d) const {
  if (!(d > 0.0)) throw InvalidParameters("distance must be positive");
  double guess = std::floor(std::pow(d, 1.0 / gamma));
  long p = std::max(1L, static_cast<long>(guess) - 1);
  while (p > 1 && value(p - 1) < d) --p;
  while (!(value(p) < d)) ++p;
  return p;
}

GridSequence make_grid(double epsilon1, double beta1) {
  if (!(epsilon1 > 0.0)) throw InvalidParameters("epsilon1 must be positive");
  if (!(beta1 > 0.0 && beta1 < 1.0)) throw InvalidParameters("beta1 must lie in (0,1)");
  if (!(1.0 - beta1 > epsilon1 * beta1))
    throw InvalidParameters("grid requires 1 - beta1 > epsilon1 * beta1");
  GridSequence s;
  s.epsilon1 = epsilon1;
  s.beta1 = beta1;
  s.gamma = -1.0 / (epsilon1 * beta1);
  return s;
}

double grid_value(const GridSequence& seq, long p) {
  if (p < 1) throw InvalidParameters("grid index must be positive");
  return seq.value(p);
}

GridConstants verify_grid_constants(GridSequence& seq, long p_max, double sigma_T0) {
  if (p_max < 10) throw InvalidParameters("p_max must be at least 10");
  GridConstants out;
  double e = 1.0 + seq.epsilon1 * seq.beta1;
  double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
  out.probe = std::min<long>(100000, p_max);
  double prev_gap = seq.gap(1), cur_gap = seq.gap(2);
  for (long p = 1; p <= p_max; ++p) {
    double g = p == 1 ? prev_gap : cur_gap;
    double r = g / std::pow(static_cast<double>(p), seq.gamma * e);
    lo = std::min(lo, r);
    hi = std::max(hi, r);
    if (p == out.probe) out.ratio_at_probe = r;
    if (p >= 2) {
      double next_gap = seq.gap(p + 1);
      out.K1_observed = std::max(out.K1_observed, (prev_gap + cur_gap + next_gap) / cur_gap);
      prev_gap = cur_gap;
      cur_gap = next_gap;
    }
  }
  out.ratio_limit = 1.0 / (seq.epsilon1 * seq.beta1);
  // The ratio increases to its limit, so the supremum over all p is the limit.
  out.K0 = std::max({hi, 1.0 / lo, out.ratio_limit});
  out.K1 = std::max({out.K1_observed, 1.0 + 2.0 * out.K0, sigma_T0});
  seq.K0 = out.K0;
  seq.K1 = out.K1;
  return out;
}

double tail_sum(const GridSequence& seq, long rho, double xi, std::size_t n_points) {
  const long head = 2000;
  double s = 0.0;
  for (long p = rho; p < rho + head; ++p) s += std::pow(seq.gap(p), xi);
  double decay = (1.0 - seq.gamma) * xi - 1.0;
  if (!(decay > 0.0)) return std::numeric_limits<double>::infinity();
  double start = static_cast<double>(rho + head - 1);
  s += std::pow(-seq.gamma, xi) * std::pow(start, -decay) / decay;
  return static_cast<double>(n_points) * s;
}

namespace {

struct Exponents {
  double q, beta2, beta3, z;
};

Exponents exponents(const GridSequence& seq) {
  double eb = seq.epsilon1 * seq.beta1;
  Exponents x;
  x.q = eb / (1.0 + eb);
  x.beta2 = (1.0 + seq.epsilon1) * seq.beta1 / (1.0 + eb);
  double m = 1.0 - x.beta2 - x.q;
  x.z = m / 3.0;
  x.beta3 = x.beta2 + x.q + 2.0 * m / 3.0;
  return x;
}

std::vector<long> rho_vector(const PiecewiseMap& map, const GridSequence& seq, long rho0) {
  std::vector<long> rho;
  for (const auto& p : map.boundary_points())
    rho.push_back(p.singular() ? seq.first_below(p.half_gap) : rho0);
  return rho;
}

long max_singular_rho(const PiecewiseMap& map, const GridSequence& seq) {
  long r = 1;
  for (const auto& p : map.boundary_points())
    if (p.singular()) r = std::max(r, seq.first_below(p.half_gap));
  return r;
}

int max_steps(const PiecewiseMap& map) {
  int t = 1;
  for (const auto& p : map.boundary_points())
    if (p.connection) t = std::max(t, p.connection->steps);
  return t;
}

// exp of the largest one-step log-distortion over the outer atoms and escape intervals.
double one_step_distortion(const PiecewiseMap& map, const std::vector<Atom>& cells) {
  double worst = 0.0;
  for (const auto& a : cells) {
    if (a.kind == AtomKind::leftover) continue;
    const Branch& b = map.branch(map.locate(0.5 * (a.lo + a.hi)));
    double lo = 0.0, hi = 0.0;
    bool first = true;
    for (int k = 0; k <= 16; ++k) {
      double x = a.lo + (a.hi - a.lo) * std::clamp(k / 16.0, 1e-9, 1.0 - 1e-9);
      double v = std::log(std::fabs(b.derivative(x)));
      lo = first ? v : std::min(lo, v);
      hi = first ? v : std::max(hi, v);
      first = false;
    }
    worst = std::max(worst, hi - lo);
  }
  return std::exp(worst);
}

double distance_to_locations(const PiecewiseMap& map, double lo, double hi) {
  double d = std::numeric_limits<double>::infinity();
  for (double c : map.locations()) {
    if (c >= lo && c <= hi) return 0.0;
    d = std::min(d, c < lo ? lo - c : c - hi);
  }
  return d;
}

struct Search {
  const PiecewiseMap& map;
  const GridSequence& seq;
  Thresholds& th;
  Exponents ex;
  std::vector<std::size_t> discont;
  std::vector<double> limit_escape;  // per discont point, escape length in the limit geometry

  // Lengths of M(c,p) and M(c,p)^+ for the grid (singular anchors).
  double grid_plus(long p) const { return seq.gap(p - 1) + seq.gap(p) + seq.gap(p + 1); }

  // Conditions on the singular-grid atoms; monotone in rho.
  std::string grid_conditions(long rho) const {
    double inv_L3 = std::pow(th.L, -3.0);
    if (map.has_singular()) {
      long p = rho + 1;
      if (grid_plus(p) / std::pow(seq.gap(p), ex.beta3) > inv_L3) return "escapeint0 (atom ratio)";
    }
    double m = seq.gap(rho);
    if (std::pow(m, ex.beta3 - ex.beta2) * th.B * std::pow(th.K1, 1.0 - ex.beta2) *
            std::pow(grid_K2, 1.0 - seq.beta1) > 1.0)
      return "escapeint1 (second)";
    if (std::pow(m, -ex.q) < grid_K2) return "escapeint1 (third)";
    return "";
  }

  double grid_K2 = 1.0;

  std::string full_conditions(long rho) {
    for (const auto& p : map.boundary_points())
      if (p.singular() && !(rho > seq.first_below(p.half_gap))) return "escnosing";
    double bar = seq.value(rho - 1);
    for (auto i : discont) {
      auto orbit = connection_orbit(map, i);
      for (std::size_t j = 0; j + 1 < orbit.size(); ++j)
        if (!(map.distance_to_boundary(orbit[j]) > bar)) return "conexao";
    }
    std::string g = grid_conditions(rho);
    if (!g.empty()) return g;
    if (discont.empty()) return "";
    std::vector<Atom> cells;
    try {
      cells = detail::layout_cells(map, seq, rho_vector(map, seq, rho), rho + 2);
    } catch (const DepthOverflow& e) {
      throw NoFeasibleThreshold("rho0 = " + std::to_string(rho) +
                                " exceeds double resolution before all conditions hold (" +
                                e.what() + ")");
    } catch (const Error& e) {
      return std::string("conexao (") + e.what() + ")";
    }
    double sup_plus = 0.0, inf_esc = std::numeric_limits<double>::infinity();
    for (auto i : discont) {
      auto k = detail::escape_of(cells, map, i);
      if (k == cells.size()) return "escapeint0 (no escape interval)";
      sup_plus = std::max(sup_plus, detail::plus_length(cells, k));
      inf_esc = std::min(inf_esc, cells[k].length());
      double m = cells[k].length();
      if (!(map.sigma() * m > std::pow(m, th.beta_under))) return "escapeint0 (escape expansion)";
    }
    th.kappa0 = sup_plus / inf_esc;
    double ratio = th.kappa0 / th.kappa0_limit;
    if (ratio < 0.5 || ratio > 1.5) return "escapeint0 (kappa0 ratio)";
    double inv_L3 = std::pow(th.L, -3.0);
    double biggest = 0.0;
    for (std::size_t k = 0; k < cells.size(); ++k) {
      const auto& a = cells[k];
      if (a.kind != AtomKind::pulled_back) continue;
      if (a.depth == rho + 1 && detail::plus_length(cells, k) / std::pow(a.length(), ex.beta3) > inv_L3)
        return "escapeint0 (pulled-back atom ratio)";
      if (a.depth == rho) biggest = std::max(biggest, a.length());
    }
    if (map.has_singular()) biggest = std::max(biggest, seq.gap(rho));
    if (biggest > inf_esc) return "escapeint1 (first)";
    double K2 = std::max(grid_K2, detail::estimate_K2(cells, map, seq));
    if (std::pow(biggest, ex.beta3 - ex.beta2) * th.B * std::pow(th.K1, 1.0 - ex.beta2) *
            std::pow(K2, 1.0 - seq.beta1) > 1.0)
      return "escapeint1 (second)";
    if (std::pow(biggest, -ex.q) < K2) return "escapeint1 (third)";
    return "";
  }
};

// Least rho in [lo, cap] with pred(rho) true, assuming pred is monotone.
long monotone_search(long lo, long cap, const std::function<bool(long)>& pred) {
  if (pred(lo)) return lo;
  long step = 1, hi = lo;
  while (true) {
    long next = std::min(cap, hi + step);
    if (pred(next)) {
      hi = next;
      break;
    }
    if (next == cap) return -1;
    lo = next;
    hi = next;
    step *= 2;
  }
  while (hi - lo > 1) {
    long mid = lo + (hi - lo) / 2;
    if (pred(mid))
      hi = mid;
    else
      lo = mid;
  }
  return hi;
}

void fill_constants(const PiecewiseMap& map, GridSequence& seq, const ThresholdOptions& opts,
                    Thresholds& th, Search& s) {
  s.ex = exponents(seq);
  th.beta2 = s.ex.beta2;
  th.beta3 = s.ex.beta3;
  th.z = s.ex.z;
  auto gc = verify_grid_constants(seq, 100000, std::pow(map.sigma(), max_steps(map)));
  th.K0 = gc.K0;
  th.K1 = gc.K1;
  th.B = 1.0;
  for (const auto& p : map.boundary_points()) th.B = std::max(th.B, p.comparability);
  s.discont = map.connected_points();
  for (auto i : s.discont)
    if (!map.point(i).connection)
      throw InvalidParameters("thresholds need a connection for every order-1 point");

  long base = max_singular_rho(map, seq) + 1;
  auto probe_cells = detail::layout_cells(map, seq, rho_vector(map, seq, base), base + 200);
  th.distortion = opts.distortion > 0.0 ? opts.distortion : one_step_distortion(map, probe_cells);

  {
    // grid K2 over the singular atoms, which do not depend on rho0
    double e = 1.0 / (1.0 + seq.epsilon1 * seq.beta1);
    double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
    for (long p = 1; p <= 5000; ++p) {
      double r = seq.value(p + 1) / std::pow(seq.gap(p), e);
      lo = std::min(lo, r);
      hi = std::max(hi, r);
    }
    s.grid_K2 = std::max({1.0, hi, 1.0 / lo});
  }

  if (!s.discont.empty()) {
    double sup_term = -std::numeric_limits<double>::infinity();
    for (auto i : s.discont)
      sup_term = std::max(sup_term, std::log(map.sigma()) / std::log(2.0 * map.point(i).half_gap));
    long far = seq.first_below(1e-9);
    auto cells = detail::layout_cells(map, seq, rho_vector(map, seq, far), far + 1);
    double sup_plus = 0.0, inf_esc = std::numeric_limits<double>::infinity();
    for (auto i : s.discont) {
      auto k = detail::escape_of(cells, map, i);
      if (k == cells.size()) throw NoFeasibleThreshold("escape interval missing in the limit");
      sup_plus = std::max(sup_plus, detail::plus_length(cells, k));
      inf_esc = std::min(inf_esc, cells[k].length());
      s.limit_escape.push_back(cells[k].length());
    }
    th.kappa0_limit = sup_plus / inf_esc;
    th.kappa0 = th.kappa0_limit;
    th.ell = 0;
    for (int l = 1; l <= 100000; ++l) {
      double b = 1.0 + sup_term / l;
      if (b > th.beta2) break;
      if (b > 0.0) {
        th.ell = l;
        th.beta_under = b;
        break;
      }
    }
    if (th.ell == 0) {
      for (int l = 1; l <= 100000; ++l) {
        double b = 1.0 + sup_term / l;
        if (!(b > 0.0)) continue;
        bool ok = true;
        for (double m : s.limit_escape) ok = ok && map.sigma() * m > std::pow(m, b);
        if (ok) {
          th.ell = l;
          th.beta_under = b;
          break;
        }
      }
      th.notes.push_back("no ell gives beta_under <= beta2; least ell with escape expansion used");
      if (th.ell == 0) throw NoFeasibleThreshold("no ell satisfies the escape expansion condition");
    }
  } else {
    th.kappa0 = th.kappa0_limit = 1.0;
  }
  th.L = th.kappa0_limit * th.B * th.distortion * th.distortion *
         std::pow(th.K1 * th.K0, th.beta2 - 1.0);
}

double deviation_delta(const PiecewiseMap& map, double eps) {
  double lo = 0.0, hi = 0.25;
  if (integrate_recurrence_observable(map, hi) <= 0.5 * eps) return hi;
  for (int it = 0; it < 200; ++it) {
    double mid = 0.5 * (lo + hi);
    if (integrate_recurrence_observable(map, mid) <= 0.5 * eps)
      lo = mid;
    else
      hi = mid;
  }
  return lo;
}

double trunca_bound(const PiecewiseMap& map, const GridSequence& seq, const Thresholds& th) {
  if (map.connected_points().empty()) return std::numeric_limits<double>::infinity();
  auto cells = detail::layout_cells(map, seq, th.rho, th.rho0 + 1);
  double d = std::numeric_limits<double>::infinity();
  for (auto i : map.connected_points()) {
    auto k = detail::escape_of(cells, map, i);
    if (k == cells.size()) continue;
    double lo = cells[k == 0 ? 0 : k - 1].lo, hi = cells[k + 1 < cells.size() ? k + 1 : k].hi;
    d = std::min(d, distance_to_locations(map, lo, hi));
  }
  return 0.5 * d * (1.0 - 1e-9);
}

}  // namespace

Thresholds choose_thresholds(const PiecewiseMap& map, GridSequence& seq,
                             const ThresholdOptions& opts) {
  if (!(opts.epsilon0 > 0.0 && opts.epsilon0 < 1.0))
    throw NoFeasibleThreshold("epsilon0 must lie in (0,1)");
  Thresholds th;
  Search s{map, seq, th, {}, {}, {}};
  fill_constants(map, seq, opts, th, s);

  long lower = std::max(2L, max_singular_rho(map, seq) + 1);
  // deepest grid level still distinguishable from the boundary point in double precision
  long cap = std::min(opts.rho_cap, seq.first_below(1e-15) - 2);
  long grid_ok = monotone_search(lower, cap, [&](long r) { return s.grid_conditions(r).empty(); });
  if (grid_ok < 0)
    throw NoFeasibleThreshold("rho0 search hit the cap; failing: " + s.grid_conditions(cap));
  long rho = grid_ok;
  if (opts.tail_sums) {
    double target = 0.5 * opts.epsilon0;
    std::size_t nd = map.boundary_points().size();
    long t = monotone_search(lower, cap, [&](long r) {
      return tail_sum(seq, r, s.ex.beta3 - s.ex.beta2, nd) < target;
    });
    if (t < 0) throw NoFeasibleThreshold("rho0 search hit the cap; failing: tail sum");
    rho = std::max(rho, t);
  }
  std::string why;
  long scanned = 0;
  for (;; ++rho, ++scanned) {
    why = s.full_conditions(rho);
    if (why.empty()) break;
    if (rho >= cap || scanned > 200000)
      throw NoFeasibleThreshold("rho0 search hit the cap; failing: " + why);
  }
  th.rho0 = rho;
  th.rho = rho_vector(map, seq, rho);
  if (opts.tail_sums) {
    double target = 0.5 * opts.epsilon0;
    double xi = s.ex.beta3 - s.ex.beta2 - s.ex.z;
    std::size_t nd = map.boundary_points().size();
    long t = monotone_search(rho + 1, opts.rho_cap,
                             [&](long r) { return tail_sum(seq, r, xi, nd) < target; });
    if (t < 0) throw NoFeasibleThreshold("theta search hit the cap; failing: tail sum");
    th.theta = t;
    th.tail_rho0 = tail_sum(seq, th.rho0, s.ex.beta3 - s.ex.beta2, nd);
    th.tail_theta = tail_sum(seq, th.theta, xi, nd);
  } else {
    th.theta = rho + 1;
  }
  th.delta_trunca = trunca_bound(map, seq, th);
  th.delta_deviation = deviation_delta(map, opts.deviation > 0.0 ? opts.deviation : opts.epsilon0);
  th.delta.delta = std::min(th.delta_trunca, th.delta_deviation);
  th.delta_theta = seq.value(th.theta);
  return th;
}

Thresholds manual_thresholds(const PiecewiseMap& map, GridSequence& seq, double delta, long rho0,
                             long theta) {
  if (!(delta > 0.0 && delta < 0.5)) throw InvalidParameters("delta must lie in (0,1/2)");
  Thresholds th;
  Search s{map, seq, th, {}, {}, {}};
  ThresholdOptions opts;
  fill_constants(map, seq, opts, th, s);
  long lower = std::max(2L, max_singular_rho(map, seq) + 1);
  if (rho0 == 0) {
    rho0 = lower;
    while (true) {
      bool ok = true;
      double bar = seq.value(rho0 - 1);
      for (auto i : s.discont) {
        auto orbit = connection_orbit(map, i);
        for (std::size_t j = 0; j + 1 < orbit.size(); ++j)
          ok = ok && map.distance_to_boundary(orbit[j]) > bar;
      }
      if (ok) {
        try {
          detail::layout_cells(map, seq, rho_vector(map, seq, rho0), rho0 + 1);
        } catch (const Error&) {
          ok = false;
        }
      }
      if (ok) break;
      if (++rho0 > opts.rho_cap) throw NoFeasibleThreshold("no rho0 admits the pullbacks");
    }
  } else if (rho0 < lower) {
    throw InvalidParameters("rho0 must exceed rho(c) for every singular point");
  }
  th.rho0 = rho0;
  th.rho = rho_vector(map, seq, rho0);
  th.theta = theta > 0 ? theta : rho0 + 1;
  if (th.theta <= th.rho0) throw InvalidParameters("theta must exceed rho0");
  std::string why = s.full_conditions(rho0);
  if (!why.empty()) th.notes.push_back("manual rho0 violates " + why);
  th.delta.delta = delta;
  th.delta_trunca = trunca_bound(map, seq, th);
  th.delta_deviation = delta;
  th.delta_theta = seq.value(th.theta);
  return th;
}

}  // namespace slowrec
