#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <string>

#include "partition_detail.hpp"
#include "slowrec/parallel.hpp"

namespace slowrec {

std::vector<Atom> InitialPartition::atoms() const {
  std::vector<Atom> out;
  for (const auto& a : cells)
    if (a.kind != AtomKind::leftover) out.push_back(a);
  return out;
}

std::size_t InitialPartition::cell_at(double x) const {
  auto it = std::upper_bound(cells.begin(), cells.end(), x,
                             [](double v, const Atom& a) { return v < a.hi; });
  if (it == cells.end()) return cells.size() - 1;
  return static_cast<std::size_t>(it - cells.begin());
}

InitialPartition build_initial_partition(const PiecewiseMap& map, const GridSequence& seq,
                                         const Thresholds& th, long p_max) {
  if (p_max < th.theta) throw InvalidParameters("p_max must be at least theta");
  if (th.rho.size() != map.boundary_points().size())
    throw InvalidParameters("thresholds do not match the map");
  InitialPartition p0;
  p0.cells = detail::layout_cells(map, seq, th.rho, p_max);
  p0.rho = th.rho;
  p0.rho0 = th.rho0;
  p0.theta = th.theta;
  p0.p_max = p_max;
  p0.delta = th.delta;
  for (const auto& a : p0.cells) {
    if (a.kind == AtomKind::leftover)
      p0.leftover += a.length();
    else
      p0.covered += a.length();
  }
  if (std::fabs(p0.covered + p0.leftover - 1.0) > 1e-9)
    throw InvalidParameters("initial partition does not cover [0,1]");
  p0.K2 = detail::estimate_K2(p0.cells, map, seq);
  return p0;
}

std::vector<RefinedAtom> initial_refined(const InitialPartition& p0) {
  std::vector<RefinedAtom> out;
  for (std::size_t k = 0; k < p0.cells.size(); ++k) {
    const auto& c = p0.cells[k];
    if (c.kind == AtomKind::leftover) continue;
    RefinedAtom a;
    a.lo = a.image_lo = c.lo;
    a.hi = a.image_hi = c.hi;
    a.returns.push_back({0, static_cast<std::int32_t>(k)});
    a.hosts.push_back(static_cast<std::int32_t>(k));
    out.push_back(std::move(a));
  }
  return out;
}

namespace {

struct Group {
  double ylo, yhi;
  std::int32_t cell;
  bool overflow;
};

enum class StepKind { free, split, lost };

struct Plan {
  std::uint8_t branch = 0;
  bool reversed = false;
  double jlo = 0.0, jhi = 0.0;
  StepKind kind = StepKind::free;
  std::int32_t host = -1;
  std::vector<Group> groups;
};

void plan_step(double ilo, double ihi, bool reversed_in, const PiecewiseMap& map,
               const InitialPartition& p0, Plan& plan) {
  const auto& cells = p0.cells;
  const auto& locs = map.locations();
  std::size_t b = map.locate(0.5 * (ilo + ihi));
  const Branch& br = map.branch(b);
  double y1 = br.evaluate(ilo), y2 = br.evaluate(ihi);
  double jlo = std::min(y1, y2), jhi = std::max(y1, y2);
  plan.branch = static_cast<std::uint8_t>(b);
  plan.reversed = reversed_in != !br.increasing();
  plan.jlo = jlo;
  plan.jhi = jhi;
  plan.groups.clear();

  auto first_it = std::upper_bound(cells.begin(), cells.end(), jlo,
                                   [](double v, const Atom& c) { return v < c.hi; });
  std::size_t first = static_cast<std::size_t>(first_it - cells.begin());
  std::size_t last = first;
  while (last < cells.size() && cells[last].lo < jhi) ++last;
  if (first == last) {
    first = std::min(first, cells.size() - 1);
    last = first + 1;
  }
  auto is_d = [&](double y) { return std::binary_search(locs.begin(), locs.end(), y); };
  auto lit = std::upper_bound(locs.begin(), locs.end(), jlo);
  bool d_inside = lit != locs.end() && *lit < jhi;

  std::size_t count = last - first;
  if (!d_inside && count <= 3) {
    plan.kind = StepKind::free;
    for (std::size_t k = first; k < last; ++k)
      if (cells[k].kind == AtomKind::leftover) plan.kind = StepKind::lost;
    std::size_t host = count == 3 ? first + 1 : p0.cell_at(0.5 * (jlo + jhi));
    plan.host = static_cast<std::int32_t>(host);
    return;
  }

  plan.kind = StepKind::split;
  auto& groups = plan.groups;
  double pending = std::numeric_limits<double>::quiet_NaN();
  for (std::size_t k = first; k < last; ++k) {
    const Atom& c = cells[k];
    double plo = std::max(c.lo, jlo), phi = std::min(c.hi, jhi);
    bool full = jlo <= c.lo && jhi >= c.hi;
    if (c.kind == AtomKind::leftover) {
      if (!std::isnan(pending)) {
        groups.push_back({pending, plo, -1, true});
        pending = std::numeric_limits<double>::quiet_NaN();
      }
      groups.push_back({plo, phi, -1, true});
      continue;
    }
    if (full) {
      double lo = std::isnan(pending) ? plo : pending;
      pending = std::numeric_limits<double>::quiet_NaN();
      groups.push_back({lo, phi, static_cast<std::int32_t>(k), false});
      continue;
    }
    if (k == first && k + 1 < last && !is_d(c.hi)) {
      const Atom& nx = cells[k + 1];
      if (nx.kind != AtomKind::leftover && jhi >= nx.hi) {
        pending = plo;
        continue;
      }
    }
    if (k + 1 == last && k > first && !is_d(c.lo) && !groups.empty() && !groups.back().overflow &&
        groups.back().cell == static_cast<std::int32_t>(k - 1)) {
      groups.back().yhi = phi;
      continue;
    }
    groups.push_back({plo, phi, -1, true});
  }
  if (!std::isnan(pending)) groups.push_back({pending, jhi, -1, true});
}

double pull_to_x(const PiecewiseMap& map, const std::uint8_t* path, std::size_t len, double y) {
  for (std::size_t j = len; j-- > 0;) y = map.branch(path[j]).inverse(y);
  return y;
}

// x-endpoints of every group, in group order; xs[g] and xs[g + 1] bound group g.
void group_endpoints(const Plan& plan, const PiecewiseMap& map, const std::uint8_t* path,
                     std::size_t len, double x_lo, double x_hi, std::vector<double>& xs) {
  xs.clear();
  double at_jlo = plan.reversed ? x_hi : x_lo;
  double at_jhi = plan.reversed ? x_lo : x_hi;
  for (std::size_t g = 0; g < plan.groups.size(); ++g) {
    double y = plan.groups[g].ylo;
    xs.push_back(y == plan.jlo ? at_jlo : pull_to_x(map, path, len, y));
  }
  xs.push_back(at_jhi);
}

struct StepOut {
  std::vector<RefinedAtom> atoms;
  double overflow = 0.0;
  std::size_t overflow_count = 0, returns = 0, free_steps = 0;
};

void step_atom(const RefinedAtom& a, std::int64_t index, int n, const PiecewiseMap& map,
               const InitialPartition& p0, Plan& plan, std::vector<double>& xs, StepOut& out) {
  plan_step(a.image_lo, a.image_hi, a.reversed, map, p0, plan);
  if (plan.kind == StepKind::lost) {
    out.overflow += a.length();
    ++out.overflow_count;
    return;
  }
  RefinedAtom child = a;
  child.path.push_back(plan.branch);
  child.reversed = plan.reversed;
  child.parent = index;
  if (plan.kind == StepKind::free) {
    child.image_lo = plan.jlo;
    child.image_hi = plan.jhi;
    child.hosts.push_back(plan.host);
    out.atoms.push_back(std::move(child));
    ++out.free_steps;
    return;
  }
  group_endpoints(plan, map, child.path.data(), child.path.size(), a.lo, a.hi, xs);
  std::vector<RefinedAtom> made;
  for (std::size_t g = 0; g < plan.groups.size(); ++g) {
    const Group& gr = plan.groups[g];
    double lo = std::min(xs[g], xs[g + 1]), hi = std::max(xs[g], xs[g + 1]);
    if (gr.overflow) {
      out.overflow += hi - lo;
      ++out.overflow_count;
      continue;
    }
    RefinedAtom c = child;
    c.lo = lo;
    c.hi = hi;
    c.image_lo = gr.ylo;
    c.image_hi = gr.yhi;
    c.returns.push_back({n + 1, gr.cell});
    c.hosts.push_back(gr.cell);
    made.push_back(std::move(c));
    ++out.returns;
  }
  if (plan.reversed) std::reverse(made.begin(), made.end());
  for (auto& m : made) out.atoms.push_back(std::move(m));
}

}  // namespace

RefineResult refine_step(const std::vector<RefinedAtom>& state, int n, const PiecewiseMap& map,
                         const InitialPartition& p0, int workers) {
  const std::size_t chunk = 512;
  std::size_t chunks = (state.size() + chunk - 1) / chunk;
  std::vector<StepOut> outs(chunks);
  parallel_chunks(chunks, workers, [&](std::size_t c) {
    Plan plan;
    std::vector<double> xs;
    std::size_t end = std::min(state.size(), (c + 1) * chunk);
    for (std::size_t i = c * chunk; i < end; ++i)
      step_atom(state[i], static_cast<std::int64_t>(i), n, map, p0, plan, xs, outs[c]);
  });
  RefineResult res;
  std::size_t total = 0;
  for (const auto& o : outs) total += o.atoms.size();
  if (total > (std::size_t(1) << 31))
    throw IntervalCountOverflow("refinement produced too many atoms at level " +
                                std::to_string(n + 1));
  res.atoms.reserve(total);
  for (auto& o : outs) {
    for (auto& a : o.atoms) res.atoms.push_back(std::move(a));
    res.overflow += o.overflow;
    res.overflow_count += o.overflow_count;
    res.returns += o.returns;
    res.free_steps += o.free_steps;
  }
  return res;
}

namespace {

struct Walker {
  const PiecewiseMap& map;
  const InitialPartition& p0;
  int levels;
  std::size_t root;
  const std::function<void(std::size_t, const WalkNode&)>& visit;
  std::vector<Plan> plans;
  std::vector<std::vector<double>> xs;
  std::vector<std::uint8_t> path;
  std::vector<ReturnRecord> returns;
  std::vector<std::int32_t> hosts;
  WalkSummary sum;

  void node(double lo, double hi, double ilo, double ihi, bool reversed, bool is_return) {
    int level = static_cast<int>(path.size());
    WalkNode w;
    w.level = level;
    w.lo = lo;
    w.hi = hi;
    w.image_lo = ilo;
    w.image_hi = ihi;
    w.reversed = reversed;
    w.is_return = is_return;
    w.path = std::span<const std::uint8_t>(path.data(), path.size());
    w.returns = std::span<const ReturnRecord>(returns.data(), returns.size());
    w.hosts = std::span<const std::int32_t>(hosts.data(), hosts.size());
    visit(root, w);
    sum.atoms[level] += 1;
    sum.mass[level] += hi - lo;
    if (level == levels) return;

    Plan& plan = plans[level];
    plan_step(ilo, ihi, reversed, map, p0, plan);
    if (plan.kind == StepKind::lost) {
      sum.overflow[level + 1] += hi - lo;
      return;
    }
    path.push_back(plan.branch);
    if (plan.kind == StepKind::free) {
      hosts.push_back(plan.host);
      ++sum.free_steps;
      node(lo, hi, plan.jlo, plan.jhi, plan.reversed, false);
      hosts.pop_back();
      path.pop_back();
      return;
    }
    auto& x = xs[level];
    group_endpoints(plan, map, path.data(), path.size(), lo, hi, x);
    std::size_t ng = plan.groups.size();
    for (std::size_t i = 0; i < ng; ++i) {
      std::size_t g = plan.reversed ? ng - 1 - i : i;
      const Group& gr = plan.groups[g];
      double a = std::min(x[g], x[g + 1]), b = std::max(x[g], x[g + 1]);
      if (gr.overflow) {
        sum.overflow[level + 1] += b - a;
        continue;
      }
      ++sum.returns;
      returns.push_back({level + 1, gr.cell});
      hosts.push_back(gr.cell);
      node(a, b, gr.ylo, gr.yhi, plan.reversed, true);
      hosts.pop_back();
      returns.pop_back();
    }
    path.pop_back();
  }
};

}  // namespace

WalkSummary walk_refinement(const PiecewiseMap& map, const InitialPartition& p0, int levels,
                            int workers,
                            const std::function<void(std::size_t, const WalkNode&)>& visit) {
  if (levels < 0) throw InvalidParameters("levels must be non-negative");
  auto roots = initial_refined(p0);
  std::vector<WalkSummary> parts(roots.size());
  parallel_chunks(roots.size(), workers, [&](std::size_t r) {
    Walker w{map, p0, levels, r, visit, {}, {}, {}, {}, {}, {}};
    w.plans.resize(levels);
    w.xs.resize(levels);
    w.sum.atoms.assign(levels + 1, 0);
    w.sum.mass.assign(levels + 1, 0.0);
    w.sum.overflow.assign(levels + 1, 0.0);
    const auto& a = roots[r];
    w.returns = a.returns;
    w.hosts = a.hosts;
    w.node(a.lo, a.hi, a.image_lo, a.image_hi, false, true);
    parts[r] = std::move(w.sum);
  });
  WalkSummary out;
  out.atoms.assign(levels + 1, 0);
  out.mass.assign(levels + 1, 0.0);
  out.overflow.assign(levels + 1, 0.0);
  for (const auto& p : parts) {
    for (int l = 0; l <= levels; ++l) {
      out.atoms[l] += p.atoms[l];
      out.mass[l] += p.mass[l];
      out.overflow[l] += p.overflow[l];
    }
    out.returns += p.returns;
    out.free_steps += p.free_steps;
  }
  for (int l = 1; l <= levels; ++l) out.overflow[l] += out.overflow[l - 1];
  return out;
}

std::pair<double, double> forward_image(const PiecewiseMap& map, const RefinedAtom& atom, int k) {
  double a = atom.lo, b = atom.hi;
  for (int j = 0; j < k; ++j) {
    const Branch& br = map.branch(atom.path.at(j));
    a = br.evaluate(a);
    b = br.evaluate(b);
  }
  return {std::min(a, b), std::max(a, b)};
}

namespace {

double distortion_along(double lo, double hi, std::span<const std::uint8_t> path, double image_mid,
                        const PiecewiseMap& map, int samples) {
  if (samples < 1) throw InvalidParameters("samples must be positive");
  std::size_t last = map.locate(image_mid);
  double lo_v = std::numeric_limits<double>::infinity(), hi_v = -lo_v;
  for (int k = 0; k <= samples; ++k) {
    double x = lo + (hi - lo) * (static_cast<double>(k) / samples);
    double acc = 0.0;
    for (std::size_t j = 0; j <= path.size(); ++j) {
      const Branch& br = map.branch(j < path.size() ? path[j] : last);
      acc += std::log(std::fabs(br.derivative(x)));
      x = br.evaluate(x);
    }
    lo_v = std::min(lo_v, acc);
    hi_v = std::max(hi_v, acc);
  }
  return hi_v - lo_v;
}

}  // namespace

double distortion_estimate(const RefinedAtom& atom, const PiecewiseMap& map, int samples) {
  return distortion_along(atom.lo, atom.hi, atom.path, 0.5 * (atom.image_lo + atom.image_hi), map,
                          samples);
}

double distortion_estimate(const WalkNode& atom, const PiecewiseMap& map, int samples) {
  return distortion_along(atom.lo, atom.hi, atom.path, 0.5 * (atom.image_lo + atom.image_hi), map,
                          samples);
}

double deep_return_statistic(std::span<const ReturnRecord> returns, const InitialPartition& p0,
                             long theta) {
  double s = 0.0;
  for (std::size_t i = 1; i < returns.size(); ++i) {
    const Atom& c = p0.cells[returns[i].cell];
    if (c.depth > theta && c.kind != AtomKind::escape) s -= std::log(c.length());
  }
  return s;
}

double deep_return_statistic(const RefinedAtom& atom, const InitialPartition& p0, long theta) {
  return deep_return_statistic(atom.returns, p0, theta);
}

ClassBoundParams class_bound_params(const PiecewiseMap& map, const GridSequence& seq,
                                    const InitialPartition& p0, const Thresholds& th,
                                    double distortion, double L0) {
  ClassBoundParams cp;
  cp.C0 = 0.0;
  for (const auto& a : p0.cells)
    if (a.kind != AtomKind::leftover) cp.C0 += std::pow(a.length(), 1.0 - th.beta2);
  double xi;
  auto discont = map.connected_points();
  if (!discont.empty()) {
    double eb = seq.epsilon1 * seq.beta1;
    xi = std::numeric_limits<double>::infinity();
    for (auto i : discont) {
      double den = 2.0 * map.point(i).half_gap - std::pow(th.rho0 + 2.0, seq.gamma);
      xi = std::min(xi, std::pow(th.rho0 + 1.0, -1.0 - eb) / den);
    }
    xi /= th.K0 * th.K1;
  } else {
    xi = 1.0;
    const auto& c = p0.cells;
    for (std::size_t k = 0; k < c.size(); ++k) {
      if (c[k].kind == AtomKind::leftover) continue;
      double nb = std::numeric_limits<double>::infinity();
      if (k > 0) nb = std::min(nb, c[k - 1].length());
      if (k + 1 < c.size()) nb = std::min(nb, c[k + 1].length());
      xi = std::min(xi, nb / detail::plus_length(c, k));
    }
  }
  double D2 = distortion * distortion;
  double zeta = -std::log(1.0 - std::min(xi / D2, 1.0 - 1e-15));
  cp.zeta0 = zeta / std::max(L0, 1.0);
  cp.sigma = map.sigma();
  cp.beta2 = th.beta2;
  cp.beta3 = th.beta3;
  cp.rho0 = th.rho0;
  return cp;
}

double predicted_class_bound(int n, std::span<const ReturnRecord> returns,
                             const InitialPartition& p0, const ClassBoundParams& params) {
  double R = 0.0, r = 0.0, prod = 1.0;
  for (std::size_t i = 1; i < returns.size(); ++i) {
    const Atom& c = p0.cells[returns[i].cell];
    if (c.kind == AtomKind::escape || c.depth <= params.rho0) continue;
    R += returns[i].time - returns[i - 1].time;
    r += 1.0;
    prod *= std::pow(c.length(), params.beta3 - params.beta2);
  }
  return params.C0 * std::exp(-params.zeta0 * (n - R)) * std::pow(params.sigma, -R + r) * prod;
}

double escape_gap_estimate(const std::vector<RefinedAtom>& atoms, const InitialPartition& p0,
                           int n) {
  double worst = 0.0;
  bool seen = false;
  for (const auto& a : atoms) {
    long prev = -1;
    for (const auto& r : a.returns) {
      if (r.cell < 0 || p0.cells[r.cell].kind != AtomKind::escape) continue;
      if (prev >= 0) {
        worst = std::max(worst, static_cast<double>(r.time - prev));
        seen = true;
      }
      prev = r.time;
    }
  }
  return seen ? worst : static_cast<double>(n);
}

}  // namespace slowrec
