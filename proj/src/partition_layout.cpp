#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "partition_detail.hpp"

namespace slowrec::detail {

double pullback(const PiecewiseMap& map, std::size_t i, const std::vector<std::size_t>& path,
                double y) {
  const auto& p = map.point(i);
  double x = y;
  for (std::size_t j = path.size(); j-- > 0;) {
    const Branch& b = map.branch(path[j]);
    double lo = std::min(b.value_lo, b.value_hi), hi = std::max(b.value_lo, b.value_hi);
    if (x < lo - 1e-15 || x > hi + 1e-15)
      throw PullbackFailure("pullback leaves the range of a branch on the connection path");
    x = b.inverse(x);
  }
  double s = (x - p.location) * p.direction();
  if (!(s > 0.0 && s <= p.half_gap * (1.0 + 1e-12)))
    throw PullbackFailure("pulled-back atom falls outside the one-sided neighbourhood");
  return x;
}

std::vector<Atom> layout_cells(const PiecewiseMap& map, const GridSequence& seq,
                               const std::vector<long>& rho, long p_max) {
  struct Block {
    double lo, hi;
    std::size_t owner;
  };
  std::vector<Atom> cells;
  std::vector<Block> blocks;
  const auto& pts = map.boundary_points();
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const auto& c = pts[i];
    std::vector<std::size_t> path;
    if (!c.singular()) {
      if (!c.connection)
        throw InvalidParameters("point of D without a connection cannot be partitioned");
      path = connection_branches(map, i);
    }
    auto pos = [&](long p) {
      if (c.singular()) return c.location + c.direction() * seq.value(p);
      const auto& t = map.point(c.connection->target);
      return pullback(map, i, path, t.location + t.direction() * seq.value(p));
    };
    long r = rho[i];
    if (r < 1) throw InvalidParameters("depth threshold below 1");
    double outer = pos(r);
    double prev = outer;
    AtomKind kind = c.singular() ? AtomKind::singular_side : AtomKind::pulled_back;
    for (long p = r; p <= p_max; ++p) {
      double next = pos(p + 1);
      Atom a;
      a.lo = std::min(prev, next);
      a.hi = std::max(prev, next);
      a.anchor = a.anchor2 = static_cast<std::uint32_t>(i);
      a.depth = p;
      a.kind = kind;
      if (!(a.hi > a.lo))
        throw DepthOverflow("atom depth " + std::to_string(p) +
                            " is below double resolution at the point " +
                            std::to_string(c.location));
      cells.push_back(a);
      prev = next;
    }
    if (prev != c.location) {
      Atom a;
      a.lo = std::min(prev, c.location);
      a.hi = std::max(prev, c.location);
      a.anchor = a.anchor2 = static_cast<std::uint32_t>(i);
      a.depth = p_max + 1;
      a.kind = AtomKind::leftover;
      cells.push_back(a);
    }
    blocks.push_back({std::min(outer, c.location), std::max(outer, c.location), i});
  }
  std::sort(blocks.begin(), blocks.end(), [](const Block& a, const Block& b) { return a.lo < b.lo; });

  auto escape = [&](double lo, double hi, long left, long right) {
    Atom a;
    a.lo = lo;
    a.hi = hi;
    a.kind = AtomKind::escape;
    long pick = right >= 0 ? right : left;
    if (left >= 0 && !pts[left].singular()) pick = left;
    if (right >= 0 && !pts[right].singular()) pick = right;
    a.anchor = static_cast<std::uint32_t>(pick);
    long other = pick == right ? left : right;
    a.anchor2 = static_cast<std::uint32_t>(other >= 0 ? other : pick);
    a.depth = rho[pick] - 1;
    cells.push_back(a);
  };
  double cursor = 0.0;
  long last = -1;
  for (const auto& b : blocks) {
    if (b.lo < cursor - 1e-15)
      throw InvalidParameters("tails of neighbouring points overlap");
    if (b.lo > cursor) escape(cursor, b.lo, last, static_cast<long>(b.owner));
    cursor = std::max(cursor, b.hi);
    last = static_cast<long>(b.owner);
  }
  if (cursor < 1.0) escape(cursor, 1.0, last, -1);
  std::sort(cells.begin(), cells.end(), [](const Atom& a, const Atom& b) { return a.lo < b.lo; });
  return cells;
}

double estimate_K2(const std::vector<Atom>& cells, const PiecewiseMap& map,
                   const GridSequence& seq) {
  double e = 1.0 / (1.0 + seq.epsilon1 * seq.beta1);
  double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
  for (const auto& a : cells) {
    if (a.kind == AtomKind::escape || a.kind == AtomKind::leftover) continue;
    double c = map.point(a.anchor).location;
    double d = std::min(std::fabs(a.lo - c), std::fabs(a.hi - c));
    double r = d / std::pow(a.length(), e);
    lo = std::min(lo, r);
    hi = std::max(hi, r);
  }
  if (hi == 0.0) return 1.0;
  return std::max({1.0, hi, 1.0 / lo});
}

std::size_t escape_of(const std::vector<Atom>& cells, const PiecewiseMap& map, std::size_t i) {
  const auto& c = map.point(i);
  std::size_t best = cells.size();
  long depth = std::numeric_limits<long>::max();
  for (std::size_t k = 0; k < cells.size(); ++k) {
    const auto& a = cells[k];
    if (a.anchor != i || a.kind == AtomKind::escape || a.kind == AtomKind::leftover) continue;
    if (a.depth < depth) {
      depth = a.depth;
      best = k;
    }
  }
  if (best == cells.size()) return best;
  std::size_t nb = c.side == Side::plus ? best + 1 : best - 1;
  if (c.side == Side::minus && best == 0) return cells.size();
  if (nb >= cells.size() || cells[nb].kind != AtomKind::escape) return cells.size();
  return nb;
}

double plus_length(const std::vector<Atom>& cells, std::size_t k) {
  double s = cells[k].length();
  if (k > 0) s += cells[k - 1].length();
  if (k + 1 < cells.size()) s += cells[k + 1].length();
  return s;
}

}  // namespace slowrec::detail
