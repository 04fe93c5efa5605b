#include <algorithm>
#include <cmath>
#include <limits>

#include "slowrec/map.hpp"

namespace slowrec {

std::vector<std::size_t> connection_branches(const PiecewiseMap& map, std::size_t i) {
  const auto& p = map.point(i);
  if (!p.connection) throw InvalidParameters("point has no connection");
  std::vector<std::size_t> path{map.branch_of_point(i)};
  double y = map.one_sided_value(i);
  for (int j = 1; j < p.connection->steps; ++j) {
    path.push_back(map.branch_index(y));
    y = map.evaluate(y);
  }
  return path;
}

std::vector<double> connection_orbit(const PiecewiseMap& map, std::size_t i) {
  const auto& p = map.point(i);
  if (!p.connection) throw InvalidParameters("point has no connection");
  std::vector<double> orbit{map.one_sided_value(i)};
  for (int j = 1; j < p.connection->steps; ++j) orbit.push_back(map.evaluate(orbit.back()));
  return orbit;
}

namespace {

SingularFit fit_singular(const PiecewiseMap& map, std::size_t i) {
  const auto& p = map.point(i);
  const Branch& b = map.branch(map.branch_of_point(i));
  SingularFit fit;
  fit.point = i;
  fit.expected = p.order - 1.0;
  double top = std::min(1e-2, 0.5 * p.half_gap);
  double bottom = 1e-8;
  const int n = 41;
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  double lo_r = std::numeric_limits<double>::infinity(), hi_r = 0.0;
  for (int k = 0; k < n; ++k) {
    double d = bottom * std::pow(top / bottom, k / double(n - 1));
    double slope = std::fabs(b.derivative(p.location + p.direction() * d));
    double lx = std::log(d), ly = std::log(slope);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
    double r = slope / std::pow(d, p.order - 1.0);
    lo_r = std::min(lo_r, r);
    hi_r = std::max(hi_r, r);
  }
  fit.fitted_exponent = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  fit.comparability = std::max({1.0, hi_r, 1.0 / lo_r});
  fit.ok = std::fabs(fit.fitted_exponent - fit.expected) <= 0.02;
  return fit;
}

HolderEstimate holder_estimate(const PiecewiseMap& map, std::size_t i) {
  const auto& p = map.point(i);
  const Branch& b = map.branch(map.branch_of_point(i));
  HolderEstimate h;
  h.point = i;
  const int n = 121;
  std::vector<double> xs(n), ds(n);
  for (int k = 0; k < n; ++k) {
    xs[k] = p.location + p.direction() * p.half_gap * (k + 0.5) / n;
    ds[k] = b.derivative(xs[k]);
  }
  for (int a = 0; a < n; ++a)
    for (int c = a + 1; c < n; ++c) {
      double r = std::fabs(ds[a] - ds[c]) / std::pow(std::fabs(xs[a] - xs[c]), b.holder_exponent);
      h.constant = std::max(h.constant, r);
    }
  return h;
}

bool inside_side(const PiecewiseMap& map, std::size_t target, double y, double radius) {
  const auto& t = map.point(target);
  double s = (y - t.location) * t.direction();
  return s > 0.0 && s < radius;
}

ConnectionCheck check_connection(const PiecewiseMap& map, std::size_t i) {
  ConnectionCheck chk;
  chk.point = i;
  const auto& p = map.point(i);
  const auto& conn = *p.connection;
  std::vector<double> orbit;
  try {
    orbit = connection_orbit(map, i);
  } catch (const Error& e) {
    chk.detail = std::string("orbit of c meets D early: ") + e.what();
    return chk;
  }
  const auto& target = map.point(conn.target);
  if (std::fabs(orbit.back() - target.location) > 1e-12) {
    chk.detail = "f^T(c) does not reach the target";
    return chk;
  }
  for (int j = 1; j < conn.steps; ++j) {
    if (map.nearest_point(orbit[j - 1]) != conn.itinerary[j - 1]) {
      chk.detail = "stored itinerary differs from the orbit";
      return chk;
    }
  }
  auto path = connection_branches(map, i);
  const int grid = 1000;
  for (int shrink = 0; shrink <= 40; ++shrink) {
    double radius = p.half_gap * std::ldexp(1.0, -shrink);
    int hits = 0;
    for (int k = 1; k <= grid; ++k) {
      double y = p.location + p.direction() * radius * k / grid;
      bool ok = true;
      for (auto bi : path) {
        const Branch& b = map.branch(bi);
        if (!(y >= b.lo && y <= b.hi) || map.distance_to_boundary(y) <= map.tolerance()) {
          ok = k == grid && (y == b.lo || y == b.hi);
          if (!ok) break;
        }
        y = b.evaluate(y);
      }
      if (ok && inside_side(map, conn.target, y, target.half_gap)) ++hits;
    }
    if (hits == grid) {
      chk.ok = true;
      chk.containment = 1.0;
      chk.detail = "radius " + std::to_string(radius);
      return chk;
    }
    chk.containment = std::max(chk.containment, hits / double(grid));
  }
  chk.detail = "no one-sided neighbourhood maps into the target side";
  return chk;
}

}  // namespace

ValidationReport validate_map(const PiecewiseMap& map) {
  ValidationReport rep;
  rep.sigma_hat = std::numeric_limits<double>::infinity();
  for (const auto& b : map.branches()) {
    const int n = 20000;
    for (int k = 0; k <= n; ++k) {
      double u = std::clamp(k / double(n), 1e-12, 1.0 - 1e-12);
      double x = b.lo + u * (b.hi - b.lo);
      rep.sigma_hat = std::min(rep.sigma_hat, std::fabs(b.derivative(x)));
    }
  }
  rep.sigma_ok = rep.sigma_hat > 1.0;
  rep.has_singular = map.has_singular();
  bool fits_ok = true, conn_ok = true, all_connected = true;
  for (std::size_t i = 0; i < map.boundary_points().size(); ++i) {
    const auto& p = map.point(i);
    if (p.singular()) {
      rep.singular_fits.push_back(fit_singular(map, i));
      fits_ok = fits_ok && rep.singular_fits.back().ok;
    } else {
      rep.holder.push_back(holder_estimate(map, i));
      if (p.connection) {
        rep.connections.push_back(check_connection(map, i));
        conn_ok = conn_ok && rep.connections.back().ok;
      } else {
        all_connected = false;
      }
    }
  }
  rep.passed = rep.sigma_ok && fits_ok && conn_ok;
  rep.hypotheses_hold = rep.passed && rep.has_singular && all_connected;
  return rep;
}

}  // namespace slowrec
