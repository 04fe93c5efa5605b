#include "slowrec/map.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace slowrec {

namespace {

double clamp01(double u) { return std::min(1.0, std::max(0.0, u)); }

}  // namespace

double Branch::shape(double u) const {
  switch (kind) {
    case BranchKind::affine:
      return u;
    case BranchKind::power:
      return std::pow(u, exponent);
    case BranchKind::power_affine:
      return weight * std::pow(u, exponent) + (1.0 - weight) * u;
    case BranchKind::power_quadratic: {
      double v = std::pow(u, exponent);
      return v * (1.0 - curvature + curvature * v);
    }
  }
  return u;
}

double Branch::shape_slope(double u) const {
  switch (kind) {
    case BranchKind::affine:
      return 1.0;
    case BranchKind::power:
      return exponent * std::pow(u, exponent - 1.0);
    case BranchKind::power_affine:
      return weight * exponent * std::pow(u, exponent - 1.0) + (1.0 - weight);
    case BranchKind::power_quadratic: {
      double p = std::pow(u, exponent - 1.0);
      return exponent * p * (1.0 - curvature + 2.0 * curvature * p * u);
    }
  }
  return 1.0;
}

double Branch::shape_inverse(double w) const {
  if (kind == BranchKind::power_quadratic) {
    double a = 1.0 - curvature;
    double v = 2.0 * w / (a + std::sqrt(a * a + 4.0 * curvature * w));
    return std::pow(v, 1.0 / exponent);
  }
  if (kind == BranchKind::affine || weight == 0.0) return w;
  if (kind == BranchKind::power || weight == 1.0) return std::pow(w, 1.0 / exponent);
  if (w <= 0.0) return 0.0;
  if (w >= 1.0) return 1.0;
  // shape is increasing and concave on [0,1]; Newton from the right with a bracket.
  double a = 0.0, b = 1.0;
  double u = w;
  for (int it = 0; it < 200; ++it) {
    double g = shape(u) - w;
    if (g > 0.0)
      b = u;
    else
      a = u;
    if (b - a <= 1e-16 * std::max(1.0, b)) break;
    double s = shape_slope(u);
    double next = u - g / s;
    if (!(next > a && next < b)) next = 0.5 * (a + b);
    if (std::fabs(next - u) <= 1e-17 * std::max(u, 1e-300)) {
      u = next;
      break;
    }
    u = next;
  }
  return u;
}

double Branch::evaluate(double x) const {
  double len = hi - lo;
  double u = clamp01(singular_at_lo ? (x - lo) / len : (hi - x) / len);
  double vs = singular_at_lo ? value_lo : value_hi;
  double vo = singular_at_lo ? value_hi : value_lo;
  return vs + (vo - vs) * shape(u);
}

double Branch::derivative(double x) const {
  double len = hi - lo;
  double u = clamp01(singular_at_lo ? (x - lo) / len : (hi - x) / len);
  double vs = singular_at_lo ? value_lo : value_hi;
  double vo = singular_at_lo ? value_hi : value_lo;
  double sign = singular_at_lo ? 1.0 : -1.0;
  return (vo - vs) * shape_slope(u) * sign / len;
}

double Branch::inverse(double y) const {
  double vs = singular_at_lo ? value_lo : value_hi;
  double vo = singular_at_lo ? value_hi : value_lo;
  double u = shape_inverse(clamp01((y - vs) / (vo - vs)));
  double x = singular_at_lo ? lo + u * (hi - lo) : hi - u * (hi - lo);
  return std::min(hi, std::max(lo, x));
}

double Branch::inverse_length(double y1, double y2) const {
  double vs = singular_at_lo ? value_lo : value_hi;
  double vo = singular_at_lo ? value_hi : value_lo;
  double u1 = shape_inverse(clamp01((y1 - vs) / (vo - vs)));
  double u2 = shape_inverse(clamp01((y2 - vs) / (vo - vs)));
  return std::fabs(u2 - u1) * (hi - lo);
}

double Branch::min_slope() const {
  double scale = std::fabs(value_hi - value_lo) / (hi - lo);
  if (kind == BranchKind::power_quadratic && 2.0 * exponent > 1.0) {
    // s' has one critical point, at v = (1 - a)(1 - k) / (2k(2a - 1))
    double v = (1.0 - exponent) * (1.0 - curvature) / (2.0 * curvature * (2.0 * exponent - 1.0));
    if (v < 1.0) return scale * shape_slope(std::pow(v, 1.0 / exponent));
  }
  return scale * shape_slope(1.0);
}

PiecewiseMap::PiecewiseMap(std::string name, std::vector<Branch> branches,
                           std::vector<OneSidedPoint> points, double tolerance)
    : name_(std::move(name)), branches_(std::move(branches)), points_(std::move(points)),
      tolerance_(tolerance) {
  if (branches_.empty()) throw InvalidParameters("map has no branches");
  if (!(tolerance_ >= 0.0)) throw InvalidParameters("negative tolerance");
  std::sort(branches_.begin(), branches_.end(),
            [](const Branch& a, const Branch& b) { return a.lo < b.lo; });
  if (std::fabs(branches_.front().lo) > 1e-15 || std::fabs(branches_.back().hi - 1.0) > 1e-15)
    throw InvalidParameters("branch domains must cover [0,1]");
  for (std::size_t i = 0; i < branches_.size(); ++i) {
    const Branch& b = branches_[i];
    if (!(b.lo < b.hi)) throw InvalidParameters("empty branch domain");
    if (i + 1 < branches_.size() && std::fabs(b.hi - branches_[i + 1].lo) > 1e-15)
      throw InvalidParameters("branch domains must be contiguous");
    if (!(b.exponent > 0.0 && b.exponent <= 1.0))
      throw InvalidParameters("branch exponent outside (0,1]");
    if (b.kind == BranchKind::power_quadratic && !(b.curvature > 0.0 && b.curvature < 1.0))
      throw InvalidParameters("curvature outside (0,1)");
    if (!(b.weight >= 0.0 && b.weight <= 1.0))
      throw InvalidParameters("branch weight outside [0,1]");
    if (b.value_lo == b.value_hi) throw InvalidParameters("constant branch");
  }

  for (const auto& p : points_) {
    if (!(p.location >= 0.0 && p.location <= 1.0))
      throw InvalidParameters("boundary point outside [0,1]");
    if (!(p.order > 0.0 && p.order <= 1.0))
      throw InvalidParameters("order outside (0,1]");
    if (p.singular() && p.connection)
      throw InvalidParameters("singular point cannot carry a connection");
    locations_.push_back(p.location);
  }
  std::sort(locations_.begin(), locations_.end());
  locations_.erase(std::unique(locations_.begin(), locations_.end()), locations_.end());

  for (std::size_t i = 0; i + 1 < branches_.size(); ++i) {
    double b = branches_[i].hi;
    if (!std::binary_search(locations_.begin(), locations_.end(), b))
      throw InvalidParameters("interior branch boundary is not in D");
  }

  for (std::size_t i = 0; i < points_.size(); ++i) {
    auto& p = points_[i];
    branch_of_point(i);
    auto it = std::lower_bound(locations_.begin(), locations_.end(), p.location);
    double gap;
    if (p.side == Side::plus)
      gap = (it + 1 != locations_.end() ? *(it + 1) : 1.0) - p.location;
    else
      gap = p.location - (it != locations_.begin() ? *(it - 1) : 0.0);
    if (!(gap > 0.0)) throw InvalidParameters("boundary point has an empty side");
    if (p.half_gap <= 0.0)
      p.half_gap = 0.5 * gap;
    else if (p.half_gap > gap)
      throw InvalidParameters("half_gap neighbourhood contains another point of D");
    if (p.connection) {
      const auto& c = *p.connection;
      if (c.steps < 1) throw InvalidParameters("connection steps must be positive");
      if (c.target >= points_.size() || !points_[c.target].singular())
        throw InvalidParameters("connection target must be a singular point");
      if (c.itinerary.size() != static_cast<std::size_t>(c.steps - 1))
        throw InvalidParameters("connection itinerary length must be T-1");
      for (auto k : c.itinerary)
        if (k >= points_.size()) throw InvalidParameters("itinerary index out of range");
    }
  }

  sigma_ = std::numeric_limits<double>::infinity();
  for (const auto& b : branches_) sigma_ = std::min(sigma_, b.min_slope());
  beta0_ = 0.0;
  beta1_ = 0.0;
  bool first = true;
  for (const auto& p : points_) {
    if (!p.singular()) continue;
    beta0_ = first ? p.order : std::min(beta0_, p.order);
    beta1_ = first ? p.order : std::max(beta1_, p.order);
    first = false;
  }

  for (auto& p : points_) {
    if (p.comparability > 0.0) continue;
    const Branch& b = branches_[branch_of_point(static_cast<std::size_t>(&p - points_.data()))];
    double lo_r = std::numeric_limits<double>::infinity(), hi_r = 0.0;
    for (int k = 0; k <= 200; ++k) {
      double d = p.half_gap * std::pow(1e-8, k / 200.0);
      double x = p.location + p.direction() * d;
      double r = std::fabs(b.derivative(x)) / std::pow(d, p.order - 1.0);
      lo_r = std::min(lo_r, r);
      hi_r = std::max(hi_r, r);
    }
    p.comparability = std::max({1.0, hi_r, 1.0 / lo_r});
  }
}

std::vector<std::size_t> PiecewiseMap::singular_points() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < points_.size(); ++i)
    if (points_[i].singular()) out.push_back(i);
  return out;
}

std::vector<std::size_t> PiecewiseMap::connected_points() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < points_.size(); ++i)
    if (!points_[i].singular()) out.push_back(i);
  return out;
}

std::size_t PiecewiseMap::locate(double x) const {
  auto it = std::upper_bound(branches_.begin(), branches_.end(), x,
                             [](double v, const Branch& b) { return v < b.lo; });
  if (it == branches_.begin()) return 0;
  return static_cast<std::size_t>(it - branches_.begin()) - 1;
}

std::size_t PiecewiseMap::branch_index(double x) const {
  if (!(x >= 0.0 && x <= 1.0)) throw InvalidParameters("point outside [0,1]");
  if (distance_to_boundary(x) <= tolerance_)
    throw SingularPoint(x, "point lies in the tolerance ball of D");
  return locate(x);
}

double PiecewiseMap::evaluate(double x) const { return branches_[branch_index(x)].evaluate(x); }

double PiecewiseMap::derivative(double x) const {
  return branches_[branch_index(x)].derivative(x);
}

double PiecewiseMap::distance_to_boundary(double x) const {
  if (locations_.empty()) return std::numeric_limits<double>::infinity();
  auto it = std::lower_bound(locations_.begin(), locations_.end(), x);
  double d = std::numeric_limits<double>::infinity();
  if (it != locations_.end()) d = *it - x;
  if (it != locations_.begin()) d = std::min(d, x - *(it - 1));
  return d;
}

std::size_t PiecewiseMap::nearest_point(double x) const {
  std::size_t best = 0;
  double bd = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < points_.size(); ++i) {
    const auto& p = points_[i];
    double d = std::fabs(x - p.location);
    bool on_side = (x >= p.location) == (p.side == Side::plus);
    if (d < bd || (d == bd && on_side)) {
      bd = d;
      best = i;
    }
  }
  return best;
}

std::size_t PiecewiseMap::branch_of_point(std::size_t i) const {
  const auto& p = points_[i];
  for (std::size_t k = 0; k < branches_.size(); ++k) {
    const auto& b = branches_[k];
    if (p.side == Side::plus && b.lo == p.location) return k;
    if (p.side == Side::minus && b.hi == p.location) return k;
  }
  throw InvalidParameters("boundary point is not adjacent to a branch on its side");
}

double PiecewiseMap::one_sided_value(std::size_t i) const {
  const auto& b = branches_[branch_of_point(i)];
  return points_[i].side == Side::plus ? b.value_lo : b.value_hi;
}

double truncate_distance(double d, double delta) {
  if (d <= delta) return d;
  if (d < 2.0 * delta) return ((1.0 - delta) / delta) * d + 2.0 * delta - 1.0;
  return 1.0;
}

double log_truncated(double d, double delta) {
  double t = truncate_distance(d, delta);
  if (t <= 0.0) return std::numeric_limits<double>::infinity();
  return std::fabs(std::log(t));
}

double truncated_distance(double x, const PiecewiseMap& map, const TruncationParams& params) {
  return truncate_distance(map.distance_to_boundary(x), params.delta);
}

double recurrence_observable(double x, const PiecewiseMap& map, const TruncationParams& params) {
  double d = map.distance_to_boundary(x);
  if (d == 0.0) throw InfiniteRecurrence("observable is infinite on D");
  return log_truncated(d, params.delta);
}

namespace {

// Integral of Delta_delta as a function of distance, from 0 to r.
double distance_integral(double r, double delta) {
  auto g = [](double u) { return u > 0.0 ? u - u * std::log(u) : 0.0; };
  double head = std::min(r, delta);
  double total = g(head);
  if (r > delta) {
    double top = std::min(r, 2.0 * delta);
    double u = ((1.0 - delta) / delta) * top + 2.0 * delta - 1.0;
    total += delta / (1.0 - delta) * (g(u) - g(delta));
  }
  return total;
}

}  // namespace

double integrate_recurrence_observable(const PiecewiseMap& map, double delta) {
  const auto& loc = map.locations();
  double total = 0.0;
  for (std::size_t k = 0; k < loc.size(); ++k) {
    double left = k == 0 ? loc[k] : 0.5 * (loc[k] - loc[k - 1]);
    double right = k + 1 == loc.size() ? 1.0 - loc[k] : 0.5 * (loc[k + 1] - loc[k]);
    total += distance_integral(left, delta) + distance_integral(right, delta);
  }
  return total;
}

}  // namespace slowrec
