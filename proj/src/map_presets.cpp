#include <algorithm>
#include <cmath>

#include "slowrec/map.hpp"

namespace slowrec {

namespace {

// Curvature of the power-quadratic shape; |f'| >= 1.2 needs k >= 0.6/alpha - 1.
double curvature_for(double alpha) { return std::max(0.3, 0.6 / alpha - 1.0); }

Branch power_branch(double lo, double hi, double v_lo, double v_hi, double alpha, bool at_lo) {
  Branch b;
  b.lo = lo;
  b.hi = hi;
  b.value_lo = v_lo;
  b.value_hi = v_hi;
  b.exponent = alpha;
  if (curvature_for(alpha) <= 0.9) {
    b.kind = BranchKind::power_quadratic;
    b.curvature = curvature_for(alpha);
  } else {
    // half power and half affine: |f'| >= 1 + alpha
    b.kind = BranchKind::power_affine;
    b.weight = 0.5;
  }
  b.singular_at_lo = at_lo;
  b.holder_exponent = alpha;
  return b;
}

Branch affine_branch(double lo, double hi, double v_lo, double v_hi) {
  Branch b;
  b.lo = lo;
  b.hi = hi;
  b.value_lo = v_lo;
  b.value_hi = v_hi;
  b.kind = BranchKind::affine;
  return b;
}

OneSidedPoint point(double loc, Side side, double order) {
  OneSidedPoint p;
  p.location = loc;
  p.side = side;
  p.order = order;
  return p;
}

void check_alpha(double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw InvalidParameters("alpha must lie in (0,1)");
}

}  // namespace

PiecewiseMap make_lorenz_map(double alpha) {
  check_alpha(alpha);
  std::vector<Branch> br{power_branch(0.0, 0.5, 0.0, 1.0, alpha, false),
                         power_branch(0.5, 1.0, 0.0, 1.0, alpha, true)};
  std::vector<OneSidedPoint> pts{point(0.5, Side::minus, alpha), point(0.5, Side::plus, alpha)};
  return PiecewiseMap("lorenz", std::move(br), std::move(pts));
}

PiecewiseMap make_doubling_map() {
  std::vector<Branch> br{affine_branch(0.0, 0.5, 0.0, 1.0), affine_branch(0.5, 1.0, 0.0, 1.0)};
  std::vector<OneSidedPoint> pts{point(0.0, Side::plus, 1.0), point(0.5, Side::minus, 1.0),
                                 point(0.5, Side::plus, 1.0), point(1.0, Side::minus, 1.0)};
  return PiecewiseMap("doubling", std::move(br), std::move(pts));
}

PiecewiseMap make_tent_map() {
  std::vector<Branch> br{affine_branch(0.0, 0.5, 0.0, 1.0), affine_branch(0.5, 1.0, 1.0, 0.0)};
  std::vector<OneSidedPoint> pts{point(0.5, Side::minus, 1.0), point(0.5, Side::plus, 1.0)};
  return PiecewiseMap("tent", std::move(br), std::move(pts));
}

PiecewiseMap make_connected_map(double alpha, int steps) {
  check_alpha(alpha);
  if (steps != 1 && steps != 2) throw InvalidParameters("connection steps must be 1 or 2");
  Branch right = power_branch(0.5, 1.0, 0.0, 1.0, alpha, true);
  double reach = 0.5;
  if (steps == 2) reach = right.inverse(0.5);
  std::vector<Branch> br{affine_branch(0.0, 0.25, 0.0, reach),
                         power_branch(0.25, 0.5, 0.5, 1.0, alpha, false), right};

  // Indices: 0 = 1/4-, 1 = 1/4+, 2 = 1/2-, 3 = 1/2+.
  std::vector<OneSidedPoint> pts{point(0.25, Side::minus, 1.0), point(0.25, Side::plus, 1.0),
                                 point(0.5, Side::minus, alpha), point(0.5, Side::plus, alpha)};
  Connection left;
  left.steps = steps;
  left.target = 2;
  if (steps == 2) left.itinerary = {3};
  pts[0].connection = left;
  Connection up;
  up.steps = 1;
  up.target = 3;
  pts[1].connection = up;
  return PiecewiseMap(steps == 1 ? "connected1" : "connected2", std::move(br), std::move(pts));
}

}  // namespace slowrec
