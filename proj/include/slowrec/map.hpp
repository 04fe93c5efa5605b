#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "slowrec/errors.hpp"

namespace slowrec {

enum class Side { plus, minus };

struct Connection {
  int steps = 1;                       // T(c)
  std::size_t target = 0;              // index of a singular point in the map's D list
  std::vector<std::size_t> itinerary;  // nearest D point to f^j(c), 0 < j < T
};

struct OneSidedPoint {
  double location = 0.0;
  Side side = Side::plus;
  double order = 1.0;                  // alpha(c)
  double comparability = 0.0;          // B; 0 means estimate at construction
  double half_gap = 0.0;               // delta_c; 0 means derive from neighbours
  std::optional<Connection> connection;

  bool singular() const { return order < 1.0; }
  // Signed direction from c into its one-sided neighbourhood.
  double direction() const { return side == Side::plus ? 1.0 : -1.0; }
};

enum class BranchKind { affine, power, power_affine, power_quadratic };

// f = v_s + (v_o - v_s) * s(u),  u = distance to the singular end / length, with
// s(u) = w u^alpha + (1 - w) u (affine: w = 0, power: w = 1), or for power_quadratic
// s(u) = (1 - k) v + k v^2 with v = u^alpha and k = curvature.
struct Branch {
  double lo = 0.0, hi = 1.0;
  BranchKind kind = BranchKind::affine;
  double value_lo = 0.0, value_hi = 1.0;  // one-sided limits at lo+ and hi-
  double exponent = 1.0;
  double weight = 0.0;
  double curvature = 0.0;
  bool singular_at_lo = true;
  double holder_exponent = 1.0;
  double holder_constant = 0.0;

  double length() const { return hi - lo; }
  bool increasing() const { return value_hi > value_lo; }
  double evaluate(double x) const;
  double derivative(double x) const;
  double inverse(double y) const;
  // Length of the preimage of [y1, y2] inside the branch.
  double inverse_length(double y1, double y2) const;
  // Smallest |f'| on the closed branch.
  double min_slope() const;

 private:
  double shape(double u) const;
  double shape_slope(double u) const;
  double shape_inverse(double w) const;
};

struct TruncationParams {
  double delta = 0.1;
};

class PiecewiseMap {
 public:
  PiecewiseMap() = default;
  PiecewiseMap(std::string name, std::vector<Branch> branches, std::vector<OneSidedPoint> points,
               double tolerance = 1e-14);

  const std::string& name() const { return name_; }
  const std::vector<Branch>& branches() const { return branches_; }
  const Branch& branch(std::size_t i) const { return branches_[i]; }
  const std::vector<OneSidedPoint>& boundary_points() const { return points_; }
  const OneSidedPoint& point(std::size_t i) const { return points_[i]; }
  // Distinct locations of D, sorted.
  const std::vector<double>& locations() const { return locations_; }
  double tolerance() const { return tolerance_; }
  double sigma() const { return sigma_; }
  double beta0() const { return beta0_; }
  double beta1() const { return beta1_; }
  bool has_singular() const { return beta1_ > 0.0; }
  std::vector<std::size_t> singular_points() const;
  std::vector<std::size_t> connected_points() const;

  double evaluate(double x) const;
  double derivative(double x) const;
  // Branch containing x; throws SingularPoint near D.
  std::size_t branch_index(double x) const;
  // Branch index without the tolerance check (x strictly inside some branch assumed).
  std::size_t locate(double x) const;
  double distance_to_boundary(double x) const;
  std::size_t nearest_point(double x) const;
  // Index of the branch adjacent to c on its side.
  std::size_t branch_of_point(std::size_t i) const;
  // f(c^\pm) as a one-sided limit.
  double one_sided_value(std::size_t i) const;

 private:
  std::string name_;
  std::vector<Branch> branches_;
  std::vector<OneSidedPoint> points_;
  std::vector<double> locations_;
  double tolerance_ = 1e-14;
  double sigma_ = 0.0;
  double beta0_ = 0.0, beta1_ = 0.0;
};

double truncate_distance(double d, double delta);
double truncated_distance(double x, const PiecewiseMap& map, const TruncationParams& params);
double recurrence_observable(double x, const PiecewiseMap& map, const TruncationParams& params);
// Delta_delta as a function of the raw distance d; +inf at d = 0.
double log_truncated(double d, double delta);
// Exact Lebesgue integral of Delta_delta over [0,1].
double integrate_recurrence_observable(const PiecewiseMap& map, double delta);

template <class G>
double birkhoff_sum(const PiecewiseMap& map, G&& g, double x, long n) {
  double sum = 0.0;
  for (long j = 0; j < n; ++j) {
    if (map.distance_to_boundary(x) <= map.tolerance())
      throw OrbitHitSingular(j, x, "orbit hit D at iterate " + std::to_string(j));
    sum += g(x);
    if (j + 1 < n) x = map.evaluate(x);
  }
  return sum;
}

// Branches visited by f^j on the one-sided neighbourhood of a connected point, j < T.
std::vector<std::size_t> connection_branches(const PiecewiseMap& map, std::size_t point);
// Orbit of c^\pm: f^j(c) for j = 1..T.
std::vector<double> connection_orbit(const PiecewiseMap& map, std::size_t point);

PiecewiseMap make_lorenz_map(double alpha);
PiecewiseMap make_doubling_map();
PiecewiseMap make_connected_map(double alpha, int steps);
PiecewiseMap make_tent_map();

struct SingularFit {
  std::size_t point = 0;
  double fitted_exponent = 0.0;
  double expected = 0.0;
  double comparability = 0.0;
  bool ok = false;
};

struct HolderEstimate {
  std::size_t point = 0;
  double constant = 0.0;
};

struct ConnectionCheck {
  std::size_t point = 0;
  bool ok = false;
  double containment = 0.0;  // fraction of grid points landing in the target side
  std::string detail;
};

struct ValidationReport {
  double sigma_hat = 0.0;
  bool sigma_ok = false;
  bool has_singular = false;
  std::vector<SingularFit> singular_fits;
  std::vector<HolderEstimate> holder;
  std::vector<ConnectionCheck> connections;
  bool hypotheses_hold = false;
  bool passed = false;
};

ValidationReport validate_map(const PiecewiseMap& map);

}  // namespace slowrec
