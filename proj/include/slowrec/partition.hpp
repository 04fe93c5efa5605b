#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "slowrec/map.hpp"

namespace slowrec {

struct GridSequence {
  double epsilon1 = 0.5;
  double beta1 = 0.5;
  double gamma = -4.0;
  double K0 = 0.0, K1 = 0.0;

  double value(long p) const;
  // a_p - a_{p+1} without cancellation.
  double gap(long p) const;
  // Least p with a_p < d.
  long first_below(double d) const;
};

GridSequence make_grid(double epsilon1, double beta1);
double grid_value(const GridSequence& seq, long p);

struct GridConstants {
  double K0 = 0.0;
  double K1 = 0.0;
  double K1_observed = 0.0;
  double ratio_limit = 0.0;  // 1/(epsilon1 beta1)
  double ratio_at_probe = 0.0;
  long probe = 0;
};

// sigma_T0 is sigma^{T_0}, entering the K1 floor.
GridConstants verify_grid_constants(GridSequence& seq, long p_max, double sigma_T0 = 1.0);

// Sum over p >= rho of gap(p)^xi, times the number of points of D; an upper bound.
double tail_sum(const GridSequence& seq, long rho, double xi, std::size_t n_points);

struct ThresholdOptions {
  double epsilon0 = 0.5;
  double deviation = 0.0;   // epsilon used to size delta; 0 means epsilon0
  double distortion = 0.0;  // D; 0 means the one-step estimate
  bool tail_sums = true;    // false: structural conditions only, theta = rho0 + 1
  long rho_cap = 100000000;
};

struct Thresholds {
  std::vector<long> rho;  // per boundary point
  long rho0 = 0;
  long theta = 0;
  TruncationParams delta;
  double delta_trunca = 0.0;
  double delta_deviation = 0.0;
  double delta_theta = 0.0;
  double beta2 = 0.0, beta3 = 0.0, z = 0.0;
  double beta_under = 0.0;
  int ell = 0;
  double kappa0 = 1.0, kappa0_limit = 1.0;
  double L = 0.0;
  double B = 1.0;
  double distortion = 1.0;
  double K0 = 0.0, K1 = 0.0;
  double tail_rho0 = 0.0, tail_theta = 0.0;
  std::vector<std::string> notes;
};

Thresholds choose_thresholds(const PiecewiseMap& map, GridSequence& seq,
                             const ThresholdOptions& opts);

// Thresholds given by hand. rho0 = 0 picks the least value admitting the pullbacks;
// theta = 0 means rho0 + 1. Violated conditions are listed in notes.
Thresholds manual_thresholds(const PiecewiseMap& map, GridSequence& seq, double delta,
                             long rho0 = 0, long theta = 0);

enum class AtomKind : std::uint8_t { singular_side, pulled_back, escape, leftover };

struct Atom {
  double lo = 0.0, hi = 0.0;
  std::uint32_t anchor = 0;   // index into the map's D list
  std::uint32_t anchor2 = 0;  // second anchor of a shared escape interval, else == anchor
  long depth = 0;
  AtomKind kind = AtomKind::singular_side;

  double length() const { return hi - lo; }
};

struct InitialPartition {
  // Sorted cells covering [0,1]; leftover tails are cells of kind leftover.
  std::vector<Atom> cells;
  std::vector<long> rho;
  long rho0 = 0;
  long theta = 0;
  long p_max = 0;
  TruncationParams delta;
  double leftover = 0.0;
  double K2 = 0.0;
  double covered = 0.0;

  std::vector<Atom> atoms() const;
  // First cell whose closure meets x from the right of its lo.
  std::size_t cell_at(double x) const;
  // Union of the cell with its neighbours.
  double plus_lo(std::size_t i) const { return cells[i == 0 ? 0 : i - 1].lo; }
  double plus_hi(std::size_t i) const { return cells[i + 1 < cells.size() ? i + 1 : i].hi; }
};

InitialPartition build_initial_partition(const PiecewiseMap& map, const GridSequence& seq,
                                         const Thresholds& th, long p_max);

struct ReturnRecord {
  std::int32_t time = 0;
  std::int32_t cell = -1;  // index into P0 cells; -1 for t0
};

struct RefinedAtom {
  double lo = 0.0, hi = 0.0;
  double image_lo = 0.0, image_hi = 0.0;  // f^n of the atom at its level n
  bool reversed = false;                  // f^n reverses orientation
  std::vector<std::uint8_t> path;         // branch of f^j(atom), j < n
  std::vector<ReturnRecord> returns;      // starts with t0 = 0
  std::vector<std::int32_t> hosts;        // host cell at each iterate 0..n
  std::int64_t parent = -1;

  double length() const { return hi - lo; }
};

struct RefineResult {
  std::vector<RefinedAtom> atoms;
  double overflow = 0.0;  // mass newly sent to overflow at this step
  std::size_t overflow_count = 0;
  std::size_t returns = 0;
  std::size_t free_steps = 0;
};

std::vector<RefinedAtom> initial_refined(const InitialPartition& p0);
// state holds atoms at level n; the result is level n + 1.
RefineResult refine_step(const std::vector<RefinedAtom>& state, int n, const PiecewiseMap& map,
                         const InitialPartition& p0, int workers = 1);

// One atom of the refinement tree during a depth-first walk; spans are valid only inside the visit.
struct WalkNode {
  int level = 0;
  double lo = 0.0, hi = 0.0;
  double image_lo = 0.0, image_hi = 0.0;
  bool reversed = false;
  bool is_return = false;  // created by a split at this level; roots count as returns
  std::span<const std::uint8_t> path;
  std::span<const ReturnRecord> returns;
  std::span<const std::int32_t> hosts;

  double length() const { return hi - lo; }
};

struct WalkSummary {
  std::vector<std::size_t> atoms;  // per level
  std::vector<double> mass;        // per level
  std::vector<double> overflow;    // cumulative overflow mass per level
  std::size_t returns = 0;
  std::size_t free_steps = 0;
};

// Visits every atom of levels 0..levels, children in increasing x. Holds one path at a time,
// so memory does not grow with the atom count. visit(root, node) may run concurrently for
// different roots; root indexes the level-0 atoms.
WalkSummary walk_refinement(const PiecewiseMap& map, const InitialPartition& p0, int levels,
                            int workers,
                            const std::function<void(std::size_t, const WalkNode&)>& visit);

// f^k of the endpoints of x-interval [lo,hi] following the recorded path; returns sorted pair.
std::pair<double, double> forward_image(const PiecewiseMap& map, const RefinedAtom& atom, int k);

// Spread of log|(f^{n+1})'| over samples + 1 evenly spaced points of a level-n atom.
double distortion_estimate(const RefinedAtom& atom, const PiecewiseMap& map, int samples);
double distortion_estimate(const WalkNode& atom, const PiecewiseMap& map, int samples);
double deep_return_statistic(std::span<const ReturnRecord> returns, const InitialPartition& p0,
                             long theta);
double deep_return_statistic(const RefinedAtom& atom, const InitialPartition& p0, long theta);

struct ClassBoundParams {
  double C0 = 1.0;
  double zeta0 = 0.0;
  double sigma = 2.0;
  double beta2 = 0.5, beta3 = 0.9;
  long rho0 = 0;
};

ClassBoundParams class_bound_params(const PiecewiseMap& map, const GridSequence& seq,
                                    const InitialPartition& p0, const Thresholds& th,
                                    double distortion, double L0);
double predicted_class_bound(int n, std::span<const ReturnRecord> returns,
                             const InitialPartition& p0, const ClassBoundParams& params);

// Largest gap between consecutive escape returns over the atoms, or n when none is seen.
double escape_gap_estimate(const std::vector<RefinedAtom>& atoms, const InitialPartition& p0, int n);

}  // namespace slowrec
