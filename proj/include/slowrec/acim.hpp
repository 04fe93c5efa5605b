#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include <Eigen/SparseCore>

#include "slowrec/map.hpp"

namespace slowrec {

struct UlamGrid {
  std::size_t cell_count = 0;

  double width() const { return 1.0 / static_cast<double>(cell_count); }
  double cell_lo(std::size_t i) const { return static_cast<double>(i) * width(); }
  double cell_hi(std::size_t i) const {
    return i + 1 == cell_count ? 1.0 : static_cast<double>(i + 1) * width();
  }
};

struct TransferMatrix {
  UlamGrid grid;
  // P(i, j) = |cell_i ∩ f^{-1}(cell_j)| / |cell_i|, rows renormalized.
  Eigen::SparseMatrix<double, Eigen::RowMajor> P;
  double max_row_defect = 0.0;  // before renormalization

  std::size_t size() const { return grid.cell_count; }
};

TransferMatrix build_ulam_matrix(const PiecewiseMap& map, std::size_t N, int workers = 1);

struct Density {
  std::vector<double> values;  // mean of values is 1
  double residual = -1.0;      // invariance defect on the twice-finer grid; -1 until computed
  double solver_defect = 0.0;  // L1 defect of the power iteration
  long iterations = 0;
  int component_id = 0;

  std::size_t size() const { return values.size(); }
};

struct EquilibriumSet {
  UlamGrid grid;
  std::vector<Density> densities;
};

// Recurrent communicating classes of the support graph (entries above 1e-15), as cell lists.
std::vector<std::vector<std::size_t>> recurrent_classes(const TransferMatrix& P);

EquilibriumSet stationary_densities(const TransferMatrix& P, double tol, long max_iterations = 200000);

// L1 defect of the density, refined to 2N cells, under the 2N-cell Ulam operator.
double ulam_residual(const PiecewiseMap& map, const Density& d, int workers = 1);

// Matrix, densities and residuals in one call.
EquilibriumSet solve_acims(const PiecewiseMap& map, std::size_t N, double tol, int workers = 1);

using CellObservable = std::function<double(double)>;

// Cell averages: midpoint, or 32 sub-points on cells touching D.
std::vector<double> cell_averages(const PiecewiseMap& map, const UlamGrid& grid,
                                  const CellObservable& phi);
double integrate_observable(const PiecewiseMap& map, const Density& d, const CellObservable& phi);

// Corr_n = |<P^n(phi d), psi> - mu(phi) mu(psi)| for n = 0..n_max.
std::vector<double> correlation_estimate(const PiecewiseMap& map, const Density& d,
                                         const TransferMatrix& P, const CellObservable& phi,
                                         const CellObservable& psi, int n_max);

}  // namespace slowrec
