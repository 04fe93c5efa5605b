#include "slowrec/acim.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include <Eigen/Core>

#include "slowrec/parallel.hpp"

namespace slowrec {

namespace {

using Triplet = Eigen::Triplet<double>;

std::size_t cell_of(const UlamGrid& g, double y) {
  auto k = static_cast<std::size_t>(std::floor(y * static_cast<double>(g.cell_count)));
  return std::min(k, g.cell_count - 1);
}

}  // namespace

TransferMatrix build_ulam_matrix(const PiecewiseMap& map, std::size_t N, int workers) {
  if (N < 2) throw InvalidParameters("Ulam grid needs at least 2 cells");
  TransferMatrix T;
  T.grid.cell_count = N;
  const UlamGrid& g = T.grid;
  const std::size_t chunk = 256;
  std::size_t chunks = (N + chunk - 1) / chunk;
  std::vector<std::vector<Triplet>> parts(chunks);
  std::vector<double> defects(chunks, 0.0);

  parallel_chunks(chunks, workers, [&](std::size_t c) {
    std::vector<std::pair<std::size_t, double>> row;
    for (std::size_t i = c * chunk; i < std::min(N, (c + 1) * chunk); ++i) {
      double a = g.cell_lo(i), b = g.cell_hi(i);
      row.clear();
      for (const auto& br : map.branches()) {
        double lo = std::max(a, br.lo), hi = std::min(b, br.hi);
        if (!(hi > lo)) continue;
        double y1 = br.evaluate(lo), y2 = br.evaluate(hi);
        if (y1 > y2) std::swap(y1, y2);
        for (std::size_t j = cell_of(g, y1); j < N && g.cell_lo(j) < y2; ++j) {
          double u = std::max(y1, g.cell_lo(j)), v = std::min(y2, g.cell_hi(j));
          if (!(v > u)) continue;
          row.push_back({j, br.inverse_length(u, v)});
        }
      }
      double total = 0.0;
      for (const auto& e : row) total += e.second;
      double width = b - a;
      defects[c] = std::max(defects[c], std::fabs(total / width - 1.0));
      std::sort(row.begin(), row.end());
      for (std::size_t k = 0; k < row.size();) {
        std::size_t j = row[k].first;
        double s = 0.0;
        for (; k < row.size() && row[k].first == j; ++k) s += row[k].second;
        parts[c].emplace_back(static_cast<int>(i), static_cast<int>(j), s / total);
      }
    }
  });

  std::vector<Triplet> all;
  for (auto& p : parts) all.insert(all.end(), p.begin(), p.end());
  T.P.resize(static_cast<Eigen::Index>(N), static_cast<Eigen::Index>(N));
  T.P.setFromTriplets(all.begin(), all.end());
  T.P.makeCompressed();
  for (double d : defects) T.max_row_defect = std::max(T.max_row_defect, d);
  return T;
}

std::vector<std::vector<std::size_t>> recurrent_classes(const TransferMatrix& T) {
  const auto& P = T.P;
  const std::size_t N = T.size();
  const double edge = 1e-15;
  // Tarjan, iterative.
  std::vector<long> index(N, -1), low(N, 0), comp(N, -1);
  std::vector<bool> on_stack(N, false);
  std::vector<std::size_t> stack;
  std::vector<std::pair<std::size_t, Eigen::Index>> call;
  long counter = 0, ncomp = 0;
  for (std::size_t s = 0; s < N; ++s) {
    if (index[s] >= 0) continue;
    call.push_back({s, P.outerIndexPtr()[s]});
    index[s] = low[s] = counter++;
    stack.push_back(s);
    on_stack[s] = true;
    while (!call.empty()) {
      auto& [v, pos] = call.back();
      Eigen::Index end = P.outerIndexPtr()[v + 1];
      bool descended = false;
      while (pos < end) {
        double val = P.valuePtr()[pos];
        auto w = static_cast<std::size_t>(P.innerIndexPtr()[pos]);
        ++pos;
        if (!(val > edge)) continue;
        if (index[w] < 0) {
          index[w] = low[w] = counter++;
          stack.push_back(w);
          on_stack[w] = true;
          call.push_back({w, P.outerIndexPtr()[w]});
          descended = true;
          break;
        }
        if (on_stack[w]) low[v] = std::min(low[v], index[w]);
      }
      if (descended) continue;
      std::size_t v_done = v;
      if (low[v_done] == index[v_done]) {
        while (true) {
          std::size_t w = stack.back();
          stack.pop_back();
          on_stack[w] = false;
          comp[w] = ncomp;
          if (w == v_done) break;
        }
        ++ncomp;
      }
      call.pop_back();
      if (!call.empty()) {
        std::size_t parent = call.back().first;
        low[parent] = std::min(low[parent], low[v_done]);
      }
    }
  }
  std::vector<bool> closed(static_cast<std::size_t>(ncomp), true);
  for (std::size_t v = 0; v < N; ++v)
    for (Eigen::Index k = P.outerIndexPtr()[v]; k < P.outerIndexPtr()[v + 1]; ++k)
      if (P.valuePtr()[k] > edge && comp[static_cast<std::size_t>(P.innerIndexPtr()[k])] != comp[v])
        closed[static_cast<std::size_t>(comp[v])] = false;
  std::vector<std::vector<std::size_t>> classes;
  std::vector<long> slot(static_cast<std::size_t>(ncomp), -1);
  for (std::size_t v = 0; v < N; ++v) {
    auto c = static_cast<std::size_t>(comp[v]);
    if (!closed[c]) continue;
    if (slot[c] < 0) {
      slot[c] = static_cast<long>(classes.size());
      classes.emplace_back();
    }
    classes[static_cast<std::size_t>(slot[c])].push_back(v);
  }
  return classes;
}

EquilibriumSet stationary_densities(const TransferMatrix& T, double tol, long max_iterations) {
  if (!(tol > 0.0)) throw InvalidParameters("tolerance must be positive");
  EquilibriumSet set;
  set.grid = T.grid;
  const std::size_t N = T.size();
  auto classes = recurrent_classes(T);
  Eigen::SparseMatrix<double, Eigen::RowMajor> Pt = T.P.transpose();
  int id = 0;
  for (const auto& cls : classes) {
    Eigen::VectorXd v = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(N));
    for (auto i : cls) v[static_cast<Eigen::Index>(i)] = 1.0 / static_cast<double>(cls.size());
    double defect = 0.0;
    long it = 0;
    for (;;) {
      Eigen::VectorXd w = Pt * v;
      defect = (w - v).lpNorm<1>();
      if (defect < tol) {
        v = w;
        break;
      }
      if (++it >= max_iterations)
        throw NoConvergence("power iteration stopped after " + std::to_string(it) +
                            " iterations with defect " + std::to_string(defect));
      // lazy step: same fixed points, converges on periodic classes
      v = 0.5 * (v + w);
    }
    v /= v.sum();
    Density d;
    d.values.resize(N);
    for (std::size_t i = 0; i < N; ++i) d.values[i] = v[static_cast<Eigen::Index>(i)] * static_cast<double>(N);
    d.solver_defect = defect;
    d.iterations = it;
    d.component_id = id++;
    set.densities.push_back(std::move(d));
  }
  return set;
}

double ulam_residual(const PiecewiseMap& map, const Density& d, int workers) {
  std::size_t N = d.size();
  auto fine = build_ulam_matrix(map, 2 * N, workers);
  Eigen::VectorXd h(static_cast<Eigen::Index>(2 * N));
  for (std::size_t i = 0; i < 2 * N; ++i) h[static_cast<Eigen::Index>(i)] = d.values[i / 2];
  Eigen::VectorXd pushed = fine.P.transpose() * h;
  return (pushed - h).lpNorm<1>() / static_cast<double>(2 * N);
}

EquilibriumSet solve_acims(const PiecewiseMap& map, std::size_t N, double tol, int workers) {
  auto T = build_ulam_matrix(map, N, workers);
  auto set = stationary_densities(T, tol);
  for (auto& d : set.densities) d.residual = ulam_residual(map, d, workers);
  return set;
}

std::vector<double> cell_averages(const PiecewiseMap& map, const UlamGrid& grid,
                                  const CellObservable& phi) {
  std::vector<double> out(grid.cell_count);
  const auto& loc = map.locations();
  for (std::size_t i = 0; i < grid.cell_count; ++i) {
    double a = grid.cell_lo(i), b = grid.cell_hi(i);
    auto it = std::lower_bound(loc.begin(), loc.end(), a);
    bool near = it != loc.end() && *it <= b;
    int k = near ? 32 : 1;
    double s = 0.0;
    for (int j = 0; j < k; ++j) s += phi(a + (b - a) * (j + 0.5) / k);
    out[i] = s / k;
  }
  return out;
}

double integrate_observable(const PiecewiseMap& map, const Density& d, const CellObservable& phi) {
  UlamGrid g{d.size()};
  auto avg = cell_averages(map, g, phi);
  double s = 0.0;
  for (std::size_t i = 0; i < d.size(); ++i) s += d.values[i] * avg[i];
  return s / static_cast<double>(d.size());
}

std::vector<double> correlation_estimate(const PiecewiseMap& map, const Density& d,
                                         const TransferMatrix& T, const CellObservable& phi,
                                         const CellObservable& psi, int n_max) {
  if (n_max < 0) throw InvalidParameters("n_max must be non-negative");
  if (d.size() != T.size()) throw InvalidParameters("density and matrix sizes differ");
  std::size_t N = d.size();
  auto fa = cell_averages(map, T.grid, phi);
  auto ga = cell_averages(map, T.grid, psi);
  Eigen::VectorXd w(static_cast<Eigen::Index>(N)), g(static_cast<Eigen::Index>(N));
  double mu_f = 0.0, mu_g = 0.0;
  for (std::size_t i = 0; i < N; ++i) {
    auto k = static_cast<Eigen::Index>(i);
    w[k] = fa[i] * d.values[i] / static_cast<double>(N);
    g[k] = ga[i];
    mu_f += w[k];
    mu_g += ga[i] * d.values[i] / static_cast<double>(N);
  }
  Eigen::SparseMatrix<double, Eigen::RowMajor> Pt = T.P.transpose();
  std::vector<double> out;
  for (int n = 0; n <= n_max; ++n) {
    out.push_back(std::fabs(w.dot(g) - mu_f * mu_g));
    w = Pt * w;
  }
  return out;
}

}  // namespace slowrec
