#pragma once

#include <functional>
#include <limits>
#include <span>
#include <utility>
#include <vector>

#include "slowrec/acim.hpp"
#include "slowrec/map.hpp"
#include "slowrec/measure.hpp"

namespace slowrec {

using FiberDrift = std::function<double(double)>;

// F(x, y) = (f(x), lambda y + u(x)) on [0,1] x (-1,1).
class SkewProduct {
 public:
  // sup|u| < 1 - lambda is checked on a 4097-point grid.
  SkewProduct(PiecewiseMap base, double lambda, FiberDrift drift);

  const PiecewiseMap& base() const { return base_; }
  double lambda() const { return lambda_; }
  double drift(double x) const { return drift_(x); }
  double fiber(double x, double y) const { return lambda_ * y + drift_(x); }

 private:
  PiecewiseMap base_;
  double lambda_;
  FiberDrift drift_;
};

// Throws SingularPoint when x is within the map tolerance of D.
std::pair<double, double> skew_step(const SkewProduct& sp, double x, double y);

// tau(x, y) = tau0 + K Delta_delta(x) + fiber_lipschitz (1 + y).
struct RoofFunction {
  double tau0 = 1.0;
  double K = 1.0;
  double delta_roof = 0.05;
  double fiber_lipschitz = 0.0;

  void validate() const;
  double operator()(const PiecewiseMap& map, double x, double y = 0.0) const;
  // Mean over Leb on [0,1] x uniform y in (-1,1).
  double lebesgue_mean(const PiecewiseMap& map) const;
};

struct SkewProductSemiflow {
  SkewProduct sp;
  RoofFunction roof;

  double tau(double x, double y) const { return roof(sp.base(), x, y); }
};

SkewProductSemiflow make_lorenz_semiflow(double alpha = 0.6, double lambda = 0.5,
                                         const RoofFunction& roof = {});

struct SemiflowState {
  double x = 0.0;
  double y = 0.0;
  double s = 0.0;
};

struct Lap {
  long n = 0;
  double residual = 0.0;  // s + t - S_n tau
  double x = 0.0, y = 0.0;  // F^n(x, y)
  double partial_sum = 0.0;  // S_n tau
};

// Unique n with S_n tau <= s + t < S_{n+1} tau; partial sums accumulate left to right.
Lap lap_number(const SkewProductSemiflow& flow, const SemiflowState& z, double t);
SemiflowState flow_evolve(const SkewProductSemiflow& flow, const SemiflowState& z, double t);

struct FlowObservable {
  std::function<double(double, double, double)> fn;  // psi(x, y, s)
  double sup = std::numeric_limits<double>::infinity();

  double operator()(double x, double y, double s) const { return fn(x, y, s); }
};

// Composite Simpson over [a, b] of psi(x, y, .) with step at most h.
// Elsewhere h = 0 selects tau0 / 64.
double fiber_integral(const FlowObservable& psi, double x, double y, double a, double b, double h);

class InducedObservable {
 public:
  InducedObservable(FlowObservable psi, const SkewProductSemiflow& flow, double h);

  double quadrature_step() const { return h_; }
  // phi(x, y) = int_0^tau(x,y) psi(x, y, t) dt
  double operator()(double x, double y) const;
  double base_fn(double x) const { return (*this)(x, 0.0); }

 private:
  FlowObservable psi_;
  const SkewProductSemiflow* flow_;
  double h_;
};

InducedObservable induce_observable(const FlowObservable& psi, const SkewProductSemiflow& flow,
                                    double h = 0.0);

struct FlowAverage {
  double value = 0.0;        // (1/T) int_0^T psi(phi^t z) dt
  double birkhoff = 0.0;     // (1/T) S_n phi(x)
  double correction = 0.0;   // I(x, s, T)
  double correction_bound = 0.0;  // (2s + tau(F^n x)) sup|psi| / T
  long laps = 0;
};

FlowAverage flow_time_average(const FlowObservable& psi, const SkewProductSemiflow& flow,
                              const SemiflowState& z, double T, double h = 0.0);

// mu(phi) / mu(tau) for each density, phi and tau taken on the zero fiber.
std::vector<double> flow_targets(const FlowObservable& psi, const SkewProductSemiflow& flow,
                                 const EquilibriumSet& acims, double h = 0.0);

// lambda^tau-measure of {z : distance of the flow average from the target hull > eps}.
// States are x uniform, y uniform, s uniform in [0, tau), weighted by tau(x, y).
std::vector<MeasureEstimate> flow_deviation_series(const FlowObservable& psi,
                                                   const SkewProductSemiflow& flow,
                                                   std::span<const double> targets, double eps,
                                                   std::span<const double> Ts,
                                                   const Sampler& sampler, double h = 0.0);
MeasureEstimate flow_deviation_measure(const FlowObservable& psi, const SkewProductSemiflow& flow,
                                       std::span<const double> targets, double eps, double T,
                                       const Sampler& sampler, double h = 0.0);

// K is the suspension over a union of closed base intervals.
std::vector<MeasureEstimate> flow_escape_series(const SkewProductSemiflow& flow,
                                                std::span<const std::pair<double, double>> K,
                                                std::span<const double> Ts,
                                                const Sampler& sampler);
MeasureEstimate flow_escape_measure(const SkewProductSemiflow& flow,
                                    std::span<const std::pair<double, double>> K, double T,
                                    const Sampler& sampler);

}  // namespace slowrec
