#include "commands.hpp"

#include <cmath>
#include <functional>
#include <map>

#include <fmt/format.h>

#include "slowrec/acim.hpp"
#include "slowrec/measure.hpp"
#include "slowrec/partition.hpp"
#include "slowrec/semiflow.hpp"

#ifndef SLOWREC_VERSION
#define SLOWREC_VERSION "0.0.0"
#endif

namespace slowrec::cli {

namespace {

std::string num(double v) { return fmt::format("{:.17g}", v); }

std::string header(const std::string& command, const Config& cfg, const RunOptions& opts) {
  return fmt::format("# config_hash={:016x} seed={} version={} command={}\n", cfg.hash(), opts.seed,
                     SLOWREC_VERSION, command);
}

std::string fit_summary(const DeviationSeries& series) {
  std::string out;
  try {
    auto fit = fit_exponential_rate(series);
    out += fmt::format("slope={}\nci95_upper={}\nr_squared={}\nn_lo={}\nn_hi={}\ndecaying={}\n",
                       num(fit.slope), num(fit.ci95_upper), num(fit.r_squared), fit.n_lo, fit.n_hi,
                       fit.decaying ? "true" : "false");
    std::string below;
    for (long n : fit.below_resolution) below += (below.empty() ? "" : ";") + std::to_string(n);
    out += "below_resolution=" + below + "\n";
  } catch (const InsufficientData& e) {
    out += std::string("fit=insufficient_data\nfit_detail=") + e.what() + "\n";
  }
  return out;
}

Sampler read_sampler(const Config& cfg, const RunOptions& opts) {
  Sampler s;
  s.seed = opts.seed;
  s.workers = opts.workers;
  long count = cfg.integer("experiment.samples", 100000);
  long budget = cfg.integer("experiment.budget", 4000000000L);
  if (count <= 0 || budget <= 0) throw ConfigError("experiment.samples and experiment.budget must be positive");
  s.count = static_cast<std::uint64_t>(count);
  s.budget = static_cast<std::uint64_t>(budget);
  return s;
}

struct ObservableSpec {
  std::string name;
  double center = 0.5, width = 0.1, delta = 0.05;
};

ObservableSpec read_observable(const Config& cfg, const std::string& key, const std::string& fallback) {
  ObservableSpec o;
  o.name = cfg.text(key, fallback);
  o.center = cfg.real(key + "_center", o.center);
  o.width = cfg.real(key + "_width", o.width);
  o.delta = cfg.real(key + "_delta", o.delta);
  if (!(o.width > 0.0)) throw ConfigError(key + "_width must be positive");
  if (!(o.delta > 0.0 && o.delta < 0.5)) throw ConfigError(key + "_delta must lie in (0,1/2)");
  return o;
}

double bump(double x, double c, double w) {
  double r = (x - c) / w;
  if (std::fabs(r) >= 1.0) return 0.0;
  return std::exp(1.0 - 1.0 / (1.0 - r * r));
}

std::function<double(double)> base_observable(const ObservableSpec& o, const PiecewiseMap& map,
                                              const std::string& key) {
  if (o.name == "x") return [](double x) { return x; };
  if (o.name == "centered_x") return [](double x) { return x - 0.5; };
  if (o.name == "cos") return [](double x) { return std::cos(2.0 * M_PI * x); };
  if (o.name == "logdist") {
    TruncationParams tp{o.delta};
    return [&map, tp](double x) { return recurrence_observable(x, map, tp); };
  }
  if (o.name == "bump") return [o](double x) { return bump(x, o.center, o.width); };
  throw ConfigError(key + ": unknown observable '" + o.name + "' (x, centered_x, cos, logdist, bump)");
}

FlowObservable flow_observable(const ObservableSpec& o, const PiecewiseMap& map, const std::string& key) {
  const double inf = std::numeric_limits<double>::infinity();
  if (o.name == "x") return {[](double x, double, double) { return x; }, 1.0};
  if (o.name == "y") return {[](double, double y, double) { return y; }, 1.0};
  if (o.name == "s") return {[](double, double, double s) { return s; }, inf};
  if (o.name == "logdist") {
    TruncationParams tp{o.delta};
    return {[&map, tp](double x, double, double) { return recurrence_observable(x, map, tp); }, inf};
  }
  if (o.name == "bump") return {[o](double x, double, double) { return bump(x, o.center, o.width); }, 1.0};
  throw ConfigError(key + ": unknown flow observable '" + o.name + "' (x, y, s, logdist, bump)");
}

std::string joined(const std::vector<long>& v) {
  std::string s;
  for (long x : v) s += (s.empty() ? "" : ";") + std::to_string(x);
  return s;
}

// ---- commands ----

Artifacts validate_map_cmd(const Config& cfg, const RunOptions& opts) {
  auto map = build_map(cfg);
  cfg.check_consumed();
  auto r = validate_map(map);
  Artifacts a;
  a.csv = header("validate-map", cfg, opts) + "item,point,value,ok\n";
  a.csv += fmt::format("sigma_hat,,{},{}\n", num(r.sigma_hat), r.sigma_ok);
  for (const auto& f : r.singular_fits)
    a.csv += fmt::format("singular_exponent,{},{},{}\n", f.point, num(f.fitted_exponent), f.ok);
  for (const auto& h : r.holder) a.csv += fmt::format("holder_constant,{},{},true\n", h.point, num(h.constant));
  for (const auto& c : r.connections)
    a.csv += fmt::format("connection_containment,{},{},{}\n", c.point, num(c.containment), c.ok);
  a.summary = fmt::format("map={}\npassed={}\nhypotheses_hold={}\nsigma_hat={}\nbeta0={}\nbeta1={}\n", map.name(),
                          r.passed, r.hypotheses_hold, num(r.sigma_hat), num(map.beta0()), num(map.beta1()));
  return a;
}

struct PartitionSetup {
  PiecewiseMap map;
  GridSequence seq;
  ThresholdSpec spec;
  long p_max;
};

PartitionSetup read_partition(const Config& cfg) {
  PartitionSetup s{build_map(cfg), build_grid(cfg), read_thresholds(cfg), cfg.integer("partition.p_max")};
  if (s.p_max < 2) throw ConfigError("partition.p_max must be at least 2");
  return s;
}

std::string threshold_summary(const Thresholds& th) {
  std::string out = fmt::format("rho0={}\ntheta={}\ndelta={}\n", th.rho0, th.theta, num(th.delta.delta));
  for (const auto& n : th.notes) out += "note=" + n + "\n";
  return out;
}

const char* dump_columns = "level,interval_lo,interval_hi,anchor_id,depth,return_times,return_depths\n";

Artifacts build_partition_cmd(const Config& cfg, const RunOptions& opts) {
  auto s = read_partition(cfg);
  cfg.check_consumed();
  auto th = run_thresholds(s.spec, s.map, s.seq);
  auto p0 = build_initial_partition(s.map, s.seq, th, s.p_max);
  Artifacts a;
  a.csv = header("build-partition", cfg, opts) + dump_columns;
  for (const auto& c : p0.cells)
    a.csv += fmt::format("0,{},{},{},{},0,{}\n", num(c.lo), num(c.hi), c.anchor, c.depth, c.depth);
  a.summary = threshold_summary(th) +
              fmt::format("cells={}\nK2={}\nleftover={}\ncovered={}\n", p0.cells.size(), num(p0.K2),
                          num(p0.leftover), num(p0.covered));
  return a;
}

Artifacts refine_cmd(const Config& cfg, const RunOptions& opts) {
  auto s = read_partition(cfg);
  long levels = cfg.integer("refine.levels");
  bool dump = cfg.flag("refine.dump", false);
  if (levels < 1) throw ConfigError("refine.levels must be positive");
  cfg.check_consumed();
  auto th = run_thresholds(s.spec, s.map, s.seq);
  auto p0 = build_initial_partition(s.map, s.seq, th, s.p_max);
  Artifacts a;
  a.csv = header("refine", cfg, opts);
  a.summary = threshold_summary(th);
  if (dump) {
    a.csv += dump_columns;
    auto state = initial_refined(p0);
    std::size_t returns = 0, free_steps = 0;
    for (int n = 0;; ++n) {
      for (const auto& atom : state) {
        const auto& root = p0.cells[static_cast<std::size_t>(atom.hosts.front())];
        std::vector<long> times, depths;
        for (const auto& r : atom.returns) {
          times.push_back(r.time);
          depths.push_back(r.cell < 0 ? root.depth : p0.cells[static_cast<std::size_t>(r.cell)].depth);
        }
        a.csv += fmt::format("{},{},{},{},{},{},{}\n", n, num(atom.lo), num(atom.hi), root.anchor, root.depth,
                             joined(times), joined(depths));
      }
      if (n == levels) break;
      auto next = refine_step(state, n, s.map, p0, opts.workers);
      returns += next.returns;
      free_steps += next.free_steps;
      state = std::move(next.atoms);
    }
    a.summary += fmt::format("levels={}\nreturns={}\nfree_steps={}\n", levels, returns, free_steps);
    return a;
  }
  auto w = walk_refinement(s.map, p0, static_cast<int>(levels), opts.workers, [](std::size_t, const WalkNode&) {});
  a.csv += "level,atoms,mass,overflow\n";
  double defect = 0.0;
  for (std::size_t n = 0; n < w.atoms.size(); ++n) {
    a.csv += fmt::format("{},{},{},{}\n", n, w.atoms[n], num(w.mass[n]), num(w.overflow[n]));
    defect = std::max(defect, std::fabs(w.mass[n] + w.overflow[n] + p0.leftover - 1.0));
  }
  a.summary += fmt::format("levels={}\nreturns={}\nfree_steps={}\nmass_defect={}\n", levels, w.returns,
                           w.free_steps, num(defect));
  return a;
}

Artifacts recurrence_rate_cmd(const Config& cfg, const RunOptions& opts) {
  auto map = build_map(cfg);
  double eps = cfg.real("experiment.eps");
  auto ns = cfg.integers("experiment.n");
  std::string method = cfg.text("experiment.method", "monte_carlo");
  if (method != "monte_carlo" && method != "exact") throw ConfigError("experiment.method: monte_carlo or exact");
  bool fixed_delta = cfg.has("experiment.delta");
  double delta = fixed_delta ? cfg.real("experiment.delta") : 0.0;
  GridSequence seq;
  ThresholdSpec spec;
  if (!fixed_delta) {
    seq = build_grid(cfg);
    spec = read_thresholds(cfg);
  }
  Sampler sampler = read_sampler(cfg, opts);
  ExactOptions ex;
  ex.n_cap = cfg.integer("experiment.exact_n_cap", ex.n_cap);
  cfg.check_consumed();

  Artifacts a;
  if (!fixed_delta) {
    auto th = run_thresholds(spec, map, seq);
    delta = th.delta.delta;
    a.summary = threshold_summary(th);
  } else {
    a.summary = fmt::format("delta={}\n", num(delta));
  }
  std::vector<MeasureEstimate> est;
  if (method == "exact") {
    for (long n : ns) est.push_back(recurrence_deviation_exact(map, delta, eps, n, ex));
  } else {
    est = recurrence_deviation_series(map, delta, eps, ns, sampler);
  }
  a.csv = header("recurrence-rate", cfg, opts) + "n,measure,stderr,method,seed,samples\n";
  DeviationSeries series;
  for (std::size_t k = 0; k < ns.size(); ++k) {
    a.csv += fmt::format("{},{},{},{},{},{}\n", ns[k], num(est[k].measure), num(est[k].stderr_),
                         method_name(est[k].method), opts.seed, est[k].samples);
    series.add(ns[k], est[k]);
  }
  a.summary += fit_summary(series);
  return a;
}

Artifacts escape_rate_cmd(const Config& cfg, const RunOptions& opts) {
  auto map = build_map(cfg);
  double delta = cfg.real("experiment.delta");
  long n_max = cfg.integer("experiment.n_max");
  std::vector<double> holes;
  if (cfg.has("experiment.holes")) holes = cfg.reals("experiment.holes");
  long cap = cfg.integer("experiment.max_intervals", 1L << 26);
  std::string method = cfg.text("experiment.method", "exact");
  if (method != "exact") throw ConfigError("experiment.method: escape-rate supports exact only");
  if (n_max < 1 || cap < 1) throw ConfigError("experiment.n_max and experiment.max_intervals must be positive");
  cfg.check_consumed();
  auto series = survivor_series(map, delta, n_max, holes, static_cast<std::size_t>(cap));
  Artifacts a;
  a.csv = header("escape-rate", cfg, opts) + "n,measure,stderr,method,seed,samples\n";
  DeviationSeries ds;
  for (const auto& s : series) {
    a.csv += fmt::format("{},{},0,exact_intervals,{},0\n", s.n, num(s.total_measure), opts.seed);
    ds.entries.push_back({s.n, s.total_measure, 0.0, Method::exact_intervals});
  }
  a.summary = fmt::format("delta={}\nintervals={}\n", num(delta), series.back().intervals.size()) + fit_summary(ds);
  return a;
}

struct AcimSetup {
  std::size_t cells;
  double tol;
};

AcimSetup read_acim(const Config& cfg, long default_cells) {
  long cells = cfg.integer("acim.cells", default_cells);
  double tol = cfg.real("acim.tol", 1e-13);
  if (cells < 2) throw ConfigError("acim.cells must be at least 2");
  if (!(tol > 0.0)) throw ConfigError("acim.tol must be positive");
  return {static_cast<std::size_t>(cells), tol};
}

Artifacts acim_cmd(const Config& cfg, const RunOptions& opts) {
  auto map = build_map(cfg);
  auto setup = read_acim(cfg, 4096);
  std::string matrix_path = cfg.text("acim.matrix_output", "");
  cfg.check_consumed();
  auto T = build_ulam_matrix(map, setup.cells, opts.workers);
  auto set = stationary_densities(T, setup.tol);
  for (auto& d : set.densities) d.residual = ulam_residual(map, d, opts.workers);
  Artifacts a;
  a.csv = header("acim", cfg, opts) + "cell_lo,cell_hi,density_value,component_id\n";
  a.summary = fmt::format("cells={}\ncomponents={}\nmax_row_defect={}\n", setup.cells, set.densities.size(),
                          num(T.max_row_defect));
  for (const auto& d : set.densities) {
    for (std::size_t i = 0; i < d.size(); ++i)
      a.csv += fmt::format("{},{},{},{}\n", num(set.grid.cell_lo(i)), num(set.grid.cell_hi(i)), num(d.values[i]),
                           d.component_id);
    a.summary += fmt::format("component={} residual={} solver_defect={} iterations={}\n", d.component_id,
                             num(d.residual), num(d.solver_defect), d.iterations);
  }
  if (!matrix_path.empty()) {
    std::string m = header("acim", cfg, opts) + "row,col,value\n";
    for (Eigen::Index r = 0; r < T.P.outerSize(); ++r)
      for (decltype(T.P)::InnerIterator it(T.P, r); it; ++it)
        m += fmt::format("{},{},{}\n", it.row(), it.col(), num(it.value()));
    a.extra.emplace_back(matrix_path, std::move(m));
  }
  return a;
}

Artifacts correlation_cmd(const Config& cfg, const RunOptions& opts) {
  auto map = build_map(cfg);
  auto setup = read_acim(cfg, 16384);
  auto phi_spec = read_observable(cfg, "correlation.phi", "centered_x");
  auto psi_spec = read_observable(cfg, "correlation.psi", "centered_x");
  long n_max = cfg.integer("correlation.n_max", 20);
  if (n_max < 1) throw ConfigError("correlation.n_max must be positive");
  auto phi = base_observable(phi_spec, map, "correlation.phi");
  auto psi = base_observable(psi_spec, map, "correlation.psi");
  cfg.check_consumed();
  auto T = build_ulam_matrix(map, setup.cells, opts.workers);
  auto set = stationary_densities(T, setup.tol);
  Artifacts a;
  a.csv = header("correlation", cfg, opts) + "n,correlation,component_id\n";
  a.summary = fmt::format("cells={}\ncomponents={}\n", setup.cells, set.densities.size());
  for (const auto& d : set.densities) {
    auto c = correlation_estimate(map, d, T, phi, psi, static_cast<int>(n_max));
    DeviationSeries s;
    for (std::size_t n = 0; n < c.size(); ++n) {
      a.csv += fmt::format("{},{},{}\n", n, num(c[n]), d.component_id);
      if (n > 0) s.entries.push_back({static_cast<long>(n), c[n], 0.0, Method::exact_intervals});
    }
    a.summary += fmt::format("component={}\n", d.component_id) + fit_summary(s);
  }
  return a;
}

struct FlowSetup {
  SkewProductSemiflow flow;
  std::vector<double> Ts;
  Sampler sampler;
};

FiberDrift read_drift(const Config& cfg) {
  std::string kind = cfg.text("skew.drift", "linear");
  double amp = cfg.real("skew.drift_amplitude", 0.4);
  double centre = cfg.real("skew.drift_center", 0.5);
  if (kind == "linear") return [amp, centre](double x) { return amp * (x - centre); };
  if (kind == "sine") return [amp](double x) { return amp * std::sin(2.0 * M_PI * x); };
  if (kind == "zero") return [](double) { return 0.0; };
  throw ConfigError("skew.drift: linear, sine or zero");
}

FlowSetup read_flow(const Config& cfg, const RunOptions& opts) {
  auto map = build_map(cfg);
  double lambda = cfg.real("skew.lambda", 0.5);
  auto drift = read_drift(cfg);
  RoofFunction roof;
  roof.tau0 = cfg.real("roof.tau0", roof.tau0);
  roof.K = cfg.real("roof.K", roof.K);
  roof.delta_roof = cfg.real("roof.delta_roof", roof.delta_roof);
  roof.fiber_lipschitz = cfg.real("roof.fiber_lipschitz", roof.fiber_lipschitz);
  try {
    roof.validate();
    return {SkewProductSemiflow{SkewProduct(std::move(map), lambda, std::move(drift)), roof},
            cfg.reals("experiment.T"), read_sampler(cfg, opts)};
  } catch (const InvalidParameters& e) {
    throw ConfigError(e.what());
  }
}

std::string flow_csv(const std::string& command, const Config& cfg, const RunOptions& opts,
                     const std::vector<double>& Ts, const std::vector<MeasureEstimate>& est,
                     DeviationSeries& series) {
  std::string csv = header(command, cfg, opts) + "T,measure,stderr,seed\n";
  for (std::size_t k = 0; k < Ts.size(); ++k) {
    csv += fmt::format("{},{},{},{}\n", num(Ts[k]), num(est[k].measure), num(est[k].stderr_), opts.seed);
    series.add(std::lround(Ts[k]), est[k]);
  }
  return csv;
}

Artifacts semiflow_deviation_cmd(const Config& cfg, const RunOptions& opts) {
  auto setup = read_flow(cfg, opts);
  auto psi_spec = read_observable(cfg, "observable.name", "x");
  auto psi = flow_observable(psi_spec, setup.flow.sp.base(), "observable.name");
  double eps = cfg.real("experiment.eps");
  double h = cfg.real("experiment.quadrature_step", 0.0);
  auto acim = read_acim(cfg, 4096);
  cfg.check_consumed();
  auto set = solve_acims(setup.flow.sp.base(), acim.cells, acim.tol, opts.workers);
  auto targets = flow_targets(psi, setup.flow, set, h);
  auto est = flow_deviation_series(psi, setup.flow, targets, eps, setup.Ts, setup.sampler, h);
  Artifacts a;
  DeviationSeries series;
  a.csv = flow_csv("semiflow-deviation", cfg, opts, setup.Ts, est, series);
  for (double t : targets) a.summary += "target=" + num(t) + "\n";
  a.summary += fit_summary(series);
  return a;
}

Artifacts semiflow_escape_cmd(const Config& cfg, const RunOptions& opts) {
  auto setup = read_flow(cfg, opts);
  std::vector<std::pair<double, double>> K;
  const auto& f = setup.flow.sp.base();
  if (cfg.has("experiment.exclude_radius")) {
    double r = cfg.real("experiment.exclude_radius");
    if (!(r > 0.0 && r < 0.5)) throw ConfigError("experiment.exclude_radius must lie in (0,1/2)");
    double lo = 0.0;
    for (double c : f.locations()) {
      if (c <= 0.0 || c >= 1.0) continue;
      if (c - r > lo) K.emplace_back(lo, c - r);
      lo = c + r;
    }
    if (lo < 1.0) K.emplace_back(lo, 1.0);
  } else {
    auto bounds = cfg.reals("experiment.K");
    if (bounds.size() % 2 != 0) throw ConfigError("experiment.K lists lo,hi pairs");
    for (std::size_t i = 0; i < bounds.size(); i += 2) K.emplace_back(bounds[i], bounds[i + 1]);
  }
  cfg.check_consumed();
  auto est = flow_escape_series(setup.flow, K, setup.Ts, setup.sampler);
  Artifacts a;
  DeviationSeries series;
  a.csv = flow_csv("semiflow-escape", cfg, opts, setup.Ts, est, series);
  for (const auto& [lo, hi] : K) a.summary += fmt::format("K=[{},{}]\n", num(lo), num(hi));
  a.summary += fit_summary(series);
  return a;
}

using Handler = Artifacts (*)(const Config&, const RunOptions&);

const std::map<std::string, Handler>& handlers() {
  static const std::map<std::string, Handler> h{
      {"validate-map", validate_map_cmd},
      {"build-partition", build_partition_cmd},
      {"refine", refine_cmd},
      {"recurrence-rate", recurrence_rate_cmd},
      {"escape-rate", escape_rate_cmd},
      {"acim", acim_cmd},
      {"correlation", correlation_cmd},
      {"semiflow-deviation", semiflow_deviation_cmd},
      {"semiflow-escape", semiflow_escape_cmd},
  };
  return h;
}

}  // namespace

const std::vector<std::string>& command_names() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> v;
    for (const auto& [name, fn] : handlers()) v.push_back(name);
    return v;
  }();
  return names;
}

Artifacts run_command(const std::string& command, const Config& cfg, const RunOptions& opts) {
  auto it = handlers().find(command);
  if (it == handlers().end()) throw ConfigError("unknown command " + command);
  return it->second(cfg, opts);
}

}  // namespace slowrec::cli
