#include "config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

#include <boost/algorithm/string.hpp>
#include <boost/property_tree/ini_parser.hpp>

namespace slowrec::cli {

namespace pt = boost::property_tree;

namespace {

double parse_real(const std::string& key, std::string s) {
  boost::trim(s);
  double v = 0.0;
  auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || end != s.data() + s.size() || s.empty())
    throw ConfigError(key + ": expected a number, got '" + s + "'");
  return v;
}

long parse_integer(const std::string& key, std::string s) {
  boost::trim(s);
  long v = 0;
  auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || end != s.data() + s.size() || s.empty())
    throw ConfigError(key + ": expected an integer, got '" + s + "'");
  return v;
}

std::vector<std::string> split(const std::string& s, const char* sep) {
  std::vector<std::string> parts;
  boost::split(parts, s, boost::is_any_of(sep));
  for (auto& p : parts) boost::trim(p);
  return parts;
}

}  // namespace

Config Config::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

Config Config::parse(const std::string& text) {
  Config c;
  std::istringstream in(text);
  try {
    pt::read_ini(in, c.tree_);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(std::string("malformed config: ") + e.what());
  }
  return c;
}

void Config::set(const std::string& assignment) {
  auto eq = assignment.find('=');
  if (eq == std::string::npos) throw ConfigError("override must read section.key=value: " + assignment);
  std::string key = boost::trim_copy(assignment.substr(0, eq));
  if (key.find('.') == std::string::npos) throw ConfigError("override key needs a section: " + key);
  tree_.put(key, boost::trim_copy(assignment.substr(eq + 1)));
}

bool Config::has(const std::string& key) const { return tree_.get_optional<std::string>(key).has_value(); }

bool Config::has_section(const std::string& section) const {
  return tree_.get_child_optional(section).has_value();
}

std::string Config::text(const std::string& key) const {
  auto v = tree_.get_optional<std::string>(key);
  if (!v) throw ConfigError("missing key " + key);
  used_.insert(key);
  return boost::trim_copy(*v);
}

std::string Config::text(const std::string& key, const std::string& fallback) const {
  return has(key) ? text(key) : fallback;
}

double Config::real(const std::string& key) const { return parse_real(key, text(key)); }
double Config::real(const std::string& key, double fallback) const {
  return has(key) ? real(key) : fallback;
}
long Config::integer(const std::string& key) const { return parse_integer(key, text(key)); }
long Config::integer(const std::string& key, long fallback) const {
  return has(key) ? integer(key) : fallback;
}

bool Config::flag(const std::string& key, bool fallback) const {
  if (!has(key)) return fallback;
  auto v = boost::to_lower_copy(text(key));
  if (v == "true" || v == "yes" || v == "1" || v == "on") return true;
  if (v == "false" || v == "no" || v == "0" || v == "off") return false;
  throw ConfigError(key + ": expected a boolean, got '" + v + "'");
}

std::vector<double> Config::reals(const std::string& key) const {
  std::vector<double> out;
  for (const auto& p : split(text(key), ",")) out.push_back(parse_real(key, p));
  return out;
}

std::vector<long> Config::integers(const std::string& key) const {
  std::string v = text(key);
  std::vector<long> out;
  if (v.find(':') != std::string::npos) {
    auto r = split(v, ":");
    if (r.size() != 3) throw ConfigError(key + ": range must read lo:hi:step");
    long lo = parse_integer(key, r[0]), hi = parse_integer(key, r[1]), step = parse_integer(key, r[2]);
    if (step <= 0 || hi < lo) throw ConfigError(key + ": empty range");
    for (long n = lo; n <= hi; n += step) out.push_back(n);
    return out;
  }
  for (const auto& p : split(v, ",")) out.push_back(parse_integer(key, p));
  return out;
}

void Config::check_consumed() const {
  std::vector<std::string> unknown;
  for (const auto& [section, node] : tree_) {
    if (node.empty()) unknown.push_back(section);
    for (const auto& [key, value] : node) {
      std::string full = section + "." + key;
      if (!used_.count(full)) unknown.push_back(full);
    }
  }
  if (!unknown.empty()) throw ConfigError("unknown key " + boost::join(unknown, ", "));
}

std::uint64_t Config::hash() const {
  std::vector<std::string> lines;
  for (const auto& [section, node] : tree_) {
    if (section == "run") continue;
    for (const auto& [key, value] : node)
      lines.push_back(section + "." + key + "=" + boost::trim_copy(value.data()));
  }
  std::sort(lines.begin(), lines.end());
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& l : lines)
    for (unsigned char ch : l + "\n") {
      h ^= ch;
      h *= 0x100000001b3ULL;
    }
  return h;
}

namespace {

BranchKind branch_kind(const std::string& key, const std::string& s) {
  if (s == "affine") return BranchKind::affine;
  if (s == "power") return BranchKind::power;
  if (s == "power_affine") return BranchKind::power_affine;
  if (s == "power_quadratic") return BranchKind::power_quadratic;
  throw ConfigError(key + ": unknown branch kind '" + s + "'");
}

PiecewiseMap custom_map(const Config& cfg, double tolerance) {
  std::vector<Branch> branches;
  for (int i = 0; cfg.has_section("branch" + std::to_string(i)); ++i) {
    std::string s = "branch" + std::to_string(i) + ".";
    Branch b;
    b.lo = cfg.real(s + "domain_lo");
    b.hi = cfg.real(s + "domain_hi");
    b.kind = branch_kind(s + "kind", cfg.text(s + "kind"));
    b.value_lo = cfg.real(s + "value_lo");
    b.value_hi = cfg.real(s + "value_hi");
    b.exponent = cfg.real(s + "exponent", 1.0);
    b.weight = cfg.real(s + "weight", b.kind == BranchKind::power ? 1.0 : 0.0);
    b.curvature = cfg.real(s + "curvature", 0.0);
    b.singular_at_lo = cfg.flag(s + "singular_at_lo", true);
    b.holder_exponent = cfg.real(s + "holder_exponent", 1.0);
    b.holder_constant = cfg.real(s + "holder_constant", 0.0);
    branches.push_back(b);
  }
  if (branches.empty()) throw ConfigError("custom map needs sections branch0, branch1, ...");
  std::vector<OneSidedPoint> points;
  for (int i = 0; cfg.has_section("point" + std::to_string(i)); ++i) {
    std::string s = "point" + std::to_string(i) + ".";
    OneSidedPoint p;
    p.location = cfg.real(s + "location");
    std::string side = cfg.text(s + "side");
    if (side != "plus" && side != "minus") throw ConfigError(s + "side: expected plus or minus");
    p.side = side == "plus" ? Side::plus : Side::minus;
    p.order = cfg.real(s + "order");
    p.half_gap = cfg.real(s + "half_gap", 0.0);
    p.comparability = cfg.real(s + "comparability", 0.0);
    if (cfg.has(s + "connection_steps")) {
      Connection c;
      c.steps = static_cast<int>(cfg.integer(s + "connection_steps"));
      long target = cfg.integer(s + "connection_target");
      if (target < 0) throw ConfigError(s + "connection_target must be non-negative");
      c.target = static_cast<std::size_t>(target);
      if (cfg.has(s + "connection_itinerary"))
        for (long j : cfg.integers(s + "connection_itinerary")) c.itinerary.push_back(static_cast<std::size_t>(j));
      p.connection = c;
    }
    points.push_back(p);
  }
  return PiecewiseMap(cfg.text("map.name", "custom"), std::move(branches), std::move(points), tolerance);
}

}  // namespace

PiecewiseMap build_map(const Config& cfg) {
  std::string preset = cfg.text("map.preset");
  double tolerance = cfg.real("map.tolerance", 1e-14);
  if (preset == "custom") return custom_map(cfg, tolerance);
  if (cfg.has("map.tolerance") && tolerance != 1e-14)
    throw ConfigError("map.tolerance applies to custom maps only");
  if (preset == "lorenz") return make_lorenz_map(cfg.real("map.alpha"));
  if (preset == "doubling") return make_doubling_map();
  if (preset == "tent") return make_tent_map();
  if (preset == "connected")
    return make_connected_map(cfg.real("map.alpha"), static_cast<int>(cfg.integer("map.steps", 1)));
  throw ConfigError("map.preset: unknown preset '" + preset + "'");
}

GridSequence build_grid(const Config& cfg) {
  return make_grid(cfg.real("grid.epsilon1"), cfg.real("grid.beta1"));
}

ThresholdSpec read_thresholds(const Config& cfg) {
  ThresholdSpec t;
  std::string mode = cfg.text("thresholds.mode", "auto");
  if (mode != "auto" && mode != "manual") throw ConfigError("thresholds.mode: expected auto or manual");
  t.manual = mode == "manual";
  if (t.manual) {
    t.delta = cfg.real("thresholds.delta");
    t.rho0 = cfg.integer("thresholds.rho0", 0);
    t.theta = cfg.integer("thresholds.theta", 0);
    return t;
  }
  t.options.epsilon0 = cfg.real("thresholds.epsilon0", t.options.epsilon0);
  t.options.deviation = cfg.real("thresholds.deviation", t.options.deviation);
  t.options.distortion = cfg.real("thresholds.distortion", t.options.distortion);
  t.options.tail_sums = cfg.flag("thresholds.tail_sums", t.options.tail_sums);
  t.options.rho_cap = cfg.integer("thresholds.rho_cap", t.options.rho_cap);
  return t;
}

Thresholds run_thresholds(const ThresholdSpec& spec, const PiecewiseMap& map, GridSequence& seq) {
  if (spec.manual) return manual_thresholds(map, seq, spec.delta, spec.rho0, spec.theta);
  return choose_thresholds(map, seq, spec.options);
}

}  // namespace slowrec::cli
