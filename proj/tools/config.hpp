#pragma once

#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include <boost/property_tree/ptree.hpp>

#include "slowrec/map.hpp"
#include "slowrec/partition.hpp"

namespace slowrec::cli {

// Flat INI document addressed as "section.key". Every key must be read before
// computation starts; check_consumed() rejects the rest.
class Config {
 public:
  static Config load(const std::string& path);
  static Config parse(const std::string& text);

  void set(const std::string& assignment);  // "section.key=value"
  bool has(const std::string& key) const;
  bool has_section(const std::string& section) const;

  std::string text(const std::string& key) const;
  std::string text(const std::string& key, const std::string& fallback) const;
  double real(const std::string& key) const;
  double real(const std::string& key, double fallback) const;
  long integer(const std::string& key) const;
  long integer(const std::string& key, long fallback) const;
  bool flag(const std::string& key, bool fallback) const;
  // Comma-separated values, or lo:hi:step for integer ranges.
  std::vector<double> reals(const std::string& key) const;
  std::vector<long> integers(const std::string& key) const;

  void check_consumed() const;
  // FNV-1a of the sorted key=value lines, run.* excluded.
  std::uint64_t hash() const;

 private:
  boost::property_tree::ptree tree_;
  mutable std::set<std::string> used_;
};

PiecewiseMap build_map(const Config& cfg);
GridSequence build_grid(const Config& cfg);
struct ThresholdSpec {
  bool manual = false;
  ThresholdOptions options;
  double delta = 0.0;
  long rho0 = 0, theta = 0;
};

ThresholdSpec read_thresholds(const Config& cfg);
Thresholds run_thresholds(const ThresholdSpec& spec, const PiecewiseMap& map, GridSequence& seq);

}  // namespace slowrec::cli
