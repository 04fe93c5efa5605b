#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "config.hpp"

namespace slowrec::cli {

struct RunOptions {
  std::uint64_t seed = 1;
  int workers = 1;
};

struct Artifacts {
  std::string csv;      // starts with the header comment line
  std::string summary;  // key=value lines
  std::vector<std::pair<std::string, std::string>> extra;  // path, content
};

const std::vector<std::string>& command_names();

Artifacts run_command(const std::string& command, const Config& cfg, const RunOptions& opts);

}  // namespace slowrec::cli
