#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"

namespace fs = std::filesystem;

namespace {

struct Run {
  int code = -1;
  std::string out, err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct Sandbox {
  fs::path dir;

  Sandbox() {
    dir = fs::temp_directory_path() / ("slowrec_cli_" + std::to_string(::getpid()));
    fs::create_directories(dir);
  }
  ~Sandbox() {
    std::error_code ec;
    fs::remove_all(dir, ec);
  }

  fs::path write(const std::string& name, const std::string& text) const {
    std::ofstream(dir / name) << text;
    return dir / name;
  }

  Run run(const std::string& args, const std::string& env = "") const {
    std::string cmd = env + " " + SLOWREC_CLI + " " + args + " > " + (dir / "stdout").string() + " 2> " +
                      (dir / "stderr").string();
    int status = std::system(cmd.c_str());
    return {WEXITSTATUS(status), slurp(dir / "stdout"), slurp(dir / "stderr")};
  }
};

std::string config(const std::string& name) { return std::string(SLOWREC_CONFIGS) + "/" + name; }

std::vector<std::vector<std::string>> rows(const std::string& csv) {
  std::vector<std::vector<std::string>> out;
  std::istringstream in(csv);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> cells;
    std::stringstream ls(line);
    std::string c;
    while (std::getline(ls, c, ',')) cells.push_back(c);
    out.push_back(cells);
  }
  return out;
}

std::string value_of(const std::string& summary, const std::string& key) {
  std::istringstream in(summary);
  std::string line;
  while (std::getline(in, line))
    for (const std::string& prefix : {key + "=", "# " + key + "="})
      if (line.rfind(prefix, 0) == 0) return line.substr(prefix.size());
  return "";
}

// Survivor measures of the doubling map with the hole (-delta, delta) mod 1.
std::vector<double> doubling_survivors(double delta, long n) {
  std::vector<std::pair<double, double>> h{{0.0, 1.0}};
  std::vector<double> lens{1.0};
  std::vector<double> out{1.0};
  for (long k = 2; k <= n; ++k) {
    std::vector<std::pair<std::pair<double, double>, double>> pre;
    for (const auto& [a0, b0] : h) {
      double a = std::max(a0, delta), b = std::min(b0, 1.0 - delta);
      if (!(b > a)) continue;
      pre.push_back({{a / 2, b / 2}, (b - a) / 2});
      pre.push_back({{(a + 1) / 2, (b + 1) / 2}, (b - a) / 2});
    }
    std::sort(pre.begin(), pre.end());
    h.clear();
    lens.clear();
    for (const auto& [iv, len] : pre) {
      if (!h.empty() && iv.first <= h.back().second) {
        h.back().second = std::max(h.back().second, iv.second);
        lens.back() += len;
      } else {
        h.push_back(iv);
        lens.push_back(len);
      }
    }
    double total = 0.0;
    for (double l : lens) total += l;
    out.push_back(total);
  }
  return out;
}

}  // namespace

TEST_CASE("recurrence-rate on the bundled Lorenz config") {
  Sandbox box;
  auto csv = box.dir / "rr.csv";
  auto r = box.run("recurrence-rate -c " + config("lorenz_recurrence.ini") + " -o " + csv.string());
  REQUIRE(r.code == 0);
  auto text = slurp(csv);
  CHECK(text.rfind("# config_hash=", 0) == 0);
  CHECK(text.find("seed=1 version=") != std::string::npos);
  auto table = rows(text);
  REQUIRE(table.size() >= 7);
  CHECK(table[0] == std::vector<std::string>{"n", "measure", "stderr", "method", "seed", "samples"});
  CHECK(std::stod(value_of(r.out, "ci95_upper")) < 0.0);
}

TEST_CASE("escape-rate matches the pullback oracle") {
  Sandbox box;
  auto r = box.run("escape-rate -c " + config("doubling_escape.ini"));
  REQUIRE(r.code == 0);
  auto table = rows(r.out);
  auto oracle = doubling_survivors(0.1, 20);
  REQUIRE(table.size() == 21);
  bool same = true;
  for (std::size_t k = 1; k < table.size(); ++k) same = same && std::strtod(table[k][1].c_str(), nullptr) == oracle[k - 1];
  CHECK(same);
  CHECK(table[2][1] == "0.80000000000000004");
}

TEST_CASE("config errors") {
  Sandbox box;
  auto out = box.dir / "out.csv";
  auto missing = box.write("missing.ini", "[map]\npreset = lorenz\nalpha = 0.6\n[grid]\nepsilon1 = 0.3\n"
                                          "[experiment]\neps = 0.5\nn = 10,20\n");
  auto r = box.run("recurrence-rate -c " + missing.string() + " -o " + out.string());
  CHECK(r.code == 2);
  CHECK(r.err.find("error=ConfigError") != std::string::npos);
  CHECK(r.err.find("grid.beta1") != std::string::npos);
  CHECK_FALSE(fs::exists(out));

  auto unknown = box.write("unknown.ini", "[map]\npreset = lorenz\nalpha = 0.6\nbeta = 2\n");
  CHECK(box.run("validate-map -c " + unknown.string() + " -o " + out.string()).code == 2);
  CHECK_FALSE(fs::exists(out));
  auto garbled = box.write("garbled.ini", "[map\npreset = lorenz\n");
  CHECK(box.run("validate-map -c " + garbled.string()).code == 2);
  auto bad_number = box.write("bad.ini", "[map]\npreset = lorenz\nalpha = six\n");
  CHECK(box.run("validate-map -c " + bad_number.string()).code == 2);
  CHECK(box.run("no-such-command -c " + bad_number.string()).code == 2);
  CHECK(box.run("validate-map").code == 2);
}

TEST_CASE("numeric and budget failures") {
  Sandbox box;
  auto out = box.dir / "out.csv";
  auto connected = box.write("connected.ini", "[map]\npreset = connected\nalpha = 0.6\n[grid]\nepsilon1 = 0.3\n"
                                              "beta1 = 0.6\n[experiment]\neps = 0.5\nn = 10,20,30,40\n");
  auto r = box.run("recurrence-rate -c " + connected.string() + " -o " + out.string());
  CHECK(r.code == 3);
  CHECK(r.err.find("error=NoFeasibleThreshold") != std::string::npos);
  CHECK_FALSE(fs::exists(out));

  auto b = box.run("recurrence-rate -c " + config("lorenz_recurrence.ini") +
                   " --set experiment.budget=1000 -o " + out.string());
  CHECK(b.code == 4);
  CHECK(b.err.find("error=SampleBudgetExceeded") != std::string::npos);
  CHECK_FALSE(fs::exists(out));
  CHECK_FALSE(fs::exists(box.dir / "out.csv.partial"));
}

TEST_CASE("determinism and worker selection") {
  Sandbox box;
  std::string base = "recurrence-rate -c " + config("lorenz_recurrence.ini") + " --set experiment.samples=200000 ";
  auto a = box.run(base + "-j 1 -o " + (box.dir / "a.csv").string());
  auto b = box.run(base + "-j 1 -o " + (box.dir / "b.csv").string());
  auto c = box.run(base + "-j 3 -o " + (box.dir / "c.csv").string());
  REQUIRE(a.code == 0);
  REQUIRE(b.code == 0);
  REQUIRE(c.code == 0);
  CHECK(slurp(box.dir / "a.csv") == slurp(box.dir / "b.csv"));
  CHECK(slurp(box.dir / "a.csv") == slurp(box.dir / "c.csv"));
  auto d = box.run(base + "--seed 9 -o " + (box.dir / "d.csv").string());
  CHECK(slurp(box.dir / "d.csv").find("seed=9") != std::string::npos);
  CHECK(slurp(box.dir / "d.csv") != slurp(box.dir / "a.csv"));

  auto v = config("lorenz_map.ini");
  CHECK(box.run("validate-map -c " + v, "SLOWREC_WORKERS=3").err.find("workers=3") != std::string::npos);
  CHECK(box.run("validate-map -c " + v + " -j 2", "SLOWREC_WORKERS=3").err.find("workers=2") != std::string::npos);
}

TEST_CASE("other commands") {
  Sandbox box;
  auto acim = box.run("acim -c " + config("lorenz_acim.ini") + " --set acim.cells=1024 --set acim.matrix_output=" +
                      (box.dir / "m.csv").string());
  REQUIRE(acim.code == 0);
  auto table = rows(acim.out);
  CHECK(table[0] == std::vector<std::string>{"cell_lo", "cell_hi", "density_value", "component_id"});
  CHECK(table.size() == 1025);
  CHECK(rows(slurp(box.dir / "m.csv"))[0] == std::vector<std::string>{"row", "col", "value"});

  auto part = box.run("build-partition -c " + config("lorenz_partition.ini"));
  REQUIRE(part.code == 0);
  CHECK(rows(part.out)[0].size() == 7);

  auto ref = box.run("refine -c " + config("lorenz_refine.ini") + " --set refine.levels=3 --set refine.dump=true");
  REQUIRE(ref.code == 0);
  auto dump = rows(ref.out);
  CHECK(dump[0] == std::vector<std::string>{"level", "interval_lo", "interval_hi", "anchor_id", "depth",
                                            "return_times", "return_depths"});
  CHECK(dump.back()[0] == "3");

  auto corr = box.run("correlation -c " + config("doubling_correlation.ini") + " --set acim.cells=4096");
  REQUIRE(corr.code == 0);
  CHECK(std::stod(value_of(corr.out, "slope")) < 0.0);

  auto flow = box.run("semiflow-escape -c " + config("lorenz_semiflow_escape.ini") + " --set experiment.samples=20000");
  REQUIRE(flow.code == 0);
  CHECK(rows(flow.out)[0] == std::vector<std::string>{"T", "measure", "stderr", "seed"});
  CHECK(std::stod(value_of(flow.out, "ci95_upper")) < 0.0);

  auto dev = box.run("semiflow-deviation -c " + config("lorenz_semiflow_deviation.ini") +
                     " --set experiment.samples=2000 --set acim.cells=1024 --set experiment.T=5,10");
  REQUIRE(dev.code == 0);
  CHECK(value_of(dev.out, "target").substr(0, 5) == "0.500");
}
