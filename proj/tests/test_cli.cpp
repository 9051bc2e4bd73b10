#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "randix/cli.hpp"
#include "randix/report.hpp"
#include "randix/repro.hpp"

using namespace randix;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out, err;
};

Result invoke(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

Result with_threads(int threads, const std::vector<std::string>& args) {
  setenv("RANDIX_THREADS", std::to_string(threads).c_str(), 1);
  auto r = invoke(args);
  unsetenv("RANDIX_THREADS");
  return r;
}

std::vector<std::string> blocks(const std::string& text) {
  std::vector<std::string> out;
  std::string cur, line;
  std::istringstream in(text);
  while (std::getline(in, line)) {
    if (line.empty()) {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else {
      cur += line + "\n";
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

double value_of(const std::string& block, const std::string& key) {
  for (const auto& [k, v] : parse_machine_block(block)) {
    if (k == key) return std::stod(v);
  }
  FAIL("missing key " << key);
  return 0;
}

fs::path scratch(const std::string& name) { return fs::temp_directory_path() / ("randix_cli_" + name); }

// Random graph over the 445 Lalonde units.
fs::path lalonde_graph() {
  const auto p = scratch("graph.txt");
  std::ofstream f(p);
  std::mt19937_64 g(1);
  std::bernoulli_distribution e(0.01);
  for (int i = 0; i < 445; ++i) {
    for (int j = i + 1; j < 445; ++j) {
      if (e(g)) f << i << ' ' << j << '\n';
    }
  }
  return p;
}

}  // namespace

TEST_CASE("usage errors exit 1") {
  CHECK(invoke({}).code == 1);
  CHECK(invoke({"frobnicate"}).code == 1);
  CHECK(invoke({"estimate", "--no-such-flag"}).code == 1);
  CHECK(invoke({"het-test"}).code == 1);
  CHECK(invoke({"power"}).code == 1);
  CHECK(invoke({"--help"}).code == 0);
}

TEST_CASE("validation errors exit 2") {
  const auto r = invoke({"test"});
  CHECK(r.code == 2);
  CHECK(r.err.find("seed") != std::string::npos);
  CHECK(invoke({"estimate", "--data", "/nonexistent/file.csv"}).code == 2);
  CHECK(invoke({"estimate", "--outcome", "no_such_column"}).code == 2);
  CHECK(invoke({"repro-paper"}).code == 2);
}

TEST_CASE("numerical failures exit 3") {
  const auto p = scratch("weak.csv");
  {
    std::ofstream f(p);
    f << "y,z,w\n1,1,0\n2,1,0\n3,0,0\n4,0,0\n5,1,0\n6,0,0\n";
  }
  const auto r = invoke({"iv", "--data", p.string(), "--w", "w", "--analysis", "late"});
  CHECK(r.code == 3);
  CHECK(r.err.find("first stage") != std::string::npos);
  fs::remove(p);
}

TEST_CASE("estimate on the bundled data") {
  const auto r = invoke({"estimate", "--design", "complete", "--format", "machine"});
  REQUIRE(r.code == 0);
  CHECK(value_of(r.out, "estimate") == doctest::Approx(1.794).epsilon(0.005 / 1.794));
  CHECK(value_of(r.out, "se") == doctest::Approx(0.671).epsilon(0.005 / 0.671));
}

TEST_CASE("power example") {
  const auto r = invoke({"power", "--alpha", "0.05", "--beta", "0.8", "--tau", "2", "--sigma", "6", "--gamma", "0.5",
                      "--format", "machine"});
  REQUIRE(r.code == 0);
  CHECK(value_of(r.out, "estimate") == 282);
}

TEST_CASE("machine blocks carry exactly the documented keys") {
  const std::vector<std::vector<std::string>> commands{
      {"estimate"},
      {"estimate", "--strata-by", "u75"},
      {"test", "--seed", "1", "--draws", "500"},
      {"balance", "--seed", "1", "--draws", "200"},
      {"regress", "--vcov", "ehw"},
      {"qte", "--seed", "1", "--reps", "50", "--draws", "200"},
      {"iv", "--analysis", "late"},
      {"power", "--tau", "1"},
      {"het-test", "--basis", "linear:age,educ"},
      {"design", "--seed", "2", "--n", "10", "--n-treated", "4"},
      {"repro-paper", "--seed", "1", "--draws", "100", "--reps", "20"},
  };
  for (auto args : commands) {
    args.push_back("--format");
    args.push_back("machine");
    const auto r = invoke(args);
    INFO(args[0]);
    REQUIRE(r.code <= 3);
    const auto bs = blocks(r.out);
    CHECK(!bs.empty());
    for (const auto& b : bs) {
      const auto kv = parse_machine_block(b);
      std::vector<std::string> keys;
      for (const auto& [k, v] : kv) keys.push_back(k);
      CHECK(keys == machine_keys());
      std::string rebuilt;
      for (const auto& [k, v] : kv) rebuilt += k + ": " + v + "\n";
      CHECK(rebuilt == b);
    }
  }
}

TEST_CASE("stochastic subcommands are byte-identical across thread counts") {
  const auto graph = lalonde_graph();
  const std::vector<std::vector<std::string>> commands{
      {"design", "--seed", "3", "--kind", "complete", "--n", "30", "--n-treated", "12"},
      {"test", "--seed", "3", "--draws", "4000"},
      {"test", "--seed", "3", "--draws", "2000", "--stat", "rank"},
      {"balance", "--seed", "3", "--draws", "1000"},
      {"qte", "--seed", "3", "--reps", "200", "--draws", "1000"},
      {"tree", "--seed", "3"},
      {"interfere", "--seed", "3", "--graph", graph.string(), "--focal-frac", "0.2", "--draws", "1000"},
      {"interfere", "--seed", "3", "--graph", graph.string(), "--null", "fof", "--focal-frac", "0.05", "--draws", "500"},
      {"repro-paper", "--seed", "3", "--draws", "2000", "--reps", "100"},
  };
  for (auto args : commands) {
    args.push_back("--format");
    args.push_back("machine");
    INFO(args[0]);
    const auto one = with_threads(1, args);
    REQUIRE((one.code == 0 || args[0] == "repro-paper"));
    CHECK(!one.out.empty());
    for (int t : {2, 8}) CHECK(with_threads(t, args).out == one.out);
    CHECK(with_threads(1, args).out == one.out);
  }
  fs::remove(graph);
}

TEST_CASE("repro-paper: few draws widen the Monte Carlo tolerances") {
  const auto r = invoke({"repro-paper", "--seed", "1", "--draws", "100", "--reps", "50"});
  CHECK(r.out.find("fisher p (diff in means)") != std::string::npos);
  std::istringstream in(r.out);
  std::string line;
  int wide = 0;
  while (std::getline(in, line)) {
    if (line.rfind("fisher p", 0) == 0) wide += line.find("wide tolerance") != std::string::npos;
  }
  CHECK(wide == 2);
}

TEST_CASE("repro-paper: corrupted fixture is a validation failure naming it") {
  const auto p = scratch("lalonde_short.csv");
  {
    std::ifstream in(bundled_lalonde_path());
    std::ofstream out(p);
    std::string line;
    int n = 0;
    while (std::getline(in, line) && n++ < 400) out << line << '\n';
  }
  const auto r = invoke({"repro-paper", "--seed", "1", "--fixture", p.string()});
  CHECK(r.code == 2);
  CHECK(r.err.find(p.filename().string()) != std::string::npos);
  fs::remove(p);
}

TEST_CASE("--out writes the report to a file") {
  const auto p = scratch("out.txt");
  const auto r = invoke({"estimate", "--format", "machine", "--out", p.string()});
  CHECK(r.code == 0);
  CHECK(r.out.empty());
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  CHECK(ss.str() == invoke({"estimate", "--format", "machine"}).out);
  fs::remove(p);
}

TEST_CASE("design writes an assignment file with the requested count") {
  const auto p = scratch("assign.csv");
  const auto r = invoke({"design", "--seed", "5", "--n", "20", "--n-treated", "7", "--assignment-out", p.string(),
                      "--format", "machine"});
  REQUIRE(r.code == 0);
  std::ifstream in(p);
  std::string line;
  std::getline(in, line);
  CHECK(line == "unit,z");
  int treated = 0, rows = 0;
  while (std::getline(in, line)) {
    ++rows;
    treated += line.back() == '1';
  }
  CHECK(rows == 20);
  CHECK(treated == 7);
  fs::remove(p);
}
