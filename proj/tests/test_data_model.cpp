#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "oracle.hpp"
#include "randix/error.hpp"
#include "randix/repro.hpp"
#include "randix/report.hpp"
#include "randix/table.hpp"

using namespace randix;
namespace fs = std::filesystem;

namespace {

fs::path write_tmp(const std::string& name, const std::string& text) {
  const auto p = fs::temp_directory_path() / ("randix_dm_" + name);
  std::ofstream(p) << text;
  return p;
}

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("no error raised");
  return ErrorCode::Io;
}

Schema yz() {
  Schema s;
  s.outcome = "y";
  s.z = "z";
  return s;
}

}  // namespace

TEST_CASE("lalonde fixture loads with 445 rows and 185 treated") {
  const auto t = load_lalonde(bundled_lalonde_path());
  CHECK(t.n_units() == 445);
  CHECK(t.n_treated() == 185);
  CHECK(t.n_control() == 260);
  CHECK(t.covariates().size() == 10);
}

TEST_CASE("header-only file is rejected as having no data rows") {
  const auto p = write_tmp("empty.csv", "y,z\n");
  CHECK(code_of([&] { load_table(p, yz()); }) == ErrorCode::NoDataRows);
}

TEST_CASE("minimal paired table") {
  const auto p = write_tmp("pair.csv", "y,z,pair\n1,1,A\n2,0,A\n3,1,B\n4,0,B\n");
  auto s = yz();
  s.pair = "pair";
  const auto t = load_table(p, s);
  REQUIRE(t.pair().has_value());
  CHECK(t.pair()->n_levels() == 2);
}

TEST_CASE("validation errors carry distinct codes") {
  CHECK(code_of([&] { load_table(write_tmp("m.csv", "y,q\n1,0\n"), yz()); }) == ErrorCode::MissingColumn);
  CHECK(code_of([&] { load_table(write_tmp("nb.csv", "y,z\n1,2\n2,0\n"), yz()); }) == ErrorCode::NonBinary);
  CHECK(code_of([&] { load_table(write_tmp("na.csv", "y,z\nNA,1\n2,0\n"), yz()); }) == ErrorCode::MissingValue);
  auto s = yz();
  s.pair = "p";
  CHECK(code_of([&] { load_table(write_tmp("bp1.csv", "y,z,p\n1,1,A\n2,0,A\n3,1,A\n4,0,B\n"), s); }) ==
        ErrorCode::MalformedPair);
  CHECK(code_of([&] { load_table(write_tmp("bp2.csv", "y,z,p\n1,1,A\n2,1,A\n3,0,B\n4,0,B\n"), s); }) ==
        ErrorCode::MalformedPair);
  auto sc = yz();
  sc.cluster = "c";
  CHECK(code_of([&] { load_table(write_tmp("cl.csv", "y,z,c\n1,1,A\n2,0,A\n3,0,B\n"), sc); }) ==
        ErrorCode::ClusterNotConstant);
}

TEST_CASE("missing value message counts incomplete rows and names the cell") {
  try {
    load_table(write_tmp("na2.csv", "y,z\nNA,1\n2,0\n.,1\n"), yz());
    FAIL("expected error");
  } catch (const Error& e) {
    const std::string msg = e.what();
    CHECK(msg.find("'y'") != std::string::npos);
    CHECK(msg.find("2") != std::string::npos);
  }
}

TEST_CASE("tab delimiter detected from the header") {
  const auto t = load_table(write_tmp("tab.tsv", "y\tz\n1\t1\n2\t0\n"), yz());
  CHECK(t.n_units() == 2);
}

TEST_CASE("reveal follows the switching equation") {
  PotentialTable p;
  p.y0 = {1, 2};
  p.y1 = {3, 4};
  const auto t = reveal(p, Assignment{1, 0});
  CHECK(t.outcome()[0] == 3);
  CHECK(t.outcome()[1] == 2);

  PotentialTable q;
  q.y0 = {0, 0, 0};
  q.y1 = {1, 1, 1};
  const auto u = reveal(q, Assignment{1, 1, 0});
  CHECK(std::vector<double>(u.outcome().begin(), u.outcome().end()) == std::vector<double>{1, 1, 0});

  CHECK_THROWS_AS(reveal(q, Assignment{1, 0}), Error);
}

TEST_CASE("sharp null: revealed outcomes do not depend on z") {
  PotentialTable p;
  p.y0 = {1.5, -2, 7, 0};
  p.y1 = p.y0;
  for (const auto& z : oracle::all_subsets(4, 2)) {
    const auto t = reveal(p, z);
    for (std::size_t i = 0; i < 4; ++i) CHECK(t.outcome()[i] == p.y0[i]);
  }
}

TEST_CASE("SUTVA: assignments agreeing at unit i reveal the same outcome at i") {
  std::mt19937_64 g(7);
  PotentialTable p;
  p.y0 = oracle::normals(g, 6);
  p.y1 = oracle::normals(g, 6, 1.0);
  const auto all = oracle::all_subsets(6, 3);
  for (const auto& a : all) {
    for (const auto& b : all) {
      const auto ta = reveal(p, a), tb = reveal(p, b);
      for (std::size_t i = 0; i < 6; ++i) {
        if (a[i] == b[i]) CHECK(ta.outcome()[i] == tb.outcome()[i]);
      }
    }
  }
}

TEST_CASE("save_table then load_table is the identity") {
  TableColumns c;
  c.outcome = {0.1, 1.0 / 3.0, -2.5e-7, 4.0, 1e10, 6.25};
  c.z = {1, 0, 1, 0, 1, 0};
  c.w = Assignment{1, 0, 0, 0, 1, 1};
  c.covariates.push_back({"x", {1.25, 2, 3, 4, 5, 6}, {}});
  c.covariates.push_back({"color", {0, 1, 0, 2, 1, 0}, {"red", "blue", "green"}});
  c.stratum = Categorical::intern(std::vector<std::string>{"a", "a", "b", "b", "c", "c"});
  c.cluster = Categorical::intern(std::vector<std::string>{"k1", "k2", "k3", "k4", "k5", "k6"});
  c.extra_outcomes.push_back({"y2", {9, 8, 7, 6, 5, 4}});
  const ExperimentTable t(c);
  const auto path = fs::temp_directory_path() / "randix_roundtrip.csv";
  save_table(t, path);
  const auto back = load_table(path, schema_of(t));
  CHECK(back.n_units() == t.n_units());
  for (std::size_t i = 0; i < t.n_units(); ++i) {
    CHECK(back.outcome()[i] == t.outcome()[i]);
    CHECK(back.z()[i] == t.z()[i]);
    CHECK(back.w()[i] == t.w()[i]);
    CHECK(back.covariate("x").values[i] == t.covariate("x").values[i]);
    CHECK(back.covariate("color").values[i] == t.covariate("color").values[i]);
    CHECK(back.stratum()->codes[i] == t.stratum()->codes[i]);
    CHECK(back.cluster()->codes[i] == t.cluster()->codes[i]);
    CHECK(back.outcome_column("y2")[i] == t.outcome_column("y2")[i]);
  }
  CHECK(back.covariate("color").levels == t.covariate("color").levels);
}

TEST_CASE("schema config file") {
  const auto p = write_tmp("schema.cfg", "# roles\noutcome = re78\nz=treat\ncovariates = age, educ\n");
  const auto s = Schema::from_config(p);
  CHECK(s.outcome == "re78");
  CHECK(s.z == "treat");
  CHECK(s.covariates == std::vector<std::string>{"age", "educ"});
  CHECK_THROWS_AS(Schema::from_config(write_tmp("bad.cfg", "colour=red\n")), Error);
}

TEST_CASE("report machine block round-trips through the fixed key set") {
  AnalysisReport r;
  r.estimate = 1.5;
  r.std_error = 0.25;
  r.normal_inference();
  r.method = "x";
  r.seed = 4;
  r.set("extra", 1.0);
  std::ostringstream s;
  write_machine(s, r);
  const auto kv = parse_machine_block(s.str());
  REQUIRE(kv.size() == machine_keys().size());
  for (std::size_t i = 0; i < kv.size(); ++i) CHECK(kv[i].first == machine_keys()[i]);
  CHECK(kv[0].second == "1.5");
  CHECK(kv[8].second == "NA");
  CHECK(*r.ci_lower <= r.estimate);
  CHECK(r.estimate <= *r.ci_upper);
  CHECK(format_number(-0.0) == "0");
  CHECK(format_number(1234567.0) == "1.23457e+06");
}
