#include <doctest.h>

#include "oracle.hpp"
#include "randix/error.hpp"
#include "randix/fisher.hpp"
#include "randix/repro.hpp"

using namespace randix;

namespace {

RandomizationOptions opts_exact() {
  RandomizationOptions o;
  o.seed = 1;
  return o;
}

// Brute-force two-sided p over an explicit list of equally likely assignments.
double brute_p(const std::vector<double>& y, const Assignment& z_obs, const std::vector<Assignment>& support) {
  const double t = std::fabs(oracle::diff_means(y, z_obs));
  std::size_t hit = 0;
  for (const auto& z : support) hit += std::fabs(oracle::diff_means(y, z)) >= t - 1e-12;
  return static_cast<double>(hit) / static_cast<double>(support.size());
}

}  // namespace

TEST_CASE("rank transform examples") {
  auto eq = [](std::vector<double> a, std::vector<double> b) {
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == doctest::Approx(b[i]));
  };
  eq(rank_transform(std::vector<double>{10, 20, 30}), {-1, 0, 1});
  eq(rank_transform(std::vector<double>{5, 5}), {0, 0});
  eq(rank_transform(std::vector<double>{1, 2, 2, 7}), {-1.5, 0, 0, 1.5});
}

TEST_CASE("rank transform: zero sum and invariance to monotone maps") {
  std::mt19937_64 g(3);
  for (int rep = 0; rep < 50; ++rep) {
    auto y = oracle::normals(g, 15);
    for (auto& v : y) v = std::round(v * 2) / 2;  // force ties
    const auto r = rank_transform(y);
    double s = 0;
    for (double v : r) s += v;
    CHECK(std::fabs(s) < 1e-9);
    std::vector<double> ey;
    for (double v : y) ey.push_back(std::exp(v) * 3 - 1);
    const auto re = rank_transform(ey);
    for (std::size_t i = 0; i < y.size(); ++i) CHECK(re[i] == r[i]);
  }
}

TEST_CASE("N=4 enumeration example gives p = 2/6") {
  const auto t = oracle::make_table({1, 2, 3, 4}, {0, 0, 1, 1});
  const auto r = exact_p_value(t, Design::observed(t, Design::Kind::Complete), Statistic::diff_means(), {}, opts_exact());
  CHECK(*r.p_exact == doctest::Approx(2.0 / 6.0));
  CHECK(r.method.find("enumeration") != std::string::npos);
  CHECK_FALSE(r.seed.has_value());
}

TEST_CASE("constant outcomes give p = 1 for every statistic, flagged degenerate") {
  const auto t = oracle::make_table({3, 3, 3, 3, 3, 3}, {1, 0, 1, 0, 1, 0});
  const auto d = Design::observed(t, Design::Kind::Complete);
  for (const auto& s : {Statistic::diff_means(), Statistic::diff_mean_ranks(), Statistic::quantile_diff(0.5)}) {
    const auto r = exact_p_value(t, d, s, {}, opts_exact());
    CHECK(*r.p_exact == 1.0);
    CHECK(*r.get("degenerate") == 1.0);
  }
}

TEST_CASE("enumeration p matches brute force on complete and stratified designs") {
  std::mt19937_64 g(5);
  for (int rep = 0; rep < 20; ++rep) {
    const auto y = oracle::normals(g, 9);
    const auto z = oracle::shuffle_assign(g, 9, 4);
    const auto t = oracle::make_table(y, z);
    const auto r = exact_p_value(t, Design::observed(t, Design::Kind::Complete), Statistic::diff_means(), {}, opts_exact());
    CHECK(*r.p_exact == doctest::Approx(brute_p(y, z, oracle::all_subsets(9, 4))).epsilon(1e-12));
  }
}

TEST_CASE("paired design p equals brute force over 2^(N/2) sign flips") {
  std::mt19937_64 g(6);
  for (std::size_t pairs : {3u, 5u, 8u}) {
    const std::size_t n = 2 * pairs;
    const auto y = oracle::normals(g, n);
    Assignment z(n);
    std::vector<int> pid(n);
    for (std::size_t p = 0; p < pairs; ++p) {
      const bool flip = g() & 1;
      z[2 * p] = flip;
      z[2 * p + 1] = !flip;
      pid[2 * p] = pid[2 * p + 1] = static_cast<int>(p);
    }
    TableColumns c;
    c.outcome = y;
    c.z = z;
    c.pair = Categorical::from_codes(pid);
    const ExperimentTable t(c);
    std::vector<Assignment> support;
    for (std::uint32_t m = 0; m < (1u << pairs); ++m) {
      Assignment s(n);
      for (std::size_t p = 0; p < pairs; ++p) {
        s[2 * p] = (m >> p) & 1u;
        s[2 * p + 1] = !s[2 * p];
      }
      support.push_back(s);
    }
    const auto r = exact_p_value(t, Design::observed(t, Design::Kind::Paired), Statistic::diff_means(), {}, opts_exact());
    CHECK(*r.p_exact == doctest::Approx(brute_p(y, z, support)).epsilon(1e-12));
  }
}

TEST_CASE("exact size: P(p <= alpha) <= alpha at every attainable alpha (N = 10)") {
  // Sharp null holds: y fixed; enumerate all assignments as the observed one.
  std::mt19937_64 g(9);
  for (int rep = 0; rep < 3; ++rep) {
    const auto y = oracle::normals(g, 10);
    const auto support = oracle::all_subsets(10, 5);
    for (const auto& stat : {Statistic::diff_means(), Statistic::diff_mean_ranks(), Statistic::quantile_diff(0.5)}) {
      std::vector<double> ps;
      for (const auto& z : support) {
        const auto t = oracle::make_table(y, z);
        ps.push_back(*exact_p_value(t, Design::observed(t, Design::Kind::Complete), stat, {}, opts_exact()).p_exact);
      }
      for (double alpha : ps) {
        double hit = 0;
        for (double p : ps) hit += p <= alpha;
        CHECK(hit / static_cast<double>(ps.size()) <= alpha + 1e-12);
      }
    }
  }
}

TEST_CASE("constant-effect null shifts outcomes before re-randomizing") {
  // Y(0) fixed, Y(1) = Y(0) + 2: testing c = 2 must behave like testing 0 on Y(0).
  std::mt19937_64 g(12);
  const auto y0 = oracle::normals(g, 8);
  const auto z = oracle::shuffle_assign(g, 8, 4);
  std::vector<double> y(8);
  for (std::size_t i = 0; i < 8; ++i) y[i] = y0[i] + 2.0 * z[i];
  const auto t = oracle::make_table(y, z);
  const auto t0 = oracle::make_table(y0, z);
  const auto d = Design::observed(t, Design::Kind::Complete);
  CHECK(*exact_p_value(t, d, Statistic::diff_means(), {2.0}, opts_exact()).p_exact ==
        *exact_p_value(t0, d, Statistic::diff_means(), {0.0}, opts_exact()).p_exact);
}

TEST_CASE("Monte Carlo p: add-one convention, determinism, lower bound") {
  std::mt19937_64 g(13);
  const auto y = oracle::normals(g, 40);
  auto z = oracle::shuffle_assign(g, 40, 20);
  auto yy = y;
  for (std::size_t i = 0; i < 40; ++i) yy[i] += 5.0 * z[i];
  const auto t = oracle::make_table(yy, z);
  const auto d = Design::observed(t, Design::Kind::Complete);
  RandomizationOptions o;
  o.seed = 77;
  o.draws = 999;
  const auto a = exact_p_value(t, d, Statistic::diff_means(), {}, o);
  const auto b = exact_p_value(t, d, Statistic::diff_means(), {}, o);
  CHECK(*a.p_exact == *b.p_exact);
  CHECK(*a.p_exact >= 1.0 / 1000.0);
  CHECK(*a.p_exact == doctest::Approx(1.0 / 1000.0));
  CHECK(a.method.find("monte-carlo") != std::string::npos);
  CHECK(*a.seed == 77);
  CHECK(*a.draws == 999);
}

TEST_CASE("force_monte_carlo p approximates the enumerated p") {
  std::mt19937_64 g(14);
  const auto y = oracle::normals(g, 12);
  const auto z = oracle::shuffle_assign(g, 12, 6);
  const auto t = oracle::make_table(y, z);
  const auto d = Design::observed(t, Design::Kind::Complete);
  const double exact = *exact_p_value(t, d, Statistic::diff_means(), {}, opts_exact()).p_exact;
  RandomizationOptions o;
  o.seed = 2;
  o.draws = 40000;
  o.force_monte_carlo = true;
  const double mc = *exact_p_value(t, d, Statistic::diff_means(), {}, o).p_exact;
  CHECK(std::fabs(mc - exact) < 4 * std::sqrt(exact * (1 - exact) / 40000) + 1e-4);
}

TEST_CASE("test inversion: coverage, nesting, degenerate outcomes") {
  std::mt19937_64 g(21);
  int covered = 0;
  const int reps = 60;
  for (int rep = 0; rep < reps; ++rep) {
    const auto y0 = oracle::normals(g, 30);
    const auto z = oracle::shuffle_assign(g, 30, 15);
    std::vector<double> y(30);
    for (std::size_t i = 0; i < 30; ++i) y[i] = y0[i] + 2.0 * z[i];
    const auto t = oracle::make_table(y, z);
    const auto d = Design::observed(t, Design::Kind::Complete);
    RandomizationOptions o;
    o.seed = static_cast<std::uint64_t>(rep);
    o.draws = 999;
    const auto ci = invert_test_ci(t, d, Statistic::diff_means(), 0.95, -2, 6, 17, o, 6);
    covered += ci.lower <= 2.0 && 2.0 <= ci.upper;
    if (rep < 5) {
      const auto ci90 = invert_test_ci(t, d, Statistic::diff_means(), 0.90, -2, 6, 17, o, 6);
      CHECK(ci90.lower >= ci.lower - 1e-12);
      CHECK(ci90.upper <= ci.upper + 1e-12);
    }
  }
  CHECK(covered >= 0.95 * reps - 3);  // ~95% with replicate noise at 60 reps

  const auto flat = oracle::make_table({1, 1, 1, 1, 1, 1}, {1, 0, 1, 0, 1, 0});
  const auto ci = invert_test_ci(flat, Design::observed(flat, Design::Kind::Complete), Statistic::diff_means(), 0.95,
                                 -1, 1, 5, opts_exact());
  CHECK(ci.lower <= 0.0);
  CHECK(ci.upper >= 0.0);
}

TEST_CASE("omnibus: duplicated outcome equals the single-outcome p; Bonferroni inequality") {
  std::mt19937_64 g(31);
  TableColumns c;
  c.outcome = oracle::normals(g, 10);
  c.z = oracle::shuffle_assign(g, 10, 5);
  c.extra_outcomes.push_back({"dup", c.outcome});
  c.extra_outcomes.push_back({"other", oracle::normals(g, 10)});
  const ExperimentTable t(c);
  const auto d = Design::observed(t, Design::Kind::Complete);
  const auto om = omnibus_multiple_outcomes(t, d, {"y", "dup"}, opts_exact());
  const auto single = exact_p_value(t, d, Statistic::diff_means(), {}, opts_exact());
  CHECK(*om.omnibus.p_exact == doctest::Approx(*single.p_exact).epsilon(1e-12));
  CHECK(*om.omnibus.get("pseudo_inverse") == 1.0);

  const auto om3 = omnibus_multiple_outcomes(t, d, {"y", "other"}, opts_exact());
  double pmax = 0;
  for (const auto& r : om3.per_outcome) pmax = std::max(pmax, *r.p_exact);
  for (const auto& r : om3.per_outcome) CHECK(*r.get("p_bonferroni") >= *r.p_exact);
  CHECK(om3.per_outcome.size() == 2);
  (void)pmax;
}

TEST_CASE("omnibus size under independent null outcomes") {
  std::mt19937_64 g(41);
  int reject = 0;
  const int reps = 1000;
  for (int rep = 0; rep < reps; ++rep) {
    TableColumns c;
    c.outcome = oracle::normals(g, 20);
    c.z = oracle::shuffle_assign(g, 20, 10);
    c.extra_outcomes.push_back({"b", oracle::normals(g, 20)});
    const ExperimentTable t(c);
    RandomizationOptions o;
    o.seed = static_cast<std::uint64_t>(rep);
    o.draws = 199;
    o.force_monte_carlo = true;
    o.exec = Exec::serial();
    reject += *omnibus_multiple_outcomes(t, Design::observed(t, Design::Kind::Complete), {"y", "b"}, o).omnibus.p_exact <= 0.05;
  }
  CHECK(std::fabs(reject / double(reps) - 0.05) <= 0.02);
}

TEST_CASE("statistic parser") {
  CHECK(parse_statistic("mean").kind == Statistic::Kind::DiffMeans);
  CHECK(parse_statistic("rank").kind == Statistic::Kind::DiffMeanRanks);
  CHECK(parse_statistic("quantile:0.25").level == 0.25);
  CHECK(parse_statistic("omnibus").kind == Statistic::Kind::Omnibus);
  CHECK_THROWS_AS(parse_statistic("quantile:1.5"), Error);
  CHECK_THROWS_AS(parse_statistic("median"), Error);
}
