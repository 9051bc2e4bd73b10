#include <doctest.h>

#include <map>
#include <set>

#include "oracle.hpp"
#include "randix/design.hpp"
#include "randix/distributions.hpp"
#include "randix/error.hpp"
#include "randix/neyman.hpp"
#include "randix/power.hpp"

using namespace randix;

namespace {

Categorical cat(std::vector<std::string> v) { return Categorical::intern(v); }

double prob_sum(const std::vector<std::pair<Assignment, double>>& s) {
  double t = 0;
  for (const auto& [z, p] : s) t += p;
  return t;
}

// Chi-square goodness of fit of sampled frequencies against the enumerated law.
void check_sampler_matches_support(const Design& d, std::uint64_t seed) {
  const auto support = enumerate_support(d);
  std::map<Assignment, std::size_t> index;
  for (std::size_t k = 0; k < support.size(); ++k) index[support[k].first] = k;
  std::vector<double> counts(support.size(), 0.0);
  Sampler s(d);
  Assignment z;
  const std::size_t draws = 100000;
  for (std::size_t k = 0; k < draws; ++k) {
    Stream rng(seed, streams::assignment, k);
    s.draw(rng, z);
    auto it = index.find(z);
    REQUIRE(it != index.end());
    counts[it->second] += 1;
  }
  double chi2 = 0;
  for (std::size_t k = 0; k < support.size(); ++k) {
    const double e = draws * support[k].second;
    chi2 += (counts[k] - e) * (counts[k] - e) / e;
  }
  CHECK(chi2_sf(chi2, static_cast<double>(support.size() - 1)) > 0.001);
}

}  // namespace

TEST_CASE("complete(2,1) sampled frequencies approach 1/2") {
  const auto d = Design::complete(2, 1);
  int first = 0;
  for (std::uint64_t s = 0; s < 20000; ++s) first += sample_assignment(d, s)[0];
  CHECK(std::abs(first / 20000.0 - 0.5) < 0.02);
}

TEST_CASE("enumerated supports: sizes and probabilities") {
  const auto c = enumerate_support(Design::complete(4, 2));
  CHECK(c.size() == 6);
  for (const auto& [z, p] : c) CHECK(p == doctest::Approx(1.0 / 6));

  const auto st = enumerate_support(Design::stratified(cat({"f", "f", "m", "m"}), {1, 1}));
  CHECK(st.size() == 4);
  for (const auto& [z, p] : st) CHECK(p == doctest::Approx(0.25));

  const auto pr = enumerate_support(Design::paired(cat({"a", "a", "b", "b", "c", "c"})));
  CHECK(pr.size() == 8);
  for (const auto& [z, p] : pr) CHECK(p == doctest::Approx(0.125));

  const auto cl = enumerate_support(Design::clustered(cat({"g1", "g1", "g2", "g3", "g3"}), 1));
  CHECK(cl.size() == 3);
  for (const auto& [z, p] : cl) CHECK(p == doctest::Approx(1.0 / 3));
}

TEST_CASE("enumerated supports match brute force and sum to one") {
  const auto c = enumerate_support(Design::complete(7, 3));
  const auto bf = oracle::all_subsets(7, 3);
  CHECK(c.size() == bf.size());
  std::set<Assignment> a, b(bf.begin(), bf.end());
  for (const auto& [z, p] : c) a.insert(z);
  CHECK(a == b);

  const std::vector<int> g{0, 0, 0, 1, 1, 1, 1, 2, 2};
  const auto st = enumerate_support(Design::stratified(Categorical::from_codes(g), {1, 2, 1}));
  const auto bfs = oracle::all_stratified(g, {1, 2, 1});
  CHECK(st.size() == bfs.size());

  for (const auto& d : {Design::complete(7, 3), Design::stratified(Categorical::from_codes(g), {1, 2, 1}),
                        Design::paired(cat({"a", "a", "b", "b", "c", "c", "d", "d"})),
                        Design::clustered(cat({"1", "1", "2", "3", "3", "4", "5"}), 2)}) {
    CHECK(std::abs(prob_sum(enumerate_support(d)) - 1.0) < 1e-12);
  }
}

TEST_CASE("exact-balance re-randomization reproduces the stratified support") {
  const std::vector<double> x{1, 1, 0, 0};
  const auto accept = AcceptRule::exact_counts(Categorical::from_codes(std::vector<int>{1, 1, 0, 0}), {1, 1});
  const auto rr = Design::rerandomized(Design::complete(4, 2), accept);
  const auto st = Design::stratified(Categorical::from_codes(std::vector<int>{1, 1, 0, 0}), {1, 1});
  std::set<Assignment> a, b;
  for (const auto& [z, p] : enumerate_support(rr)) a.insert(z);
  for (const auto& [z, p] : enumerate_support(st)) b.insert(z);
  CHECK(a == b);
  CHECK(std::abs(prob_sum(enumerate_support(rr)) - 1.0) < 1e-12);

  const auto smd = AcceptRule::max_abs_smd({"x"}, {x}, 0.5);
  const auto rr2 = Design::rerandomized(Design::complete(4, 2), smd);
  for (const auto& [z, p] : enumerate_support(rr2)) CHECK(z[0] + z[1] == 1);
}

TEST_CASE("empty acceptance set is detected") {
  const auto accept = AcceptRule::exact_counts(Categorical::from_codes(std::vector<int>{1, 1, 0, 0}), {2, 2});
  const auto rr = Design::rerandomized(Design::complete(4, 2), accept);
  CHECK_THROWS_AS(sample_assignment(rr, 1, 0, 1000), Error);
}

TEST_CASE("support above the cap is refused") {
  CHECK_FALSE(support_size(Design::complete(40, 20)).has_value());
  CHECK_THROWS_AS(enumerate_support(Design::complete(40, 20)), Error);
}

TEST_CASE("invalid designs are rejected") {
  CHECK_THROWS_AS(Design::complete(4, 0), Error);
  CHECK_THROWS_AS(Design::complete(4, 4), Error);
  CHECK_THROWS_AS(Design::stratified(cat({"a", "a", "b"}), {1, 1}), Error);
  CHECK_THROWS_AS(Design::paired(cat({"a", "a", "a", "b"})), Error);
  CHECK_THROWS_AS(Design::clustered(cat({"a", "b"}), 2), Error);
}

TEST_CASE("sampled assignments follow the enumerated law (chi-square GOF)") {
  check_sampler_matches_support(Design::complete(5, 2), 11);
  check_sampler_matches_support(Design::stratified(cat({"a", "a", "a", "b", "b"}), {1, 1}), 12);
  check_sampler_matches_support(Design::paired(cat({"a", "a", "b", "b", "c", "c"})), 13);
  check_sampler_matches_support(Design::clustered(cat({"1", "2", "2", "3", "4", "5"}), 2), 14);
  const auto acc = AcceptRule::max_abs_smd({"x"}, {{0, 1, 2, 3, 4, 5}}, 0.6);
  check_sampler_matches_support(Design::rerandomized(Design::complete(6, 3), acc), 15);
}

TEST_CASE("every sampled assignment lies in the support") {
  const auto d = Design::stratified(cat({"a", "a", "a", "b", "b", "b", "b"}), {2, 1});
  for (std::uint64_t k = 0; k < 500; ++k) CHECK(d.contains(sample_assignment(d, 3, k)));
}

TEST_CASE("power: worked example and rounding") {
  const auto r = required_sample_size({0.05, 0.8, 2, 6, 0.5});
  CHECK(r.n_total == 282);
  CHECK(r.n_treated == 142);
  CHECK(r.n_control == 142);
  const auto r6 = required_sample_size({0.05, 0.8, 1, 6, 0.5});
  // Hand evaluation with the rounded quantiles 0.8416 and 1.9600.
  const double hand = std::pow(0.8416 + 1.9600, 2) / ((1.0 / 36.0) * 0.25);
  CHECK(std::abs(r6.unrounded - hand) < 0.5);
  CHECK(r6.n_total == 1130);
}

TEST_CASE("power: scaling law and monotonicity") {
  const PowerSpec base{0.05, 0.8, 1.3, 2.0, 0.4};
  auto doubled = base;
  doubled.tau *= 2;
  CHECK(required_sample_size(base).unrounded / required_sample_size(doubled).unrounded == doctest::Approx(4.0).epsilon(1e-14));
  double prev = 1e300;
  for (double tau : {0.5, 1.0, 1.5, 2.0, 4.0}) {
    auto s = base;
    s.tau = tau;
    const double n = required_sample_size(s).unrounded;
    CHECK(n <= prev);
    prev = n;
  }
  prev = 1e300;
  for (double sigma : {4.0, 3.0, 2.0, 1.0}) {
    auto s = base;
    s.sigma = sigma;
    const double n = required_sample_size(s).unrounded;
    CHECK(n <= prev);
    prev = n;
  }
  prev = 1e300;
  for (double gamma : {0.1, 0.2, 0.3, 0.5}) {
    auto s = base;
    s.gamma = gamma;
    const double n = required_sample_size(s).unrounded;
    CHECK(n <= prev);
    prev = n;
  }
  auto neg = base;
  neg.tau = -1.3;
  CHECK(required_sample_size(neg).unrounded == required_sample_size(base).unrounded);
}

TEST_CASE("stratification gain closed form") {
  CHECK(stratification_gain(1, 2, 1, 2, 10) == 0.0);
  CHECK(stratification_gain(0, 0, 2, 2, 4) == doctest::Approx(0.5));
}

namespace {

// Fixed PotentialTable with two equal strata and constant cells; returns the
// simulated variances of the difference in means under complete and
// stratified assignment, and the standard error of their difference.
struct GainSim {
  double vc, vs, se;
};

GainSim simulate_gain(double mu_f0, double mu_f1, double mu_m0, double mu_m1, std::size_t n, int reps) {
  std::mt19937_64 g(2024);
  std::vector<double> y0, y1;
  for (std::size_t i = 0; i < n; ++i) {
    const bool f = i < n / 2;
    y0.push_back(f ? mu_f0 : mu_m0);
    y1.push_back(f ? mu_f1 : mu_m1);
  }
  auto est = [&](const Assignment& z) {
    std::vector<double> y(n);
    for (std::size_t i = 0; i < n; ++i) y[i] = z[i] ? y1[i] : y0[i];
    return oracle::diff_means(y, z);
  };
  std::vector<double> ec, es;
  for (int r = 0; r < reps; ++r) {
    ec.push_back(est(oracle::shuffle_assign(g, n, n / 2)));
    auto zf = oracle::shuffle_assign(g, n / 2, n / 4);
    const auto zm = oracle::shuffle_assign(g, n / 2, n / 4);
    zf.insert(zf.end(), zm.begin(), zm.end());
    es.push_back(est(zf));
  }
  const double vc = oracle::var_of(ec), vs = oracle::var_of(es);
  // se of a sample variance: sqrt((m4 - v^2) / reps) per design.
  auto se_var = [&](const std::vector<double>& e, double v) {
    const double m = oracle::mean_of(e);
    double m4 = 0;
    for (double x : e) m4 += std::pow(x - m, 4);
    m4 /= static_cast<double>(e.size());
    return std::sqrt(std::max(0.0, m4 - v * v) / static_cast<double>(e.size()));
  };
  return {vc, vs, std::hypot(se_var(ec, vc), se_var(es, vs))};
}

}  // namespace

TEST_CASE("stratification gain is non-negative and vanishes with equal stratum means") {
  const auto same = simulate_gain(1, 3, 1, 3, 40, 20000);
  CHECK(same.vc == doctest::Approx(0.0));
  CHECK(same.vs == doctest::Approx(0.0));
  const auto diff = simulate_gain(0, 1, 3, 5, 40, 20000);
  CHECK(diff.vc - diff.vs > 0);
  CHECK(diff.vs == doctest::Approx(0.0));
}

// Simulation oracle against the closed form. Known to fail: the simulated
// difference is twice the closed form (see the ledger); ctest runs this case
// as its own entry.
TEST_CASE("stratification gain agrees with simulated V_C - V_S") {
  const std::size_t n = 40;
  const auto s = simulate_gain(0, 1, 3, 5, n, 200000);
  const double gain = stratification_gain(0, 1, 3, 5, n);
  CHECK(std::abs((s.vc - s.vs) - gain) <= 4 * s.se);
}
