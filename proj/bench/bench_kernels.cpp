// Serial reference vs OpenMP for the draw-parallel kernels. Threads come from
// the benchmark argument; 1 runs the serial path.

#include <benchmark/benchmark.h>

#include <random>

#include "randix/design.hpp"
#include "randix/fisher.hpp"
#include "randix/heterogeneity.hpp"
#include "randix/interference.hpp"
#include "randix/quantile.hpp"

using namespace randix;

namespace {

std::mt19937_64 rng(7);

std::vector<double> normals(std::size_t n) {
  std::normal_distribution<double> d;
  std::vector<double> v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

Assignment assign(std::size_t n, std::size_t k) {
  Assignment z(n, 0);
  std::fill(z.begin(), z.begin() + static_cast<long>(k), 1);
  std::shuffle(z.begin(), z.end(), rng);
  return z;
}

ExperimentTable table(std::size_t n) {
  TableColumns c;
  c.outcome = normals(n);
  c.z = assign(n, n / 2);
  std::uniform_real_distribution<double> u(0, 1);
  for (const char* name : {"x1", "x2", "x3"}) {
    Covariate cov{name, {}, {}};
    for (std::size_t i = 0; i < n; ++i) cov.values.push_back(u(rng));
    c.covariates.push_back(cov);
  }
  for (std::size_t i = 0; i < n; ++i) c.outcome[i] += c.z[i] * (c.covariates[0].values[i] > 0.5 ? 2.0 : 0.0);
  return ExperimentTable(c);
}

Exec exec_of(const benchmark::State& s) {
  const int t = static_cast<int>(s.range(0));
  return t <= 1 ? Exec::serial() : Exec{t};
}

void BM_fisher_monte_carlo(benchmark::State& s) {
  static const auto t = table(445);
  RandomizationOptions o;
  o.draws = 20000;
  o.seed = 1;
  o.force_monte_carlo = true;
  o.exec = exec_of(s);
  const auto d = Design::complete(t.n_units(), t.n_treated());
  for (auto _ : s) benchmark::DoNotOptimize(exact_p_value(t, d, Statistic::diff_mean_ranks(), SharpNull{}, o));
}

void BM_quantile_bootstrap(benchmark::State& s) {
  static const auto yt = normals(185), yc = normals(260);
  QuantileSpec q;
  q.bootstrap_reps = 2000;
  q.seed = 1;
  q.exec = exec_of(s);
  for (auto _ : s) benchmark::DoNotOptimize(bootstrap_qte(yt, yc, q));
}

void BM_honest_tree(benchmark::State& s) {
  static const auto t = table(2000);
  TreeOptions o;
  o.seed = 1;
  o.exec = exec_of(s);
  for (auto _ : s) benchmark::DoNotOptimize(grow_honest_tree(t, o));
}

void BM_interference(benchmark::State& s) {
  static const auto t = table(1000);
  static const Network g = [] {
    Network net(1000);
    std::bernoulli_distribution e(0.005);
    for (std::size_t i = 0; i < 1000; ++i) {
      for (std::size_t j = i + 1; j < 1000; ++j) {
        if (e(rng)) net.add_edge(i, j);
      }
    }
    return net;
  }();
  static const auto exp = select_focal(g, 0.2, 1, false);
  InterferenceOptions o;
  o.draws = 5000;
  o.seed = 1;
  o.exec = exec_of(s);
  for (auto _ : s) benchmark::DoNotOptimize(interference_test(t, g, exp, InterferenceNull::NoInterference, o));
}

}  // namespace

BENCHMARK(BM_fisher_monte_carlo)->Arg(1)->Arg(2)->Arg(4)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_quantile_bootstrap)->Arg(1)->Arg(2)->Arg(4)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_honest_tree)->Arg(1)->Arg(2)->Arg(4)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_interference)->Arg(1)->Arg(2)->Arg(4)->Unit(benchmark::kMillisecond)->UseRealTime();

BENCHMARK_MAIN();
