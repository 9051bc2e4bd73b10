#include "randix/quantile.hpp"

#include <algorithm>
#include <cmath>

#include "randix/error.hpp"
#include "randix/fisher.hpp"
#include "randix/rng.hpp"

namespace randix {

QuantileRule parse_quantile_rule(const std::string& text) {
  if (text == "inf" || text == "lower") return QuantileRule::LowerInf;
  if (text == "upper") return QuantileRule::UpperOrder;
  fail(ErrorCode::InvalidArgument, "unknown quantile rule '" + text + "' (expected inf or upper)");
}

const char* to_string(QuantileRule rule) { return rule == QuantileRule::LowerInf ? "inf" : "upper"; }

std::size_t quantile_index(std::size_t n, double s, QuantileRule rule) {
  require(n > 0, ErrorCode::InsufficientUnits, "quantile of an empty sample");
  require(s > 0.0 && s < 1.0, ErrorCode::OutOfRange, "quantile level must lie in (0,1)");
  const double nn = static_cast<double>(n);
  if (rule == QuantileRule::LowerInf) {
    // F(x_(j)) = j/n >= s  <=>  j >= n·s
    const double j = std::ceil(nn * s - 1e-9);
    return static_cast<std::size_t>(std::clamp(j, 1.0, nn)) - 1;
  }
  const double j = std::ceil((nn - 1.0) * s - 1e-9);
  return static_cast<std::size_t>(std::clamp(j, 0.0, nn - 1.0));
}

double sorted_quantile(std::span<const double> sorted, double s, QuantileRule rule) {
  return sorted[quantile_index(sorted.size(), s, rule)];
}

double empirical_quantile(std::span<const double> values, double s, QuantileRule rule) {
  std::vector<double> v(values.begin(), values.end());
  const auto k = quantile_index(v.size(), s, rule);
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(k), v.end());
  return v[k];
}

std::vector<std::vector<double>> bootstrap_qte(std::span<const double> treated, std::span<const double> control,
                                               const QuantileSpec& spec) {
  const std::size_t reps = spec.bootstrap_reps;
  const std::size_t levels = spec.levels.size();
  std::vector<double> slots(reps * levels);
  struct Workspace {
    std::vector<double> t, c;
  };
  kernels::for_each_draw(
      reps, spec.exec, [] { return Workspace{}; },
      [&](std::size_t r, Workspace& ws) {
        Stream rng(spec.seed, streams::bootstrap, r);
        ws.t.resize(treated.size());
        ws.c.resize(control.size());
        for (auto& v : ws.t) v = treated[rng.below(treated.size())];
        for (auto& v : ws.c) v = control[rng.below(control.size())];
        std::sort(ws.t.begin(), ws.t.end());
        std::sort(ws.c.begin(), ws.c.end());
        for (std::size_t l = 0; l < levels; ++l) {
          slots[r * levels + l] =
              sorted_quantile(ws.t, spec.levels[l], spec.rule) - sorted_quantile(ws.c, spec.levels[l], spec.rule);
        }
      });
  std::vector<std::vector<double>> out(reps, std::vector<double>(levels));
  for (std::size_t r = 0; r < reps; ++r) {
    for (std::size_t l = 0; l < levels; ++l) out[r][l] = slots[r * levels + l];
  }
  return out;
}

std::vector<AnalysisReport> qte(const ExperimentTable& table, const QuantileSpec& spec, const Design& design) {
  require(!spec.levels.empty(), ErrorCode::InvalidArgument, "no quantile levels given");
  for (std::size_t l = 0; l < spec.levels.size(); ++l) {
    require(spec.levels[l] > 0.0 && spec.levels[l] < 1.0, ErrorCode::OutOfRange, "quantile levels must lie in (0,1)");
    require(l == 0 || spec.levels[l] > spec.levels[l - 1], ErrorCode::InvalidArgument,
            "quantile levels must be strictly increasing");
  }
  std::vector<double> t, c;
  for (std::size_t i = 0; i < table.n_units(); ++i) (table.z()[i] ? t : c).push_back(table.outcome()[i]);
  require(!t.empty() && !c.empty(), ErrorCode::InsufficientUnits, "both arms must be non-empty");
  std::sort(t.begin(), t.end());
  std::sort(c.begin(), c.end());

  std::vector<std::vector<double>> boot;
  if (spec.bootstrap_reps >= 2) boot = bootstrap_qte(t, c, spec);

  std::vector<AnalysisReport> tests;
  if (spec.exact_p) {
    std::vector<Statistic> stats;
    for (double s : spec.levels) stats.push_back(Statistic::quantile_diff(s, spec.rule));
    RandomizationOptions ro;
    ro.draws = spec.draws;
    ro.seed = spec.seed;
    ro.exec = spec.exec;
    tests = exact_p_values(table, design, stats, SharpNull{}, ro);
  }

  std::vector<AnalysisReport> out;
  for (std::size_t l = 0; l < spec.levels.size(); ++l) {
    const double s = spec.levels[l];
    AnalysisReport rep;
    rep.method = "qte s=" + format_number(s);
    rep.estimate = sorted_quantile(t, s, spec.rule) - sorted_quantile(c, s, spec.rule);
    rep.n_treated = t.size();
    rep.n_control = c.size();
    rep.seed = spec.seed;
    rep.set("level", s);
    rep.set("q_treated", sorted_quantile(t, s, spec.rule));
    rep.set("q_control", sorted_quantile(c, s, spec.rule));
    if (!boot.empty()) {
      double m = 0.0;
      for (const auto& row : boot) m += row[l];
      m /= static_cast<double>(boot.size());
      double ss = 0.0;
      for (const auto& row : boot) ss += (row[l] - m) * (row[l] - m);
      rep.std_error = std::sqrt(ss / static_cast<double>(boot.size() - 1));
      rep.set("bootstrap_reps", static_cast<double>(boot.size()));
      if (*rep.std_error == 0.0) rep.note("degenerate bootstrap: zero variance");
      rep.normal_inference();
    }
    if (spec.exact_p) {
      rep.p_exact = tests[l].p_exact;
      if (tests[l].draws) rep.draws = tests[l].draws;
      if (auto sz = tests[l].get("support_size")) rep.set("support_size", *sz);
    }
    out.push_back(std::move(rep));
  }
  return out;
}

}  // namespace randix
