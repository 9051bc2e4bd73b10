#include "randix/neyman.hpp"

#include <cmath>

#include "randix/error.hpp"
#include "randix/regression.hpp"

namespace randix {
namespace {

void finish(AnalysisReport& r, const ArmSummary& t, const ArmSummary& c, const NeymanOptions& opts) {
  if (!opts.welch || !r.std_error || *r.std_error == 0.0) {
    r.normal_inference(opts.level);
    return;
  }
  // Welch–Satterthwaite degrees of freedom.
  const double a = t.sample_var / static_cast<double>(t.n);
  const double b = c.sample_var / static_cast<double>(c.n);
  const double df = (a + b) * (a + b) / (a * a / static_cast<double>(t.n - 1) + b * b / static_cast<double>(c.n - 1));
  const double q = student_t_quantile(0.5 + opts.level / 2.0, df);
  r.ci_lower = r.estimate - q * *r.std_error;
  r.ci_upper = r.estimate + q * *r.std_error;
  r.p_normal = two_sided_t_p(r.estimate / *r.std_error, df);
  r.set("welch_df", df);
}

void require_two_each(std::size_t nt, std::size_t nc, const std::string& where) {
  require(nt >= 2 && nc >= 2, ErrorCode::InsufficientUnits,
          where + " needs at least 2 treated and 2 control units (have " + std::to_string(nt) + " and " +
              std::to_string(nc) + ")");
}

}  // namespace

AnalysisReport ate_complete(const ExperimentTable& table, const NeymanOptions& opts) {
  const auto t = summarize_arm(table.outcome(), table.z(), 1);
  const auto c = summarize_arm(table.outcome(), table.z(), 0);
  require_two_each(t.n, c.n, "Neyman estimate");
  AnalysisReport r;
  r.method = "neyman complete";
  r.estimate = t.mean - c.mean;
  r.std_error = std::sqrt(c.sample_var / static_cast<double>(c.n) + t.sample_var / static_cast<double>(t.n));
  r.n_treated = t.n;
  r.n_control = c.n;
  r.set("mean_treated", t.mean);
  r.set("mean_control", c.mean);
  r.set("var_treated", t.sample_var);
  r.set("var_control", c.sample_var);
  r.note("conservative variance (S01 term dropped)");
  finish(r, t, c, opts);
  return r;
}

AnalysisReport ate_stratified(const ExperimentTable& table, const NeymanOptions& opts) {
  require(table.stratum().has_value(), ErrorCode::MissingColumn, "stratified estimate needs a stratum column");
  return ate_stratified(table, *table.stratum(), opts);
}

AnalysisReport ate_stratified(const ExperimentTable& table, const Categorical& strata, const NeymanOptions& opts) {
  require(strata.size() == table.n_units(), ErrorCode::LengthMismatch, "stratum labels have wrong length");
  const auto groups = strata.groups();
  const double n = static_cast<double>(table.n_units());
  AnalysisReport r;
  r.method = "neyman stratified";
  double est = 0.0, var = 0.0;
  for (std::size_t g = 0; g < groups.size(); ++g) {
    std::vector<double> y;
    Assignment z;
    for (auto i : groups[g]) {
      y.push_back(table.outcome()[i]);
      z.push_back(table.z()[i]);
    }
    const auto t = summarize_arm(y, z, 1);
    const auto c = summarize_arm(y, z, 0);
    require(t.n >= 2 && c.n >= 2, ErrorCode::InsufficientUnits,
            "stratum '" + strata.labels[g] + "' has " + std::to_string(t.n) + " treated and " + std::to_string(c.n) +
                " control units; at least 2 of each are required");
    const double tau = t.mean - c.mean;
    const double v = c.sample_var / static_cast<double>(c.n) + t.sample_var / static_cast<double>(t.n);
    const double share = static_cast<double>(groups[g].size()) / n;
    est += share * tau;
    var += share * share * v;
    r.set("tau[" + strata.labels[g] + "]", tau);
    r.set("se[" + strata.labels[g] + "]", std::sqrt(v));
    r.set("share[" + strata.labels[g] + "]", share);
  }
  r.estimate = est;
  r.std_error = std::sqrt(var);
  r.n_treated = table.n_treated();
  r.n_control = table.n_control();
  r.set("strata", static_cast<double>(groups.size()));
  r.note("conservative variance (S01 term dropped)");
  r.normal_inference(opts.level);
  return r;
}

AnalysisReport ate_paired(const ExperimentTable& table, const NeymanOptions& opts) {
  require(table.pair().has_value(), ErrorCode::MissingColumn, "paired estimate needs a pair column");
  const auto groups = table.pair()->groups();
  const auto pairs = groups.size();
  require(pairs >= 2, ErrorCode::InsufficientUnits, "paired estimate needs at least 2 pairs");
  std::vector<double> d(pairs);
  for (std::size_t g = 0; g < pairs; ++g) {
    const auto a = groups[g][0], b = groups[g][1];
    const auto t = table.z()[a] ? a : b;
    const auto c = table.z()[a] ? b : a;
    d[g] = table.outcome()[t] - table.outcome()[c];
  }
  const auto s = summarize(d);
  const double half = static_cast<double>(pairs);
  AnalysisReport r;
  r.method = "neyman paired";
  r.estimate = s.mean;
  // Σ(d − d̄)² / (P(P−1)) = s_d² / P
  r.std_error = std::sqrt(s.sample_var / half);
  r.n_treated = table.n_treated();
  r.n_control = table.n_control();
  r.set("pairs", half);
  const auto t = summarize_arm(table.outcome(), table.z(), 1);
  const auto c = summarize_arm(table.outcome(), table.z(), 0);
  r.set("se_neyman", std::sqrt(c.sample_var / static_cast<double>(c.n) + t.sample_var / static_cast<double>(t.n)));
  r.normal_inference(opts.level);
  return r;
}

ClusterEstimand parse_cluster_estimand(const std::string& text) {
  if (text == "cluster_mean" || text == "cluster") return ClusterEstimand::ClusterMean;
  if (text == "population") return ClusterEstimand::Population;
  fail(ErrorCode::InvalidArgument, "unknown estimand '" + text + "' (expected cluster_mean or population)");
}

AnalysisReport ate_cluster(const ExperimentTable& table, ClusterEstimand estimand, const NeymanOptions& opts) {
  require(table.cluster().has_value(), ErrorCode::MissingColumn, "cluster estimate needs a cluster column");
  if (estimand == ClusterEstimand::Population) {
    const auto fit = ols_cluster(table, ClusterLevel::Unit, ClusterWeights::None, VcovKind::ClusterLz);
    auto r = fit.report(kTreatment, opts.level);
    r.method = "neyman cluster estimand=population";
    r.n_treated = table.n_treated();
    r.n_control = table.n_control();
    return r;
  }
  const auto& cl = *table.cluster();
  const auto g = cl.n_levels();
  std::vector<double> sum(g, 0.0), size(g, 0.0);
  Assignment zg(g, 0);
  for (std::size_t i = 0; i < table.n_units(); ++i) {
    const auto c = static_cast<std::size_t>(cl.codes[i]);
    sum[c] += table.outcome()[i];
    size[c] += 1.0;
    zg[c] = table.z()[i];
  }
  std::vector<double> means(g);
  for (std::size_t c = 0; c < g; ++c) means[c] = sum[c] / size[c];
  const auto t = summarize_arm(means, zg, 1);
  const auto c = summarize_arm(means, zg, 0);
  require(t.n >= 2 && c.n >= 2, ErrorCode::InsufficientUnits,
          "cluster estimate needs at least 2 treated and 2 control clusters (have " + std::to_string(t.n) + " and " +
              std::to_string(c.n) + ")");
  AnalysisReport r;
  r.method = "neyman cluster estimand=cluster_mean";
  r.estimate = t.mean - c.mean;
  r.std_error = std::sqrt(c.sample_var / static_cast<double>(c.n) + t.sample_var / static_cast<double>(t.n));
  r.n_treated = table.n_treated();
  r.n_control = table.n_control();
  r.set("clusters_treated", static_cast<double>(t.n));
  r.set("clusters_control", static_cast<double>(c.n));
  r.normal_inference(opts.level);
  return r;
}

std::vector<BalanceRow> balance_table(const ExperimentTable& table, const std::vector<std::string>& covariates,
                                      const Design& design, const RandomizationOptions& opts) {
  std::vector<std::pair<std::string, std::vector<double>>> columns;
  for (const auto& name : covariates) {
    const auto& cov = table.covariate(name);
    if (!cov.is_categorical()) {
      columns.emplace_back(name, cov.values);
      continue;
    }
    for (std::size_t level = 0; level < cov.levels.size(); ++level) {
      std::vector<double> ind(table.n_units());
      for (std::size_t i = 0; i < ind.size(); ++i) ind[i] = cov.values[i] == static_cast<double>(level) ? 1.0 : 0.0;
      columns.emplace_back(name + "=" + cov.levels[level], std::move(ind));
    }
  }
  std::vector<BalanceRow> rows;
  for (auto& [name, values] : columns) {
    const auto t = summarize_arm(values, table.z(), 1);
    const auto c = summarize_arm(values, table.z(), 0);
    BalanceRow row;
    row.covariate = name;
    row.mean_t = t.mean;
    row.mean_c = c.mean;
    row.diff = t.mean - c.mean;
    row.se = std::sqrt(c.sample_var / static_cast<double>(c.n) + t.sample_var / static_cast<double>(t.n));
    const auto test = exact_p_value(table.with_outcome(values), design, Statistic::diff_means(), SharpNull{}, opts);
    row.p_exact = *test.p_exact;
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace randix
