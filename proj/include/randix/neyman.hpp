#pragma once

#include <string>
#include <vector>

#include "randix/distributions.hpp"
#include "randix/fisher.hpp"
#include "randix/report.hpp"
#include "randix/table.hpp"

namespace randix {

struct NeymanOptions {
  double level = 0.95;
  // Student-t interval with Welch degrees of freedom instead of the Gaussian one.
  bool welch = false;
};

/// Ȳ_t − Ȳ_c with the conservative variance s_c²/N_c + s_t²/N_t.
AnalysisReport ate_complete(const ExperimentTable& table, const NeymanOptions& opts = {});

/// Σ_g (N_g/N) τ̂_g with V = Σ_g (N_g/N)² V̂_g. Uses the table's stratum column
/// unless strata are passed explicitly.
AnalysisReport ate_stratified(const ExperimentTable& table, const NeymanOptions& opts = {});
AnalysisReport ate_stratified(const ExperimentTable& table, const Categorical& strata, const NeymanOptions& opts = {});

/// Mean within-pair difference; V = Σ_g (τ̂_g − τ̂)² / ((N/2)(N/2 − 1)).
AnalysisReport ate_paired(const ExperimentTable& table, const NeymanOptions& opts = {});

enum class ClusterEstimand { ClusterMean, Population };
ClusterEstimand parse_cluster_estimand(const std::string& text);

/// ClusterMean: difference of averages of cluster means, V = s²_{C,c}/G_c + s²_{C,t}/G_t.
/// Population: unit-level difference in means with the Liang–Zeger variance.
AnalysisReport ate_cluster(const ExperimentTable& table, ClusterEstimand estimand, const NeymanOptions& opts = {});

struct BalanceRow {
  std::string covariate;
  double mean_t = 0.0;
  double mean_c = 0.0;
  double diff = 0.0;
  double se = 0.0;
  double p_exact = 1.0;
};

/// One row per numeric covariate; categorical covariates expand to one
/// indicator row per level. Exact p from the diff-in-means randomization test.
std::vector<BalanceRow> balance_table(const ExperimentTable& table, const std::vector<std::string>& covariates,
                                      const Design& design, const RandomizationOptions& opts);

}  // namespace randix
