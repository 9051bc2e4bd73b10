#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

#include "randix/report.hpp"
#include "randix/table.hpp"

namespace randix {

// neyman is HC2, which for the bare treatment regression reduces to
// s_c²/N_c + s_t²/N_t exactly.
enum class VcovKind { Ehw, Neyman, ClusterLz, Classical };

VcovKind parse_vcov(const std::string& text);
const char* to_string(VcovKind kind);

struct RegressionFit {
  std::vector<std::string> names;
  Eigen::VectorXd coef;
  Eigen::VectorXd residuals;
  Eigen::MatrixXd vcov;
  double r_squared = 0.0;
  VcovKind kind = VcovKind::Ehw;
  std::size_t n_obs = 0;
  std::optional<std::size_t> n_clusters;

  std::size_t index(const std::string& name) const;
  double coefficient(const std::string& name) const { return coef[static_cast<Eigen::Index>(index(name))]; }
  double se(const std::string& name) const;
  AnalysisReport report(const std::string& term, double level = 0.95) const;
};

struct OlsOptions {
  VcovKind kind = VcovKind::Ehw;
  std::optional<Eigen::VectorXd> weights;
  std::optional<std::vector<int>> clusters;  // required for ClusterLz
  bool cluster_df_adjust = false;              // multiply the sandwich by G/(G−1)
};

/// Weighted least squares via column-pivoted QR with relative threshold 1e−10.
/// Rank deficiency raises RankDeficient naming the first dropped column.
RegressionFit fit_ols(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, std::vector<std::string> names,
                      const OlsOptions& opts);

inline const std::string kIntercept = "intercept";
inline const std::string kTreatment = "treatment";

/// Default variance per design: cluster_lz with clusters, else the given fallback.
VcovKind default_vcov(const ExperimentTable& table, VcovKind fallback);

/// Y = α + τ W + ε.
RegressionFit ols_treatment(const ExperimentTable& table, std::optional<VcovKind> kind = std::nullopt);

/// Y = α + τ W + β'Ẋ (+ γ'Ẋ W when interacted) with Ẋ centered at its sample
/// mean. Categorical covariates enter as indicators for all but their first level.
RegressionFit ols_adjusted(const ExperimentTable& table, const std::vector<std::string>& covariates, bool interacted,
                           std::optional<VcovKind> kind = std::nullopt);

enum class ClusterLevel { Unit, Cluster };
enum class ClusterWeights { None, InverseClusterSize, ClusterSize };
ClusterLevel parse_cluster_level(const std::string& text);
ClusterWeights parse_cluster_weights(const std::string& text);

/// Cluster-level regression on cluster means (optionally weighted by N_g), or
/// unit-level regression (optionally weighted by 1/N_g) with the Liang–Zeger sandwich.
RegressionFit ols_cluster(const ExperimentTable& table, ClusterLevel level, ClusterWeights weights,
                          std::optional<VcovKind> kind = std::nullopt, bool df_adjust = false);

}  // namespace randix
