#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "randix/parallel.hpp"
#include "randix/report.hpp"
#include "randix/table.hpp"

namespace randix {

/// Y* = Y (W − p) / (p (1 − p)); p defaults to N_t/N.
std::vector<double> transform_outcome(const ExperimentTable& table, std::optional<double> p = std::nullopt);

/// h(x) specification: "constant", "indicators:a,b", "linear:a,b" or "spline:a,b".
/// indicators: level dummies for categorical columns, 0/1 columns as is, other
/// numeric columns split at the median. spline: linear plus hinges at the quartiles.
struct BasisSpec {
  enum class Kind { Constant, Indicators, Linear, Spline };
  Kind kind = Kind::Constant;
  std::vector<std::string> covariates;

  static BasisSpec parse(const std::string& text);
  std::string describe() const;
};

struct Basis {
  std::vector<std::string> names;  // names[0] is the constant
  std::vector<std::vector<double>> columns;
};

Basis expand_basis(const ExperimentTable& table, const BasisSpec& spec);

struct HeterogeneityTest {
  std::string basis;
  double wald_stat = 0.0;
  std::size_t dof = 0;
  double p_value = 1.0;
  std::vector<std::string> terms;  // tested interaction terms

  AnalysisReport report() const;
};

/// Regresses Y on [h(x), W·h(x)] and Wald-tests the W·h slopes (constant
/// excluded) with the EHW covariance.
HeterogeneityTest test_heterogeneity(const ExperimentTable& table, const BasisSpec& spec);

enum class SplitCriterion {
  // Y*-SSE reduction minus (1 + n_tr/n_est)(s²_L + s²_R − s²_P) on Y*.
  TransformedOutcome,
  // Σ n_ℓ τ̂_ℓ² minus (1 + n_tr/n_est) Σ n_ℓ V̂_ℓ on the train half.
  Emse,
};

struct TreeOptions {
  std::size_t min_leaf = 5;  // per arm, in both halves
  std::size_t max_depth = 4;
  std::uint64_t seed = 0;
  double split_alpha = 0.05;  // Bonferroni-adjusted over candidate splits
  SplitCriterion criterion = SplitCriterion::TransformedOutcome;
  std::vector<std::string> covariates;  // empty: all
  Exec exec;
};

struct TreeNode {
  bool leaf = true;
  int covariate = -1;
  double threshold = 0.0;         // numeric: x <= threshold goes left
  std::vector<int> left_levels;   // categorical codes going left
  int left = -1;
  int right = -1;
  int parent = -1;
  std::size_t depth = 0;
  double gain = 0.0;
  // Estimation-half results.
  double tau_hat = 0.0;
  double se = 0.0;
  std::size_t n_t = 0;
  std::size_t n_c = 0;
};

struct CausalTree {
  std::vector<TreeNode> nodes;  // nodes[0] is the root
  std::vector<std::string> covariate_names;
  std::vector<bool> categorical;
  std::vector<std::vector<std::string>> levels;
  std::vector<std::size_t> train;
  std::vector<std::size_t> estimate;
  std::size_t min_leaf = 0;

  /// Node index of the leaf holding the row.
  int leaf_of(const ExperimentTable& table, std::size_t row) const;
  std::size_t n_leaves() const;
  std::string describe_split(const TreeNode& node) const;
  std::string to_text() const;
};

/// Honest tree: split 50/50 within arms, grow on the train half, estimate leaves
/// with the Neyman estimator on the estimation half.
CausalTree grow_honest_tree(const ExperimentTable& table, const TreeOptions& opts);

/// Seeded 50/50 split within each arm; both halves sorted.
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> honest_split(std::span<const std::uint8_t> z,
                                                                            std::uint64_t seed);

struct TreeStrata {
  std::vector<std::size_t> rows;  // estimation-half rows
  Categorical labels;
  AnalysisReport report;
};

/// Leaf labels on the estimation half and the stratified estimate over leaves.
/// Leaves without 2 treated and 2 control units are merged into their parent.
TreeStrata tree_to_strata(const CausalTree& tree, const ExperimentTable& table);

}  // namespace randix
