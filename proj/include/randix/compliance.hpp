#pragma once

#include <cstddef>

#include "randix/report.hpp"
#include "randix/table.hpp"

namespace randix {

/// Shares under monotonicity: π_a = P̂(W=1|Z=0), π_n = P̂(W=0|Z=1), π_c the rest.
struct ComplianceShares {
  double pi_c = 1.0;
  double pi_n = 0.0;
  double pi_a = 0.0;
  double p_z = 0.5;
  bool clipped = false;
  bool defier_signature = false;  // raw π_a + π_n > 1
};

/// Counts, means and sample variances of Y in the four (Z, W) cells.
struct CellMoments {
  std::size_t n[2][2] = {{0, 0}, {0, 0}};  // n[z][w]
  double mean[2][2] = {{0, 0}, {0, 0}};
  double var[2][2] = {{0, 0}, {0, 0}};
  std::size_t n_z[2] = {0, 0};
};

CellMoments cell_moments(const ExperimentTable& table);
ComplianceShares compliance_shares(const ExperimentTable& table);

AnalysisReport itt(const ExperimentTable& table, double level = 0.95);

struct LateOptions {
  double first_stage_floor = 1e-6;
  double level = 0.95;
};

/// Wald ratio ITT_Y / ITT_W with a delta-method se (arms independent).
AnalysisReport late(const ExperimentTable& table, const LateOptions& opts = {});

/// Tests E[Y(1)|a] = E[Y(1)|c] and E[Y(0)|n] = E[Y(0)|c]. estimate holds the
/// joint Wald statistic and p_normal its chi-square p-value.
AnalysisReport late_generalization_test(const ExperimentTable& table);

/// Worst-case imputation of the missing potential outcomes within [lo, hi],
/// grouping by receipt W. ci_lower/ci_upper hold the bounds.
AnalysisReport manski_bounds(const ExperimentTable& table, double lo = 0.0, double hi = 1.0);

/// Bounds under monotonicity and exclusion for a binary outcome; width π̂_a + π̂_n.
AnalysisReport balke_pearl_bounds(const ExperimentTable& table);

/// Naive comparisons by receipt, with the always-/never-taker contamination
/// terms that separate them from the LATE.
AnalysisReport as_treated(const ExperimentTable& table);
AnalysisReport per_protocol(const ExperimentTable& table);

}  // namespace randix
