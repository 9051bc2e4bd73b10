#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "randix/design.hpp"
#include "randix/parallel.hpp"
#include "randix/quantile.hpp"
#include "randix/report.hpp"
#include "randix/table.hpp"

namespace randix {

struct Statistic {
  enum class Kind { DiffMeans, DiffMeanRanks, QuantileDiff, Omnibus };
  Kind kind = Kind::DiffMeans;
  double level = 0.5;  // QuantileDiff only
  QuantileRule rule = QuantileRule::LowerInf;

  static Statistic diff_means() { return {}; }
  static Statistic diff_mean_ranks() { return {Kind::DiffMeanRanks}; }
  static Statistic quantile_diff(double s, QuantileRule rule = QuantileRule::LowerInf);
  static Statistic omnibus() { return {Kind::Omnibus}; }

  std::string name() const;
};

/// mean | rank | quantile:s | omnibus
Statistic parse_statistic(const std::string& text, QuantileRule rule = QuantileRule::LowerInf);

struct SharpNull {
  double constant_effect = 0.0;  // Y_i(1) = Y_i(0) + c for every unit
};

struct RandomizationOptions {
  std::uint64_t draws = 100000;
  std::uint64_t seed = 0;
  std::uint64_t enumeration_cap = kDefaultEnumerationCap;
  bool force_monte_carlo = false;
  Exec exec;
};

/// Zero-mean midranks.
std::vector<double> rank_transform(std::span<const double> y);

/// Statistic on a single outcome vector (not Omnibus).
double statistic_value(const Statistic& stat, std::span<const double> y, std::span<const std::uint8_t> z);

/// Two-sided p = P(|T| >= |T_obs|) over the design. Enumerates when the
/// support fits under the cap, else Monte Carlo with (count+1)/(draws+1).
AnalysisReport exact_p_value(const ExperimentTable& table, const Design& design, const Statistic& stat,
                             const SharpNull& null, const RandomizationOptions& opts);

/// Several statistics on the same reference draws.
std::vector<AnalysisReport> exact_p_values(const ExperimentTable& table, const Design& design,
                                           std::span<const Statistic> stats, const SharpNull& null,
                                           const RandomizationOptions& opts);

struct InvertedInterval {
  double lower = 0.0;
  double upper = 0.0;
  bool empty = false;
  bool truncated_low = false;
  bool truncated_high = false;
  AnalysisReport report;
};

/// Constant effects c whose test is not rejected at 1 − level, as a bounding
/// interval. Grid points are scanned, then each edge is refined by bisection.
InvertedInterval invert_test_ci(const ExperimentTable& table, const Design& design, const Statistic& stat,
                                double level, double grid_lo, double grid_hi, std::size_t grid_points,
                                const RandomizationOptions& opts, int refine_steps = 12);

struct OmnibusResult {
  AnalysisReport omnibus;
  std::vector<AnalysisReport> per_outcome;  // diagnostics carry p_bonferroni
};

/// Quadratic form d' S⁺ d · N_t N_c / N in the vector of mean differences,
/// with S the full-sample covariance of the outcomes (fixed across draws).
OmnibusResult omnibus_multiple_outcomes(const ExperimentTable& table, const Design& design,
                                        const std::vector<std::string>& outcomes, const RandomizationOptions& opts);

}  // namespace randix
