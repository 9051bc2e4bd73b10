#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "randix/design.hpp"
#include "randix/parallel.hpp"
#include "randix/report.hpp"
#include "randix/table.hpp"

namespace randix {

/// LowerInf: inf{y : F(y) >= s}, i.e. the ceil(n·s)-th order statistic.
/// UpperOrder: the order statistic at 0-based index ceil((n−1)·s).
enum class QuantileRule { LowerInf, UpperOrder };

QuantileRule parse_quantile_rule(const std::string& text);
const char* to_string(QuantileRule rule);

/// 0-based order-statistic index selected by the rule for a sample of size n.
std::size_t quantile_index(std::size_t n, double s, QuantileRule rule);

double empirical_quantile(std::span<const double> values, double s, QuantileRule rule = QuantileRule::LowerInf);
/// Same, on already sorted input.
double sorted_quantile(std::span<const double> sorted, double s, QuantileRule rule = QuantileRule::LowerInf);

struct QuantileSpec {
  std::vector<double> levels{0.1, 0.25, 0.5, 0.75, 0.9};
  std::size_t bootstrap_reps = 2000;
  std::uint64_t seed = 0;
  QuantileRule rule = QuantileRule::LowerInf;
  std::uint64_t draws = 100000;  // randomization draws for p_exact
  bool exact_p = true;
  Exec exec;
};

/// One report per level: estimate = q_t(s) − q_c(s), std_error = within-arm
/// bootstrap sd, p_exact from the randomization test with the quantile statistic.
std::vector<AnalysisReport> qte(const ExperimentTable& table, const QuantileSpec& spec, const Design& design);

/// Replicate matrix [rep][level] of bootstrap QTEs (serial or parallel).
std::vector<std::vector<double>> bootstrap_qte(std::span<const double> treated, std::span<const double> control,
                                               const QuantileSpec& spec);

}  // namespace randix
