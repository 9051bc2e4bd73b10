#pragma once

#include <cstddef>
#include <cstdint>
#include <span>

namespace randix {

double normal_cdf(double x);
double normal_quantile(double p);
/// 2·(1 − Φ(|z|)).
double two_sided_normal_p(double z);
/// Upper tail of the chi-square distribution; dof 0 gives 1.
double chi2_sf(double x, double dof);
double chi2_quantile(double p, double dof);
double student_t_quantile(double p, double dof);
double two_sided_t_p(double t, double dof);

/// Count, mean and n−1 sample variance of one arm.
struct ArmSummary {
  std::size_t n = 0;
  double mean = 0.0;
  double sample_var = 0.0;  // 0 when n < 2
};

ArmSummary summarize(std::span<const double> values);
/// Summary of the units with z_i == arm.
ArmSummary summarize_arm(std::span<const double> y, std::span<const std::uint8_t> z, std::uint8_t arm);

double mean(std::span<const double> values);

}  // namespace randix
