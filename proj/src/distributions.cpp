#include "randix/distributions.hpp"

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/students_t.hpp>
#include <cmath>

#include "randix/error.hpp"

namespace randix {

namespace bm = boost::math;

double normal_cdf(double x) { return bm::cdf(bm::normal_distribution<>(), x); }

double normal_quantile(double p) {
  require(p > 0.0 && p < 1.0, ErrorCode::OutOfRange, "normal quantile needs p in (0,1)");
  return bm::quantile(bm::normal_distribution<>(), p);
}

double two_sided_normal_p(double z) {
  if (std::isnan(z)) return 1.0;
  return 2.0 * bm::cdf(bm::complement(bm::normal_distribution<>(), std::fabs(z)));
}

double chi2_sf(double x, double dof) {
  if (dof <= 0.0) return 1.0;
  if (!(x > 0.0)) return 1.0;
  if (std::isinf(x)) return 0.0;
  return bm::cdf(bm::complement(bm::chi_squared_distribution<>(dof), x));
}

double chi2_quantile(double p, double dof) {
  require(dof > 0.0 && p > 0.0 && p < 1.0, ErrorCode::OutOfRange, "chi-square quantile arguments out of range");
  return bm::quantile(bm::chi_squared_distribution<>(dof), p);
}

double student_t_quantile(double p, double dof) {
  require(dof > 0.0 && p > 0.0 && p < 1.0, ErrorCode::OutOfRange, "t quantile arguments out of range");
  return bm::quantile(bm::students_t_distribution<>(dof), p);
}

double two_sided_t_p(double t, double dof) {
  if (std::isnan(t)) return 1.0;
  require(dof > 0.0, ErrorCode::OutOfRange, "t distribution needs positive degrees of freedom");
  return 2.0 * bm::cdf(bm::complement(bm::students_t_distribution<>(dof), std::fabs(t)));
}

ArmSummary summarize(std::span<const double> values) {
  ArmSummary s;
  s.n = values.size();
  if (s.n == 0) return s;
  double sum = 0.0;
  for (double v : values) sum += v;
  s.mean = sum / static_cast<double>(s.n);
  if (s.n > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - s.mean) * (v - s.mean);
    s.sample_var = ss / static_cast<double>(s.n - 1);
  }
  return s;
}

ArmSummary summarize_arm(std::span<const double> y, std::span<const std::uint8_t> z, std::uint8_t arm) {
  ArmSummary s;
  double sum = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (z[i] == arm) {
      sum += y[i];
      ++s.n;
    }
  }
  if (s.n == 0) return s;
  s.mean = sum / static_cast<double>(s.n);
  if (s.n > 1) {
    double ss = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
      if (z[i] == arm) ss += (y[i] - s.mean) * (y[i] - s.mean);
    }
    s.sample_var = ss / static_cast<double>(s.n - 1);
  }
  return s;
}

double mean(std::span<const double> values) {
  require(!values.empty(), ErrorCode::InsufficientUnits, "mean of an empty vector");
  double sum = 0.0;
  for (double v : values) sum += v;
  return sum / static_cast<double>(values.size());
}

}  // namespace randix
