#include "randix/power.hpp"

#include <cmath>

#include "randix/distributions.hpp"
#include "randix/error.hpp"

namespace randix {

PowerResult required_sample_size(const PowerSpec& s) {
  require(s.alpha > 0.0 && s.alpha < 1.0, ErrorCode::InvalidArgument, "alpha must lie in (0,1)");
  require(s.beta > 0.0 && s.beta < 1.0, ErrorCode::InvalidArgument, "beta must lie in (0,1)");
  require(s.beta > s.alpha, ErrorCode::InvalidArgument, "target power must exceed the test size");
  require(s.tau != 0.0 && std::isfinite(s.tau), ErrorCode::InvalidArgument, "tau must be finite and non-zero");
  require(s.sigma > 0.0 && std::isfinite(s.sigma), ErrorCode::InvalidArgument, "sigma must be positive");
  require(s.gamma > 0.0 && s.gamma < 1.0, ErrorCode::InvalidArgument, "gamma must lie in (0,1)");

  const double q = normal_quantile(s.beta) + normal_quantile(1.0 - s.alpha / 2.0);
  const double ratio = s.tau / s.sigma;
  PowerResult r;
  r.unrounded = q * q / (ratio * ratio * s.gamma * (1.0 - s.gamma));
  r.n_total = static_cast<std::size_t>(std::floor(r.unrounded));
  // Guard against representation noise just under an integer.
  r.n_treated = static_cast<std::size_t>(std::ceil(r.unrounded * s.gamma - 1e-9));
  r.n_control = static_cast<std::size_t>(std::ceil(r.unrounded * (1.0 - s.gamma) - 1e-9));
  return r;
}

double stratification_gain(double mu_f0, double mu_f1, double mu_m0, double mu_m1, std::size_t n) {
  require(n > 0, ErrorCode::InvalidArgument, "stratification gain needs n > 0");
  const double d0 = mu_f0 - mu_m0;
  const double d1 = mu_f1 - mu_m1;
  return (d0 * d0 + d1 * d1) / (4.0 * static_cast<double>(n));
}

}  // namespace randix
