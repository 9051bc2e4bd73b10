#pragma once

#include <cstddef>

namespace randix {

struct PowerSpec {
  double alpha = 0.05;
  double beta = 0.8;  // target power
  double tau = 0.0;
  double sigma = 1.0;
  double gamma = 0.5;  // treated share
};

struct PowerResult {
  double unrounded = 0.0;
  std::size_t n_total = 0;
  std::size_t n_treated = 0;
  std::size_t n_control = 0;
};

/// N = (Φ⁻¹(β) + Φ⁻¹(1−α/2))² / ((τ/σ)² γ(1−γ)).
/// n_total is the integer part of N; each arm is rounded up on its own share.
PowerResult required_sample_size(const PowerSpec& spec);

/// Variance reduction from stratifying on a binary characteristic with equal
/// stratum sizes: (1/(4N))((μ_f0−μ_m0)² + (μ_f1−μ_m1)²).
double stratification_gain(double mu_f0, double mu_f1, double mu_m0, double mu_m1, std::size_t n);

}  // namespace randix
