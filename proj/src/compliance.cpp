#include "randix/compliance.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <array>
#include <cmath>

#include "randix/distributions.hpp"
#include "randix/error.hpp"
#include "randix/neyman.hpp"

namespace randix {

CellMoments cell_moments(const ExperimentTable& table) {
  CellMoments m;
  const auto y = table.outcome();
  const auto z = table.z();
  const auto w = table.w();
  double sum[2][2] = {{0, 0}, {0, 0}};
  for (std::size_t i = 0; i < y.size(); ++i) {
    ++m.n[z[i]][w[i]];
    sum[z[i]][w[i]] += y[i];
  }
  for (int a = 0; a < 2; ++a) {
    m.n_z[a] = m.n[a][0] + m.n[a][1];
    for (int b = 0; b < 2; ++b) {
      if (m.n[a][b]) m.mean[a][b] = sum[a][b] / static_cast<double>(m.n[a][b]);
    }
  }
  double ss[2][2] = {{0, 0}, {0, 0}};
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double d = y[i] - m.mean[z[i]][w[i]];
    ss[z[i]][w[i]] += d * d;
  }
  for (int a = 0; a < 2; ++a) {
    for (int b = 0; b < 2; ++b) {
      if (m.n[a][b] > 1) m.var[a][b] = ss[a][b] / static_cast<double>(m.n[a][b] - 1);
    }
  }
  return m;
}

ComplianceShares compliance_shares(const ExperimentTable& table) {
  const auto m = cell_moments(table);
  require(m.n_z[0] > 0 && m.n_z[1] > 0, ErrorCode::InsufficientUnits, "both assignment arms must be non-empty");
  ComplianceShares s;
  double pa = static_cast<double>(m.n[0][1]) / static_cast<double>(m.n_z[0]);
  double pn = static_cast<double>(m.n[1][0]) / static_cast<double>(m.n_z[1]);
  s.defier_signature = pa + pn > 1.0;
  double pc = 1.0 - pa - pn;
  if (pc < 0.0) {
    // Defier-heavy data: shrink the raw shares so the three still sum to 1.
    const double total = pa + pn;
    pa /= total;
    pn /= total;
    pc = 0.0;
    s.clipped = true;
  }
  s.pi_a = std::clamp(pa, 0.0, 1.0);
  s.pi_n = std::clamp(pn, 0.0, 1.0);
  s.pi_c = 1.0 - s.pi_a - s.pi_n;
  s.p_z = static_cast<double>(m.n_z[1]) / static_cast<double>(table.n_units());
  return s;
}

namespace {

void add_shares(AnalysisReport& r, const ComplianceShares& s) {
  r.set("pi_c", s.pi_c);
  r.set("pi_n", s.pi_n);
  r.set("pi_a", s.pi_a);
  r.set("p_z", s.p_z);
  if (s.clipped) r.note("compliance shares clipped to [0,1]");
  if (s.defier_signature) r.note("monotonicity warning: P(W=1|Z=0) + P(W=0|Z=1) > 1");
}

double cov_arm(std::span<const double> a, std::span<const double> b, std::span<const std::uint8_t> z,
               std::uint8_t arm) {
  double ma = 0.0, mb = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (z[i] != arm) continue;
    ma += a[i];
    mb += b[i];
    ++n;
  }
  if (n < 2) return 0.0;
  ma /= static_cast<double>(n);
  mb /= static_cast<double>(n);
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (z[i] == arm) s += (a[i] - ma) * (b[i] - mb);
  }
  return s / static_cast<double>(n - 1);
}

}  // namespace

AnalysisReport itt(const ExperimentTable& table, double level) {
  NeymanOptions o;
  o.level = level;
  auto r = ate_complete(table, o);
  r.method = "itt";
  return r;
}

AnalysisReport late(const ExperimentTable& table, const LateOptions& opts) {
  const auto y = table.outcome();
  const auto z = table.z();
  std::vector<double> w(table.w().begin(), table.w().end());
  const auto y1 = summarize_arm(y, z, 1), y0 = summarize_arm(y, z, 0);
  const auto w1 = summarize_arm(w, z, 1), w0 = summarize_arm(w, z, 0);
  require(y1.n >= 2 && y0.n >= 2, ErrorCode::InsufficientUnits, "LATE needs at least 2 units per assignment arm");
  const double a = y1.mean - y0.mean;
  const double b = w1.mean - w0.mean;
  require(std::fabs(b) >= opts.first_stage_floor, ErrorCode::WeakFirstStage,
          "first stage " + format_number(b) + " is below the floor " + format_number(opts.first_stage_floor));
  const double tau = a / b;
  const double n1 = static_cast<double>(y1.n), n0 = static_cast<double>(y0.n);
  const double va = y1.sample_var / n1 + y0.sample_var / n0;
  const double vb = w1.sample_var / n1 + w0.sample_var / n0;
  const double cab = cov_arm(y, w, z, 1) / n1 + cov_arm(y, w, z, 0) / n0;
  const double v = (va - 2.0 * tau * cab + tau * tau * vb) / (b * b);

  AnalysisReport r;
  r.method = "late wald";
  r.estimate = tau;
  r.std_error = std::sqrt(std::max(0.0, v));
  r.n_treated = y1.n;
  r.n_control = y0.n;
  r.set("itt_y", a);
  r.set("first_stage", b);
  r.set("se_itt_y", std::sqrt(va));
  r.set("se_first_stage", std::sqrt(vb));
  add_shares(r, compliance_shares(table));
  r.normal_inference(opts.level);
  return r;
}

AnalysisReport late_generalization_test(const ExperimentTable& table) {
  const auto m = cell_moments(table);
  require(m.n_z[0] >= 2 && m.n_z[1] >= 2, ErrorCode::InsufficientUnits,
          "generalization test needs at least 2 units per assignment arm");
  const double n1 = static_cast<double>(m.n_z[1]), n0 = static_cast<double>(m.n_z[0]);
  // theta = (p11, m11, m10, p01, m01, m00), p_zw = P(W=1 | Z=z)
  std::array<double, 6> theta{static_cast<double>(m.n[1][1]) / n1, m.mean[1][1], m.mean[1][0],
                              static_cast<double>(m.n[0][1]) / n0, m.mean[0][1], m.mean[0][0]};
  const double pc = theta[0] - theta[3];
  require(pc > 0.0, ErrorCode::WeakFirstStage, "no compliers: P(W=1|Z=1) - P(W=1|Z=0) = " + format_number(pc));

  auto diffs = [](const std::array<double, 6>& t) {
    const double p11 = t[0], m11 = t[1], m10 = t[2], p01 = t[3], m01 = t[4], m00 = t[5];
    const double c = p11 - p01;
    const double y1c = (m11 * p11 - p01 * m01) / c;
    const double y0c = (m00 * (1.0 - p01) - (1.0 - p11) * m10) / c;
    return std::array<double, 2>{m01 - y1c, m10 - y0c};
  };
  auto cell_var = [&](int z, int w) {
    return m.n[z][w] >= 2 ? m.var[z][w] / static_cast<double>(m.n[z][w]) : 0.0;
  };
  const std::array<double, 6> var{theta[0] * (1 - theta[0]) / n1, cell_var(1, 1), cell_var(1, 0),
                                  theta[3] * (1 - theta[3]) / n0, cell_var(0, 1), cell_var(0, 0)};

  // Central-difference Jacobian of the two contrasts.
  Eigen::Matrix<double, 2, 6> jac;
  for (int k = 0; k < 6; ++k) {
    const double h = 1e-6 * std::max(1.0, std::fabs(theta[static_cast<std::size_t>(k)]));
    auto up = theta, dn = theta;
    up[static_cast<std::size_t>(k)] += h;
    dn[static_cast<std::size_t>(k)] -= h;
    const auto fu = diffs(up), fd = diffs(dn);
    jac(0, k) = (fu[0] - fd[0]) / (2 * h);
    jac(1, k) = (fu[1] - fd[1]) / (2 * h);
  }
  Eigen::Matrix<double, 6, 6> sigma = Eigen::Matrix<double, 6, 6>::Zero();
  for (int k = 0; k < 6; ++k) sigma(k, k) = var[static_cast<std::size_t>(k)];
  const Eigen::Matrix2d cov = jac * sigma * jac.transpose();
  const auto d = diffs(theta);

  // Always-takers live in (Z=0,W=1); never-takers in (Z=1,W=0).
  const bool testable[2] = {m.n[0][1] >= 2 && m.n[1][1] >= 1, m.n[1][0] >= 2 && m.n[0][0] >= 1};
  std::vector<int> idx;
  for (int k = 0; k < 2; ++k) {
    if (testable[k]) idx.push_back(k);
  }

  AnalysisReport r;
  r.method = "late generalization test";
  r.n_treated = m.n_z[1];
  r.n_control = m.n_z[0];
  const char* labels[2] = {"always_vs_complier_y1", "never_vs_complier_y0"};
  for (int k = 0; k < 2; ++k) {
    r.set(std::string("testable_") + labels[k], testable[k] ? 1.0 : 0.0);
    if (!testable[k]) {
      r.note(std::string(labels[k]) + ": not testable (identifying cell empty)");
      continue;
    }
    r.set(std::string("diff_") + labels[k], d[static_cast<std::size_t>(k)]);
    r.set(std::string("se_") + labels[k], std::sqrt(std::max(0.0, cov(k, k))));
  }
  double stat = 0.0;
  if (!idx.empty()) {
    const auto q = static_cast<Eigen::Index>(idx.size());
    Eigen::MatrixXd v(q, q);
    Eigen::VectorXd g(q);
    for (Eigen::Index i = 0; i < q; ++i) {
      g[i] = d[static_cast<std::size_t>(idx[static_cast<std::size_t>(i)])];
      for (Eigen::Index j = 0; j < q; ++j) v(i, j) = cov(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(j)]);
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(v);
    const double top = eig.eigenvalues().cwiseAbs().maxCoeff();
    for (Eigen::Index i = 0; i < q; ++i) {
      const double ev = eig.eigenvalues()[i];
      const double proj = eig.eigenvectors().col(i).dot(g);
      if (ev > 1e-12 * std::max(top, 1e-300)) {
        stat += proj * proj / ev;
      } else if (std::fabs(proj) > 1e-12) {
        stat = std::numeric_limits<double>::infinity();
        r.note("contrast with zero estimated variance");
      }
    }
  }
  r.estimate = stat;
  r.p_normal = idx.empty() ? 1.0 : chi2_sf(stat, static_cast<double>(idx.size()));
  r.set("dof", static_cast<double>(idx.size()));
  add_shares(r, compliance_shares(table));
  return r;
}

AnalysisReport manski_bounds(const ExperimentTable& table, double lo, double hi) {
  require(lo <= hi, ErrorCode::InvalidArgument, "outcome range needs lo <= hi");
  const auto y = table.outcome();
  for (std::size_t i = 0; i < y.size(); ++i) {
    require(y[i] >= lo && y[i] <= hi, ErrorCode::OutOfRange,
            "outcome " + format_number(y[i]) + " at row " + std::to_string(i + 1) + " lies outside [" + format_number(lo) +
                ", " + format_number(hi) + "]");
  }
  const auto t = summarize_arm(y, table.w(), 1);
  const auto c = summarize_arm(y, table.w(), 0);
  require(t.n > 0 && c.n > 0, ErrorCode::InsufficientUnits, "both receipt groups must be non-empty");
  const double n = static_cast<double>(y.size());
  const double st = static_cast<double>(t.n) / n, sc = static_cast<double>(c.n) / n;
  // Missing Y(1) for W=0 units and Y(0) for W=1 units imputed at lo or hi.
  const double y1_lo = st * t.mean + sc * lo, y1_hi = st * t.mean + sc * hi;
  const double y0_lo = sc * c.mean + st * lo, y0_hi = sc * c.mean + st * hi;
  AnalysisReport r;
  r.method = "manski bounds";
  r.ci_lower = y1_lo - y0_hi;
  r.ci_upper = y1_hi - y0_lo;
  r.estimate = 0.5 * (*r.ci_lower + *r.ci_upper);
  r.n_treated = t.n;
  r.n_control = c.n;
  r.set("width", *r.ci_upper - *r.ci_lower);
  r.set("y1_lower", y1_lo);
  r.set("y1_upper", y1_hi);
  r.set("y0_lower", y0_lo);
  r.set("y0_upper", y0_hi);
  r.note("estimate is the interval midpoint");
  return r;
}

AnalysisReport balke_pearl_bounds(const ExperimentTable& table) {
  for (double v : table.outcome()) {
    require(v == 0.0 || v == 1.0, ErrorCode::NonBinary, "Balke-Pearl bounds need a binary outcome");
  }
  const auto m = cell_moments(table);
  const auto s = compliance_shares(table);
  const double itt_y = (static_cast<double>(m.n[1][1]) * m.mean[1][1] + static_cast<double>(m.n[1][0]) * m.mean[1][0]) /
                           static_cast<double>(m.n_z[1]) -
                       (static_cast<double>(m.n[0][1]) * m.mean[0][1] + static_cast<double>(m.n[0][0]) * m.mean[0][0]) /
                           static_cast<double>(m.n_z[0]);
  // τ = π_c τ_c + π_a τ_a + π_n τ_n with π_c τ_c = ITT_Y,
  // τ_a ∈ [m01 − 1, m01] and τ_n ∈ [−m10, 1 − m10].
  const double m01 = m.mean[0][1], m10 = m.mean[1][0];
  AnalysisReport r;
  r.method = "balke-pearl bounds";
  r.ci_lower = itt_y + s.pi_a * (m01 - 1.0) - s.pi_n * m10;
  r.ci_upper = itt_y + s.pi_a * m01 + s.pi_n * (1.0 - m10);
  r.estimate = 0.5 * (*r.ci_lower + *r.ci_upper);
  r.n_treated = m.n_z[1];
  r.n_control = m.n_z[0];
  r.set("width", *r.ci_upper - *r.ci_lower);
  r.set("itt_y", itt_y);
  add_shares(r, s);
  if (s.pi_c > 0.0) {
    const double y1c = (m.mean[1][1] * (s.pi_c + s.pi_a) - s.pi_a * m01) / s.pi_c;
    const double y0c = (m.mean[0][0] * (s.pi_c + s.pi_n) - s.pi_n * m10) / s.pi_c;
    const double eps = 1e-12;
    if (y1c < -eps || y1c > 1 + eps || y0c < -eps || y0c > 1 + eps) {
      r.set("inconsistent_cells", 1.0);
      r.note("implied complier means fall outside [0,1]; observed cells are inconsistent with monotonicity and exclusion");
    }
  }
  r.note("estimate is the interval midpoint");
  return r;
}

namespace {

struct Decomposition {
  double late, w_a, w_n, bias_a, bias_n;
};

Decomposition decompose(const CellMoments& m, const ComplianceShares& s, bool as_treated) {
  require(s.pi_c > 0.0, ErrorCode::WeakFirstStage, "no compliers; the decomposition needs pi_c > 0");
  const double y1c = (m.mean[1][1] * (s.pi_c + s.pi_a) - s.pi_a * m.mean[0][1]) / s.pi_c;
  const double y0c = (m.mean[0][0] * (s.pi_c + s.pi_n) - s.pi_n * m.mean[1][0]) / s.pi_c;
  Decomposition d{};
  d.late = y1c - y0c;
  d.w_a = s.pi_a > 0 ? s.pi_a / (s.pi_a + s.pi_c * (as_treated ? s.p_z : 1.0)) : 0.0;
  d.w_n = s.pi_n > 0 ? s.pi_n / (s.pi_n + s.pi_c * (as_treated ? 1.0 - s.p_z : 1.0)) : 0.0;
  d.bias_a = s.pi_a > 0 ? d.w_a * (m.mean[0][1] - y1c) : 0.0;
  d.bias_n = s.pi_n > 0 ? -d.w_n * (m.mean[1][0] - y0c) : 0.0;
  return d;
}

void add_decomposition(AnalysisReport& r, const Decomposition& d) {
  r.set("late", d.late);
  r.set("weight_always", d.w_a);
  r.set("weight_never", d.w_n);
  r.set("bias_always", d.bias_a);
  r.set("bias_never", d.bias_n);
  r.set("bias_total", d.bias_a + d.bias_n);
  r.note("not randomization-justified: compares groups defined by receipt");
}

}  // namespace

AnalysisReport as_treated(const ExperimentTable& table) {
  const auto t = summarize_arm(table.outcome(), table.w(), 1);
  const auto c = summarize_arm(table.outcome(), table.w(), 0);
  require(t.n > 0 && c.n > 0, ErrorCode::InsufficientUnits, "as-treated comparison needs both receipt groups");
  AnalysisReport r;
  r.method = "as-treated";
  r.estimate = t.mean - c.mean;
  r.n_treated = t.n;
  r.n_control = c.n;
  const auto s = compliance_shares(table);
  add_shares(r, s);
  add_decomposition(r, decompose(cell_moments(table), s, true));
  return r;
}

AnalysisReport per_protocol(const ExperimentTable& table) {
  const auto m = cell_moments(table);
  require(m.n[1][1] > 0 && m.n[0][0] > 0, ErrorCode::InsufficientUnits,
          "per-protocol comparison needs compliant units in both arms");
  AnalysisReport r;
  r.method = "per-protocol";
  r.estimate = m.mean[1][1] - m.mean[0][0];
  r.n_treated = m.n[1][1];
  r.n_control = m.n[0][0];
  const auto s = compliance_shares(table);
  add_shares(r, s);
  add_decomposition(r, decompose(m, s, false));
  return r;
}

}  // namespace randix
