#include "randix/fisher.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>

#include "randix/error.hpp"
#include "randix/rng.hpp"

namespace randix {

Statistic Statistic::quantile_diff(double s, QuantileRule rule) {
  require(s > 0.0 && s < 1.0, ErrorCode::OutOfRange, "quantile level must lie in (0,1)");
  Statistic st;
  st.kind = Kind::QuantileDiff;
  st.level = s;
  st.rule = rule;
  return st;
}

std::string Statistic::name() const {
  switch (kind) {
    case Kind::DiffMeans: return "diff_means";
    case Kind::DiffMeanRanks: return "diff_mean_ranks";
    case Kind::QuantileDiff: return "quantile_diff(" + format_number(level) + ")";
    case Kind::Omnibus: return "omnibus";
  }
  return "unknown";
}

Statistic parse_statistic(const std::string& text, QuantileRule rule) {
  if (text == "mean") return Statistic::diff_means();
  if (text == "rank") return Statistic::diff_mean_ranks();
  if (text == "omnibus") return Statistic::omnibus();
  if (text.rfind("quantile:", 0) == 0) {
    double s = 0.0;
    try {
      s = std::stod(text.substr(9));
    } catch (const std::exception&) {
      fail(ErrorCode::InvalidArgument, "bad quantile level in '" + text + "'");
    }
    return Statistic::quantile_diff(s, rule);
  }
  fail(ErrorCode::InvalidArgument, "unknown statistic '" + text + "' (expected mean, rank, quantile:s or omnibus)");
}

std::vector<double> rank_transform(std::span<const double> y) {
  require(!y.empty(), ErrorCode::InsufficientUnits, "rank transform of an empty vector");
  const std::size_t n = y.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return y[a] < y[b]; });
  std::vector<double> r(n);
  const double shift = (static_cast<double>(n) + 1.0) / 2.0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && y[order[j]] == y[order[i]]) ++j;
    // i units strictly below, (j - i) tied including itself
    const double rank = static_cast<double>(i) + 0.5 * (1.0 + static_cast<double>(j - i)) - shift;
    for (std::size_t k = i; k < j; ++k) r[order[k]] = rank;
    i = j;
  }
  return r;
}

namespace {

struct Scratch {
  std::vector<double> a;
  std::vector<double> b;
  Eigen::VectorXd d;
};

double diff_means(std::span<const double> y, std::span<const std::uint8_t> z) {
  double st = 0.0, sc = 0.0;
  std::size_t nt = 0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (z[i]) {
      st += y[i];
      ++nt;
    } else {
      sc += y[i];
    }
  }
  const std::size_t nc = y.size() - nt;
  require(nt > 0 && nc > 0, ErrorCode::InsufficientUnits, "an arm is empty");
  return st / static_cast<double>(nt) - sc / static_cast<double>(nc);
}

double quantile_diff(std::span<const double> y, std::span<const std::uint8_t> z, double s, QuantileRule rule,
                     Scratch& ws) {
  ws.a.clear();
  ws.b.clear();
  for (std::size_t i = 0; i < y.size(); ++i) (z[i] ? ws.a : ws.b).push_back(y[i]);
  require(!ws.a.empty() && !ws.b.empty(), ErrorCode::InsufficientUnits, "an arm is empty");
  auto pick = [&](std::vector<double>& v) {
    const auto k = quantile_index(v.size(), s, rule);
    std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(k), v.end());
    return v[k];
  };
  return pick(ws.a) - pick(ws.b);
}

// A statistic with its null-adjusted inputs fixed up front.
struct Prepared {
  Statistic stat;
  std::vector<double> y;               // single-outcome kinds
  std::vector<std::vector<double>> ys;  // omnibus columns
  Eigen::MatrixXd s_pinv;
  bool singular = false;
  double scale = 0.0;  // magnitude used for the tie tolerance

  double operator()(std::span<const std::uint8_t> z, Scratch& ws) const {
    switch (stat.kind) {
      case Statistic::Kind::DiffMeans:
      case Statistic::Kind::DiffMeanRanks:
        return diff_means(y, z);
      case Statistic::Kind::QuantileDiff:
        return quantile_diff(y, z, stat.level, stat.rule, ws);
      case Statistic::Kind::Omnibus: {
        const auto k = ys.size();
        ws.d.resize(static_cast<Eigen::Index>(k));
        for (std::size_t j = 0; j < k; ++j) ws.d[static_cast<Eigen::Index>(j)] = diff_means(ys[j], z);
        const double n = static_cast<double>(z.size());
        const double nt = static_cast<double>(std::count(z.begin(), z.end(), std::uint8_t{1}));
        return ws.d.dot(s_pinv * ws.d) * nt * (n - nt) / n;
      }
    }
    return 0.0;
  }
};

double max_abs(std::span<const double> v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::fabs(x));
  return m;
}

std::vector<double> null_adjusted(std::span<const double> y, std::span<const std::uint8_t> z, double c) {
  // Y_i(0) implied by the sharp null; the statistic is recomputed on these.
  std::vector<double> out(y.begin(), y.end());
  if (c != 0.0) {
    for (std::size_t i = 0; i < out.size(); ++i) out[i] -= c * z[i];
  }
  return out;
}

Prepared prepare(const Statistic& stat, std::span<const double> y, std::span<const std::uint8_t> z, double c) {
  Prepared p;
  p.stat = stat;
  p.y = null_adjusted(y, z, c);
  if (stat.kind == Statistic::Kind::DiffMeanRanks) {
    p.y = rank_transform(p.y);
  }
  p.scale = max_abs(p.y);
  return p;
}

Prepared prepare_omnibus(const std::vector<std::span<const double>>& cols, std::span<const std::uint8_t> z,
                         double c) {
  Prepared p;
  p.stat = Statistic::omnibus();
  const auto k = cols.size();
  const auto n = z.size();
  Eigen::MatrixXd m(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(k));
  for (std::size_t j = 0; j < k; ++j) {
    p.ys.push_back(null_adjusted(cols[j], z, c));
    for (std::size_t i = 0; i < n; ++i) m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = p.ys[j][i];
  }
  const Eigen::MatrixXd centered = m.rowwise() - m.colwise().mean();
  const Eigen::MatrixXd s = centered.transpose() * centered / static_cast<double>(n - 1);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(s);
  const auto& ev = eig.eigenvalues();
  const double top = ev.cwiseAbs().maxCoeff();
  const double tol = top * 1e-10 * static_cast<double>(k);
  Eigen::VectorXd inv(ev.size());
  for (Eigen::Index i = 0; i < ev.size(); ++i) {
    if (ev[i] > tol) {
      inv[i] = 1.0 / ev[i];
    } else {
      inv[i] = 0.0;
      p.singular = true;
    }
  }
  p.s_pinv = eig.eigenvectors() * inv.asDiagonal() * eig.eigenvectors().transpose();
  p.scale = 1.0;
  return p;
}

struct EngineResult {
  std::vector<double> observed;
  std::vector<std::uint64_t> count;
  std::vector<bool> degenerate;
  std::uint64_t total = 0;
  bool exact = false;
  std::optional<std::uint64_t> support;
};

bool at_least(double t, double t_obs, double scale) {
  // Two-sided with >= at ties; the slack absorbs summation-order rounding.
  const double tol = 1e-11 * (scale + std::fabs(t_obs));
  return std::fabs(t) >= std::fabs(t_obs) - tol;
}

EngineResult run_engine(const Design& design, std::span<const std::uint8_t> z_obs, const std::vector<Prepared>& stats,
                        const RandomizationOptions& opts) {
  require(design.n_units() == z_obs.size(), ErrorCode::LengthMismatch,
          "design covers " + std::to_string(design.n_units()) + " units, table has " + std::to_string(z_obs.size()));
  require(design.contains(z_obs), ErrorCode::InvalidArgument, "observed assignment is not in the support of the " +
                                                                  design.name() + " design");
  const std::size_t k = stats.size();
  EngineResult r;
  {
    Scratch ws;
    for (const auto& s : stats) r.observed.push_back(s(z_obs, ws));
  }

  std::optional<SupportIndexer> indexer;
  if (!opts.force_monte_carlo) {
    try {
      indexer.emplace(design, opts.enumeration_cap);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::SupportTooLarge) throw;
    }
  }
  r.exact = indexer.has_value();
  if (r.exact) r.support = indexer->size();
  const std::uint64_t n = r.exact ? indexer->size() : opts.draws;
  require(n > 0, ErrorCode::InvalidArgument, "need at least one randomization draw");

  std::vector<double> slots(n * k);
  struct Workspace {
    Sampler sampler;
    Assignment z;
    Scratch scratch;
  };
  kernels::for_each_draw(
      n, opts.exec, [&] { return Workspace{Sampler(design), {}, {}}; },
      [&](std::size_t d, Workspace& ws) {
        if (r.exact) {
          indexer->at(d, ws.z);
        } else {
          Stream rng(opts.seed, streams::assignment, d);
          ws.sampler.draw(rng, ws.z);
        }
        for (std::size_t j = 0; j < k; ++j) slots[d * k + j] = stats[j](ws.z, ws.scratch);
      });

  r.total = n;
  r.count.assign(k, 0);
  r.degenerate.assign(k, true);
  for (std::size_t j = 0; j < k; ++j) {
    const double first = slots[j];
    const double tol = 1e-11 * (stats[j].scale + std::fabs(first));
    for (std::uint64_t d = 0; d < n; ++d) {
      const double t = slots[d * k + j];
      if (at_least(t, r.observed[j], stats[j].scale)) ++r.count[j];
      if (std::fabs(t - first) > tol) r.degenerate[j] = false;
    }
  }
  return r;
}

AnalysisReport to_report(const EngineResult& r, std::size_t j, const Statistic& stat, const ExperimentTable& table,
                         const RandomizationOptions& opts, double c) {
  AnalysisReport rep;
  rep.estimate = r.observed[j];
  rep.n_treated = table.n_treated();
  rep.n_control = table.n_control();
  if (r.degenerate[j]) {
    rep.p_exact = 1.0;
    rep.note("degenerate statistic: constant over the reference set");
  } else if (r.exact) {
    rep.p_exact = static_cast<double>(r.count[j]) / static_cast<double>(r.total);
  } else {
    rep.p_exact = static_cast<double>(r.count[j] + 1) / static_cast<double>(r.total + 1);
  }
  rep.method = std::string("fisher ") + (r.exact ? "enumeration " : "monte-carlo ") + stat.name();
  if (!r.exact) {
    rep.seed = opts.seed;
    rep.draws = r.total;
  }
  if (r.support) rep.set("support_size", static_cast<double>(*r.support));
  rep.set("statistic", r.observed[j]);
  rep.set("null_effect", c);
  rep.set("degenerate", r.degenerate[j] ? 1.0 : 0.0);
  return rep;
}

}  // namespace

double statistic_value(const Statistic& stat, std::span<const double> y, std::span<const std::uint8_t> z) {
  require(stat.kind != Statistic::Kind::Omnibus, ErrorCode::InvalidArgument,
          "omnibus statistic needs several outcomes");
  require(y.size() == z.size(), ErrorCode::LengthMismatch, "outcome and assignment lengths differ");
  Scratch ws;
  return prepare(stat, y, z, 0.0)(z, ws);
}

std::vector<AnalysisReport> exact_p_values(const ExperimentTable& table, const Design& design,
                                           std::span<const Statistic> stats, const SharpNull& null,
                                           const RandomizationOptions& opts) {
  std::vector<Prepared> prepared;
  for (const auto& s : stats) {
    require(s.kind != Statistic::Kind::Omnibus, ErrorCode::InvalidArgument,
            "use omnibus_multiple_outcomes for the omnibus statistic");
    prepared.push_back(prepare(s, table.outcome(), table.z(), null.constant_effect));
  }
  const auto r = run_engine(design, table.z(), prepared, opts);
  std::vector<AnalysisReport> out;
  for (std::size_t j = 0; j < stats.size(); ++j) out.push_back(to_report(r, j, stats[j], table, opts, null.constant_effect));
  return out;
}

AnalysisReport exact_p_value(const ExperimentTable& table, const Design& design, const Statistic& stat,
                             const SharpNull& null, const RandomizationOptions& opts) {
  return exact_p_values(table, design, std::span(&stat, 1), null, opts).front();
}

InvertedInterval invert_test_ci(const ExperimentTable& table, const Design& design, const Statistic& stat,
                                double level, double grid_lo, double grid_hi, std::size_t grid_points,
                                const RandomizationOptions& opts, int refine_steps) {
  require(level > 0.0 && level < 1.0, ErrorCode::OutOfRange, "confidence level must lie in (0,1)");
  require(grid_lo < grid_hi && grid_points >= 2, ErrorCode::InvalidArgument, "grid needs lo < hi and >= 2 points");
  const double alpha = 1.0 - level;
  auto accepted = [&](double c) {
    return *exact_p_value(table, design, stat, SharpNull{c}, opts).p_exact > alpha;
  };
  std::vector<double> grid(grid_points);
  std::vector<char> keep(grid_points);
  for (std::size_t i = 0; i < grid_points; ++i) {
    grid[i] = grid_lo + (grid_hi - grid_lo) * static_cast<double>(i) / static_cast<double>(grid_points - 1);
    keep[i] = accepted(grid[i]);
  }
  InvertedInterval out;
  const auto first = std::find(keep.begin(), keep.end(), 1);
  if (first == keep.end()) {
    out.empty = true;
    out.report.method = "fisher inversion " + stat.name();
    out.report.estimate = std::nan("");
    out.report.note("no grid point accepted; widen the grid");
    return out;
  }
  const auto lo_i = static_cast<std::size_t>(first - keep.begin());
  const auto hi_i = grid_points - 1 - static_cast<std::size_t>(std::find(keep.rbegin(), keep.rend(), 1) - keep.rbegin());

  // Bisect between the last rejected and first accepted grid point on each side.
  auto refine = [&](double rejected, double ok) {
    for (int it = 0; it < refine_steps; ++it) {
      const double mid = 0.5 * (rejected + ok);
      if (accepted(mid)) ok = mid;
      else rejected = mid;
    }
    return ok;
  };
  out.truncated_low = lo_i == 0;
  out.truncated_high = hi_i == grid_points - 1;
  out.lower = out.truncated_low ? grid.front() : refine(grid[lo_i - 1], grid[lo_i]);
  out.upper = out.truncated_high ? grid.back() : refine(grid[hi_i + 1], grid[hi_i]);

  auto& rep = out.report;
  rep.method = "fisher inversion " + stat.name();
  rep.estimate = 0.5 * (out.lower + out.upper);
  rep.ci_lower = out.lower;
  rep.ci_upper = out.upper;
  rep.n_treated = table.n_treated();
  rep.n_control = table.n_control();
  if (!opts.force_monte_carlo && support_size(design, opts.enumeration_cap)) {
    rep.set("support_size", static_cast<double>(*support_size(design, opts.enumeration_cap)));
  } else {
    rep.seed = opts.seed;
    rep.draws = opts.draws;
  }
  rep.set("level", level);
  rep.set("truncated_low", out.truncated_low ? 1.0 : 0.0);
  rep.set("truncated_high", out.truncated_high ? 1.0 : 0.0);
  if (out.truncated_low || out.truncated_high) rep.note("interval truncated at grid edge");
  const auto inner = std::count(keep.begin() + static_cast<std::ptrdiff_t>(lo_i),
                                keep.begin() + static_cast<std::ptrdiff_t>(hi_i) + 1, 0);
  if (inner > 0) rep.note("acceptance region is not contiguous on the grid; bounding interval reported");
  return out;
}

OmnibusResult omnibus_multiple_outcomes(const ExperimentTable& table, const Design& design,
                                        const std::vector<std::string>& outcomes, const RandomizationOptions& opts) {
  require(outcomes.size() >= 2, ErrorCode::InvalidArgument, "omnibus test needs at least two outcome columns");
  std::vector<std::span<const double>> cols;
  for (const auto& name : outcomes) cols.push_back(table.outcome_column(name));

  std::vector<Prepared> prepared;
  prepared.push_back(prepare_omnibus(cols, table.z(), 0.0));
  for (const auto& c : cols) prepared.push_back(prepare(Statistic::diff_means(), c, table.z(), 0.0));
  const auto r = run_engine(design, table.z(), prepared, opts);

  OmnibusResult out;
  out.omnibus = to_report(r, 0, Statistic::omnibus(), table, opts, 0.0);
  out.omnibus.set("outcomes", static_cast<double>(outcomes.size()));
  if (prepared[0].singular) {
    out.omnibus.set("pseudo_inverse", 1.0);
    out.omnibus.note("outcome covariance is singular; pseudo-inverse used");
  }
  const double k = static_cast<double>(outcomes.size());
  for (std::size_t j = 0; j < outcomes.size(); ++j) {
    auto rep = to_report(r, j + 1, Statistic::diff_means(), table, opts, 0.0);
    rep.method += " " + outcomes[j];
    rep.set("p_bonferroni", std::min(1.0, k * *rep.p_exact));
    out.per_outcome.push_back(std::move(rep));
  }
  return out;
}

}  // namespace randix
