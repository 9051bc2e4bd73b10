#include "randix/regression.hpp"

#include <algorithm>
#include <cmath>

#include "randix/distributions.hpp"
#include "randix/error.hpp"

namespace randix {

VcovKind parse_vcov(const std::string& text) {
  if (text == "ehw" || text == "hc0") return VcovKind::Ehw;
  if (text == "neyman" || text == "hc2") return VcovKind::Neyman;
  if (text == "lz" || text == "cluster" || text == "cluster_lz") return VcovKind::ClusterLz;
  if (text == "classical") return VcovKind::Classical;
  fail(ErrorCode::InvalidArgument, "unknown variance kind '" + text + "' (expected ehw, neyman, lz or classical)");
}

const char* to_string(VcovKind kind) {
  switch (kind) {
    case VcovKind::Ehw: return "ehw";
    case VcovKind::Neyman: return "neyman";
    case VcovKind::ClusterLz: return "cluster_lz";
    case VcovKind::Classical: return "classical";
  }
  return "unknown";
}

std::size_t RegressionFit::index(const std::string& name) const {
  const auto it = std::find(names.begin(), names.end(), name);
  require(it != names.end(), ErrorCode::MissingColumn, "no regression term named '" + name + "'");
  return static_cast<std::size_t>(it - names.begin());
}

double RegressionFit::se(const std::string& name) const {
  const auto i = static_cast<Eigen::Index>(index(name));
  return std::sqrt(std::max(0.0, vcov(i, i)));
}

AnalysisReport RegressionFit::report(const std::string& term, double level) const {
  AnalysisReport r;
  r.estimate = coefficient(term);
  r.std_error = se(term);
  r.method = std::string("ols ") + term + " vcov=" + to_string(kind);
  r.normal_inference(level);
  r.set("r_squared", r_squared);
  r.set("n_obs", static_cast<double>(n_obs));
  if (n_clusters) r.set("n_clusters", static_cast<double>(*n_clusters));
  for (std::size_t j = 0; j < names.size(); ++j) {
    const auto jj = static_cast<Eigen::Index>(j);
    r.set("coef[" + names[j] + "]", coef[jj]);
    r.set("se[" + names[j] + "]", std::sqrt(std::max(0.0, vcov(jj, jj))));
  }
  return r;
}

RegressionFit fit_ols(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, std::vector<std::string> names,
                      const OlsOptions& opts) {
  const Eigen::Index n = x.rows();
  const Eigen::Index p = x.cols();
  require(static_cast<std::size_t>(p) == names.size(), ErrorCode::LengthMismatch, "one name per regressor required");
  require(y.size() == n, ErrorCode::LengthMismatch, "outcome length differs from design rows");
  require(n > p, ErrorCode::InsufficientUnits,
          "regression needs more rows (" + std::to_string(n) + ") than columns (" + std::to_string(p) + ")");

  Eigen::VectorXd sw = Eigen::VectorXd::Ones(n);
  if (opts.weights) {
    require(opts.weights->size() == n, ErrorCode::LengthMismatch, "weight length differs from design rows");
    require((opts.weights->array() > 0.0).all(), ErrorCode::InvalidArgument, "weights must be positive");
    sw = opts.weights->cwiseSqrt();
  }
  const Eigen::MatrixXd xw = sw.asDiagonal() * x;
  const Eigen::VectorXd yw = sw.cwiseProduct(y);

  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(xw);
  qr.setThreshold(1e-10);
  if (qr.rank() < p) {
    const auto dropped = qr.colsPermutation().indices()[qr.rank()];
    fail(ErrorCode::RankDeficient, "design matrix is rank deficient (rank " + std::to_string(qr.rank()) + " of " +
                                       std::to_string(p) + "); column '" +
                                       names[static_cast<std::size_t>(dropped)] + "' is collinear");
  }

  RegressionFit fit;
  fit.names = std::move(names);
  fit.kind = opts.kind;
  fit.n_obs = static_cast<std::size_t>(n);
  fit.coef = qr.solve(yw);
  fit.residuals = y - x * fit.coef;
  const Eigen::VectorXd ew = sw.cwiseProduct(fit.residuals);

  // (X'WX)^{-1} = P R^{-1} R^{-T} P'
  const Eigen::MatrixXd r = qr.matrixR().topLeftCorner(p, p).triangularView<Eigen::Upper>();
  const Eigen::MatrixXd rinv = r.triangularView<Eigen::Upper>().solve(Eigen::MatrixXd::Identity(p, p));
  const auto& perm = qr.colsPermutation();
  const Eigen::MatrixXd bread = perm * (rinv * rinv.transpose()) * perm.transpose();

  Eigen::MatrixXd meat = Eigen::MatrixXd::Zero(p, p);
  switch (opts.kind) {
    case VcovKind::Classical: {
      const double sigma2 = ew.squaredNorm() / static_cast<double>(n - p);
      fit.vcov = sigma2 * bread;
      break;
    }
    case VcovKind::Ehw:
      meat = xw.transpose() * ew.cwiseAbs2().asDiagonal() * xw;
      fit.vcov = bread * meat * bread;
      break;
    case VcovKind::Neyman: {
      Eigen::VectorXd scaled(n);
      for (Eigen::Index i = 0; i < n; ++i) {
        const double h = xw.row(i).dot(bread * xw.row(i).transpose());
        require(h < 1.0 - 1e-12, ErrorCode::Numerical, "leverage of 1 makes the HC2 variance undefined");
        scaled[i] = ew[i] * ew[i] / (1.0 - h);
      }
      meat = xw.transpose() * scaled.asDiagonal() * xw;
      fit.vcov = bread * meat * bread;
      break;
    }
    case VcovKind::ClusterLz: {
      require(opts.clusters.has_value(), ErrorCode::MissingColumn, "cluster_lz variance needs cluster labels");
      const auto& cl = *opts.clusters;
      require(cl.size() == static_cast<std::size_t>(n), ErrorCode::LengthMismatch, "cluster labels have wrong length");
      const int g = *std::max_element(cl.begin(), cl.end()) + 1;
      Eigen::MatrixXd scores = Eigen::MatrixXd::Zero(g, p);
      for (Eigen::Index i = 0; i < n; ++i) scores.row(cl[static_cast<std::size_t>(i)]) += ew[i] * xw.row(i);
      meat = scores.transpose() * scores;
      fit.vcov = bread * meat * bread;
      if (opts.cluster_df_adjust) {
        require(g > 1, ErrorCode::InsufficientUnits, "G/(G-1) adjustment needs at least two clusters");
        fit.vcov *= static_cast<double>(g) / static_cast<double>(g - 1);
      }
      fit.n_clusters = static_cast<std::size_t>(g);
      break;
    }
  }
  fit.vcov = 0.5 * (fit.vcov + fit.vcov.transpose());

  const Eigen::VectorXd w = sw.cwiseAbs2();
  const double ybar = w.dot(y) / w.sum();
  const double sst = (w.array() * (y.array() - ybar).square()).sum();
  const double ssr = ew.squaredNorm();
  fit.r_squared = sst > 0.0 ? std::clamp(1.0 - ssr / sst, 0.0, 1.0) : 1.0;
  return fit;
}

VcovKind default_vcov(const ExperimentTable& table, VcovKind fallback) {
  return table.cluster() ? VcovKind::ClusterLz : fallback;
}

namespace {

Eigen::VectorXd to_eigen(std::span<const double> v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

OlsOptions options_for(const ExperimentTable& table, VcovKind kind) {
  OlsOptions o;
  o.kind = kind;
  if (kind == VcovKind::ClusterLz) {
    require(table.cluster().has_value(), ErrorCode::MissingColumn, "cluster_lz variance needs a cluster column");
    o.clusters = table.cluster()->codes;
  }
  return o;
}

void require_arms(const ExperimentTable& table) {
  require(table.n_treated() > 0 && table.n_control() > 0, ErrorCode::InsufficientUnits,
          "regression needs units in both arms");
}

}  // namespace

RegressionFit ols_treatment(const ExperimentTable& table, std::optional<VcovKind> kind) {
  require_arms(table);
  const auto n = static_cast<Eigen::Index>(table.n_units());
  Eigen::MatrixXd x(n, 2);
  for (Eigen::Index i = 0; i < n; ++i) {
    x(i, 0) = 1.0;
    x(i, 1) = table.z()[static_cast<std::size_t>(i)];
  }
  const auto k = kind.value_or(default_vcov(table, VcovKind::Neyman));
  if (k != VcovKind::Classical) {
    require(table.n_treated() >= 2 && table.n_control() >= 2, ErrorCode::InsufficientUnits,
            "robust variance needs at least two units per arm");
  }
  return fit_ols(x, to_eigen(table.outcome()), {kIntercept, kTreatment}, options_for(table, k));
}

RegressionFit ols_adjusted(const ExperimentTable& table, const std::vector<std::string>& covariates, bool interacted,
                           std::optional<VcovKind> kind) {
  require_arms(table);
  const auto n = table.n_units();
  std::vector<std::string> names{kIntercept, kTreatment};
  std::vector<std::vector<double>> cols;
  for (const auto& name : covariates) {
    const auto& cov = table.covariate(name);
    if (cov.is_categorical()) {
      for (std::size_t level = 1; level < cov.levels.size(); ++level) {
        std::vector<double> ind(n);
        for (std::size_t i = 0; i < n; ++i) ind[i] = cov.values[i] == static_cast<double>(level) ? 1.0 : 0.0;
        cols.push_back(std::move(ind));
        names.push_back(name + "=" + cov.levels[level]);
      }
    } else {
      cols.push_back(cov.values);
      names.push_back(name);
    }
  }
  for (auto& c : cols) {
    const double m = mean(c);
    for (auto& v : c) v -= m;
  }
  const std::size_t k = cols.size();
  if (interacted) {
    for (std::size_t j = 0; j < k; ++j) names.push_back(kTreatment + ":" + names[2 + j]);
  }
  const std::size_t p = names.size();
  Eigen::MatrixXd x(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(p));
  for (std::size_t i = 0; i < n; ++i) {
    const auto ii = static_cast<Eigen::Index>(i);
    const double w = table.z()[i];
    x(ii, 0) = 1.0;
    x(ii, 1) = w;
    for (std::size_t j = 0; j < k; ++j) {
      x(ii, static_cast<Eigen::Index>(2 + j)) = cols[j][i];
      if (interacted) x(ii, static_cast<Eigen::Index>(2 + k + j)) = w * cols[j][i];
    }
  }
  const auto vk = kind.value_or(default_vcov(table, VcovKind::Ehw));
  return fit_ols(x, to_eigen(table.outcome()), std::move(names), options_for(table, vk));
}

ClusterLevel parse_cluster_level(const std::string& text) {
  if (text == "unit") return ClusterLevel::Unit;
  if (text == "cluster") return ClusterLevel::Cluster;
  fail(ErrorCode::InvalidArgument, "unknown cluster level '" + text + "' (expected unit or cluster)");
}

ClusterWeights parse_cluster_weights(const std::string& text) {
  if (text == "none") return ClusterWeights::None;
  if (text == "inverse_cluster_size" || text == "inverse") return ClusterWeights::InverseClusterSize;
  if (text == "cluster_size" || text == "size") return ClusterWeights::ClusterSize;
  fail(ErrorCode::InvalidArgument, "unknown weights '" + text + "' (expected none, inverse_cluster_size, cluster_size)");
}

RegressionFit ols_cluster(const ExperimentTable& table, ClusterLevel level, ClusterWeights weights,
                          std::optional<VcovKind> kind, bool df_adjust) {
  require(table.cluster().has_value(), ErrorCode::MissingColumn, "cluster regression needs a cluster column");
  require_arms(table);
  const auto& cl = *table.cluster();
  const auto g = cl.n_levels();
  std::vector<double> size(g, 0.0), sum(g, 0.0);
  std::vector<std::uint8_t> zg(g, 0);
  for (std::size_t i = 0; i < table.n_units(); ++i) {
    const auto c = static_cast<std::size_t>(cl.codes[i]);
    size[c] += 1.0;
    sum[c] += table.outcome()[i];
    zg[c] = table.z()[i];
  }
  const auto gt = static_cast<std::size_t>(std::count(zg.begin(), zg.end(), std::uint8_t{1}));
  require(gt >= 2 && g - gt >= 2, ErrorCode::InsufficientUnits,
          "cluster analysis needs at least two clusters per arm (have " + std::to_string(gt) + " treated, " +
              std::to_string(g - gt) + " control)");

  OlsOptions o;
  if (level == ClusterLevel::Cluster) {
    require(weights != ClusterWeights::InverseClusterSize, ErrorCode::InvalidArgument,
            "inverse cluster-size weights apply to the unit-level regression");
    Eigen::MatrixXd x(static_cast<Eigen::Index>(g), 2);
    Eigen::VectorXd y(static_cast<Eigen::Index>(g));
    for (std::size_t c = 0; c < g; ++c) {
      const auto cc = static_cast<Eigen::Index>(c);
      x(cc, 0) = 1.0;
      x(cc, 1) = zg[c];
      y[cc] = sum[c] / size[c];
    }
    o.kind = kind.value_or(VcovKind::Ehw);
    if (weights == ClusterWeights::ClusterSize) o.weights = Eigen::Map<Eigen::VectorXd>(size.data(), x.rows());
    if (o.kind == VcovKind::ClusterLz) {
      std::vector<int> ids(g);
      for (std::size_t c = 0; c < g; ++c) ids[c] = static_cast<int>(c);
      o.clusters = ids;
      o.cluster_df_adjust = df_adjust;
    }
    auto fit = fit_ols(x, y, {kIntercept, kTreatment}, o);
    fit.n_clusters = g;
    return fit;
  }

  const auto n = static_cast<Eigen::Index>(table.n_units());
  Eigen::MatrixXd x(n, 2);
  Eigen::VectorXd w(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto ii = static_cast<std::size_t>(i);
    x(i, 0) = 1.0;
    x(i, 1) = table.z()[ii];
    const double ng = size[static_cast<std::size_t>(cl.codes[ii])];
    w[i] = weights == ClusterWeights::InverseClusterSize ? 1.0 / ng : weights == ClusterWeights::ClusterSize ? ng : 1.0;
  }
  o.kind = kind.value_or(VcovKind::ClusterLz);
  if (weights != ClusterWeights::None) o.weights = w;
  if (o.kind == VcovKind::ClusterLz) {
    o.clusters = cl.codes;
    o.cluster_df_adjust = df_adjust;
  }
  return fit_ols(x, to_eigen(table.outcome()), {kIntercept, kTreatment}, o);
}

}  // namespace randix
