#include "randix/heterogeneity.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "randix/distributions.hpp"
#include "randix/error.hpp"
#include "randix/neyman.hpp"
#include "randix/quantile.hpp"
#include "randix/regression.hpp"
#include "randix/rng.hpp"

namespace randix {

std::vector<double> transform_outcome(const ExperimentTable& table, std::optional<double> p) {
  const double pp = p.value_or(static_cast<double>(table.n_treated()) / static_cast<double>(table.n_units()));
  require(pp > 0.0 && pp < 1.0, ErrorCode::OutOfRange, "propensity must lie in (0,1), got " + format_number(pp));
  const auto y = table.outcome();
  const auto w = table.w();
  std::vector<double> out(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) out[i] = y[i] * (w[i] - pp) / (pp * (1.0 - pp));
  return out;
}

// ---------------------------------------------------------------------------
// Heterogeneity test

BasisSpec BasisSpec::parse(const std::string& text) {
  BasisSpec s;
  if (text == "constant") return s;
  const auto colon = text.find(':');
  require(colon != std::string::npos, ErrorCode::InvalidArgument,
          "basis must be constant, indicators:cols, linear:cols or spline:cols (got '" + text + "')");
  const auto kind = text.substr(0, colon);
  if (kind == "indicators") s.kind = Kind::Indicators;
  else if (kind == "linear") s.kind = Kind::Linear;
  else if (kind == "spline") s.kind = Kind::Spline;
  else fail(ErrorCode::InvalidArgument, "unknown basis kind '" + kind + "'");
  s.covariates = split_list(text.substr(colon + 1));
  require(!s.covariates.empty(), ErrorCode::InvalidArgument, "basis '" + text + "' names no covariates");
  return s;
}

std::string BasisSpec::describe() const {
  static const char* names[] = {"constant", "indicators", "linear", "spline"};
  std::string s = names[static_cast<int>(kind)];
  for (std::size_t i = 0; i < covariates.size(); ++i) s += (i ? "," : ":") + covariates[i];
  return s;
}

Basis expand_basis(const ExperimentTable& table, const BasisSpec& spec) {
  const auto n = table.n_units();
  Basis b;
  b.names.push_back("constant");
  b.columns.emplace_back(n, 1.0);
  for (const auto& name : spec.covariates) {
    const auto& cov = table.covariate(name);
    if (cov.is_categorical()) {
      for (std::size_t level = 1; level < cov.levels.size(); ++level) {
        std::vector<double> col(n);
        for (std::size_t i = 0; i < n; ++i) col[i] = cov.values[i] == static_cast<double>(level) ? 1.0 : 0.0;
        b.names.push_back(name + "=" + cov.levels[level]);
        b.columns.push_back(std::move(col));
      }
      continue;
    }
    const auto& x = cov.values;
    const bool binary = std::all_of(x.begin(), x.end(), [](double v) { return v == 0.0 || v == 1.0; });
    switch (spec.kind) {
      case BasisSpec::Kind::Constant:
        break;
      case BasisSpec::Kind::Indicators: {
        if (binary) {
          b.names.push_back(name);
          b.columns.push_back(x);
          break;
        }
        const double med = empirical_quantile(x, 0.5);
        std::vector<double> col(n);
        for (std::size_t i = 0; i < n; ++i) col[i] = x[i] > med ? 1.0 : 0.0;
        b.names.push_back(name + ">median");
        b.columns.push_back(std::move(col));
        break;
      }
      case BasisSpec::Kind::Linear:
        b.names.push_back(name);
        b.columns.push_back(x);
        break;
      case BasisSpec::Kind::Spline: {
        b.names.push_back(name);
        b.columns.push_back(x);
        if (binary) break;
        const double top = *std::max_element(x.begin(), x.end());
        double last = -std::numeric_limits<double>::infinity();
        for (double s : {0.25, 0.5, 0.75}) {
          const double k = empirical_quantile(x, s);
          if (k <= last || k >= top) continue;
          last = k;
          std::vector<double> col(n);
          for (std::size_t i = 0; i < n; ++i) col[i] = std::max(0.0, x[i] - k);
          b.names.push_back(name + ">q" + format_number(s));
          b.columns.push_back(std::move(col));
        }
        break;
      }
    }
  }
  return b;
}

AnalysisReport HeterogeneityTest::report() const {
  AnalysisReport r;
  r.method = "heterogeneity wald basis=" + basis;
  r.estimate = wald_stat;
  r.p_normal = p_value;
  r.set("dof", static_cast<double>(dof));
  return r;
}

HeterogeneityTest test_heterogeneity(const ExperimentTable& table, const BasisSpec& spec) {
  const auto basis = expand_basis(table, spec);
  const auto n = table.n_units();
  const auto k = basis.columns.size();
  HeterogeneityTest out;
  out.basis = spec.describe();
  out.dof = k - 1;

  Eigen::MatrixXd x(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(2 * k));
  std::vector<std::string> names;
  for (std::size_t j = 0; j < k; ++j) names.push_back(basis.names[j]);
  for (std::size_t j = 0; j < k; ++j) names.push_back("treatment:" + basis.names[j]);
  const auto w = table.w();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < k; ++j) {
      const double h = basis.columns[j][i];
      x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = h;
      x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k + j)) = w[i] * h;
    }
  }
  const Eigen::VectorXd y = Eigen::Map<const Eigen::VectorXd>(table.outcome().data(), static_cast<Eigen::Index>(n));
  OlsOptions o;
  o.kind = VcovKind::Ehw;
  const auto fit = fit_ols(x, y, names, o);
  if (out.dof == 0) return out;

  const auto q = static_cast<Eigen::Index>(out.dof);
  const auto off = static_cast<Eigen::Index>(k + 1);
  const Eigen::VectorXd g = fit.coef.segment(off, q);
  const Eigen::MatrixXd v = fit.vcov.block(off, off, q, q);
  Eigen::LDLT<Eigen::MatrixXd> ldlt(v);
  require(ldlt.info() == Eigen::Success && ldlt.isPositive(), ErrorCode::Numerical,
          "interaction covariance is not positive definite");
  out.wald_stat = std::max(0.0, g.dot(ldlt.solve(g)));
  out.p_value = chi2_sf(out.wald_stat, static_cast<double>(out.dof));
  for (std::size_t j = 1; j < k; ++j) out.terms.push_back(names[k + j]);
  return out;
}

// ---------------------------------------------------------------------------
// Honest tree

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> honest_split(std::span<const std::uint8_t> z,
                                                                            std::uint64_t seed) {
  std::vector<std::size_t> train, est;
  for (std::uint8_t arm = 0; arm < 2; ++arm) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < z.size(); ++i) {
      if (z[i] == arm) idx.push_back(i);
    }
    Stream rng(seed, streams::split, arm);
    for (std::size_t i = idx.size(); i > 1; --i) std::swap(idx[i - 1], idx[rng.below(i)]);
    const std::size_t half = idx.size() / 2;
    train.insert(train.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(half));
    est.insert(est.end(), idx.begin() + static_cast<std::ptrdiff_t>(half), idx.end());
  }
  std::sort(train.begin(), train.end());
  std::sort(est.begin(), est.end());
  return {std::move(train), std::move(est)};
}

namespace {

struct Stats {
  double n[2] = {0, 0};
  double s[2] = {0, 0};  // Σ Y by arm
  double q[2] = {0, 0};  // Σ Y² by arm
  double ys = 0, yq = 0;  // Σ Y*, Σ Y*²
  std::size_t e[2] = {0, 0};  // estimation-half counts by arm

  void add(const Stats& o) {
    for (int a = 0; a < 2; ++a) {
      n[a] += o.n[a];
      s[a] += o.s[a];
      q[a] += o.q[a];
      e[a] += o.e[a];
    }
    ys += o.ys;
    yq += o.yq;
  }
  Stats minus(const Stats& o) const {
    Stats r = *this;
    for (int a = 0; a < 2; ++a) {
      r.n[a] -= o.n[a];
      r.s[a] -= o.s[a];
      r.q[a] -= o.q[a];
      r.e[a] -= o.e[a];
    }
    r.ys -= o.ys;
    r.yq -= o.yq;
    return r;
  }
  double count() const { return n[0] + n[1]; }
  double ystar_var() const {
    const double m = count();
    return m > 1 ? std::max(0.0, (yq - ys * ys / m) / (m - 1)) : 0.0;
  }
  double arm_var(int a) const {
    return n[a] > 1 ? std::max(0.0, (q[a] - s[a] * s[a] / n[a]) / (n[a] - 1)) : 0.0;
  }
  double tau() const { return s[1] / n[1] - s[0] / n[0]; }
  double neyman_var() const { return arm_var(1) / n[1] + arm_var(0) / n[0]; }
};

struct Candidate {
  bool valid = false;
  double gain = -std::numeric_limits<double>::infinity();
  double threshold = 0.0;
  std::vector<int> left_levels;
  std::size_t evaluated = 0;
};

struct Grower {
  const ExperimentTable& table;
  const TreeOptions& opts;
  std::vector<int> cov_index;  // into table.covariates()
  std::vector<double> ystar;   // defined on train rows (indexed by row)
  std::vector<char> is_train;
  double penalty_c = 0.0;
  CausalTree tree;

  double objective(const Stats& st) const {
    if (opts.criterion == SplitCriterion::TransformedOutcome) {
      return st.ys * st.ys / st.count() - penalty_c * st.ystar_var();
    }
    const double m = st.count();
    return m * st.tau() * st.tau() - penalty_c * m * st.neyman_var();
  }

  double null_scale(const Stats& st) const {
    if (opts.criterion == SplitCriterion::TransformedOutcome) return st.ystar_var();
    return st.count() * st.neyman_var();
  }

  bool feasible(const Stats& st) const {
    const double ml = static_cast<double>(opts.min_leaf);
    return st.n[0] >= ml && st.n[1] >= ml && st.e[0] >= opts.min_leaf && st.e[1] >= opts.min_leaf;
  }

  void add_unit(Stats& st, std::size_t i) const {
    const int a = table.w()[i];
    if (is_train[i]) {
      const double y = table.outcome()[i];
      st.n[a] += 1;
      st.s[a] += y;
      st.q[a] += y * y;
      st.ys += ystar[i];
      st.yq += ystar[i] * ystar[i];
    } else {
      st.e[a] += 1;
    }
  }

  Candidate best_for(std::size_t j, const std::vector<std::size_t>& rows, const Stats& parent) const {
    const auto& cov = table.covariates()[static_cast<std::size_t>(cov_index[j])];
    Candidate best;
    const double parent_obj = objective(parent);

    // Buckets in sweep order: distinct train values, or levels ordered by mean Y*.
    std::vector<double> keys;
    if (!cov.is_categorical()) {
      for (auto i : rows) {
        if (is_train[i]) keys.push_back(cov.values[i]);
      }
      std::sort(keys.begin(), keys.end());
      keys.erase(std::unique(keys.begin(), keys.end()), keys.end());
    } else {
      const auto L = cov.levels.size();
      std::vector<double> sum(L, 0.0), cnt(L, 0.0);
      for (auto i : rows) {
        if (!is_train[i]) continue;
        const auto l = static_cast<std::size_t>(cov.values[i]);
        sum[l] += ystar[i];
        cnt[l] += 1;
      }
      std::vector<int> present;
      for (std::size_t l = 0; l < L; ++l) {
        if (cnt[l] > 0) present.push_back(static_cast<int>(l));
      }
      std::stable_sort(present.begin(), present.end(), [&](int a, int b) {
        return sum[static_cast<std::size_t>(a)] / cnt[static_cast<std::size_t>(a)] <
               sum[static_cast<std::size_t>(b)] / cnt[static_cast<std::size_t>(b)];
      });
      for (int l : present) keys.push_back(l);
    }
    const std::size_t nb = keys.size();
    if (nb < 2) return best;

    std::vector<Stats> bucket(nb + 1);  // last bucket: always right
    std::vector<std::size_t> rank_of_level;
    if (cov.is_categorical()) {
      rank_of_level.assign(cov.levels.size(), nb);
      for (std::size_t b = 0; b < nb; ++b) rank_of_level[static_cast<std::size_t>(keys[b])] = b;
    }
    for (auto i : rows) {
      std::size_t b;
      if (cov.is_categorical()) {
        b = rank_of_level[static_cast<std::size_t>(cov.values[i])];
      } else {
        b = static_cast<std::size_t>(std::lower_bound(keys.begin(), keys.end(), cov.values[i]) - keys.begin());
      }
      add_unit(bucket[b], i);
    }
    Stats left;
    for (std::size_t b = 0; b + 1 < nb; ++b) {
      left.add(bucket[b]);
      const Stats right = parent.minus(left);
      if (!feasible(left) || !feasible(right)) continue;
      ++best.evaluated;
      const double gain = objective(left) + objective(right) - parent_obj;
      if (gain > best.gain) {
        best.valid = true;
        best.gain = gain;
        if (cov.is_categorical()) {
          best.threshold = static_cast<double>(b);
          best.left_levels.clear();
          for (std::size_t k = 0; k <= b; ++k) best.left_levels.push_back(static_cast<int>(keys[k]));
        } else {
          best.threshold = keys[b];
        }
      }
    }
    std::sort(best.left_levels.begin(), best.left_levels.end());
    return best;
  }

  void grow(int node, const std::vector<std::size_t>& rows) {
    Stats parent;
    for (auto i : rows) add_unit(parent, i);
    auto& nd = tree.nodes[static_cast<std::size_t>(node)];
    if (nd.depth >= opts.max_depth) return;

    std::vector<Candidate> slots(cov_index.size());
    kernels::for_each_draw(
        cov_index.size(), opts.exec, [] { return 0; },
        [&](std::size_t j, int&) { slots[j] = best_for(j, rows, parent); });

    std::size_t m = 0;
    int best_j = -1;
    for (std::size_t j = 0; j < slots.size(); ++j) {
      m += slots[j].evaluated;
      // Strict > keeps the lowest covariate index on ties; within a covariate
      // the sweep already kept the lowest threshold.
      if (slots[j].valid && (best_j < 0 || slots[j].gain > slots[static_cast<std::size_t>(best_j)].gain)) {
        best_j = static_cast<int>(j);
      }
    }
    if (best_j < 0) return;
    const auto& c = slots[static_cast<std::size_t>(best_j)];
    const double crit = chi2_quantile(1.0 - opts.split_alpha / static_cast<double>(m), 1.0) * null_scale(parent);
    if (!(c.gain > crit)) return;

    const auto& cov = table.covariates()[static_cast<std::size_t>(cov_index[static_cast<std::size_t>(best_j)])];
    std::vector<std::size_t> lrows, rrows;
    for (auto i : rows) {
      bool go_left;
      if (cov.is_categorical()) {
        go_left = std::binary_search(c.left_levels.begin(), c.left_levels.end(), static_cast<int>(cov.values[i]));
      } else {
        go_left = cov.values[i] <= c.threshold;
      }
      (go_left ? lrows : rrows).push_back(i);
    }
    TreeNode l, r;
    l.parent = r.parent = node;
    l.depth = r.depth = nd.depth + 1;
    nd.leaf = false;
    nd.covariate = best_j;
    nd.threshold = c.threshold;
    nd.left_levels = c.left_levels;
    nd.gain = c.gain;
    const int li = static_cast<int>(tree.nodes.size());
    tree.nodes.push_back(l);
    tree.nodes.push_back(r);
    tree.nodes[static_cast<std::size_t>(node)].left = li;
    tree.nodes[static_cast<std::size_t>(node)].right = li + 1;
    grow(li, lrows);
    grow(li + 1, rrows);
  }
};

}  // namespace

int CausalTree::leaf_of(const ExperimentTable& table, std::size_t row) const {
  int node = 0;
  while (!nodes[static_cast<std::size_t>(node)].leaf) {
    const auto& nd = nodes[static_cast<std::size_t>(node)];
    const auto& cov = table.covariate(covariate_names[static_cast<std::size_t>(nd.covariate)]);
    bool left;
    if (categorical[static_cast<std::size_t>(nd.covariate)]) {
      left = std::binary_search(nd.left_levels.begin(), nd.left_levels.end(), static_cast<int>(cov.values[row]));
    } else {
      left = cov.values[row] <= nd.threshold;
    }
    node = left ? nd.left : nd.right;
  }
  return node;
}

std::size_t CausalTree::n_leaves() const {
  return static_cast<std::size_t>(std::count_if(nodes.begin(), nodes.end(), [](const TreeNode& n) { return n.leaf; }));
}

std::string CausalTree::describe_split(const TreeNode& nd) const {
  const auto j = static_cast<std::size_t>(nd.covariate);
  if (!categorical[j]) return covariate_names[j] + " <= " + format_number(nd.threshold);
  std::string s = covariate_names[j] + " in {";
  for (std::size_t k = 0; k < nd.left_levels.size(); ++k) {
    s += (k ? "," : "") + levels[j][static_cast<std::size_t>(nd.left_levels[k])];
  }
  return s + "}";
}

std::string CausalTree::to_text() const {
  std::ostringstream out;
  auto walk = [&](auto&& self, int id, const std::string& prefix) -> void {
    const auto& nd = nodes[static_cast<std::size_t>(id)];
    const std::string pad(2 * nd.depth, ' ');
    if (nd.leaf) {
      out << pad << prefix << "leaf tau=" << format_number(nd.tau_hat) << " se=" << format_number(nd.se)
          << " n_t=" << nd.n_t << " n_c=" << nd.n_c << '\n';
      return;
    }
    out << pad << prefix << "split " << describe_split(nd) << '\n';
    self(self, nd.left, "yes: ");
    self(self, nd.right, "no: ");
  };
  walk(walk, 0, "");
  return out.str();
}

CausalTree grow_honest_tree(const ExperimentTable& table, const TreeOptions& opts) {
  require(opts.min_leaf >= 2, ErrorCode::InvalidArgument, "min_leaf must be at least 2 (leaf variances need 2 per arm)");
  require(table.n_units() >= 4 * opts.min_leaf, ErrorCode::InsufficientUnits,
          "honest tree needs at least 4*min_leaf units");
  require(opts.split_alpha > 0.0 && opts.split_alpha < 1.0, ErrorCode::OutOfRange, "split_alpha must lie in (0,1)");

  Grower g{table, opts, {}, {}, {}, 0.0, {}};
  const auto& covs = table.covariates();
  if (opts.covariates.empty()) {
    for (std::size_t j = 0; j < covs.size(); ++j) g.cov_index.push_back(static_cast<int>(j));
  } else {
    for (const auto& name : opts.covariates) {
      const auto it = std::find_if(covs.begin(), covs.end(), [&](const Covariate& c) { return c.name == name; });
      require(it != covs.end(), ErrorCode::MissingColumn, "no covariate named '" + name + "'");
      g.cov_index.push_back(static_cast<int>(it - covs.begin()));
    }
  }
  require(!g.cov_index.empty(), ErrorCode::InvalidArgument, "honest tree needs at least one covariate");
  for (int j : g.cov_index) {
    const auto& c = covs[static_cast<std::size_t>(j)];
    g.tree.covariate_names.push_back(c.name);
    g.tree.categorical.push_back(c.is_categorical());
    g.tree.levels.push_back(c.levels);
  }

  auto [train, est] = honest_split(table.w(), opts.seed);
  g.is_train.assign(table.n_units(), 0);
  for (auto i : train) g.is_train[i] = 1;
  std::size_t nt_train = 0;
  for (auto i : train) nt_train += table.w()[i];
  const double p = static_cast<double>(nt_train) / static_cast<double>(train.size());
  require(p > 0.0 && p < 1.0, ErrorCode::InsufficientUnits, "train half lacks one of the arms");
  g.ystar.assign(table.n_units(), 0.0);
  for (auto i : train) g.ystar[i] = table.outcome()[i] * (table.w()[i] - p) / (p * (1.0 - p));
  g.penalty_c = 1.0 + static_cast<double>(train.size()) / static_cast<double>(est.size());

  std::vector<std::size_t> all(table.n_units());
  std::iota(all.begin(), all.end(), std::size_t{0});
  {
    Stats root;
    for (auto i : all) g.add_unit(root, i);
    require(g.feasible(root), ErrorCode::InsufficientUnits,
            "min_leaf " + std::to_string(opts.min_leaf) + " is infeasible: each half needs that many units per arm");
  }
  g.tree.nodes.push_back(TreeNode{});
  g.grow(0, all);

  auto& tree = g.tree;
  tree.train = std::move(train);
  tree.estimate = std::move(est);
  tree.min_leaf = opts.min_leaf;
  // Leaf effects from the estimation half only.
  std::vector<std::vector<std::size_t>> members(tree.nodes.size());
  for (auto i : tree.estimate) members[static_cast<std::size_t>(tree.leaf_of(table, i))].push_back(i);
  for (std::size_t k = 0; k < tree.nodes.size(); ++k) {
    auto& nd = tree.nodes[k];
    if (!nd.leaf) continue;
    const auto rep = ate_complete(table.subset(members[k]));
    nd.tau_hat = rep.estimate;
    nd.se = *rep.std_error;
    nd.n_t = rep.n_treated;
    nd.n_c = rep.n_control;
  }
  return tree;
}

TreeStrata tree_to_strata(const CausalTree& tree, const ExperimentTable& table) {
  TreeStrata out;
  out.rows = tree.estimate;
  std::vector<int> label(out.rows.size());
  for (std::size_t k = 0; k < out.rows.size(); ++k) label[k] = tree.leaf_of(table, out.rows[k]);

  std::size_t merges = 0;
  while (true) {
    std::vector<std::size_t> nt(tree.nodes.size(), 0), nc(tree.nodes.size(), 0);
    for (std::size_t k = 0; k < out.rows.size(); ++k) {
      (table.z()[out.rows[k]] ? nt : nc)[static_cast<std::size_t>(label[k])]++;
    }
    int bad = -1;
    for (std::size_t k = 0; k < label.size() && bad < 0; ++k) {
      const auto l = static_cast<std::size_t>(label[k]);
      if ((nt[l] < 2 || nc[l] < 2) && tree.nodes[l].parent >= 0) bad = label[k];
    }
    if (bad < 0) break;
    // Collapse the violating leaf's parent subtree into the parent.
    const int parent = tree.nodes[static_cast<std::size_t>(bad)].parent;
    for (auto& l : label) {
      int a = l;
      while (a >= 0 && a != parent) a = tree.nodes[static_cast<std::size_t>(a)].parent;
      if (a == parent) l = parent;
    }
    ++merges;
  }
  std::vector<int> codes(label.begin(), label.end());
  std::vector<std::string> names;
  for (int l : codes) names.push_back("node" + std::to_string(l));
  out.labels = Categorical::intern(names);
  const auto sub = table.subset(out.rows);
  out.report = ate_stratified(sub, out.labels);
  out.report.method = "tree strata";
  out.report.set("merged_leaves", static_cast<double>(merges));
  if (merges) out.report.note("leaves without 2 treated and 2 control units merged into their parent");
  return out;
}

}  // namespace randix
