#include "randix/cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <fstream>
#include <optional>
#include <sstream>

#include "randix/compliance.hpp"
#include "randix/design.hpp"
#include "randix/error.hpp"
#include "randix/fisher.hpp"
#include "randix/heterogeneity.hpp"
#include "randix/interference.hpp"
#include "randix/neyman.hpp"
#include "randix/power.hpp"
#include "randix/quantile.hpp"
#include "randix/regression.hpp"
#include "randix/repro.hpp"

namespace randix::cli {
namespace {

struct DataFlags {
  std::string data, config, outcome, z, w, covariates, categorical, stratum, cluster, pair, extra;
};

struct OutFlags {
  std::string format = "text";
  std::string out;
};

void add_data_flags(CLI::App* sub, DataFlags& f) {
  sub->add_option("--data", f.data, "CSV/TSV input (default: bundled Lalonde fixture)");
  sub->add_option("--config", f.config, "key=value schema file");
  sub->add_option("--outcome", f.outcome, "outcome column");
  sub->add_option("--z", f.z, "assignment column");
  sub->add_option("--w", f.w, "receipt column");
  sub->add_option("--covariates", f.covariates, "comma-separated covariate columns");
  sub->add_option("--categorical", f.categorical, "covariates to treat as categorical");
  sub->add_option("--stratum", f.stratum, "stratum column");
  sub->add_option("--cluster", f.cluster, "cluster column");
  sub->add_option("--pair", f.pair, "pair column");
  sub->add_option("--extra-outcomes", f.extra, "additional outcome columns");
}

void add_out_flags(CLI::App* sub, OutFlags& f) {
  sub->add_option("--format", f.format, "text or machine")->check(CLI::IsMember({"text", "machine"}));
  sub->add_option("--out", f.out, "write the report here instead of stdout");
}

void apply_overrides(Schema& s, const DataFlags& f) {
  if (!f.outcome.empty()) s.outcome = f.outcome;
  if (!f.z.empty()) s.z = f.z;
  if (!f.w.empty()) s.w = f.w;
  if (!f.covariates.empty()) s.covariates = split_list(f.covariates);
  if (!f.categorical.empty()) s.categorical = split_list(f.categorical);
  if (!f.stratum.empty()) s.stratum = f.stratum;
  if (!f.cluster.empty()) s.cluster = f.cluster;
  if (!f.pair.empty()) s.pair = f.pair;
  if (!f.extra.empty()) s.extra_outcomes = split_list(f.extra);
}

ExperimentTable load(const DataFlags& f) {
  const bool overridden = !(f.config.empty() && f.outcome.empty() && f.z.empty() && f.w.empty() &&
                            f.covariates.empty() && f.categorical.empty() && f.stratum.empty() &&
                            f.cluster.empty() && f.pair.empty() && f.extra.empty());
  if (f.data.empty()) {
    auto table = load_lalonde(bundled_lalonde_path());
    if (!overridden) return table;
  }
  Schema s;
  if (!f.config.empty()) {
    s = Schema::from_config(f.config);
  } else if (f.data.empty()) {
    s = lalonde_schema();
  } else {
    s.outcome = "y";
    s.z = "z";
  }
  apply_overrides(s, f);
  return load_table(f.data.empty() ? bundled_lalonde_path() : std::filesystem::path(f.data), s);
}

std::uint64_t need_seed(const std::optional<std::uint64_t>& seed, const std::string& command) {
  require(seed.has_value(), ErrorCode::InvalidArgument,
          "--seed is required for '" + command + "'; there is no implicit seed");
  return *seed;
}

void emit(std::ostream& o, const OutFlags& f, const std::vector<AnalysisReport>& reports) {
  if (f.format == "machine") {
    write_machine(o, reports);
    return;
  }
  for (std::size_t i = 0; i < reports.size(); ++i) {
    if (i) o << '\n';
    write_text(o, reports[i]);
  }
}

// Levels of a covariate as strata: categorical codes, or distinct numeric values.
Categorical strata_from(const ExperimentTable& t, const std::string& name) {
  const auto& c = t.covariate(name);
  if (c.is_categorical()) {
    std::vector<int> codes(c.values.begin(), c.values.end());
    auto cat = Categorical::from_codes(codes);
    for (std::size_t i = 0; i < cat.n_levels(); ++i) cat.labels[i] = c.levels[static_cast<std::size_t>(std::stoi(cat.labels[i]))];
    return cat;
  }
  std::vector<std::string> raw;
  for (double v : c.values) raw.push_back(format_number(v));
  return Categorical::intern(raw);
}

nlohmann::ordered_json node_json(const CausalTree& tree, int idx) {
  const auto& n = tree.nodes[static_cast<std::size_t>(idx)];
  nlohmann::ordered_json j;
  j["depth"] = n.depth;
  j["n_treated"] = n.n_t;
  j["n_control"] = n.n_c;
  j["estimate"] = n.tau_hat;
  j["se"] = n.se;
  if (!n.leaf) {
    nlohmann::ordered_json split;
    split["covariate"] = tree.covariate_names[static_cast<std::size_t>(n.covariate)];
    if (tree.categorical[static_cast<std::size_t>(n.covariate)]) {
      auto levels = nlohmann::ordered_json::array();
      for (int c : n.left_levels) levels.push_back(tree.levels[static_cast<std::size_t>(n.covariate)][static_cast<std::size_t>(c)]);
      split["left_levels"] = levels;
    } else {
      split["threshold"] = n.threshold;
    }
    split["gain"] = n.gain;
    j["split"] = split;
    j["left"] = node_json(tree, n.left);
    j["right"] = node_json(tree, n.right);
  }
  return j;
}

nlohmann::ordered_json report_json(const AnalysisReport& r) {
  nlohmann::ordered_json j;
  std::ostringstream block;
  write_machine(block, r);
  for (const auto& [k, v] : parse_machine_block(block.str())) j[k] = v;
  return j;
}

std::vector<std::size_t> parse_units(const std::string& text) {
  std::vector<std::size_t> out;
  for (const auto& tok : split_list(text)) {
    try {
      std::size_t used = 0;
      const long long v = std::stoll(tok, &used);
      require(used == tok.size() && v >= 0, ErrorCode::InvalidArgument, "bad unit id '" + tok + "'");
      out.push_back(static_cast<std::size_t>(v));
    } catch (const std::logic_error&) {
      fail(ErrorCode::InvalidArgument, "bad unit id '" + tok + "'");
    }
  }
  return out;
}

std::vector<double> parse_levels(const std::string& text) {
  std::vector<double> out;
  for (const auto& tok : split_list(text)) {
    try {
      out.push_back(std::stod(tok));
    } catch (const std::logic_error&) {
      fail(ErrorCode::InvalidArgument, "bad quantile level '" + tok + "'");
    }
  }
  return out;
}

AnalysisReport iv_analysis(const ExperimentTable& table, const std::string& analysis, double lo, double hi,
                           const LateOptions& lopts) {
  if (analysis == "late") return late(table, lopts);
  if (analysis == "itt") return itt(table, lopts.level);
  if (analysis == "generalization") return late_generalization_test(table);
  if (analysis == "manski") return manski_bounds(table, lo, hi);
  if (analysis == "balke-pearl") return balke_pearl_bounds(table);
  if (analysis == "as-treated") return as_treated(table);
  if (analysis == "per-protocol") return per_protocol(table);
  if (analysis == "shares") {
    const auto sh = compliance_shares(table);
    AnalysisReport r;
    r.method = "compliance shares";
    r.estimate = sh.pi_c;
    r.n_treated = table.n_treated();
    r.n_control = table.n_control();
    r.set("pi_complier", sh.pi_c);
    r.set("pi_never", sh.pi_n);
    r.set("pi_always", sh.pi_a);
    r.set("clipped", sh.clipped ? 1.0 : 0.0);
    r.set("defier_signature", sh.defier_signature ? 1.0 : 0.0);
    return r;
  }
  fail(ErrorCode::InvalidArgument, "unknown iv analysis '" + analysis + "'");
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"randix: design-based analysis of randomized experiments", "randix"};
  app.require_subcommand(1, 1);

  std::optional<std::uint64_t> seed;
  std::uint64_t draws = 100000;
  std::uint64_t cap = kDefaultEnumerationCap;
  bool monte_carlo = false;
  std::string design_kind = "complete";
  double level = 0.95;

  auto seed_flag = [&](CLI::App* s) { s->add_option("--seed", seed, "random seed (required)"); };
  auto draw_flags = [&](CLI::App* s) {
    s->add_option("--draws", draws, "Monte Carlo draws")->check(CLI::PositiveNumber);
    s->add_option("--enumeration-cap", cap, "enumerate the support when it has at most this many assignments");
    s->add_flag("--monte-carlo", monte_carlo, "sample even when the support is enumerable");
  };

  DataFlags data;
  OutFlags outf;

  // design
  auto* c_design = app.add_subcommand("design", "draw an assignment from a design");
  std::optional<std::size_t> n_units, n_treated;
  std::optional<double> accept_smd;
  std::string assignment_out;
  add_data_flags(c_design, data);
  add_out_flags(c_design, outf);
  seed_flag(c_design);
  c_design->add_option("--kind,--design", design_kind, "complete, stratified, paired or cluster");
  c_design->add_option("--n", n_units, "units (complete design without data)");
  c_design->add_option("--n-treated", n_treated, "treated units (with --n)");
  c_design->add_option("--accept-smd", accept_smd, "re-randomize until every |SMD| is below this");
  c_design->add_option("--assignment-out", assignment_out, "write unit,z rows here");

  // power
  auto* c_power = app.add_subcommand("power", "required sample size");
  PowerSpec pspec;
  pspec.tau = 1.0;
  add_out_flags(c_power, outf);
  c_power->add_option("--alpha", pspec.alpha, "two-sided size");
  c_power->add_option("--beta", pspec.beta, "target power");
  c_power->add_option("--tau", pspec.tau, "effect to detect")->required();
  c_power->add_option("--sigma", pspec.sigma, "outcome standard deviation");
  c_power->add_option("--gamma", pspec.gamma, "treated share");

  // test
  auto* c_test = app.add_subcommand("test", "Fisher randomization test");
  std::string stat_text = "mean", rule_text = "inf", outcomes_text;
  double null_effect = 0.0;
  std::vector<double> grid;
  std::size_t grid_points = 41;
  bool want_ci = false;
  add_data_flags(c_test, data);
  add_out_flags(c_test, outf);
  seed_flag(c_test);
  draw_flags(c_test);
  c_test->add_option("--design", design_kind, "complete, stratified, paired or cluster");
  c_test->add_option("--stat", stat_text, "mean, rank, quantile:s or omnibus");
  c_test->add_option("--rule", rule_text, "quantile rule: inf or upper");
  c_test->add_option("--null-effect", null_effect, "constant effect under the sharp null");
  c_test->add_option("--outcomes", outcomes_text, "outcome columns for the omnibus statistic");
  c_test->add_flag("--ci", want_ci, "invert the test into an interval");
  c_test->add_option("--level", level, "interval level");
  c_test->add_option("--grid", grid, "interval search range: lo hi")->expected(2);
  c_test->add_option("--grid-points", grid_points, "grid points before bisection");

  // estimate
  auto* c_est = app.add_subcommand("estimate", "Neyman estimate of the average effect");
  std::string strata_by, estimand = "cluster";
  bool welch = false;
  add_data_flags(c_est, data);
  add_out_flags(c_est, outf);
  c_est->add_option("--design", design_kind, "complete, stratified, paired or cluster");
  c_est->add_option("--strata-by", strata_by, "post-stratify on a covariate's levels");
  c_est->add_option("--estimand", estimand, "cluster designs: cluster or population");
  c_est->add_flag("--welch", welch, "Student-t interval with Welch degrees of freedom");
  c_est->add_option("--level", level, "interval level");

  // balance
  auto* c_bal = app.add_subcommand("balance", "covariate balance table");
  std::string bal_covs;
  add_data_flags(c_bal, data);
  add_out_flags(c_bal, outf);
  seed_flag(c_bal);
  draw_flags(c_bal);
  c_bal->add_option("--design", design_kind, "complete, stratified, paired or cluster");
  c_bal->add_option("--check", bal_covs, "covariates to check (default: all)");

  // regress
  auto* c_reg = app.add_subcommand("regress", "regression estimate of the average effect");
  std::string reg_covs, vcov_text, cluster_level = "unit", cluster_weights = "none";
  bool interacted = false, df_adjust = false;
  add_data_flags(c_reg, data);
  add_out_flags(c_reg, outf);
  c_reg->add_option("--adjust", reg_covs, "covariates entering the regression (default: --covariates when given)");
  c_reg->add_flag("--interact,--interacted", interacted, "interact covariates with treatment");
  c_reg->add_option("--vcov", vcov_text, "ehw, neyman, lz or classical");
  c_reg->add_option("--cluster-level", cluster_level, "unit or cluster");
  c_reg->add_option("--weights,--cluster-weights", cluster_weights, "none, inverse or size");
  c_reg->add_flag("--df-adjust", df_adjust, "G/(G-1) factor on the cluster sandwich");
  c_reg->add_option("--level", level, "interval level");

  // qte
  auto* c_qte = app.add_subcommand("qte", "quantile treatment effects");
  std::string levels_text = "0.1,0.25,0.5,0.75,0.9";
  std::size_t reps = 2000;
  bool no_exact = false;
  add_data_flags(c_qte, data);
  add_out_flags(c_qte, outf);
  seed_flag(c_qte);
  draw_flags(c_qte);
  c_qte->add_option("--levels", levels_text, "quantile levels");
  c_qte->add_option("--reps", reps, "bootstrap replicates")->check(CLI::PositiveNumber);
  c_qte->add_option("--rule", rule_text, "quantile rule: inf or upper");
  c_qte->add_flag("--no-exact-p", no_exact, "skip the randomization p-values");

  // iv
  auto* c_iv = app.add_subcommand("iv", "non-compliance analyses");
  std::string analysis = "late";
  double lo = 0.0, hi = 1.0, floor_fs = 1e-6;
  add_data_flags(c_iv, data);
  add_out_flags(c_iv, outf);
  c_iv->add_option("--analysis", analysis,
                   "late, itt, shares, generalization, manski, balke-pearl, as-treated or per-protocol");
  bool iv_itt = false, iv_late = false, iv_diag = false;
  std::string iv_bounds;
  c_iv->add_flag("--itt", iv_itt, "intention-to-treat effect");
  c_iv->add_flag("--late", iv_late, "Wald estimate of the complier effect");
  c_iv->add_option("--bounds", iv_bounds, "manski or balke-pearl");
  c_iv->add_flag("--diagnostics", iv_diag, "shares, generalization test, as-treated and per-protocol");
  c_iv->add_option("--lo", lo, "outcome lower bound (manski)");
  c_iv->add_option("--hi", hi, "outcome upper bound (manski)");
  c_iv->add_option("--first-stage-floor", floor_fs, "smallest first stage accepted");
  c_iv->add_option("--level", level, "interval level");

  // tree
  auto* c_tree = app.add_subcommand("tree", "honest causal tree");
  TreeOptions topt;
  std::string tree_covs, criterion = "transformed";
  add_data_flags(c_tree, data);
  add_out_flags(c_tree, outf);
  seed_flag(c_tree);
  c_tree->add_option("--min-leaf", topt.min_leaf, "units per arm per leaf in each half");
  c_tree->add_option("--max-depth", topt.max_depth, "depth limit");
  c_tree->add_option("--alpha", topt.split_alpha, "split acceptance level");
  c_tree->add_option("--criterion", criterion, "transformed or emse")->check(CLI::IsMember({"transformed", "emse"}));
  c_tree->add_option("--split-on", tree_covs, "covariates eligible for splits (default: all)");

  // het-test
  auto* c_het = app.add_subcommand("het-test", "test for effect heterogeneity");
  std::string basis_text;
  add_data_flags(c_het, data);
  add_out_flags(c_het, outf);
  c_het->add_option("--basis", basis_text, "indicators:a,b | linear:a,b | spline:a,b")->required();

  // interfere
  auto* c_int = app.add_subcommand("interfere", "exact tests for network interference");
  std::string graph, null_text = "direct", focal_text;
  double focal_frac = 0.3;
  add_data_flags(c_int, data);
  add_out_flags(c_int, outf);
  seed_flag(c_int);
  draw_flags(c_int);
  c_int->add_option("--graph", graph, "edge list, one 'u v' pair per line, 0-indexed")->required();
  c_int->add_option("--null", null_text, "direct or fof");
  c_int->add_option("--focal-frac", focal_frac, "share of units drawn as focal");
  c_int->add_option("--focal", focal_text, "explicit focal units instead of a random draw");

  // repro-paper
  auto* c_repro = app.add_subcommand("repro-paper", "reproduce the Lalonde and power examples");
  std::string fixture;
  add_out_flags(c_repro, outf);
  seed_flag(c_repro);
  c_repro->add_option("--draws", draws, "Monte Carlo draws")->check(CLI::PositiveNumber);
  c_repro->add_option("--reps", reps, "bootstrap replicates")->check(CLI::PositiveNumber);
  c_repro->add_option("--fixture", fixture, "Lalonde fixture (default: bundled)");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    app.exit(e, out, err);
    return Ok;
  } catch (const CLI::CallForAllHelp& e) {
    app.exit(e, out, err);
    return Ok;
  } catch (const CLI::ParseError& e) {
    err << "randix: " << e.what() << "\n" << app.help("", CLI::AppFormatMode::Normal);
    return Usage;
  }

  std::ofstream file;
  if (!outf.out.empty()) {
    file.open(outf.out);
    if (!file) {
      err << "randix: cannot write " << outf.out << "\n";
      return Validation;
    }
  }
  std::ostream& o = outf.out.empty() ? out : file;

  auto rand_opts = [&](std::uint64_t s) {
    RandomizationOptions r;
    r.draws = draws;
    r.seed = s;
    r.enumeration_cap = cap;
    r.force_monte_carlo = monte_carlo;
    return r;
  };

  try {
    if (c_design->parsed()) {
      const auto s = need_seed(seed, "design");
      std::optional<ExperimentTable> table;
      std::optional<Design> design;
      if (n_units) {
        require(n_treated.has_value(), ErrorCode::InvalidArgument, "--n needs --n-treated");
        design = Design::complete(*n_units, *n_treated);
      } else {
        table = load(data);
        design = Design::observed(*table, parse_design_kind(design_kind));
      }
      if (accept_smd) {
        require(table.has_value(), ErrorCode::InvalidArgument, "--accept-smd needs covariates from --data");
        std::vector<std::string> names;
        std::vector<std::vector<double>> cols;
        for (const auto& c : table->covariates()) {
          if (c.is_categorical()) continue;
          names.push_back(c.name);
          cols.push_back(c.values);
        }
        require(!names.empty(), ErrorCode::InvalidArgument, "--accept-smd needs numeric covariates");
        design = Design::rerandomized(*design, AcceptRule::max_abs_smd(names, cols, *accept_smd));
      }
      const auto z = sample_assignment(*design, s);
      AnalysisReport r;
      r.method = "design " + design->name();
      std::size_t nt = 0;
      for (auto v : z) nt += v;
      r.estimate = static_cast<double>(nt);
      r.n_treated = nt;
      r.n_control = z.size() - nt;
      r.seed = s;
      r.draws = 1;
      if (const auto size = support_size(*design, cap)) r.set("support_size", static_cast<double>(*size));
      if (design->kind() == Design::Kind::Rerandomized) {
        r.set("max_abs_smd", design->as<Design::Rerandomized>().accept.max_smd(z));
      }
      if (!assignment_out.empty()) {
        std::ofstream a(assignment_out);
        require(static_cast<bool>(a), ErrorCode::Io, "cannot write " + assignment_out);
        a << "unit,z\n";
        for (std::size_t i = 0; i < z.size(); ++i) a << i << ',' << int(z[i]) << '\n';
      }
      emit(o, outf, {r});
      if (outf.format == "text") {
        o << "  assignment ";
        for (auto v : z) o << int(v);
        o << '\n';
      }
    } else if (c_power->parsed()) {
      const auto p = required_sample_size(pspec);
      AnalysisReport r;
      r.method = "power two-sample normal";
      r.estimate = static_cast<double>(p.n_total);
      r.n_treated = p.n_treated;
      r.n_control = p.n_control;
      r.set("unrounded", p.unrounded);
      r.set("n_treated", static_cast<double>(p.n_treated));
      r.set("n_control", static_cast<double>(p.n_control));
      emit(o, outf, {r});
    } else if (c_test->parsed()) {
      const auto s = need_seed(seed, "test");
      const auto table = load(data);
      const auto design = Design::observed(table, parse_design_kind(design_kind));
      const auto stat = parse_statistic(stat_text, parse_quantile_rule(rule_text));
      const auto opts = rand_opts(s);
      if (stat.kind == Statistic::Kind::Omnibus) {
        std::vector<std::string> names = outcomes_text.empty() ? std::vector<std::string>{} : split_list(outcomes_text);
        if (names.empty()) {
          names.push_back(table.outcome_name());
          for (const auto& e : table.extra_outcomes()) names.push_back(e.name);
        }
        const auto res = omnibus_multiple_outcomes(table, design, names, opts);
        std::vector<AnalysisReport> all{res.omnibus};
        all.insert(all.end(), res.per_outcome.begin(), res.per_outcome.end());
        emit(o, outf, all);
      } else if (want_ci) {
        double glo = 0, ghi = 0;
        if (grid.size() == 2) {
          glo = grid[0];
          ghi = grid[1];
        } else {
          const auto base = ate_complete(table);
          const double w = 6.0 * base.std_error.value_or(1.0);
          glo = base.estimate - w;
          ghi = base.estimate + w;
        }
        const auto ci = invert_test_ci(table, design, stat, level, glo, ghi, grid_points, opts);
        emit(o, outf, {ci.report});
      } else {
        emit(o, outf, {exact_p_value(table, design, stat, SharpNull{null_effect}, opts)});
      }
    } else if (c_est->parsed()) {
      const auto table = load(data);
      NeymanOptions no{level, welch};
      if (!strata_by.empty()) {
        const auto strata = strata_from(table, strata_by);
        std::vector<AnalysisReport> all;
        const auto groups = strata.groups();
        for (std::size_t g = 0; g < groups.size(); ++g) {
          auto r = ate_complete(table.subset(groups[g]), no);
          r.method = "neyman complete " + strata_by + "=" + strata.labels[g];
          all.push_back(r);
        }
        all.push_back(ate_stratified(table, strata, no));
        emit(o, outf, all);
      } else {
        AnalysisReport r;
        switch (parse_design_kind(design_kind)) {
          case Design::Kind::Complete: r = ate_complete(table, no); break;
          case Design::Kind::Stratified: r = ate_stratified(table, no); break;
          case Design::Kind::Paired: r = ate_paired(table, no); break;
          case Design::Kind::Clustered: r = ate_cluster(table, parse_cluster_estimand(estimand), no); break;
          default: fail(ErrorCode::InvalidArgument, "estimate supports complete, stratified, paired, cluster");
        }
        emit(o, outf, {r});
      }
    } else if (c_bal->parsed()) {
      const auto s = need_seed(seed, "balance");
      const auto table = load(data);
      std::vector<std::string> covs;
      if (bal_covs.empty()) {
        for (const auto& c : table.covariates()) covs.push_back(c.name);
      } else {
        covs = split_list(bal_covs);
      }
      const auto design = Design::observed(table, parse_design_kind(design_kind));
      const auto opts = rand_opts(s);
      const auto rows = balance_table(table, covs, design, opts);
      const bool exact = !monte_carlo && support_size(design, cap).has_value();
      std::vector<AnalysisReport> all;
      for (const auto& b : rows) {
        AnalysisReport r;
        r.method = "balance " + b.covariate;
        r.estimate = b.diff;
        r.std_error = b.se;
        r.normal_inference(0.95);
        r.p_exact = b.p_exact;
        r.n_treated = table.n_treated();
        r.n_control = table.n_control();
        r.set("mean_treated", b.mean_t);
        r.set("mean_control", b.mean_c);
        if (!exact) {
          r.seed = s;
          r.draws = draws;
        }
        all.push_back(r);
      }
      emit(o, outf, all);
    } else if (c_reg->parsed()) {
      const auto table = load(data);
      std::optional<VcovKind> kind;
      if (!vcov_text.empty()) kind = parse_vcov(vcov_text);
      if (reg_covs.empty()) reg_covs = data.covariates;
      RegressionFit fit;
      const bool cluster_fit = table.cluster().has_value() &&
                               (parse_cluster_level(cluster_level) == ClusterLevel::Cluster ||
                                parse_cluster_weights(cluster_weights) != ClusterWeights::None);
      if (cluster_fit) {
        require(reg_covs.empty(), ErrorCode::InvalidArgument, "cluster-level regression takes no --adjust");
        fit = ols_cluster(table, parse_cluster_level(cluster_level), parse_cluster_weights(cluster_weights), kind,
                          df_adjust);
      } else if (reg_covs.empty()) {
        fit = ols_treatment(table, kind);
      } else {
        fit = ols_adjusted(table, split_list(reg_covs), interacted, kind);
      }
      auto r = fit.report(kTreatment, level);
      r.n_treated = table.n_treated();
      r.n_control = table.n_control();
      emit(o, outf, {r});
    } else if (c_qte->parsed()) {
      const auto s = need_seed(seed, "qte");
      const auto table = load(data);
      QuantileSpec spec;
      spec.levels = parse_levels(levels_text);
      spec.bootstrap_reps = reps;
      spec.seed = s;
      spec.rule = parse_quantile_rule(rule_text);
      spec.draws = draws;
      spec.exact_p = !no_exact;
      emit(o, outf, qte(table, spec, Design::observed(table, Design::Kind::Complete)));
    } else if (c_iv->parsed()) {
      const auto table = load(data);
      std::vector<std::string> wanted;
      if (iv_itt) wanted.push_back("itt");
      if (iv_late) wanted.push_back("late");
      if (!iv_bounds.empty()) wanted.push_back(iv_bounds);
      if (iv_diag) wanted.insert(wanted.end(), {"shares", "generalization", "as-treated", "per-protocol"});
      if (wanted.empty()) wanted.push_back(analysis);
      std::vector<AnalysisReport> all;
      for (const auto& a : wanted) all.push_back(iv_analysis(table, a, lo, hi, LateOptions{floor_fs, level}));
      emit(o, outf, all);
    } else if (c_tree->parsed()) {
      const auto s = need_seed(seed, "tree");
      const auto table = load(data);
      topt.seed = s;
      topt.criterion = criterion == "emse" ? SplitCriterion::Emse : SplitCriterion::TransformedOutcome;
      if (!tree_covs.empty()) topt.covariates = split_list(tree_covs);
      const auto tree = grow_honest_tree(table, topt);
      const auto strata = tree_to_strata(tree, table);
      if (outf.format == "machine") {
        nlohmann::ordered_json j;
        j["method"] = "honest tree";
        j["seed"] = s;
        j["leaves"] = tree.n_leaves();
        j["tree"] = node_json(tree, 0);
        j["strata"] = report_json(strata.report);
        o << j.dump(2) << '\n';
      } else {
        o << tree.to_text();
        write_text(o, strata.report);
      }
    } else if (c_het->parsed()) {
      const auto table = load(data);
      emit(o, outf, {test_heterogeneity(table, BasisSpec::parse(basis_text)).report()});
    } else if (c_int->parsed()) {
      const auto s = need_seed(seed, "interfere");
      const auto table = load(data);
      const auto g = Network::read_edge_list(graph, table.n_units());
      const auto null = parse_interference_null(null_text);
      const bool buffer = null == InterferenceNull::NoFriendsOfFriends;
      const auto exp = focal_text.empty() ? select_focal(g, focal_frac, s, buffer)
                                          : make_experiment(g, parse_units(focal_text), buffer);
      InterferenceOptions io;
      io.draws = draws;
      io.seed = s;
      io.enumeration_cap = cap;
      io.force_monte_carlo = monte_carlo;
      auto r = interference_test(table, g, exp, null, io);
      r.seed = s;
      emit(o, outf, {r});
    } else if (c_repro->parsed()) {
      const auto s = need_seed(seed, "repro-paper");
      const auto table = load_lalonde(fixture.empty() ? bundled_lalonde_path() : std::filesystem::path(fixture));
      const auto rows = reproduce_all(table, ReproOptions{s, draws, reps});
      bool ok = true;
      if (outf.format == "machine") {
        std::vector<AnalysisReport> all;
        for (const auto& row : rows) {
          AnalysisReport r;
          r.method = "repro " + row.name + (row.kind == ReproRow::Kind::Info ? " info" : row.pass ? " pass" : " fail");
          r.estimate = row.actual;
          r.seed = s;
          r.draws = draws;
          all.push_back(r);
        }
        write_machine(o, all);
      } else {
        write_repro_table(o, rows);
      }
      for (const auto& row : rows) ok = ok && row.pass;
      return ok ? Ok : NumericalFailure;
    }
  } catch (const Error& e) {
    err << "randix: " << e.what() << "\n";
    return is_numerical(e.code()) ? NumericalFailure : Validation;
  }
  return Ok;
}

}  // namespace randix::cli
