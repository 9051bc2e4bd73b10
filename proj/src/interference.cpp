#include "randix/interference.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "randix/error.hpp"
#include "randix/rng.hpp"

namespace randix {

Network Network::from_edges(std::size_t n_units, std::span<const std::pair<std::size_t, std::size_t>> edges) {
  Network g(n_units);
  for (const auto& [u, v] : edges) g.add_edge(u, v);
  return g;
}

Network Network::read_edge_list(const std::filesystem::path& path, std::size_t n_units) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorCode::Io, "cannot open edge list '" + path.string() + "'");
  std::vector<std::pair<std::size_t, std::size_t>> edges;
  std::string line;
  std::size_t lineno = 0, top = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream ss(line);
    long long u = 0, v = 0;
    if (!(ss >> u)) continue;
    require(static_cast<bool>(ss >> v) && u >= 0 && v >= 0, ErrorCode::InvalidArgument,
            path.string() + ":" + std::to_string(lineno) + ": expected two non-negative unit ids");
    edges.emplace_back(static_cast<std::size_t>(u), static_cast<std::size_t>(v));
    top = std::max({top, static_cast<std::size_t>(u) + 1, static_cast<std::size_t>(v) + 1});
  }
  if (n_units == 0) n_units = top;
  require(top <= n_units, ErrorCode::OutOfRange, "edge list references unit " + std::to_string(top - 1) +
                                                     " but the table has " + std::to_string(n_units) + " units");
  return from_edges(n_units, edges);
}

void Network::add_edge(std::size_t u, std::size_t v) {
  require(u < adj_.size() && v < adj_.size(), ErrorCode::OutOfRange, "edge endpoint out of range");
  require(u != v, ErrorCode::InvalidArgument, "self-loop at unit " + std::to_string(u));
  auto insert = [](std::vector<std::size_t>& list, std::size_t x) {
    const auto it = std::lower_bound(list.begin(), list.end(), x);
    if (it == list.end() || *it != x) list.insert(it, x);
  };
  insert(adj_[u], v);
  insert(adj_[v], u);
}

std::size_t Network::n_edges() const {
  std::size_t s = 0;
  for (const auto& a : adj_) s += a.size();
  return s / 2;
}

bool Network::adjacent(std::size_t u, std::size_t v) const {
  return std::binary_search(adj_[u].begin(), adj_[u].end(), v);
}

std::vector<std::size_t> Network::second_neighbors(std::size_t i) const {
  std::vector<std::size_t> out;
  for (auto j : adj_[i]) {
    for (auto k : adj_[j]) {
      if (k != i && !adjacent(i, k)) out.push_back(k);
    }
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

std::vector<double> treated_friend_fraction(const Network& g, std::span<const std::uint8_t> z,
                                            std::vector<std::uint8_t>* isolated) {
  require(z.size() == g.n_units(), ErrorCode::LengthMismatch, "assignment length differs from network size");
  std::vector<double> out(g.n_units(), 0.0);
  if (isolated) isolated->assign(g.n_units(), 0);
  for (std::size_t i = 0; i < g.n_units(); ++i) {
    const auto& nb = g.neighbors(i);
    if (nb.empty()) {
      if (isolated) (*isolated)[i] = 1;
      continue;
    }
    double t = 0.0;
    for (auto j : nb) t += z[j];
    out[i] = t / static_cast<double>(nb.size());
  }
  return out;
}

InterferenceNull parse_interference_null(const std::string& text) {
  if (text == "direct" || text == "no_interference") return InterferenceNull::NoInterference;
  if (text == "fof" || text == "no_friends_of_friends") return InterferenceNull::NoFriendsOfFriends;
  fail(ErrorCode::InvalidArgument, "unknown null '" + text + "' (expected direct or fof)");
}

ArtificialExperiment make_experiment(const Network& g, std::vector<std::size_t> focal, bool with_buffer) {
  const auto n = g.n_units();
  ArtificialExperiment e;
  e.role.assign(n, ArtificialExperiment::Auxiliary);
  std::sort(focal.begin(), focal.end());
  focal.erase(std::unique(focal.begin(), focal.end()), focal.end());
  require(!focal.empty(), ErrorCode::InvalidArgument, "focal set is empty");
  for (auto f : focal) {
    require(f < n, ErrorCode::OutOfRange, "focal unit out of range");
    e.role[f] = ArtificialExperiment::Focal;
  }
  if (with_buffer) {
    for (auto f : focal) {
      for (auto j : g.neighbors(f)) {
        if (e.role[j] == ArtificialExperiment::Auxiliary) e.role[j] = ArtificialExperiment::Buffer;
      }
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    switch (e.role[i]) {
      case ArtificialExperiment::Focal: e.focal.push_back(i); break;
      case ArtificialExperiment::Buffer: e.buffer.push_back(i); break;
      default: e.auxiliary.push_back(i);
    }
  }
  require(!e.auxiliary.empty(), ErrorCode::InsufficientUnits,
          "auxiliary set is empty: focal units and their buffer cover the whole network");
  return e;
}

ArtificialExperiment select_focal(const Network& g, double fraction, std::uint64_t seed, bool with_buffer) {
  require(fraction > 0.0 && fraction < 1.0, ErrorCode::OutOfRange, "focal fraction must lie in (0,1)");
  const auto n = g.n_units();
  const auto k = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
  require(k >= 1 && k < n, ErrorCode::InsufficientUnits, "focal fraction selects no units or all units");
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  Stream rng(seed, streams::focal, 0);
  for (std::size_t i = 0; i < k; ++i) std::swap(idx[i], idx[i + rng.below(n - i)]);
  idx.resize(k);
  return make_experiment(g, std::move(idx), with_buffer);
}

namespace {

// For each focal unit, the units whose treated share forms its exposure.
std::vector<std::vector<std::size_t>> exposure_sets(const Network& g, const ArtificialExperiment& exp,
                                                    InterferenceNull null) {
  std::vector<std::vector<std::size_t>> sets;
  for (auto f : exp.focal) {
    sets.push_back(null == InterferenceNull::NoInterference ? g.neighbors(f) : g.second_neighbors(f));
  }
  return sets;
}

double abs_corr(std::span<const double> a, std::span<const double> b) {
  const auto n = static_cast<double>(a.size());
  if (a.size() < 2) return 0.0;
  double ma = 0, mb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= n;
  mb /= n;
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  if (saa <= 0.0 || sbb <= 0.0) return 0.0;
  return std::fabs(sab / std::sqrt(saa * sbb));
}

struct CorrelationStat {
  std::vector<std::vector<std::size_t>> sets;
  std::vector<double> y_focal;

  double operator()(std::span<const std::uint8_t> z, std::vector<double>& exposure) const {
    exposure.resize(sets.size());
    for (std::size_t f = 0; f < sets.size(); ++f) {
      double t = 0.0;
      for (auto j : sets[f]) t += z[j];
      exposure[f] = sets[f].empty() ? 0.0 : t / static_cast<double>(sets[f].size());
    }
    return abs_corr(y_focal, exposure);
  }
};

}  // namespace

double exposure_correlation(const Network& g, const ArtificialExperiment& exp, InterferenceNull null,
                            std::span<const double> y, std::span<const std::uint8_t> z) {
  CorrelationStat s{exposure_sets(g, exp, null), {}};
  for (auto f : exp.focal) s.y_focal.push_back(y[f]);
  std::vector<double> ws;
  return s(z, ws);
}

AnalysisReport interference_test(const ExperimentTable& table, const Network& g, const ArtificialExperiment& exp,
                                 InterferenceNull null, const InterferenceOptions& opts) {
  const auto n = table.n_units();
  require(g.n_units() == n, ErrorCode::LengthMismatch,
          "network has " + std::to_string(g.n_units()) + " units, table has " + std::to_string(n));
  require(exp.role.size() == n, ErrorCode::LengthMismatch, "experiment labels do not match the table");
  if (null == InterferenceNull::NoFriendsOfFriends) {
    for (auto f : exp.focal) {
      for (auto j : g.neighbors(f)) {
        require(exp.role[j] != ArtificialExperiment::Auxiliary, ErrorCode::InvalidArgument,
                "friends-of-friends null needs every neighbour of a focal unit in the buffer");
      }
    }
  }
  require(!exp.auxiliary.empty(), ErrorCode::InsufficientUnits, "auxiliary set is empty");

  const auto z_obs = table.z();
  const auto y = table.outcome();
  const auto& aux = exp.auxiliary;
  const std::size_t a = aux.size();
  std::size_t k = 0;
  for (auto i : aux) k += z_obs[i];

  CorrelationStat corr{exposure_sets(g, exp, null), {}};
  for (auto f : exp.focal) corr.y_focal.push_back(y[f]);
  auto evaluate = [&](std::span<const std::uint8_t> z, std::vector<double>& ws) {
    return opts.statistic ? opts.statistic(g, exp, y, z) : corr(z, ws);
  };
  std::vector<double> ws;
  const double t_obs = evaluate(z_obs, ws);

  // Auxiliary reference law: all C(a, k) placements of the observed treated count.
  std::optional<SupportIndexer> indexer;
  std::optional<Design> aux_design;
  if (k > 0 && k < a) {
    aux_design = Design::complete(a, k);
    if (!opts.force_monte_carlo) {
      try {
        indexer.emplace(*aux_design, opts.enumeration_cap);
      } catch (const Error& e) {
        if (e.code() != ErrorCode::SupportTooLarge) throw;
      }
    }
  }

  AnalysisReport r;
  r.method = std::string("interference ") + (null == InterferenceNull::NoInterference ? "no_interference" : "fof");
  r.estimate = t_obs;
  r.n_treated = table.n_treated();
  r.n_control = table.n_control();
  r.set("focal", static_cast<double>(exp.focal.size()));
  r.set("buffer", static_cast<double>(exp.buffer.size()));
  r.set("auxiliary", static_cast<double>(a));
  r.set("auxiliary_treated", static_cast<double>(k));

  if (!aux_design) {
    r.p_exact = 1.0;
    r.set("support_size", 1.0);
    r.set("degenerate", 1.0);
    r.note("degenerate: the auxiliary assignment is fixed (all treated or all control)");
    return r;
  }

  const bool exact = indexer.has_value();
  const std::uint64_t draws = exact ? indexer->size() : opts.draws;
  require(draws > 0, ErrorCode::InvalidArgument, "need at least one randomization draw");
  struct Workspace {
    Sampler sampler;
    Assignment sub;
    Assignment z;
    std::vector<double> exposure;
  };
  std::vector<double> slots(draws);
  const Assignment pinned(z_obs.begin(), z_obs.end());
  kernels::for_each_draw(
      draws, opts.exec, [&] { return Workspace{Sampler(*aux_design), {}, pinned, {}}; },
      [&](std::size_t d, Workspace& w) {
        if (exact) {
          indexer->at(d, w.sub);
        } else {
          Stream rng(opts.seed, streams::assignment, d);
          w.sampler.draw(rng, w.sub);
        }
        for (std::size_t j = 0; j < a; ++j) w.z[aux[j]] = w.sub[j];
        for (auto f : exp.focal) require(w.z[f] == z_obs[f], ErrorCode::Numerical, "focal assignment altered");
        for (auto b : exp.buffer) require(w.z[b] == z_obs[b], ErrorCode::Numerical, "buffer assignment altered");
        slots[d] = evaluate(w.z, w.exposure);
      });

  const double tol = 1e-11 * (1.0 + std::fabs(t_obs));
  std::uint64_t count = 0;
  bool degenerate = true;
  for (double t : slots) {
    if (std::fabs(t) >= std::fabs(t_obs) - tol) ++count;
    if (std::fabs(t - slots.front()) > tol) degenerate = false;
  }
  if (degenerate) {
    r.p_exact = 1.0;
    r.note("degenerate statistic: constant over the reference set");
  } else if (exact) {
    r.p_exact = static_cast<double>(count) / static_cast<double>(draws);
  } else {
    r.p_exact = static_cast<double>(count + 1) / static_cast<double>(draws + 1);
  }
  r.set("degenerate", degenerate ? 1.0 : 0.0);
  if (exact) {
    r.set("support_size", static_cast<double>(draws));
    r.method += " enumeration";
  } else {
    r.seed = opts.seed;
    r.draws = draws;
    r.method += " monte-carlo";
  }
  return r;
}

}  // namespace randix
