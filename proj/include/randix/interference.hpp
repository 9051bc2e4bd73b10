#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <utility>
#include <vector>

#include "randix/design.hpp"
#include "randix/parallel.hpp"
#include "randix/report.hpp"
#include "randix/table.hpp"

namespace randix {

/// Undirected simple graph stored as sorted adjacency lists.
class Network {
 public:
  explicit Network(std::size_t n_units = 0) : adj_(n_units) {}

  static Network from_edges(std::size_t n_units, std::span<const std::pair<std::size_t, std::size_t>> edges);
  /// "u v" per line, 0-indexed; '#' comments and blank lines skipped. The unit
  /// count defaults to one past the largest id.
  static Network read_edge_list(const std::filesystem::path& path, std::size_t n_units = 0);

  /// Self-loops are rejected; repeated edges are ignored.
  void add_edge(std::size_t u, std::size_t v);

  std::size_t n_units() const { return adj_.size(); }
  std::size_t n_edges() const;
  const std::vector<std::size_t>& neighbors(std::size_t i) const { return adj_[i]; }
  bool adjacent(std::size_t u, std::size_t v) const;
  /// Units at graph distance exactly 2.
  std::vector<std::size_t> second_neighbors(std::size_t i) const;

 private:
  std::vector<std::vector<std::size_t>> adj_;
};

/// (Σ_j G_ij z_j) / max(1, Σ_j G_ij); isolated units get 0 and are flagged.
std::vector<double> treated_friend_fraction(const Network& g, std::span<const std::uint8_t> z,
                                            std::vector<std::uint8_t>* isolated = nullptr);

enum class InterferenceNull { NoInterference, NoFriendsOfFriends };
InterferenceNull parse_interference_null(const std::string& text);

struct ArtificialExperiment {
  enum Role : std::uint8_t { Auxiliary = 0, Focal = 1, Buffer = 2 };
  std::vector<std::size_t> focal;
  std::vector<std::size_t> buffer;
  std::vector<std::size_t> auxiliary;
  std::vector<std::uint8_t> role;  // per unit
};

/// Focal set from explicit units; buffer = neighbours of focal units when requested.
ArtificialExperiment make_experiment(const Network& g, std::vector<std::size_t> focal, bool with_buffer);

/// Uniformly random focal set of round(fraction·N) units.
ArtificialExperiment select_focal(const Network& g, double fraction, std::uint64_t seed, bool with_buffer);

/// Custom score: (network, experiment, outcomes, assignment) -> statistic; compared in absolute value.
using InterferenceStatistic = std::function<double(const Network&, const ArtificialExperiment&,
                                                   std::span<const double>, std::span<const std::uint8_t>)>;

struct InterferenceOptions {
  std::uint64_t draws = 10000;
  std::uint64_t seed = 0;
  std::uint64_t enumeration_cap = kDefaultEnumerationCap;
  bool force_monte_carlo = false;
  InterferenceStatistic statistic;  // empty: default correlation statistic
  Exec exec;
};

/// Default statistic: |corr| over focal units between the outcome and the
/// treated share of their distance-1 (no interference) or distance-2 (FoF) units.
double exposure_correlation(const Network& g, const ArtificialExperiment& exp, InterferenceNull null,
                            std::span<const double> y, std::span<const std::uint8_t> z);

/// Re-randomizes auxiliary units with their treated count held at its observed
/// value; focal (and buffer) assignments stay pinned.
AnalysisReport interference_test(const ExperimentTable& table, const Network& g, const ArtificialExperiment& exp,
                                 InterferenceNull null, const InterferenceOptions& opts);

}  // namespace randix
