#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "randix/rng.hpp"
#include "randix/table.hpp"

namespace randix {

inline constexpr std::uint64_t kDefaultEnumerationCap = 1'000'000;
inline constexpr std::uint64_t kDefaultRejectionCap = 1'000'000;

/// Re-randomization acceptance predicate. Two forms only, so the accepted set
/// stays enumerable: a max |standardized mean difference| bound per covariate,
/// or exact treated counts per label.
class AcceptRule {
 public:
  enum class Kind { MaxAbsSmd, ExactCounts };

  /// SMD_k = (mean_t − mean_c) / sd_k with sd_k the full-sample standard
  /// deviation (fixed across assignments). Constant columns never reject.
  static AcceptRule max_abs_smd(std::vector<std::string> names, std::vector<std::vector<double>> columns,
                                double threshold);
  static AcceptRule exact_counts(Categorical labels, std::vector<std::size_t> treated_per_level);

  Kind kind() const { return kind_; }
  bool accepts(std::span<const std::uint8_t> z) const;
  /// Largest |SMD| over covariates (MaxAbsSmd only).
  double max_smd(std::span<const std::uint8_t> z) const;
  std::string describe() const;

 private:
  Kind kind_ = Kind::MaxAbsSmd;
  std::vector<std::string> names_;
  std::vector<std::vector<double>> columns_;
  std::vector<double> sd_;
  double threshold_ = 0.0;
  Categorical labels_;
  std::vector<std::size_t> counts_;
};

class Design {
 public:
  enum class Kind { Complete, Stratified, Paired, Clustered, Rerandomized };

  struct Complete {
    std::size_t n_units;
    std::size_t n_treated;
  };
  struct Stratified {
    Categorical strata;
    std::vector<std::size_t> n_treated;  // per level
  };
  struct Paired {
    Categorical pairs;
  };
  struct Clustered {
    Categorical clusters;
    std::size_t n_treated_clusters;
  };
  struct Rerandomized {
    std::shared_ptr<const Design> base;
    AcceptRule accept;
  };

  static Design complete(std::size_t n_units, std::size_t n_treated);
  static Design stratified(Categorical strata, std::vector<std::size_t> n_treated);
  static Design paired(Categorical pairs);
  static Design clustered(Categorical clusters, std::size_t n_treated_clusters);
  static Design rerandomized(Design base, AcceptRule accept);

  /// The design of the given kind that could have produced the table's
  /// assignment, with counts taken from the observed z.
  static Design observed(const ExperimentTable& table, Kind kind);

  Kind kind() const { return static_cast<Kind>(spec_.index()); }
  std::size_t n_units() const;
  std::string name() const;

  /// True when z lies in the support (ignores probability).
  bool contains(std::span<const std::uint8_t> z) const;

  template <class T>
  const T& as() const {
    return std::get<T>(spec_);
  }

 private:
  using Spec = std::variant<Complete, Stratified, Paired, Clustered, Rerandomized>;
  explicit Design(Spec spec) : spec_(std::move(spec)) {}
  Spec spec_;
};

Design::Kind parse_design_kind(const std::string& text);
const char* to_string(Design::Kind kind);

/// Reusable draw workspace. Each draw resets its scratch state, so draw k
/// depends only on the stream it is handed.
class Sampler {
 public:
  explicit Sampler(const Design& design, std::uint64_t rejection_cap = kDefaultRejectionCap);
  void draw(Stream& rng, Assignment& z);

 private:
  void draw_base(const Design& d, Stream& rng, Assignment& z);

  const Design* design_;
  std::uint64_t rejection_cap_;
  std::vector<std::size_t> scratch_;
};

Assignment sample_assignment(const Design& design, std::uint64_t seed, std::uint64_t index = 0,
                             std::uint64_t rejection_cap = kDefaultRejectionCap);

/// Random-access view of a finite support: at(k) writes the k-th assignment.
/// Every supported design is uniform over its support.
class SupportIndexer {
 public:
  SupportIndexer(const Design& design, std::uint64_t cap = kDefaultEnumerationCap);

  std::uint64_t size() const { return size_; }
  double probability() const { return 1.0 / static_cast<double>(size_); }
  void at(std::uint64_t k, Assignment& z) const;

 private:
  struct Block {
    std::vector<std::size_t> members;  // units (or clusters) of this block
    std::size_t n_treated;
    std::uint64_t count;
    std::vector<std::vector<std::uint64_t>> binom;  // binom[m][j] = C(m, j), saturating
  };
  void unrank(const Block& b, std::uint64_t r, std::vector<std::size_t>& chosen) const;

  Design::Kind kind_;
  std::size_t n_units_ = 0;
  std::uint64_t size_ = 0;
  std::vector<Block> blocks_;
  std::vector<std::vector<std::size_t>> pair_members_;
  std::vector<std::vector<std::size_t>> cluster_members_;
  std::vector<Assignment> materialized_;
};

/// Number of assignments in the support, or nullopt if it exceeds cap.
std::optional<std::uint64_t> support_size(const Design& design, std::uint64_t cap = kDefaultEnumerationCap);

std::vector<std::pair<Assignment, double>> enumerate_support(const Design& design,
                                                             std::uint64_t cap = kDefaultEnumerationCap);

/// Saturating binomial coefficient.
std::uint64_t binomial(std::uint64_t n, std::uint64_t k);

}  // namespace randix
