#include "randix/design.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "randix/error.hpp"

namespace randix {

__extension__ typedef unsigned __int128 u128;
namespace {

constexpr std::uint64_t kSaturated = std::numeric_limits<std::uint64_t>::max();

std::uint64_t sat_mul(std::uint64_t a, std::uint64_t b) {
  const u128 p = static_cast<u128>(a) * b;
  return p > kSaturated ? kSaturated : static_cast<std::uint64_t>(p);
}

std::vector<std::size_t> level_counts(const Categorical& c) {
  std::vector<std::size_t> out(c.n_levels(), 0);
  for (int code : c.codes) ++out[static_cast<std::size_t>(code)];
  return out;
}

std::vector<std::size_t> treated_counts(const Categorical& c, std::span<const std::uint8_t> z) {
  std::vector<std::size_t> out(c.n_levels(), 0);
  for (std::size_t i = 0; i < z.size(); ++i) out[static_cast<std::size_t>(c.codes[i])] += z[i];
  return out;
}

// Partial Fisher-Yates: marks k uniformly chosen entries of `pool` as treated.
void choose(std::vector<std::size_t>& pool, std::size_t k, Stream& rng, Assignment& z) {
  const std::size_t n = pool.size();
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t j = i + rng.below(n - i);
    std::swap(pool[i], pool[j]);
    z[pool[i]] = 1;
  }
}

std::string too_large(std::uint64_t size, std::uint64_t cap) {
  const std::string count = size == kSaturated ? "more than 1.8e19" : std::to_string(size);
  return "support has " + count + " assignments (cap " + std::to_string(cap) +
         "); use Monte Carlo draws instead of enumeration";
}

}  // namespace

std::uint64_t binomial(std::uint64_t n, std::uint64_t k) {
  if (k > n) return 0;
  k = std::min(k, n - k);
  u128 c = 1;
  for (std::uint64_t i = 0; i < k; ++i) {
    c = c * (n - i) / (i + 1);
    if (c > kSaturated) return kSaturated;
  }
  return static_cast<std::uint64_t>(c);
}

// ---------------------------------------------------------------------------
// AcceptRule

AcceptRule AcceptRule::max_abs_smd(std::vector<std::string> names, std::vector<std::vector<double>> columns,
                                   double threshold) {
  require(names.size() == columns.size(), ErrorCode::LengthMismatch, "covariate names and columns differ in count");
  require(!columns.empty(), ErrorCode::InvalidArgument, "balance rule needs at least one covariate");
  require(threshold >= 0.0, ErrorCode::InvalidArgument, "balance threshold must be non-negative");
  AcceptRule r;
  r.kind_ = Kind::MaxAbsSmd;
  r.threshold_ = threshold;
  for (const auto& col : columns) {
    require(col.size() == columns.front().size(), ErrorCode::LengthMismatch, "balance covariates differ in length");
    const double m = std::accumulate(col.begin(), col.end(), 0.0) / static_cast<double>(col.size());
    double ss = 0.0;
    for (double v : col) ss += (v - m) * (v - m);
    r.sd_.push_back(col.size() > 1 ? std::sqrt(ss / static_cast<double>(col.size() - 1)) : 0.0);
  }
  r.names_ = std::move(names);
  r.columns_ = std::move(columns);
  return r;
}

AcceptRule AcceptRule::exact_counts(Categorical labels, std::vector<std::size_t> treated_per_level) {
  require(treated_per_level.size() == labels.n_levels(), ErrorCode::LengthMismatch,
          "exact-count rule needs one count per label");
  AcceptRule r;
  r.kind_ = Kind::ExactCounts;
  r.labels_ = std::move(labels);
  r.counts_ = std::move(treated_per_level);
  return r;
}

double AcceptRule::max_smd(std::span<const std::uint8_t> z) const {
  double worst = 0.0;
  for (std::size_t k = 0; k < columns_.size(); ++k) {
    if (sd_[k] == 0.0) continue;
    const auto& col = columns_[k];
    require(col.size() == z.size(), ErrorCode::LengthMismatch, "assignment length differs from balance covariates");
    double st = 0.0, sc = 0.0;
    std::size_t nt = 0;
    for (std::size_t i = 0; i < z.size(); ++i) {
      if (z[i]) {
        st += col[i];
        ++nt;
      } else {
        sc += col[i];
      }
    }
    const std::size_t nc = z.size() - nt;
    if (nt == 0 || nc == 0) return std::numeric_limits<double>::infinity();
    const double smd = (st / static_cast<double>(nt) - sc / static_cast<double>(nc)) / sd_[k];
    worst = std::max(worst, std::fabs(smd));
  }
  return worst;
}

bool AcceptRule::accepts(std::span<const std::uint8_t> z) const {
  if (kind_ == Kind::MaxAbsSmd) return max_smd(z) <= threshold_;
  require(z.size() == labels_.size(), ErrorCode::LengthMismatch, "assignment length differs from rule labels");
  return treated_counts(labels_, z) == counts_;
}

std::string AcceptRule::describe() const {
  if (kind_ == Kind::ExactCounts) return "exact treated counts per label";
  std::string s = "max |smd| <= " + std::to_string(threshold_) + " over";
  for (const auto& n : names_) s += " " + n;
  return s;
}

// ---------------------------------------------------------------------------
// Design

Design Design::complete(std::size_t n_units, std::size_t n_treated) {
  require(n_treated > 0 && n_treated < n_units, ErrorCode::InvalidArgument,
          "complete design needs 0 < n_treated < N (got " + std::to_string(n_treated) + " of " +
              std::to_string(n_units) + ")");
  return Design(Complete{n_units, n_treated});
}

Design Design::stratified(Categorical strata, std::vector<std::size_t> n_treated) {
  require(n_treated.size() == strata.n_levels(), ErrorCode::LengthMismatch,
          "stratified design needs one treated count per stratum");
  const auto sizes = level_counts(strata);
  for (std::size_t g = 0; g < sizes.size(); ++g) {
    require(n_treated[g] > 0 && n_treated[g] < sizes[g], ErrorCode::InvalidArgument,
            "stratum '" + strata.labels[g] + "' needs 0 < n_treated < N_g (got " + std::to_string(n_treated[g]) +
                " of " + std::to_string(sizes[g]) + ")");
  }
  return Design(Stratified{std::move(strata), std::move(n_treated)});
}

Design Design::paired(Categorical pairs) {
  const auto sizes = level_counts(pairs);
  for (std::size_t g = 0; g < sizes.size(); ++g) {
    require(sizes[g] == 2, ErrorCode::MalformedPair,
            "pair '" + pairs.labels[g] + "' has " + std::to_string(sizes[g]) + " units (expected 2)");
  }
  require(!sizes.empty(), ErrorCode::InsufficientUnits, "paired design has no pairs");
  return Design(Paired{std::move(pairs)});
}

Design Design::clustered(Categorical clusters, std::size_t n_treated_clusters) {
  require(n_treated_clusters > 0 && n_treated_clusters < clusters.n_levels(), ErrorCode::InvalidArgument,
          "clustered design needs 0 < G_t < G (got " + std::to_string(n_treated_clusters) + " of " +
              std::to_string(clusters.n_levels()) + ")");
  return Design(Clustered{std::move(clusters), n_treated_clusters});
}

Design Design::rerandomized(Design base, AcceptRule accept) {
  require(base.kind() != Kind::Rerandomized, ErrorCode::InvalidArgument, "nested re-randomization is not supported");
  return Design(Rerandomized{std::make_shared<const Design>(std::move(base)), std::move(accept)});
}

Design Design::observed(const ExperimentTable& table, Kind kind) {
  switch (kind) {
    case Kind::Complete:
      return complete(table.n_units(), table.n_treated());
    case Kind::Stratified: {
      require(table.stratum().has_value(), ErrorCode::MissingColumn, "stratified design needs a stratum column");
      return stratified(*table.stratum(), treated_counts(*table.stratum(), table.z()));
    }
    case Kind::Paired:
      require(table.pair().has_value(), ErrorCode::MissingColumn, "paired design needs a pair column");
      return paired(*table.pair());
    case Kind::Clustered: {
      require(table.cluster().has_value(), ErrorCode::MissingColumn, "clustered design needs a cluster column");
      const auto t = treated_counts(*table.cluster(), table.z());
      const auto gt = static_cast<std::size_t>(std::count_if(t.begin(), t.end(), [](std::size_t v) { return v > 0; }));
      return clustered(*table.cluster(), gt);
    }
    case Kind::Rerandomized:
      break;
  }
  fail(ErrorCode::InvalidArgument, "a re-randomized design needs an explicit acceptance rule");
}

std::size_t Design::n_units() const {
  switch (kind()) {
    case Kind::Complete: return as<Complete>().n_units;
    case Kind::Stratified: return as<Stratified>().strata.size();
    case Kind::Paired: return as<Paired>().pairs.size();
    case Kind::Clustered: return as<Clustered>().clusters.size();
    case Kind::Rerandomized: return as<Rerandomized>().base->n_units();
  }
  return 0;
}

std::string Design::name() const {
  if (kind() == Kind::Rerandomized) return std::string("rerandomized(") + as<Rerandomized>().base->name() + ")";
  return to_string(kind());
}

bool Design::contains(std::span<const std::uint8_t> z) const {
  if (z.size() != n_units()) return false;
  switch (kind()) {
    case Kind::Complete:
      return static_cast<std::size_t>(std::count(z.begin(), z.end(), std::uint8_t{1})) == as<Complete>().n_treated;
    case Kind::Stratified: {
      const auto& s = as<Stratified>();
      return treated_counts(s.strata, z) == s.n_treated;
    }
    case Kind::Paired: {
      const auto t = treated_counts(as<Paired>().pairs, z);
      return std::all_of(t.begin(), t.end(), [](std::size_t v) { return v == 1; });
    }
    case Kind::Clustered: {
      const auto& c = as<Clustered>();
      const auto t = treated_counts(c.clusters, z);
      const auto sizes = level_counts(c.clusters);
      std::size_t gt = 0;
      for (std::size_t g = 0; g < t.size(); ++g) {
        if (t[g] != 0 && t[g] != sizes[g]) return false;
        gt += t[g] ? 1 : 0;
      }
      return gt == c.n_treated_clusters;
    }
    case Kind::Rerandomized: {
      const auto& r = as<Rerandomized>();
      return r.base->contains(z) && r.accept.accepts(z);
    }
  }
  return false;
}

Design::Kind parse_design_kind(const std::string& text) {
  if (text == "complete") return Design::Kind::Complete;
  if (text == "stratified") return Design::Kind::Stratified;
  if (text == "paired") return Design::Kind::Paired;
  if (text == "clustered" || text == "cluster") return Design::Kind::Clustered;
  if (text == "rerandomized") return Design::Kind::Rerandomized;
  fail(ErrorCode::InvalidArgument, "unknown design kind '" + text + "'");
}

const char* to_string(Design::Kind kind) {
  switch (kind) {
    case Design::Kind::Complete: return "complete";
    case Design::Kind::Stratified: return "stratified";
    case Design::Kind::Paired: return "paired";
    case Design::Kind::Clustered: return "clustered";
    case Design::Kind::Rerandomized: return "rerandomized";
  }
  return "unknown";
}

// ---------------------------------------------------------------------------
// Sampling

Sampler::Sampler(const Design& design, std::uint64_t rejection_cap)
    : design_(&design), rejection_cap_(rejection_cap) {
  require(rejection_cap > 0, ErrorCode::InvalidArgument, "rejection cap must be positive");
}

void Sampler::draw_base(const Design& d, Stream& rng, Assignment& z) {
  z.assign(d.n_units(), 0);
  switch (d.kind()) {
    case Design::Kind::Complete: {
      const auto& c = d.as<Design::Complete>();
      scratch_.resize(c.n_units);
      std::iota(scratch_.begin(), scratch_.end(), std::size_t{0});
      choose(scratch_, c.n_treated, rng, z);
      break;
    }
    case Design::Kind::Stratified: {
      const auto& s = d.as<Design::Stratified>();
      for (std::size_t g = 0; g < s.strata.n_levels(); ++g) {
        scratch_.clear();
        for (std::size_t i = 0; i < s.strata.size(); ++i) {
          if (static_cast<std::size_t>(s.strata.codes[i]) == g) scratch_.push_back(i);
        }
        choose(scratch_, s.n_treated[g], rng, z);
      }
      break;
    }
    case Design::Kind::Paired: {
      const auto& p = d.as<Design::Paired>();
      // first[g] = lower-indexed member of pair g; the coin decides which member is treated.
      std::vector<int> seen(p.pairs.n_levels(), -1);
      std::vector<std::uint8_t> coin(p.pairs.n_levels());
      for (auto& c : coin) c = static_cast<std::uint8_t>(rng.next() >> 63);
      for (std::size_t i = 0; i < p.pairs.size(); ++i) {
        const auto g = static_cast<std::size_t>(p.pairs.codes[i]);
        const bool first = seen[g] < 0;
        seen[g] = 1;
        z[i] = (first ? coin[g] : 1 - coin[g]);
      }
      break;
    }
    case Design::Kind::Clustered: {
      const auto& c = d.as<Design::Clustered>();
      const std::size_t g = c.clusters.n_levels();
      scratch_.resize(g);
      std::iota(scratch_.begin(), scratch_.end(), std::size_t{0});
      Assignment chosen(g, 0);
      choose(scratch_, c.n_treated_clusters, rng, chosen);
      for (std::size_t i = 0; i < z.size(); ++i) z[i] = chosen[static_cast<std::size_t>(c.clusters.codes[i])];
      break;
    }
    case Design::Kind::Rerandomized:
      fail(ErrorCode::InvalidArgument, "nested re-randomization is not supported");
  }
}

void Sampler::draw(Stream& rng, Assignment& z) {
  if (design_->kind() != Design::Kind::Rerandomized) {
    draw_base(*design_, rng, z);
    return;
  }
  const auto& r = design_->as<Design::Rerandomized>();
  for (std::uint64_t attempt = 0; attempt < rejection_cap_; ++attempt) {
    draw_base(*r.base, rng, z);
    if (r.accept.accepts(z)) return;
  }
  fail(ErrorCode::EmptyAcceptanceSet, "no accepted assignment after " + std::to_string(rejection_cap_) +
                                          " attempts; the acceptance set is empty or too small (" +
                                          r.accept.describe() + ")");
}

Assignment sample_assignment(const Design& design, std::uint64_t seed, std::uint64_t index,
                             std::uint64_t rejection_cap) {
  Sampler sampler(design, rejection_cap);
  Stream rng(seed, streams::assignment, index);
  Assignment z;
  sampler.draw(rng, z);
  return z;
}

// ---------------------------------------------------------------------------
// Enumeration

SupportIndexer::SupportIndexer(const Design& design, std::uint64_t cap)
    : kind_(design.kind()), n_units_(design.n_units()) {
  auto add_block = [&](std::vector<std::size_t> members, std::size_t k) {
    Block b;
    b.count = binomial(members.size(), k);
    b.members = std::move(members);
    b.n_treated = k;
    blocks_.push_back(std::move(b));
  };
  switch (kind_) {
    case Design::Kind::Complete: {
      const auto& c = design.as<Design::Complete>();
      std::vector<std::size_t> all(c.n_units);
      std::iota(all.begin(), all.end(), std::size_t{0});
      add_block(std::move(all), c.n_treated);
      break;
    }
    case Design::Kind::Stratified: {
      const auto& s = design.as<Design::Stratified>();
      auto groups = s.strata.groups();
      for (std::size_t g = 0; g < groups.size(); ++g) add_block(std::move(groups[g]), s.n_treated[g]);
      break;
    }
    case Design::Kind::Paired: {
      pair_members_ = design.as<Design::Paired>().pairs.groups();
      const auto p = pair_members_.size();
      size_ = p >= 64 ? kSaturated : (std::uint64_t{1} << p);
      require(size_ <= cap, ErrorCode::SupportTooLarge, too_large(size_, cap));
      return;
    }
    case Design::Kind::Clustered: {
      const auto& c = design.as<Design::Clustered>();
      cluster_members_ = c.clusters.groups();
      std::vector<std::size_t> ids(cluster_members_.size());
      std::iota(ids.begin(), ids.end(), std::size_t{0});
      add_block(std::move(ids), c.n_treated_clusters);
      break;
    }
    case Design::Kind::Rerandomized: {
      const auto& r = design.as<Design::Rerandomized>();
      SupportIndexer base(*r.base, cap);
      Assignment z;
      for (std::uint64_t k = 0; k < base.size(); ++k) {
        base.at(k, z);
        if (r.accept.accepts(z)) materialized_.push_back(z);
      }
      require(!materialized_.empty(), ErrorCode::EmptyAcceptanceSet,
              "no assignment in the base support satisfies " + r.accept.describe());
      size_ = materialized_.size();
      return;
    }
  }
  size_ = 1;
  for (const auto& b : blocks_) size_ = sat_mul(size_, b.count);
  require(size_ <= cap, ErrorCode::SupportTooLarge, too_large(size_, cap));
  for (auto& b : blocks_) {
    const std::size_t n = b.members.size();
    b.binom.assign(n + 1, std::vector<std::uint64_t>(b.n_treated + 1, 0));
    for (std::size_t m = 0; m <= n; ++m) {
      b.binom[m][0] = 1;
      for (std::size_t j = 1; j <= std::min(m, b.n_treated); ++j) {
        const auto a = b.binom[m - 1][j - 1];
        const auto c = j <= m - 1 ? b.binom[m - 1][j] : 0;
        b.binom[m][j] = a > kSaturated - c ? kSaturated : a + c;
      }
    }
  }
}

void SupportIndexer::unrank(const Block& b, std::uint64_t r, std::vector<std::size_t>& chosen) const {
  // Lexicographic order over sorted index sets.
  chosen.clear();
  const std::size_t n = b.members.size();
  std::size_t x = 0;
  for (std::size_t i = 0; i < b.n_treated; ++i) {
    while (true) {
      const std::size_t rest = b.n_treated - i - 1;
      const std::uint64_t cnt = (n - x - 1 >= rest) ? b.binom[n - x - 1][rest] : 0;
      if (r < cnt) {
        chosen.push_back(x);
        ++x;
        break;
      }
      r -= cnt;
      ++x;
    }
  }
}

void SupportIndexer::at(std::uint64_t k, Assignment& z) const {
  require(k < size_, ErrorCode::OutOfRange, "support index out of range");
  if (kind_ == Design::Kind::Rerandomized) {
    z = materialized_[k];
    return;
  }
  z.assign(n_units_, 0);
  if (kind_ == Design::Kind::Paired) {
    for (std::size_t g = 0; g < pair_members_.size(); ++g) {
      const bool flip = (k >> g) & 1U;
      z[pair_members_[g][flip ? 1 : 0]] = 1;
    }
    return;
  }
  std::vector<std::size_t> chosen;
  for (const auto& b : blocks_) {
    const std::uint64_t r = k % b.count;
    k /= b.count;
    unrank(b, r, chosen);
    for (auto pos : chosen) {
      const auto id = b.members[pos];
      if (kind_ == Design::Kind::Clustered) {
        for (auto i : cluster_members_[id]) z[i] = 1;
      } else {
        z[id] = 1;
      }
    }
  }
}

std::optional<std::uint64_t> support_size(const Design& design, std::uint64_t cap) {
  try {
    return SupportIndexer(design, cap).size();
  } catch (const Error& e) {
    if (e.code() == ErrorCode::SupportTooLarge) return std::nullopt;
    throw;
  }
}

std::vector<std::pair<Assignment, double>> enumerate_support(const Design& design, std::uint64_t cap) {
  SupportIndexer idx(design, cap);
  std::vector<std::pair<Assignment, double>> out;
  out.reserve(idx.size());
  const double p = idx.probability();
  Assignment z;
  for (std::uint64_t k = 0; k < idx.size(); ++k) {
    idx.at(k, z);
    out.emplace_back(z, p);
  }
  return out;
}

}  // namespace randix
