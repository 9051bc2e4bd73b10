#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace randix {

/// A binary vector over units; 1 = treated.
using Assignment = std::vector<std::uint8_t>;

/// Categorical column interned to integer codes 0..n_levels()-1, codes in
/// order of first appearance.
struct Categorical {
  std::vector<int> codes;
  std::vector<std::string> labels;

  std::size_t size() const { return codes.size(); }
  std::size_t n_levels() const { return labels.size(); }

  static Categorical intern(std::span<const std::string> raw);
  static Categorical from_codes(std::span<const int> codes);

  /// Members of each level, in unit order.
  std::vector<std::vector<std::size_t>> groups() const;

  /// Re-interns after subsetting so codes stay contiguous.
  Categorical subset(std::span<const std::size_t> rows) const;
};

/// Named covariate. Categorical covariates store codes in `values` and keep
/// the label dictionary in `levels`; numeric ones leave `levels` empty.
struct Covariate {
  std::string name;
  std::vector<double> values;
  std::vector<std::string> levels;

  bool is_categorical() const { return !levels.empty(); }
};

struct NamedColumn {
  std::string name;
  std::vector<double> values;
};

/// Column-role bundle consumed by ExperimentTable's validating constructor.
struct TableColumns {
  std::string outcome_name = "y";
  std::vector<double> outcome;
  std::string z_name = "z";
  Assignment z;
  std::string w_name = "w";
  std::optional<Assignment> w;
  std::vector<Covariate> covariates;
  std::string stratum_name = "stratum";
  std::optional<Categorical> stratum;
  std::string cluster_name = "cluster";
  std::optional<Categorical> cluster;
  std::string pair_name = "pair";
  std::optional<Categorical> pair;
  std::vector<NamedColumn> extra_outcomes;
};

/// Observed experiment data. Immutable once constructed; derived tables are
/// produced by the with_* / subset members.
class ExperimentTable {
 public:
  /// Validates lengths, binary z/w, pair structure (two units, one treated)
  /// and constant assignment within clusters.
  explicit ExperimentTable(TableColumns columns);

  std::size_t n_units() const { return cols_.outcome.size(); }
  std::size_t n_treated() const { return n_treated_; }
  std::size_t n_control() const { return n_units() - n_treated_; }

  std::span<const double> outcome() const { return cols_.outcome; }
  const std::string& outcome_name() const { return cols_.outcome_name; }
  std::span<const std::uint8_t> z() const { return cols_.z; }

  bool has_receipt() const { return cols_.w.has_value(); }
  /// Receipt W; falls back to Z under perfect compliance.
  std::span<const std::uint8_t> w() const { return cols_.w ? std::span(*cols_.w) : z(); }

  const std::vector<Covariate>& covariates() const { return cols_.covariates; }
  const Covariate& covariate(std::string_view name) const;
  bool has_covariate(std::string_view name) const;

  const std::optional<Categorical>& stratum() const { return cols_.stratum; }
  const std::optional<Categorical>& cluster() const { return cols_.cluster; }
  const std::optional<Categorical>& pair() const { return cols_.pair; }
  const std::vector<NamedColumn>& extra_outcomes() const { return cols_.extra_outcomes; }

  /// The primary outcome or an extra outcome column by name.
  std::span<const double> outcome_column(std::string_view name) const;

  const TableColumns& columns() const { return cols_; }

  ExperimentTable with_outcome(std::vector<double> y) const;
  ExperimentTable with_assignment(Assignment z) const;
  ExperimentTable with_stratum(Categorical stratum) const;
  ExperimentTable subset(std::span<const std::size_t> rows) const;

 private:
  TableColumns cols_;
  std::size_t n_treated_ = 0;
};

/// Full science table: both potential outcomes per unit.
struct PotentialTable {
  std::vector<double> y0;
  std::vector<double> y1;
  std::vector<Covariate> covariates;
  std::optional<Categorical> stratum;
  std::optional<Categorical> cluster;
  std::optional<Categorical> pair;

  std::size_t n_units() const { return y0.size(); }
  double ate() const;
};

/// Switching equation: outcome_i = y1_i if z_i = 1 else y0_i.
ExperimentTable reveal(const PotentialTable& pot, std::span<const std::uint8_t> z);

/// Column-name to role mapping for delimited input.
struct Schema {
  std::string outcome;
  std::string z;
  std::optional<std::string> w;
  std::vector<std::string> covariates;
  std::vector<std::string> categorical;  // covariates forced to categorical
  std::optional<std::string> stratum;
  std::optional<std::string> cluster;
  std::optional<std::string> pair;
  std::vector<std::string> extra_outcomes;

  /// Plain-text key=value file; '#' starts a comment; lists are comma separated.
  static Schema from_config(const std::filesystem::path& path);
};

/// Header plus string cells; delimiter auto-detected from the header line.
struct RawTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  char delimiter = ',';

  std::size_t column_index(std::string_view name) const;
  std::vector<std::string> column(std::string_view name) const;
};

RawTable read_delimited(const std::filesystem::path& path);
RawTable parse_delimited(std::string_view text);

ExperimentTable table_from_raw(const RawTable& raw, const Schema& schema);
ExperimentTable load_table(const std::filesystem::path& path, const Schema& schema);

/// Writes every column with a header; reals use shortest round-trip text.
void save_table(const ExperimentTable& table, const std::filesystem::path& path);
Schema schema_of(const ExperimentTable& table);

std::vector<std::string> split_list(std::string_view text, char sep = ',');

}  // namespace randix
