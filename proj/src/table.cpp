#include "randix/table.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <numeric>
#include <sstream>
#include <unordered_map>

#include "randix/error.hpp"

namespace randix {
namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  if (s.size() >= 2 && s.front() == '"' && s.back() == '"') s = s.substr(1, s.size() - 2);
  return s;
}

bool is_missing(std::string_view cell) {
  return cell.empty() || cell == "NA" || cell == "na" || cell == "NaN" || cell == "nan" || cell == ".";
}

std::optional<double> parse_real(std::string_view cell) {
  double value = 0.0;
  if (!cell.empty() && cell.front() == '+') cell.remove_prefix(1);
  auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), value);
  if (ec != std::errc() || ptr != cell.data() + cell.size()) return std::nullopt;
  return value;
}

std::string cell_ref(std::size_t row, std::string_view column) {
  // Row numbers count data rows from 1 (the header is row 0).
  return "row " + std::to_string(row + 1) + ", column '" + std::string(column) + "'";
}

std::string format_real(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

template <class T>
std::vector<T> pick(const std::vector<T>& values, std::span<const std::size_t> rows) {
  std::vector<T> out;
  out.reserve(rows.size());
  for (auto r : rows) out.push_back(values.at(r));
  return out;
}

}  // namespace

std::vector<std::string> split_list(std::string_view text, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto end = text.find(sep, start);
    const auto piece = trim(text.substr(start, end == std::string_view::npos ? std::string_view::npos : end - start));
    if (!piece.empty()) out.emplace_back(piece);
    if (end == std::string_view::npos) break;
    start = end + 1;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Categorical

Categorical Categorical::intern(std::span<const std::string> raw) {
  Categorical out;
  std::unordered_map<std::string, int> index;
  out.codes.reserve(raw.size());
  for (const auto& label : raw) {
    auto [it, inserted] = index.try_emplace(label, static_cast<int>(out.labels.size()));
    if (inserted) out.labels.push_back(label);
    out.codes.push_back(it->second);
  }
  return out;
}

Categorical Categorical::from_codes(std::span<const int> codes) {
  std::vector<std::string> raw;
  raw.reserve(codes.size());
  for (int c : codes) raw.push_back(std::to_string(c));
  return intern(raw);
}

std::vector<std::vector<std::size_t>> Categorical::groups() const {
  std::vector<std::vector<std::size_t>> out(n_levels());
  for (std::size_t i = 0; i < codes.size(); ++i) out[static_cast<std::size_t>(codes[i])].push_back(i);
  return out;
}

Categorical Categorical::subset(std::span<const std::size_t> rows) const {
  std::vector<std::string> raw;
  raw.reserve(rows.size());
  for (auto r : rows) raw.push_back(labels[static_cast<std::size_t>(codes.at(r))]);
  return intern(raw);
}

// ---------------------------------------------------------------------------
// ExperimentTable

ExperimentTable::ExperimentTable(TableColumns columns) : cols_(std::move(columns)) {
  const std::size_t n = cols_.outcome.size();
  require(n > 0, ErrorCode::NoDataRows, "no data rows");
  require(cols_.z.size() == n, ErrorCode::LengthMismatch, "assignment length differs from outcome length");
  for (std::size_t i = 0; i < n; ++i) {
    require(cols_.z[i] <= 1, ErrorCode::NonBinary, cell_ref(i, cols_.z_name) + " is not 0/1");
  }
  if (cols_.w) {
    require(cols_.w->size() == n, ErrorCode::LengthMismatch, "receipt length differs from outcome length");
    for (std::size_t i = 0; i < n; ++i) {
      require((*cols_.w)[i] <= 1, ErrorCode::NonBinary, cell_ref(i, cols_.w_name) + " is not 0/1");
    }
  }
  for (const auto& c : cols_.covariates) {
    require(c.values.size() == n, ErrorCode::LengthMismatch, "covariate '" + c.name + "' has wrong length");
  }
  for (const auto& c : cols_.extra_outcomes) {
    require(c.values.size() == n, ErrorCode::LengthMismatch, "outcome '" + c.name + "' has wrong length");
  }
  for (const auto* cat : {&cols_.stratum, &cols_.cluster, &cols_.pair}) {
    if (*cat) require((*cat)->size() == n, ErrorCode::LengthMismatch, "group column has wrong length");
  }
  if (cols_.pair) {
    for (const auto& members : cols_.pair->groups()) {
      if (members.empty()) continue;
      const auto& label = cols_.pair->labels[static_cast<std::size_t>(cols_.pair->codes[members[0]])];
      require(members.size() == 2, ErrorCode::MalformedPair,
              "pair '" + label + "' has " + std::to_string(members.size()) + " units (expected 2)");
      require(cols_.z[members[0]] + cols_.z[members[1]] == 1, ErrorCode::MalformedPair,
              "pair '" + label + "' does not have exactly one treated unit");
    }
  }
  if (cols_.cluster) {
    for (const auto& members : cols_.cluster->groups()) {
      for (auto i : members) {
        require(cols_.z[i] == cols_.z[members.front()], ErrorCode::ClusterNotConstant,
                "assignment varies within cluster '" +
                    cols_.cluster->labels[static_cast<std::size_t>(cols_.cluster->codes[i])] + "'");
      }
    }
  }
  n_treated_ = static_cast<std::size_t>(std::count(cols_.z.begin(), cols_.z.end(), std::uint8_t{1}));
}

const Covariate& ExperimentTable::covariate(std::string_view name) const {
  for (const auto& c : cols_.covariates) {
    if (c.name == name) return c;
  }
  fail(ErrorCode::MissingColumn, "no covariate named '" + std::string(name) + "'");
}

bool ExperimentTable::has_covariate(std::string_view name) const {
  return std::any_of(cols_.covariates.begin(), cols_.covariates.end(),
                     [&](const Covariate& c) { return c.name == name; });
}

std::span<const double> ExperimentTable::outcome_column(std::string_view name) const {
  if (name == cols_.outcome_name) return cols_.outcome;
  for (const auto& c : cols_.extra_outcomes) {
    if (c.name == name) return c.values;
  }
  for (const auto& c : cols_.covariates) {
    if (c.name == name && !c.is_categorical()) return c.values;
  }
  fail(ErrorCode::MissingColumn, "no outcome column named '" + std::string(name) + "'");
}

ExperimentTable ExperimentTable::with_outcome(std::vector<double> y) const {
  auto cols = cols_;
  cols.outcome = std::move(y);
  return ExperimentTable(std::move(cols));
}

ExperimentTable ExperimentTable::with_assignment(Assignment z) const {
  auto cols = cols_;
  cols.z = std::move(z);
  return ExperimentTable(std::move(cols));
}

ExperimentTable ExperimentTable::with_stratum(Categorical stratum) const {
  auto cols = cols_;
  cols.stratum = std::move(stratum);
  return ExperimentTable(std::move(cols));
}

ExperimentTable ExperimentTable::subset(std::span<const std::size_t> rows) const {
  TableColumns cols;
  cols.outcome_name = cols_.outcome_name;
  cols.outcome = pick(cols_.outcome, rows);
  cols.z_name = cols_.z_name;
  cols.z = pick(cols_.z, rows);
  cols.w_name = cols_.w_name;
  if (cols_.w) cols.w = pick(*cols_.w, rows);
  for (const auto& c : cols_.covariates) cols.covariates.push_back({c.name, pick(c.values, rows), c.levels});
  cols.stratum_name = cols_.stratum_name;
  cols.cluster_name = cols_.cluster_name;
  cols.pair_name = cols_.pair_name;
  if (cols_.stratum) cols.stratum = cols_.stratum->subset(rows);
  if (cols_.cluster) cols.cluster = cols_.cluster->subset(rows);
  // A subset generally breaks pairs; keep the column only when it stays valid.
  if (cols_.pair) {
    auto sub = cols_.pair->subset(rows);
    bool intact = true;
    for (const auto& g : sub.groups()) intact = intact && g.size() == 2;
    if (intact) cols.pair = std::move(sub);
  }
  for (const auto& c : cols_.extra_outcomes) cols.extra_outcomes.push_back({c.name, pick(c.values, rows)});
  return ExperimentTable(std::move(cols));
}

// ---------------------------------------------------------------------------
// PotentialTable

double PotentialTable::ate() const {
  require(y0.size() == y1.size() && !y0.empty(), ErrorCode::LengthMismatch, "potential outcome lengths differ");
  double sum = 0.0;
  for (std::size_t i = 0; i < y0.size(); ++i) sum += y1[i] - y0[i];
  return sum / static_cast<double>(y0.size());
}

ExperimentTable reveal(const PotentialTable& pot, std::span<const std::uint8_t> z) {
  require(pot.y0.size() == pot.y1.size(), ErrorCode::LengthMismatch, "potential outcome lengths differ");
  require(z.size() == pot.n_units(), ErrorCode::LengthMismatch,
          "assignment has " + std::to_string(z.size()) + " entries for " + std::to_string(pot.n_units()) + " units");
  TableColumns cols;
  cols.outcome.resize(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) cols.outcome[i] = z[i] ? pot.y1[i] : pot.y0[i];
  cols.z.assign(z.begin(), z.end());
  cols.covariates = pot.covariates;
  cols.stratum = pot.stratum;
  cols.cluster = pot.cluster;
  cols.pair = pot.pair;
  return ExperimentTable(std::move(cols));
}

// ---------------------------------------------------------------------------
// Delimited input

std::size_t RawTable::column_index(std::string_view name) const {
  for (std::size_t j = 0; j < header.size(); ++j) {
    if (header[j] == name) return j;
  }
  fail(ErrorCode::MissingColumn, "column '" + std::string(name) + "' not found in header");
}

std::vector<std::string> RawTable::column(std::string_view name) const {
  const auto j = column_index(name);
  std::vector<std::string> out;
  out.reserve(rows.size());
  for (const auto& r : rows) out.push_back(r[j]);
  return out;
}

RawTable parse_delimited(std::string_view text) {
  RawTable raw;
  std::vector<std::string_view> lines;
  std::size_t start = 0;
  while (start < text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    auto line = text.substr(start, end - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    lines.push_back(line);
    start = end + 1;
  }
  while (!lines.empty() && trim(lines.back()).empty()) lines.pop_back();
  require(!lines.empty(), ErrorCode::NoDataRows, "empty file (no header)");

  raw.delimiter = lines[0].find('\t') != std::string_view::npos ? '\t' : ',';
  auto split = [&](std::string_view line) {
    std::vector<std::string> cells;
    std::size_t s = 0;
    while (true) {
      auto e = line.find(raw.delimiter, s);
      cells.emplace_back(trim(line.substr(s, e == std::string_view::npos ? std::string_view::npos : e - s)));
      if (e == std::string_view::npos) break;
      s = e + 1;
    }
    return cells;
  };
  raw.header = split(lines[0]);
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (trim(lines[i]).empty()) continue;
    auto cells = split(lines[i]);
    require(cells.size() == raw.header.size(), ErrorCode::LengthMismatch,
            "row " + std::to_string(raw.rows.size() + 1) + " has " + std::to_string(cells.size()) +
                " cells, header has " + std::to_string(raw.header.size()));
    raw.rows.push_back(std::move(cells));
  }
  require(!raw.rows.empty(), ErrorCode::NoDataRows, "no data rows");
  return raw;
}

RawTable read_delimited(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorCode::Io, "cannot open '" + path.string() + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_delimited(buf.str());
}

namespace {

struct Reader {
  const RawTable& raw;
  std::size_t incomplete_rows = 0;

  std::vector<std::string> strings(const std::string& name) const {
    const auto j = raw.column_index(name);
    std::vector<std::string> out;
    out.reserve(raw.rows.size());
    for (std::size_t i = 0; i < raw.rows.size(); ++i) {
      if (is_missing(raw.rows[i][j])) missing(i, name);
      out.push_back(raw.rows[i][j]);
    }
    return out;
  }

  std::vector<double> reals(const std::string& name) const {
    const auto j = raw.column_index(name);
    std::vector<double> out;
    out.reserve(raw.rows.size());
    for (std::size_t i = 0; i < raw.rows.size(); ++i) {
      const auto& cell = raw.rows[i][j];
      if (is_missing(cell)) missing(i, name);
      auto v = parse_real(cell);
      require(v.has_value(), ErrorCode::InvalidArgument, cell_ref(i, name) + " is not numeric: '" + cell + "'");
      out.push_back(*v);
    }
    return out;
  }

  Assignment binary(const std::string& name) const {
    const auto values = reals(name);
    Assignment out(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) {
      require(values[i] == 0.0 || values[i] == 1.0, ErrorCode::NonBinary,
              cell_ref(i, name) + " is not 0/1: '" + raw.rows[i][raw.column_index(name)] + "'");
      out[i] = values[i] == 1.0 ? 1 : 0;
    }
    return out;
  }

  [[noreturn]] void missing(std::size_t row, const std::string& name) const {
    fail(ErrorCode::MissingValue, cell_ref(row, name) + " is missing (" + std::to_string(incomplete_rows) +
                                      " incomplete rows in file; rows are never dropped or imputed)");
  }
};

std::size_t count_incomplete(const RawTable& raw, const Schema& schema) {
  std::vector<std::size_t> used;
  auto add = [&](const std::string& name) { used.push_back(raw.column_index(name)); };
  add(schema.outcome);
  add(schema.z);
  if (schema.w) add(*schema.w);
  for (const auto& c : schema.covariates) add(c);
  for (const auto& c : schema.extra_outcomes) add(c);
  for (const auto* g : {&schema.stratum, &schema.cluster, &schema.pair}) {
    if (*g) add(**g);
  }
  std::size_t count = 0;
  for (const auto& row : raw.rows) {
    count += std::any_of(used.begin(), used.end(), [&](std::size_t j) { return is_missing(row[j]); }) ? 1 : 0;
  }
  return count;
}

}  // namespace

ExperimentTable table_from_raw(const RawTable& raw, const Schema& schema) {
  require(!schema.outcome.empty(), ErrorCode::InvalidArgument, "schema has no outcome column");
  require(!schema.z.empty(), ErrorCode::InvalidArgument, "schema has no assignment column");
  Reader reader{raw, count_incomplete(raw, schema)};

  TableColumns cols;
  cols.outcome_name = schema.outcome;
  cols.outcome = reader.reals(schema.outcome);
  cols.z_name = schema.z;
  cols.z = reader.binary(schema.z);
  if (schema.w) {
    cols.w_name = *schema.w;
    cols.w = reader.binary(*schema.w);
  }
  for (const auto& name : schema.covariates) {
    const bool forced = std::find(schema.categorical.begin(), schema.categorical.end(), name) != schema.categorical.end();
    auto text = reader.strings(name);
    bool numeric = !forced;
    std::vector<double> values;
    if (numeric) {
      values.reserve(text.size());
      for (const auto& cell : text) {
        auto v = parse_real(cell);
        if (!v) {
          numeric = false;
          break;
        }
        values.push_back(*v);
      }
    }
    if (numeric) {
      cols.covariates.push_back({name, std::move(values), {}});
    } else {
      auto cat = Categorical::intern(text);
      std::vector<double> codes(cat.codes.begin(), cat.codes.end());
      cols.covariates.push_back({name, std::move(codes), std::move(cat.labels)});
    }
  }
  if (schema.stratum) {
    cols.stratum_name = *schema.stratum;
    cols.stratum = Categorical::intern(reader.strings(*schema.stratum));
  }
  if (schema.cluster) {
    cols.cluster_name = *schema.cluster;
    cols.cluster = Categorical::intern(reader.strings(*schema.cluster));
  }
  if (schema.pair) {
    cols.pair_name = *schema.pair;
    cols.pair = Categorical::intern(reader.strings(*schema.pair));
  }
  for (const auto& name : schema.extra_outcomes) cols.extra_outcomes.push_back({name, reader.reals(name)});
  return ExperimentTable(std::move(cols));
}

ExperimentTable load_table(const std::filesystem::path& path, const Schema& schema) {
  return table_from_raw(read_delimited(path), schema);
}

Schema Schema::from_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorCode::Io, "cannot open config '" + path.string() + "'");
  Schema schema;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    auto text = trim(line);
    if (text.empty()) continue;
    const auto eq = text.find('=');
    require(eq != std::string_view::npos, ErrorCode::InvalidArgument,
            path.string() + ":" + std::to_string(lineno) + ": expected key=value");
    const std::string key(trim(text.substr(0, eq)));
    const std::string value(trim(text.substr(eq + 1)));
    if (key == "outcome") schema.outcome = value;
    else if (key == "z") schema.z = value;
    else if (key == "w") schema.w = value;
    else if (key == "covariates") schema.covariates = split_list(value);
    else if (key == "categorical") schema.categorical = split_list(value);
    else if (key == "stratum") schema.stratum = value;
    else if (key == "cluster") schema.cluster = value;
    else if (key == "pair") schema.pair = value;
    else if (key == "extra_outcomes") schema.extra_outcomes = split_list(value);
    else fail(ErrorCode::InvalidArgument, path.string() + ":" + std::to_string(lineno) + ": unknown key '" + key + "'");
  }
  return schema;
}

Schema schema_of(const ExperimentTable& table) {
  const auto& c = table.columns();
  Schema s;
  s.outcome = c.outcome_name;
  s.z = c.z_name;
  if (c.w) s.w = c.w_name;
  for (const auto& cov : c.covariates) {
    s.covariates.push_back(cov.name);
    if (cov.is_categorical()) s.categorical.push_back(cov.name);
  }
  if (c.stratum) s.stratum = c.stratum_name;
  if (c.cluster) s.cluster = c.cluster_name;
  if (c.pair) s.pair = c.pair_name;
  for (const auto& e : c.extra_outcomes) s.extra_outcomes.push_back(e.name);
  return s;
}

void save_table(const ExperimentTable& table, const std::filesystem::path& path) {
  const auto& c = table.columns();
  std::ofstream out(path, std::ios::binary);
  require(static_cast<bool>(out), ErrorCode::Io, "cannot write '" + path.string() + "'");

  std::vector<std::string> header{c.outcome_name, c.z_name};
  if (c.w) header.push_back(c.w_name);
  for (const auto& cov : c.covariates) header.push_back(cov.name);
  if (c.stratum) header.push_back(c.stratum_name);
  if (c.cluster) header.push_back(c.cluster_name);
  if (c.pair) header.push_back(c.pair_name);
  for (const auto& e : c.extra_outcomes) header.push_back(e.name);
  for (std::size_t j = 0; j < header.size(); ++j) out << (j ? "," : "") << header[j];
  out << '\n';

  for (std::size_t i = 0; i < table.n_units(); ++i) {
    out << format_real(c.outcome[i]) << ',' << int(c.z[i]);
    if (c.w) out << ',' << int((*c.w)[i]);
    for (const auto& cov : c.covariates) {
      out << ',';
      if (cov.is_categorical()) out << cov.levels[static_cast<std::size_t>(cov.values[i])];
      else out << format_real(cov.values[i]);
    }
    for (const auto* g : {&c.stratum, &c.cluster, &c.pair}) {
      if (*g) out << ',' << (*g)->labels[static_cast<std::size_t>((*g)->codes[i])];
    }
    for (const auto& e : c.extra_outcomes) out << ',' << format_real(e.values[i]);
    out << '\n';
  }
}

}  // namespace randix
