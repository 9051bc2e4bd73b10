#include "randix/report.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <sstream>

#include "randix/distributions.hpp"

namespace randix {

void AnalysisReport::set(const std::string& key, double value) {
  for (auto& [k, v] : diagnostics) {
    if (k == key) {
      v = value;
      return;
    }
  }
  diagnostics.emplace_back(key, value);
}

std::optional<double> AnalysisReport::get(const std::string& key) const {
  for (const auto& [k, v] : diagnostics) {
    if (k == key) return v;
  }
  return std::nullopt;
}

bool AnalysisReport::has_note(const std::string& text) const {
  return std::find(notes.begin(), notes.end(), text) != notes.end();
}

void AnalysisReport::normal_inference(double level) {
  if (!std_error) return;
  const double z = normal_quantile(0.5 + level / 2.0);
  ci_lower = estimate - z * *std_error;
  ci_upper = estimate + z * *std_error;
  if (*std_error > 0.0) {
    p_normal = two_sided_normal_p(estimate / *std_error);
  } else {
    p_normal = estimate == 0.0 ? 1.0 : 0.0;
  }
}

const std::vector<std::string>& machine_keys() {
  static const std::vector<std::string> keys{"estimate", "se",       "ci_lo", "ci_hi", "p_exact",
                                             "p_normal", "method", "seed",  "draws"};
  return keys;
}

std::string format_number(double v) {
  if (std::isnan(v)) return "NA";
  if (std::isinf(v)) return v > 0 ? "Inf" : "-Inf";
  if (v == 0.0) return "0";  // folds -0
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 6);
  return std::string(buf, ptr);
}

std::string format_number(const std::optional<double>& v) { return v ? format_number(*v) : "NA"; }

void write_machine(std::ostream& out, const AnalysisReport& r) {
  out << "estimate: " << format_number(r.estimate) << '\n';
  out << "se: " << format_number(r.std_error) << '\n';
  out << "ci_lo: " << format_number(r.ci_lower) << '\n';
  out << "ci_hi: " << format_number(r.ci_upper) << '\n';
  out << "p_exact: " << format_number(r.p_exact) << '\n';
  out << "p_normal: " << format_number(r.p_normal) << '\n';
  out << "method: " << (r.method.empty() ? "NA" : r.method) << '\n';
  out << "seed: " << (r.seed ? std::to_string(*r.seed) : "NA") << '\n';
  out << "draws: " << (r.draws ? std::to_string(*r.draws) : "NA") << '\n';
}

void write_machine(std::ostream& out, const std::vector<AnalysisReport>& reports) {
  for (std::size_t i = 0; i < reports.size(); ++i) {
    if (i) out << '\n';
    write_machine(out, reports[i]);
  }
}

void write_text(std::ostream& out, const AnalysisReport& r) {
  out << r.method << '\n';
  out << "  estimate   " << format_number(r.estimate) << '\n';
  if (r.std_error) out << "  std error  " << format_number(r.std_error) << '\n';
  if (r.ci_lower && r.ci_upper) {
    out << "  interval   [" << format_number(r.ci_lower) << ", " << format_number(r.ci_upper) << "]\n";
  }
  if (r.p_exact) out << "  p exact    " << format_number(r.p_exact) << '\n';
  if (r.p_normal) out << "  p normal   " << format_number(r.p_normal) << '\n';
  if (r.n_treated + r.n_control > 0) {
    out << "  n treated  " << r.n_treated << "\n  n control  " << r.n_control << '\n';
  }
  if (r.seed) out << "  seed       " << *r.seed << '\n';
  if (r.draws) out << "  draws      " << *r.draws << '\n';
  for (const auto& [k, v] : r.diagnostics) out << "  " << k << " = " << format_number(v) << '\n';
  for (const auto& n : r.notes) out << "  note: " << n << '\n';
}

std::vector<std::pair<std::string, std::string>> parse_machine_block(const std::string& block) {
  std::vector<std::pair<std::string, std::string>> out;
  std::istringstream in(block);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto colon = line.find(": ");
    if (colon == std::string::npos) {
      out.emplace_back(line, "");
      continue;
    }
    out.emplace_back(line.substr(0, colon), line.substr(colon + 2));
  }
  return out;
}

}  // namespace randix
