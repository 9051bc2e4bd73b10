#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

namespace randix {

struct AnalysisReport {
  double estimate = 0.0;
  std::optional<double> std_error;
  std::optional<double> ci_lower;
  std::optional<double> ci_upper;
  std::optional<double> p_exact;
  std::optional<double> p_normal;
  std::string method;
  std::size_t n_treated = 0;
  std::size_t n_control = 0;
  // Insertion-ordered so text output is stable.
  std::vector<std::pair<std::string, double>> diagnostics;
  std::vector<std::string> notes;

  // Stochastic provenance; printed in the machine block.
  std::optional<std::uint64_t> seed;
  std::optional<std::uint64_t> draws;

  void set(const std::string& key, double value);
  std::optional<double> get(const std::string& key) const;
  void note(std::string text) { notes.push_back(std::move(text)); }
  bool has_note(const std::string& text) const;

  /// Fills ci and p_normal from estimate/std_error with a Gaussian quantile.
  void normal_inference(double level = 0.95);
};

/// Keys of the machine block, in emission order.
const std::vector<std::string>& machine_keys();

/// Six significant digits, locale independent; NA for missing values.
std::string format_number(double v);
std::string format_number(const std::optional<double>& v);

void write_machine(std::ostream& out, const AnalysisReport& report);
void write_machine(std::ostream& out, const std::vector<AnalysisReport>& reports);
void write_text(std::ostream& out, const AnalysisReport& report);

/// Parses one machine block back into key/value pairs.
std::vector<std::pair<std::string, std::string>> parse_machine_block(const std::string& block);

}  // namespace randix
