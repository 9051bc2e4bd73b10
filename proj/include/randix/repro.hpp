#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "randix/table.hpp"

namespace randix {

/// FNV-1a, 64 bit.
std::uint64_t fnv1a64(std::string_view bytes);

struct FixtureInfo {
  std::size_t rows = 445;
  std::size_t treated = 185;
  std::uint64_t checksum = 0xc609a463d7a64fdaULL;
};

std::filesystem::path bundled_lalonde_path();
/// Outcome re78 (thousands), assignment treat, the ten pre-treatment columns as covariates.
Schema lalonde_schema();
/// Loads the fixture and checks row count, treated count and checksum.
ExperimentTable load_lalonde(const std::filesystem::path& path, const FixtureInfo& info = {});

struct ReproRow {
  int criterion = 0;
  std::string name;
  double actual = 0.0;
  double reference = 0.0;
  double tolerance = 0.0;
  enum class Kind { Within, AtMost, Exact, Info } kind = Kind::Within;
  bool wide = false;  // tolerance widened for Monte Carlo noise
  bool pass = false;
};

struct ReproOptions {
  std::uint64_t seed = 0;
  std::uint64_t draws = 100000;
  std::size_t bootstrap_reps = 2000;
};

std::vector<ReproRow> repro_ate(const ExperimentTable& lalonde);
std::vector<ReproRow> repro_fisher(const ExperimentTable& lalonde, const ReproOptions& opts);
std::vector<ReproRow> repro_qte(const ExperimentTable& lalonde, const ReproOptions& opts);
std::vector<ReproRow> repro_balance(const ExperimentTable& lalonde, const ReproOptions& opts);
std::vector<ReproRow> repro_subgroup(const ExperimentTable& lalonde);
std::vector<ReproRow> repro_power();

std::vector<ReproRow> reproduce_all(const ExperimentTable& lalonde, const ReproOptions& opts);

void write_repro_table(std::ostream& out, const std::vector<ReproRow>& rows);

}  // namespace randix
