#include "randix/error.hpp"

namespace randix {

const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::Io: return "io";
    case ErrorCode::NoDataRows: return "no_data_rows";
    case ErrorCode::MissingColumn: return "missing_column";
    case ErrorCode::MissingValue: return "missing_value";
    case ErrorCode::NonBinary: return "non_binary";
    case ErrorCode::MalformedPair: return "malformed_pair";
    case ErrorCode::ClusterNotConstant: return "cluster_not_constant";
    case ErrorCode::LengthMismatch: return "length_mismatch";
    case ErrorCode::InvalidArgument: return "invalid_argument";
    case ErrorCode::InsufficientUnits: return "insufficient_units";
    case ErrorCode::SupportTooLarge: return "support_too_large";
    case ErrorCode::EmptyAcceptanceSet: return "empty_acceptance_set";
    case ErrorCode::OutOfRange: return "out_of_range";
    case ErrorCode::FixtureMismatch: return "fixture_mismatch";
    case ErrorCode::RankDeficient: return "rank_deficient";
    case ErrorCode::WeakFirstStage: return "weak_first_stage";
    case ErrorCode::Numerical: return "numerical";
  }
  return "unknown";
}

bool is_numerical(ErrorCode code) {
  return code == ErrorCode::RankDeficient || code == ErrorCode::WeakFirstStage ||
         code == ErrorCode::Numerical;
}

Error::Error(ErrorCode code, const std::string& message)
    : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

void fail(ErrorCode code, const std::string& message) { throw Error(code, message); }

}  // namespace randix
