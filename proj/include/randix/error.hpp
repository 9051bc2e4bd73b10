#pragma once

#include <stdexcept>
#include <string>

namespace randix {

enum class ErrorCode {
  Io,
  NoDataRows,
  MissingColumn,
  MissingValue,
  NonBinary,
  MalformedPair,
  ClusterNotConstant,
  LengthMismatch,
  InvalidArgument,
  InsufficientUnits,
  SupportTooLarge,
  EmptyAcceptanceSet,
  OutOfRange,
  FixtureMismatch,
  // numerical failures
  RankDeficient,
  WeakFirstStage,
  Numerical,
};

const char* to_string(ErrorCode code);

/// True for codes that signal a numerical failure rather than bad input.
bool is_numerical(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message);

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] void fail(ErrorCode code, const std::string& message);

inline void require(bool condition, ErrorCode code, const std::string& message) {
  if (!condition) fail(code, message);
}

}  // namespace randix
