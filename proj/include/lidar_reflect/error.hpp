#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace lidar_reflect {

enum class ErrorCode {
  FileUnreadable,
  FileUnwritable,
  MalformedScan,
  MalformedLabels,
  MalformedTable,
  LengthMismatch,
  MissingField,
  InvalidValue,
  DegeneratePoint,
  MissingChannel,
  NoSamples,
  InsufficientData,
  FitDiverged,
  NonPositiveRange,
  UnknownClass,
  EmptyScene,
};

std::string_view to_string(ErrorCode code);

// Every failure surfaced by the library carries one of the codes above so
// callers (and the CLI's per-file isolation) can branch on it.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what);

  ErrorCode code() const noexcept { return code_; }
  // Message without the code prefix.
  const std::string& detail() const noexcept { return detail_; }

 private:
  ErrorCode code_;
  std::string detail_;
};

}  // namespace lidar_reflect
