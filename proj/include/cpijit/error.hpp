#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace cpijit {

enum class ErrorCode {
  kSchema,            // missing or malformed column mapping
  kEmptyDataset,
  kParse,             // unparseable cell; message names row and column
  kDomain,            // value outside the operation's domain
  kArgument,
  kInsufficientData,
  kDegenerateTable,
  kUnsupportedDataset,
  kDimensionMismatch,
  kPointCurve,        // data collapses to a single point
  kDegenerateCurve,
  kCannotInterpolate,
  kNumericFailure,
  kUndefinedMetric,
  kInfeasiblePlan,
  kIo,
  kConfig,
};

std::string_view to_string(ErrorCode code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

}  // namespace cpijit
