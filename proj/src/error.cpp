#include "cpijit/error.hpp"

namespace cpijit {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::kSchema: return "schema";
    case ErrorCode::kEmptyDataset: return "empty-dataset";
    case ErrorCode::kParse: return "parse";
    case ErrorCode::kDomain: return "domain";
    case ErrorCode::kArgument: return "argument";
    case ErrorCode::kInsufficientData: return "insufficient-data";
    case ErrorCode::kDegenerateTable: return "degenerate-table";
    case ErrorCode::kUnsupportedDataset: return "unsupported-dataset";
    case ErrorCode::kDimensionMismatch: return "dimension-mismatch";
    case ErrorCode::kPointCurve: return "point-curve";
    case ErrorCode::kDegenerateCurve: return "degenerate-curve";
    case ErrorCode::kCannotInterpolate: return "cannot-interpolate";
    case ErrorCode::kNumericFailure: return "numeric-failure";
    case ErrorCode::kUndefinedMetric: return "undefined-metric";
    case ErrorCode::kInfeasiblePlan: return "infeasible-plan";
    case ErrorCode::kIo: return "io";
    case ErrorCode::kConfig: return "config";
  }
  return "unknown";
}

}  // namespace cpijit
