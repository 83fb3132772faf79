#include "slmw/error.hpp"

namespace slmw {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "invalid_argument";
    case ErrorCode::kEmptyInput: return "empty_input";
    case ErrorCode::kLengthMismatch: return "length_mismatch";
    case ErrorCode::kDegenerate: return "degenerate";
    case ErrorCode::kOutOfRange: return "out_of_range";
    case ErrorCode::kNotFound: return "not_found";
    case ErrorCode::kConfig: return "config";
    case ErrorCode::kParse: return "parse";
    case ErrorCode::kFormat: return "format";
    case ErrorCode::kVersion: return "version";
    case ErrorCode::kShapeMismatch: return "shape_mismatch";
    case ErrorCode::kTruncated: return "truncated";
    case ErrorCode::kDivergence: return "divergence";
    case ErrorCode::kInsufficientData: return "insufficient_data";
  }
  return "unknown";
}

}  // namespace slmw
