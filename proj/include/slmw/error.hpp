#ifndef SLMW_ERROR_HPP
#define SLMW_ERROR_HPP

#include <stdexcept>
#include <string>
#include <string_view>

namespace slmw {

/// Machine-readable failure category carried by every slmw::Error.
enum class ErrorCode {
  kInvalidArgument,
  kEmptyInput,
  kLengthMismatch,
  kDegenerate,
  kOutOfRange,
  kNotFound,
  kConfig,
  kParse,
  kFormat,
  kVersion,
  kShapeMismatch,
  kTruncated,
  kDivergence,
  kInsufficientData,
};

std::string_view to_string(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace slmw

#endif  // SLMW_ERROR_HPP
