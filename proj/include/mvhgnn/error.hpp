#pragma once

#include <stdexcept>
#include <string>

namespace mvhgnn {

enum class ErrorCode {
  kDimension,
  kDegenerateInput,
  kArgument,
  kConfig,
  kProtocol,
  kNonFinite,
  // archive I/O
  kIo,
  kBadMagic,
  kTruncated,
  kShapeMismatch,
  kUnlabeled,
};

const char* error_code_name(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(error_code_name(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace mvhgnn
