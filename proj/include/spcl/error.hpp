#pragma once

#include <stdexcept>
#include <string>

namespace spcl {

// Numeric values are shared with the C API status codes in spcl.h.
enum class ErrorCode : int {
  kOk = 0,
  kDimension = 1,
  kNumeric = 2,
  kDegenerateEmbedding = 3,
  kIndex = 4,
  kArgument = 5,
  kScheduleExhausted = 6,
  kState = 7,
  kUndefinedMetric = 8,
  kEmptyBuffer = 9,
  kParse = 10,
  kSchema = 11,
  kIo = 12,
  kTrainingFailure = 13,
  kConfig = 14,
  kOracleFailure = 15,
};

const char* error_code_name(ErrorCode code) noexcept;

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

}  // namespace spcl
