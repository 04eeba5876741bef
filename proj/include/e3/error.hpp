#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>

namespace e3 {

// Stable error taxonomy. Values are mirrored by the C status codes in
// e3rewrite.h, so never renumber.
enum class ErrorCode : int {
  kParse = 1,
  kSyntaxRejected = 2,
  kConnection = 3,
  kTimeout = 4,
  kExecution = 5,
  kPlanFormat = 6,
  kDimensionMismatch = 7,
  kZeroVector = 8,
  kSchema = 9,
  kNonPositiveBaseline = 10,
  kUnresolvedEquivalence = 11,
  kGroupTooSmall = 12,
  kLengthMismatch = 13,
  kEmptyRehearsalPool = 14,
  kEmptyInput = 15,
  kPromptTooLong = 16,
  kEndpointTimeout = 17,
  kMalformedResponse = 18,
  kConfig = 19,
  kIo = 20,
  kInvalidArgument = 21,
  kEmbedding = 22,
};

std::string_view error_code_name(ErrorCode code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

// Malformed or unsupported SQL. `offset` is a byte offset into the input.
class ParseError : public Error {
 public:
  ParseError(std::size_t offset, const std::string& message)
      : Error(ErrorCode::kParse,
              message + " at offset " + std::to_string(offset)),
        offset_(offset) {}

  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

}  // namespace e3
