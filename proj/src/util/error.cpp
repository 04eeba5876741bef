#include "e3/error.hpp"

namespace e3 {

std::string_view error_code_name(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::kParse: return "ParseError";
    case ErrorCode::kSyntaxRejected: return "SyntaxRejected";
    case ErrorCode::kConnection: return "ConnectionError";
    case ErrorCode::kTimeout: return "Timeout";
    case ErrorCode::kExecution: return "ExecutionError";
    case ErrorCode::kPlanFormat: return "PlanFormatError";
    case ErrorCode::kDimensionMismatch: return "DimensionMismatch";
    case ErrorCode::kZeroVector: return "ZeroVector";
    case ErrorCode::kSchema: return "SchemaError";
    case ErrorCode::kNonPositiveBaseline: return "NonPositiveBaseline";
    case ErrorCode::kUnresolvedEquivalence: return "UnresolvedEquivalence";
    case ErrorCode::kGroupTooSmall: return "GroupTooSmall";
    case ErrorCode::kLengthMismatch: return "LengthMismatch";
    case ErrorCode::kEmptyRehearsalPool: return "EmptyRehearsalPool";
    case ErrorCode::kEmptyInput: return "EmptyInput";
    case ErrorCode::kPromptTooLong: return "PromptTooLong";
    case ErrorCode::kEndpointTimeout: return "EndpointTimeout";
    case ErrorCode::kMalformedResponse: return "MalformedResponse";
    case ErrorCode::kConfig: return "ConfigError";
    case ErrorCode::kIo: return "IoError";
    case ErrorCode::kInvalidArgument: return "InvalidArgument";
    case ErrorCode::kEmbedding: return "EmbeddingError";
  }
  return "UnknownError";
}

}  // namespace e3
