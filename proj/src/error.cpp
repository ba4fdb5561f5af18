#include "cbe/error.hpp"

namespace cbe {

std::string_view error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::MalformedRow: return "MalformedRow";
    case ErrorCode::DuplicateId: return "DuplicateId";
    case ErrorCode::EmptyCorpus: return "EmptyCorpus";
    case ErrorCode::UnknownTask: return "UnknownTask";
    case ErrorCode::BothEmpty: return "BothEmpty";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::InvalidQid: return "InvalidQid";
    case ErrorCode::NetworkError: return "NetworkError";
    case ErrorCode::BadResponse: return "BadResponse";
    case ErrorCode::Timeout: return "Timeout";
    case ErrorCode::EmptyAfterFiltering: return "EmptyAfterFiltering";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::NoSentences: return "NoSentences";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::SingleClass: return "SingleClass";
    case ErrorCode::NonFiniteFeatures: return "NonFiniteFeatures";
    case ErrorCode::NumericalError: return "NumericalError";
    case ErrorCode::EmptyMatrix: return "EmptyMatrix";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::TooShort: return "TooShort";
    case ErrorCode::ZeroVariance: return "ZeroVariance";
    case ErrorCode::TooFewMinority: return "TooFewMinority";
    case ErrorCode::EmptyGrid: return "EmptyGrid";
    case ErrorCode::UnknownSeed: return "UnknownSeed";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

}  // namespace cbe
