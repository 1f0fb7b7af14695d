#include "ovid/error.hpp"

namespace ovid {

std::string_view to_string(ErrorCode code) noexcept {
    switch (code) {
    case ErrorCode::MalformedXml: return "MalformedXml";
    case ErrorCode::UnknownChangeset: return "UnknownChangeset";
    case ErrorCode::Io: return "Io";
    case ErrorCode::SchemaVersionMismatch: return "SchemaVersionMismatch";
    case ErrorCode::InsufficientPopulation: return "InsufficientPopulation";
    case ErrorCode::EmptyTrainingSet: return "EmptyTrainingSet";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::EmptyKeySet: return "EmptyKeySet";
    case ErrorCode::InvalidRate: return "InvalidRate";
    case ErrorCode::DimMismatch: return "DimMismatch";
    case ErrorCode::ConfigViolation: return "ConfigViolation";
    case ErrorCode::EmptySplit: return "EmptySplit";
    case ErrorCode::FormatVersionMismatch: return "FormatVersionMismatch";
    case ErrorCode::ChecksumMismatch: return "ChecksumMismatch";
    case ErrorCode::ReferencePredictionMismatch: return "ReferencePredictionMismatch";
    case ErrorCode::EmptyEvaluation: return "EmptyEvaluation";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    }
    return "Unknown";
}

} // namespace ovid
