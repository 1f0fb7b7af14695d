#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace ovid {

enum class ErrorCode {
    MalformedXml,
    UnknownChangeset,
    Io,
    SchemaVersionMismatch,
    InsufficientPopulation,
    EmptyTrainingSet,
    ShapeMismatch,
    EmptyKeySet,
    InvalidRate,
    DimMismatch,
    ConfigViolation,
    EmptySplit,
    FormatVersionMismatch,
    ChecksumMismatch,
    ReferencePredictionMismatch,
    EmptyEvaluation,
    InvalidArgument,
};

std::string_view to_string(ErrorCode code) noexcept;

/// Every failure raised by the library. The code identifies the contract that
/// was violated; the message names the offending record where one exists.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

} // namespace ovid
