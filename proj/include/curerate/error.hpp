#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace curerate {

enum class ErrorCode {
    Parse,
    DateMismatch,
    DuplicateLoan,
    InvariantViolation,
    EmptyInput,
    ZeroRow,
    SingularBlock,
    NotTransitive,
    TooFewPoints,
    DegenerateDesign,
    NonConvergence,
    MissingPrerequisite,
};

constexpr std::string_view to_string(ErrorCode code) {
    switch (code) {
    case ErrorCode::Parse: return "Parse";
    case ErrorCode::DateMismatch: return "DateMismatch";
    case ErrorCode::DuplicateLoan: return "DuplicateLoan";
    case ErrorCode::InvariantViolation: return "InvariantViolation";
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::ZeroRow: return "ZeroRow";
    case ErrorCode::SingularBlock: return "SingularBlock";
    case ErrorCode::NotTransitive: return "NotTransitive";
    case ErrorCode::TooFewPoints: return "TooFewPoints";
    case ErrorCode::DegenerateDesign: return "DegenerateDesign";
    case ErrorCode::NonConvergence: return "NonConvergence";
    case ErrorCode::MissingPrerequisite: return "MissingPrerequisite";
    }
    return "Unknown";
}

/// Every failure raised by the library carries a machine-readable code.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

/// Non-fatal diagnostic attached to reports.
struct Warning {
    std::string code;
    std::string message;

    friend bool operator==(const Warning&, const Warning&) = default;
};

}  // namespace curerate
